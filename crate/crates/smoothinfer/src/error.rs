//! Error type shared across the crate.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, inference and optimization.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed arguments: dimension mismatches, empty inputs, values out of
    /// range, unsorted input where sorted is required.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The operation requires a different graph shape (e.g. a chain-only
    /// dynamic program invoked on a general tree) or the parent structure is
    /// not a rooted tree.
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    /// Full enumeration of the label space was requested but the space
    /// exceeds the configured cap.
    #[error("label space too large to enumerate: {size} labelings exceeds cap {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },

    /// Constraints left some node with no feasible label.
    #[error("constraints forbid every label of node {node}")]
    EmptyLabelSpace { node: usize },

    /// Rejected configuration (inconsistent schedule parameters, unknown
    /// keys, values outside their domain).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An internal consistency check failed mid-search; indicates a provider
    /// or bound function that violates its contract.
    #[error("integrity check failed: {0}")]
    Integrity(String),

    /// An optimizer produced a non-finite iterate or objective value.
    #[error("divergence at iteration {iteration}: objective = {value}")]
    Divergence { iteration: usize, value: f64 },
}
