//! Structured-prediction training toolkit built around smooth inference oracles.
//!
//! The crate has three layers:
//!
//! * **Models and oracles** — discrete graphical models over chains and rooted
//!   trees ([`graph`]), exact max / top-K / log-partition inference for them
//!   ([`chain`], [`tree`]), structure-agnostic k-best search ([`kbest`]), and
//!   the scalar smoothing calculus that turns a max into a differentiable
//!   surrogate ([`smoothing`]).
//! * **Losses** — the structural hinge loss, its entropy- and
//!   l2-smoothed variants, and gradient assembly from oracle occupancy
//!   weights ([`loss`]).
//! * **Optimizers** — an accelerated inexact proximal-point outer loop with an
//!   SVRG inner solver and an SGD baseline ([`catalyst`]), plus a prox-linear
//!   outer loop for smooth non-linear score maps ([`proxlinear`]).
//!
//! [`data`] supplies a sequence-tagging task layer (CoNLL-style column files,
//! hashed context features, a synthetic generator, evaluation metrics) so the
//! optimizers can be exercised end to end.
//!
//! All randomized components draw from explicitly seeded ChaCha8 generators;
//! repeated runs with the same seed are bit-identical.

pub mod catalyst;
pub mod chain;
pub mod data;
pub mod error;
pub mod graph;
pub mod kbest;
pub mod loss;
pub mod proxlinear;
pub mod smoothing;
pub mod tree;

pub use catalyst::{
    CatalystConfig, CatalystSchedule, InnerBudget, RunOutcome, ScheduleKind, ScheduleParams,
    SgdConfig, TraceRow, WarmStart,
};
pub use data::{
    evaluate, featurize, read_conll, read_conll_using, synth_chain_dataset, write_conll, Metrics,
    Sentence, SynthParams, TaggedDataset, TaggingFeatures, TaggingModel,
};
pub use error::{Error, Result};
pub use graph::{Constraint, GraphKind, LabelDomain, Labeling, PotentialTable, TreeTopology};
pub use loss::{ExampleLoss, ModelKind, ObjectiveEval, ScoreModel};
pub use proxlinear::{InnerSolver, MuSchedule, ProxLinearConfig, ProxLinearOutcome, ProxLinearRow};
pub use smoothing::{SmootherKind, SmoothingConfig};
