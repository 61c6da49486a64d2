//! Smooth surrogates for the max over a finite score vector.
//!
//! Given scores z in R^m, the hard max `max_i z_i` is replaced by
//!
//! * entropy smoothing: `mu * log(sum_i exp(z_i / mu))`, gradient
//!   `softmax(z / mu)`;
//! * squared-l2 smoothing: `<z, u> - (mu/2)|u|^2 + mu/2` at
//!   `u = proj_simplex(z / mu)`, gradient `u`;
//! * a top-K variant of the squared-l2 form that only sees the K largest
//!   scores, used when m is exponentially large and a k-best oracle supplies
//!   the scores.
//!
//! All three sandwich the hard max: `max z <= smoothed <= max z + mu * D`,
//! with D = log m for entropy and D = 1/2 for the squared-l2 forms. The
//! top-K surrogate additionally never exceeds the full squared-l2 value, and
//! equals it exactly once the projection's support provably fits inside the
//! top K ([`topk_exactness_holds`]).

use crate::error::{Error, Result};

/// Which smooth surrogate replaces the hard max.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmootherKind {
    /// Log-sum-exp with temperature mu.
    Entropy,
    /// Squared-l2 regularized max over the simplex.
    L2,
    /// Squared-l2 form restricted to the K best scores.
    TopkL2,
}

/// Smoother selection plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingConfig {
    pub kind: SmootherKind,
    /// Smoothing strength; larger is smoother but looser.
    pub mu: f64,
    /// Number of scores the top-K surrogate keeps (ignored otherwise).
    pub k: usize,
}

impl SmoothingConfig {
    pub fn entropy(mu: f64) -> Result<Self> {
        Self::validated(SmootherKind::Entropy, mu, 1)
    }

    pub fn l2(mu: f64) -> Result<Self> {
        Self::validated(SmootherKind::L2, mu, 1)
    }

    pub fn topk_l2(mu: f64, k: usize) -> Result<Self> {
        Self::validated(SmootherKind::TopkL2, mu, k)
    }

    fn validated(kind: SmootherKind, mu: f64, k: usize) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidConfig(format!("smoothing mu must be positive, got {mu}")));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("top-K smoothing needs k >= 1".into()));
        }
        Ok(Self { kind, mu, k })
    }
}

/// Value of a smoothed max together with its gradient in the score vector.
///
/// `weights` lives on the probability simplex: softmax weights for entropy
/// smoothing, the simplex projection for the squared-l2 forms.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedMaxResult {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Uniform bound D on the smoothing error: smoothed max <= hard max + mu * D.
///
/// `ln_num_outcomes` is log(m) for the score space the smoother sees; only
/// entropy smoothing depends on it.
pub fn d_omega(kind: SmootherKind, ln_num_outcomes: f64) -> f64 {
    match kind {
        SmootherKind::Entropy => ln_num_outcomes,
        SmootherKind::L2 | SmootherKind::TopkL2 => 0.5,
    }
}

/// Numerically stable log(sum_i exp(x_i)); empty input gives -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Euclidean projection onto the probability simplex.
///
/// Sort-and-threshold: with entries sorted descending and prefix sums S_k,
/// the support size is the largest k with `z_(k) + (1 - S_k) / k > 0`; the
/// threshold is `tau = (S_k - 1) / k` and `u_i = max(z_i - tau, 0)`.
pub fn project_simplex(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut k_star = 1usize;
    let mut s_kstar = sorted[0];
    let mut prefix = sorted[0];
    for (i, &zi) in sorted.iter().enumerate().skip(1) {
        prefix += zi;
        let k = i + 1;
        if zi + (1.0 - prefix) / k as f64 > 0.0 {
            k_star = k;
            s_kstar = prefix;
        }
    }
    let tau = (s_kstar - 1.0) / k_star as f64;
    Ok(z.iter().map(|&zi| (zi - tau).max(0.0)).collect())
}

/// Support size of `proj_simplex(z / mu)`, computed without the projection.
///
/// It is the smallest k (over entries sorted descending, prefix sums S_k,
/// and `z_(m+1) = -inf`) with `S_k - k * z_(k) < mu <= S_k - k * z_(k+1)`.
/// Ties between equal scores resolve to the smaller k because the upper
/// test uses a strict inequality on the next entry.
pub fn projection_sparsity(z: &[f64], mu: f64) -> Result<usize> {
    if z.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidInput(format!("sparsity needs positive mu, got {mu}")));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let m = sorted.len();
    let mut prefix = 0.0;
    for k in 1..=m {
        prefix += sorted[k - 1];
        let lower = prefix - k as f64 * sorted[k - 1];
        let upper = if k < m { prefix - k as f64 * sorted[k] } else { f64::INFINITY };
        if lower < mu && mu <= upper {
            return Ok(k);
        }
    }
    // Unreachable for finite inputs: the window [lower, upper) tiles (0, inf).
    Err(Error::InvalidInput("projection sparsity undefined for this input".into()))
}

/// Entropy-smoothed max: `mu * LSE(z / mu)` with softmax weights.
///
/// Computed with a max shift so scores near the finite sentinel underflow to
/// weight zero instead of producing NaN.
pub fn entropy_smoothed_max(z: &[f64], mu: f64) -> Result<SmoothedMaxResult> {
    check_scores(z, mu)?;
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut weights: Vec<f64> = z.iter().map(|&zi| ((zi - m) / mu).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(SmoothedMaxResult { value: m + mu * total.ln(), weights })
}

/// Squared-l2 smoothed max: `<z, u> - (mu/2)|u|^2 + mu/2` at the projection
/// `u = proj_simplex(z / mu)`, which is also the gradient.
pub fn l2_smoothed_max(z: &[f64], mu: f64) -> Result<SmoothedMaxResult> {
    check_scores(z, mu)?;
    let scaled: Vec<f64> = z.iter().map(|&zi| zi / mu).collect();
    let u = project_simplex(&scaled)?;
    let inner: f64 = z.iter().zip(&u).map(|(zi, ui)| zi * ui).sum();
    let sq: f64 = u.iter().map(|ui| ui * ui).sum();
    Ok(SmoothedMaxResult { value: inner - 0.5 * mu * sq + 0.5 * mu, weights: u })
}

/// Top-K surrogate: the squared-l2 smoothed max applied to the K best
/// scores, which the caller passes sorted non-increasing.
///
/// Because the best score's vertex is feasible, the surrogate still upper
/// bounds the hard max; restricting the feasible set means it never exceeds
/// the full squared-l2 value.
pub fn topk_surrogate(top_scores: &[f64], mu: f64) -> Result<SmoothedMaxResult> {
    check_scores(top_scores, mu)?;
    if top_scores.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("top-K scores must be sorted non-increasing".into()));
    }
    l2_smoothed_max(top_scores, mu)
}

/// True when the top-K squared-l2 surrogate provably equals the full one:
/// `mu <= sum_{i <= K} (z_(i) - z_(K+1))` over scores sorted descending
/// (trivially true when fewer than K+1 scores exist).
pub fn topk_exactness_holds(sorted_scores: &[f64], k: usize, mu: f64) -> bool {
    if k == 0 {
        return false;
    }
    if sorted_scores.len() <= k {
        return true;
    }
    let zk1 = sorted_scores[k];
    let gap: f64 = sorted_scores[..k].iter().map(|&zi| zi - zk1).sum();
    mu <= gap
}

fn check_scores(z: &[f64], mu: f64) -> Result<()> {
    if z.is_empty() {
        return Err(Error::InvalidInput("smoothed max needs at least one score".into()));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidInput(format!("smoothing mu must be positive, got {mu}")));
    }
    if z.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores must not be NaN".into()));
    }
    Ok(())
}
