//! Accelerated inexact proximal-point training with an SVRG inner solver.
//!
//! The outer loop minimizes `F(w) = (1/n) sum_i f_i(w) + (lambda/2)|w|^2` by
//! repeatedly solving the proximal subproblem
//!
//! ```text
//! w_k ~= argmin_w  F_{mu_k}(w) + (kappa_k/2) |w - z_{k-1}|^2
//! ```
//!
//! where `F_mu` replaces each hinge term with its smoothed surrogate. The
//! prox centers are extrapolated, `z_k = w_k + beta_k (w_k - w_{k-1})`, with
//! momentum derived from the root of a damped quadratic ([`alpha_update`],
//! [`beta_coeff`]). A [`CatalystSchedule`] fixes how the smoothing parameter
//! mu_k, the prox weight kappa_k, and the inner tolerance delta_k evolve:
//! constant and adaptive variants exist for both the strongly convex
//! (lambda > 0) and non-strongly-convex (lambda = 0) regimes.
//!
//! Subproblems are finite sums with condition number about
//! `(A/mu + lambda + kappa) / (lambda + kappa)`, which [`svrg_solve`]
//! exploits: full-gradient anchors once per epoch, two component gradient
//! evaluations per step, epoch restarts from the averaged iterate. Budgets
//! are either a fixed step count or a relative-accuracy test against the
//! prox center.
//!
//! [`sgd_run`] provides the classical non-smooth subgradient baseline the
//! accelerated runs are benchmarked against, and [`estimate_a`] supplies the
//! curvature scale used for default step sizes. All stochastic choices come
//! from a caller-seeded ChaCha8 stream; reruns with equal seeds are
//! bit-identical.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{self, ScoreModel};
use crate::smoothing::{SmoothingConfig, SmootherKind};

/// Golden-ratio conjugate, the default alpha_0 when lambda = 0.
const GOLDEN_ALPHA: f64 = 0.618_033_988_749_894_9;

/// How mu_k, kappa_k, and delta_k evolve across outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// lambda > 0; constant mu and kappa, constant delta.
    ScConst,
    /// lambda > 0; mu shrinks geometrically, kappa constant.
    ScAdaptive,
    /// lambda = 0; constant mu and kappa, delta_k = (k+1)^-2.
    NonscConst,
    /// lambda = 0; kappa_k grows linearly, mu_k = mu/k.
    NonscAdaptive,
}

/// Inputs from which [`make_schedule`] derives a full parameter schedule.
#[derive(Clone, Copy, Debug)]
pub struct ScheduleParams {
    /// Ridge weight of the objective (0 for the non-strongly-convex kinds).
    pub lambda: f64,
    /// Prox weight override; `None` picks the kind's default.
    pub kappa: Option<f64>,
    /// Smoothing parameter override; `None` derives mu from `epsilon`.
    pub mu: Option<f64>,
    /// Target accuracy; sets mu when `mu` is `None`.
    pub epsilon: Option<f64>,
    /// Smoother diameter: `ln(num labelings)` for entropy, 1/2 for squared-l2.
    pub d_omega: f64,
    /// Curvature scale of the smoothed components (see [`estimate_a`]).
    pub a_est: f64,
    /// Number of training examples.
    pub n: usize,
}

/// A validated outer-loop parameter schedule.
#[derive(Clone, Copy, Debug)]
pub struct CatalystSchedule {
    pub kind: ScheduleKind,
    pub lambda: f64,
    kappa_base: f64,
    mu_base: f64,
    pub alpha0: f64,
}

impl CatalystSchedule {
    /// Builds a schedule from explicit bases, validating the kind's regime
    /// (strongly convex kinds demand lambda > 0) and the alpha_0 invariant
    /// `alpha0^2 >= lambda / (lambda + kappa_1)`.
    pub fn new(
        kind: ScheduleKind,
        lambda: f64,
        kappa_base: f64,
        mu_base: f64,
        alpha0: f64,
    ) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        match kind {
            ScheduleKind::ScConst | ScheduleKind::ScAdaptive => {
                if lambda <= 0.0 {
                    return Err(Error::InvalidConfig(
                        "strongly convex schedules require lambda > 0".into(),
                    ));
                }
            }
            ScheduleKind::NonscConst | ScheduleKind::NonscAdaptive => {
                if lambda != 0.0 {
                    return Err(Error::InvalidConfig(
                        "non-strongly-convex schedules require lambda = 0".into(),
                    ));
                }
            }
        }
        if !(kappa_base.is_finite() && kappa_base > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be finite and positive, got {kappa_base}"
            )));
        }
        if !(mu_base.is_finite() && mu_base > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mu must be finite and positive, got {mu_base}"
            )));
        }
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha0 must lie in (0, 1], got {alpha0}"
            )));
        }
        let schedule = Self { kind, lambda, kappa_base, mu_base, alpha0 };
        let bound = lambda / (lambda + schedule.kappa(1));
        if alpha0 * alpha0 < bound - 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "alpha0^2 = {} violates the lower bound {bound}",
                alpha0 * alpha0
            )));
        }
        Ok(schedule)
    }

    /// Smoothing parameter for outer iteration k >= 1; non-increasing in k.
    pub fn mu(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self.kind {
            ScheduleKind::ScConst | ScheduleKind::NonscConst => self.mu_base,
            ScheduleKind::ScAdaptive => {
                let eta = 1.0 - 0.5 * self.q().sqrt();
                self.mu_base * eta.powf(k as f64 / 2.0)
            }
            ScheduleKind::NonscAdaptive => self.mu_base / k as f64,
        }
    }

    /// Prox weight for outer iteration k >= 1; non-decreasing in k.
    pub fn kappa(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self.kind {
            ScheduleKind::NonscAdaptive => self.kappa_base * k as f64,
            _ => self.kappa_base,
        }
    }

    /// Relative inner tolerance for outer iteration k >= 1, in [0, 1).
    pub fn delta(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self.kind {
            ScheduleKind::ScConst | ScheduleKind::ScAdaptive => {
                let sq = self.q().sqrt();
                sq / (2.0 - sq)
            }
            ScheduleKind::NonscConst | ScheduleKind::NonscAdaptive => {
                let kk = (k + 1) as f64;
                1.0 / (kk * kk)
            }
        }
    }

    /// Inverse condition number `lambda / (lambda + kappa_1)`.
    pub fn q(&self) -> f64 {
        self.lambda / (self.lambda + self.kappa_base)
    }
}

/// Derives a schedule from target accuracy and problem scales.
///
/// When `mu` is absent it comes from the accuracy target: `epsilon / (10 D)`
/// for the strongly convex kinds and `epsilon / (20 D)` otherwise. When
/// `kappa` is absent it defaults per kind: `ScConst` balances the smoothed
/// condition number against acceleration, using `A/(mu n) - lambda` when
/// that regime pays off (`A/(mu n) > 4 lambda`) and plain `lambda`
/// otherwise; `ScAdaptive` uses `lambda`; both lambda = 0 kinds use
/// `A / (mu (n+1))`.
pub fn make_schedule(kind: ScheduleKind, params: &ScheduleParams) -> Result<CatalystSchedule> {
    if !(params.d_omega.is_finite() && params.d_omega > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "d_omega must be finite and positive, got {}",
            params.d_omega
        )));
    }
    if params.n == 0 {
        return Err(Error::InvalidConfig("schedule needs n >= 1".into()));
    }
    let strongly_convex =
        matches!(kind, ScheduleKind::ScConst | ScheduleKind::ScAdaptive);
    let mu = match (params.mu, params.epsilon) {
        (Some(m), _) => m,
        (None, Some(eps)) => {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "epsilon must be finite and positive, got {eps}"
                )));
            }
            let denom = if strongly_convex { 10.0 } else { 20.0 };
            eps / (denom * params.d_omega)
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "schedule needs either mu or epsilon".into(),
            ))
        }
    };
    if !(params.a_est.is_finite() && params.a_est >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "a_est must be finite and nonnegative, got {}",
            params.a_est
        )));
    }
    let lambda = params.lambda;
    let kappa = match params.kappa {
        Some(k) => k,
        None => match kind {
            ScheduleKind::ScConst => {
                let ratio = params.a_est / (mu * params.n as f64);
                if ratio > 4.0 * lambda {
                    ratio - lambda
                } else {
                    lambda
                }
            }
            ScheduleKind::ScAdaptive => lambda,
            ScheduleKind::NonscConst | ScheduleKind::NonscAdaptive => {
                params.a_est / (mu * (params.n + 1) as f64)
            }
        },
    };
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "derived kappa must be positive, got {kappa}; pass kappa explicitly"
        )));
    }
    let alpha0 = if strongly_convex {
        (lambda / (lambda + kappa)).sqrt()
    } else {
        GOLDEN_ALPHA
    };
    CatalystSchedule::new(kind, lambda, kappa, mu, alpha0)
}

/// Advances the momentum root: the nonnegative solution of
/// `alpha^2 (kappa_next + lambda) = (1 - alpha) alpha_prev^2 (kappa_k + lambda) + alpha lambda`.
///
/// With constant kappa and lambda > 0 the fixed point is
/// `sqrt(lambda / (lambda + kappa))`; with lambda = 0 the recurrence reduces
/// to `alpha^2 = (1 - alpha) alpha_prev^2` (scaled by the kappa ratio when
/// kappa grows).
pub fn alpha_update(alpha_prev: f64, lambda: f64, kappa_k: f64, kappa_next: f64) -> Result<f64> {
    if !(alpha_prev > 0.0 && alpha_prev <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha_prev must lie in (0, 1], got {alpha_prev}"
        )));
    }
    if !(kappa_k > 0.0 && kappa_next > 0.0 && lambda >= 0.0) {
        return Err(Error::InvalidConfig(
            "alpha update needs positive kappas and nonnegative lambda".into(),
        ));
    }
    let a = kappa_next + lambda;
    let prev_mass = alpha_prev * alpha_prev * (kappa_k + lambda);
    let b = prev_mass - lambda;
    let c = -prev_mass;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let alpha = (-b + disc) / (2.0 * a);
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha update produced {alpha} from alpha_prev {alpha_prev}"
        )));
    }
    Ok(alpha)
}

/// Momentum coefficient for the prox-center extrapolation
/// `z_k = w_k + beta (w_k - w_{k-1})`.
pub fn beta_coeff(alpha_prev: f64, alpha: f64, lambda: f64, kappa_k: f64, kappa_next: f64) -> f64 {
    let prev_mass = alpha_prev * alpha_prev * (kappa_k + lambda);
    alpha_prev * (1.0 - alpha_prev) * (kappa_k + lambda)
        / (prev_mass + alpha * (kappa_next + lambda))
}

/// A finite sum `(1/n) sum_i g_i(w)` whose components can be evaluated with
/// an optional smoother. Optimizers only see this interface.
pub trait SmoothableFiniteSum {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    /// Evaluates component i at w, adds `coef * grad g_i(w)` into `grad`,
    /// and returns the component value with its oracle-call cost.
    fn component_into(
        &self,
        i: usize,
        w: &[f64],
        smoothing: Option<&SmoothingConfig>,
        coef: f64,
        grad: &mut [f64],
    ) -> Result<(f64, usize)>;
}

/// The regularized hinge objective as a finite sum: component i is
/// `f_i(w) + (lambda/2)|w|^2`, so the ridge term is inside every component
/// and the sum's strong convexity is available to stochastic solvers.
pub struct HingeObjective<'a, M: ScoreModel + ?Sized> {
    pub model: &'a M,
    pub lambda: f64,
}

impl<'a, M: ScoreModel + ?Sized> SmoothableFiniteSum for HingeObjective<'a, M> {
    fn n(&self) -> usize {
        self.model.num_examples()
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn component_into(
        &self,
        i: usize,
        w: &[f64],
        smoothing: Option<&SmoothingConfig>,
        coef: f64,
        grad: &mut [f64],
    ) -> Result<(f64, usize)> {
        let (mut value, calls) = match smoothing {
            Some(cfg) => loss::smoothed_hinge_into(self.model, i, w, cfg, coef, grad)?,
            None => loss::hinge_into(self.model, i, w, coef, grad)?,
        };
        let sq: f64 = w.iter().map(|x| x * x).sum();
        value += 0.5 * self.lambda * sq;
        for (g, &x) in grad.iter_mut().zip(w) {
            *g += coef * self.lambda * x;
        }
        Ok((value, calls))
    }
}

/// A finite sum shifted by a proximal term: component i becomes
/// `g_i(w) + (kappa/2)|w - center|^2`.
pub struct ProxSubproblem<'a, S: SmoothableFiniteSum + ?Sized> {
    pub inner: &'a S,
    pub kappa: f64,
    pub center: &'a [f64],
}

impl<'a, S: SmoothableFiniteSum + ?Sized> SmoothableFiniteSum for ProxSubproblem<'a, S> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn component_into(
        &self,
        i: usize,
        w: &[f64],
        smoothing: Option<&SmoothingConfig>,
        coef: f64,
        grad: &mut [f64],
    ) -> Result<(f64, usize)> {
        let (mut value, calls) = self.inner.component_into(i, w, smoothing, coef, grad)?;
        let mut sq = 0.0;
        for ((g, &x), &z) in grad.iter_mut().zip(w).zip(self.center) {
            let d = x - z;
            sq += d * d;
            *g += coef * self.kappa * d;
        }
        value += 0.5 * self.kappa * sq;
        Ok((value, calls))
    }
}

/// When an SVRG solve stops.
pub enum StoppingRule<'a> {
    /// Exactly this many inner steps, split into epochs of length n.
    FixedSteps(usize),
    /// Run whole epochs (at least one) until the epoch-end anchor gradient
    /// satisfies `|grad|^2 <= (lambda + kappa) delta kappa |w - center|^2`,
    /// or `max_epochs` epochs have run.
    RelativeToCenter {
        delta: f64,
        lambda: f64,
        kappa: f64,
        center: &'a [f64],
        max_epochs: usize,
    },
}

/// Result of one SVRG solve.
#[derive(Clone, Debug)]
pub struct SvrgOutcome {
    pub w: Vec<f64>,
    /// Component gradient evaluations consumed by inner steps (2 per step).
    pub component_evals: usize,
    /// Full-gradient anchor computations (each costs n component evals,
    /// tracked separately so callers can choose their accounting).
    pub anchor_passes: usize,
    pub epochs: usize,
}

fn check_finite(w: &[f64], value: f64, iteration: usize) -> Result<()> {
    if w.iter().all(|x| x.is_finite()) && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, value })
    }
}

/// Mean value and gradient of the sum at w; costs one anchor pass.
fn full_gradient<S: SmoothableFiniteSum + ?Sized>(
    sum: &S,
    w: &[f64],
    smoothing: Option<&SmoothingConfig>,
    grad: &mut [f64],
) -> Result<f64> {
    grad.fill(0.0);
    let n = sum.n();
    let coef = 1.0 / n as f64;
    let mut value = 0.0;
    for i in 0..n {
        let (v, _) = sum.component_into(i, w, smoothing, coef, grad)?;
        value += coef * v;
    }
    Ok(value)
}

/// Minimizes a smoothable finite sum with SVRG.
///
/// Epochs have length n. Each epoch anchors a full gradient, takes variance
/// reduced steps `w <- w - step (grad g_i(w) - grad g_i(anchor) + anchor_grad)`
/// (two component evaluations per step), and restarts the next epoch from
/// the epoch's averaged iterate. Non-finite values abort with a divergence
/// error carrying the step index.
pub fn svrg_solve<S: SmoothableFiniteSum + ?Sized>(
    sum: &S,
    smoothing: Option<&SmoothingConfig>,
    w0: &[f64],
    step: f64,
    rule: &StoppingRule,
    rng: &mut ChaCha8Rng,
) -> Result<SvrgOutcome> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "svrg step must be finite and positive, got {step}"
        )));
    }
    let n = sum.n();
    let d = sum.dim();
    if n == 0 {
        return Err(Error::InvalidInput("svrg needs at least one component".into()));
    }
    if w0.len() != d {
        return Err(Error::InvalidInput(format!(
            "svrg start point has length {}, expected {d}",
            w0.len()
        )));
    }
    if let StoppingRule::FixedSteps(0) = rule {
        return Ok(SvrgOutcome { w: w0.to_vec(), component_evals: 0, anchor_passes: 0, epochs: 0 });
    }

    let mut anchor = w0.to_vec();
    let mut anchor_grad = vec![0.0; d];
    full_gradient(sum, &anchor, smoothing, &mut anchor_grad)?;
    let mut component_evals = 0usize;
    let mut anchor_passes = 1usize;
    let mut epochs = 0usize;
    let mut done = 0usize;

    let mut g_cur = vec![0.0; d];
    let mut g_anchor = vec![0.0; d];

    loop {
        let steps_this = match rule {
            StoppingRule::FixedSteps(total) => n.min(total - done),
            StoppingRule::RelativeToCenter { .. } => n,
        };
        let mut w = anchor.clone();
        let mut w_sum = vec![0.0; d];
        for t in 0..steps_this {
            let i = rng.random_range(0..n);
            g_cur.fill(0.0);
            let (value, c1) = sum.component_into(i, &w, smoothing, 1.0, &mut g_cur)?;
            g_anchor.fill(0.0);
            let (_, c2) = sum.component_into(i, &anchor, smoothing, 1.0, &mut g_anchor)?;
            component_evals += c1 + c2;
            for j in 0..d {
                w[j] -= step * (g_cur[j] - g_anchor[j] + anchor_grad[j]);
            }
            check_finite(&w, value, done + t)?;
            for (s, &x) in w_sum.iter_mut().zip(&w) {
                *s += x;
            }
        }
        epochs += 1;
        done += steps_this;
        let inv = 1.0 / steps_this as f64;
        for (a, &s) in anchor.iter_mut().zip(&w_sum) {
            *a = s * inv;
        }
        match rule {
            StoppingRule::FixedSteps(total) => {
                if done >= *total {
                    break;
                }
                full_gradient(sum, &anchor, smoothing, &mut anchor_grad)?;
                anchor_passes += 1;
            }
            StoppingRule::RelativeToCenter { delta, lambda, kappa, center, max_epochs } => {
                let value = full_gradient(sum, &anchor, smoothing, &mut anchor_grad)?;
                anchor_passes += 1;
                check_finite(&anchor, value, done)?;
                let grad_sq: f64 = anchor_grad.iter().map(|g| g * g).sum();
                let dist_sq: f64 = anchor
                    .iter()
                    .zip(*center)
                    .map(|(a, z)| (a - z) * (a - z))
                    .sum();
                if grad_sq <= (lambda + kappa) * delta * kappa * dist_sq
                    || epochs >= *max_epochs
                {
                    break;
                }
            }
        }
    }
    Ok(SvrgOutcome { w: anchor, component_evals, anchor_passes, epochs })
}

/// How each outer iteration initializes its inner solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarmStart {
    /// Start from the prox center z_{k-1} (the default).
    ProxCenter,
    /// Start from the previous iterate w_{k-1}.
    PrevIterate,
    /// Start from `w_{k-1} + c (z_{k-1} - z_{k-2})`, c = kappa/(kappa+lambda).
    Extrapolation,
}

/// Inner-solve budget, resolved per outer iteration.
#[derive(Clone, Copy, Debug)]
pub enum InnerBudget {
    /// Exactly this many SVRG steps (defaults to n when built by the CLI).
    Fixed { steps: usize },
    /// Epochs until the schedule's delta_k relative-accuracy test passes.
    Relative { max_epochs: usize },
}

/// Configuration of an accelerated run.
#[derive(Clone, Debug)]
pub struct CatalystConfig {
    pub schedule: CatalystSchedule,
    /// Which smoother the inner solves use; mu comes from the schedule.
    pub smoother: SmootherKind,
    /// Labelings kept by the top-K smoother (ignored by the others).
    pub topk: usize,
    pub outer_iters: usize,
    pub budget: InnerBudget,
    pub warm_start: WarmStart,
    /// Inner step override; `None` uses `1 / (a_est/mu_k + lambda + kappa_k)`.
    pub step: Option<f64>,
    /// Curvature scale for the default step (see [`estimate_a`]).
    pub a_est: f64,
    pub seed: u64,
}

/// One outer-iteration record.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    /// Outer iteration number, starting at 1 (epoch number for SGD).
    pub iter: usize,
    /// Non-smooth regularized objective at the iterate (diagnostic; its
    /// oracle calls are not added to `oracle_calls`).
    pub objective: f64,
    /// Smoothed objective at the iterate under the current mu_k (NaN for
    /// runs that never smooth).
    pub smoothed_objective: f64,
    /// Cumulative component-gradient evaluations consumed by training.
    pub oracle_calls: usize,
    /// Cumulative full-gradient anchor passes (each worth n calls).
    pub anchor_passes: usize,
    /// Milliseconds since the run started.
    pub wall_ms: u64,
    /// `|w_k - z_{k-1}|`, the distance moved from the prox center.
    pub step_norm: f64,
}

/// Final iterate plus the per-iteration trace.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub w: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

fn smoothing_for(kind: SmootherKind, mu: f64, topk: usize) -> Result<SmoothingConfig> {
    match kind {
        SmootherKind::Entropy => SmoothingConfig::entropy(mu),
        SmootherKind::L2 => SmoothingConfig::l2(mu),
        SmootherKind::TopkL2 => SmoothingConfig::topk_l2(mu, topk),
    }
}

/// Everything the per-iteration callback of [`accelerated_loop`] can see.
pub(crate) struct OuterIterInfo<'a> {
    pub k: usize,
    pub w: &'a [f64],
    /// Prox center the iteration was solved around (z_{k-1}).
    pub prox_center: &'a [f64],
    /// Smoothing parameter the inner solve used.
    pub mu: f64,
    /// Cumulative component evaluations so far.
    pub component_evals: usize,
    /// Cumulative anchor passes so far.
    pub anchor_passes: usize,
}

/// Generic accelerated inexact proximal-point loop over any finite sum.
///
/// `schedule.lambda` must be the sum's strong-convexity modulus (the
/// components are assumed to contain it). Calls `on_iter` after every outer
/// iteration; an error from the callback aborts the run.
pub(crate) fn accelerated_loop<S: SmoothableFiniteSum + ?Sized>(
    sum: &S,
    schedule: &CatalystSchedule,
    smoother: SmootherKind,
    topk: usize,
    w0: &[f64],
    outer_iters: usize,
    budget: InnerBudget,
    warm_start: WarmStart,
    step_override: Option<f64>,
    a_est: f64,
    rng: &mut ChaCha8Rng,
    mut on_iter: impl FnMut(&OuterIterInfo) -> Result<()>,
) -> Result<Vec<f64>> {
    let d = sum.dim();
    if w0.len() != d {
        return Err(Error::InvalidInput(format!(
            "start point has length {}, sum dimension is {d}",
            w0.len()
        )));
    }
    let lambda = schedule.lambda;
    let mut w = w0.to_vec();
    let mut z = w0.to_vec();
    let mut z_prev = w0.to_vec();
    let mut alpha = schedule.alpha0;
    let mut component_evals = 0usize;
    let mut anchor_passes = 0usize;

    for k in 1..=outer_iters {
        let mu_k = schedule.mu(k);
        let kappa_k = schedule.kappa(k);
        let kappa_next = schedule.kappa(k + 1);
        let delta_k = schedule.delta(k);
        let smoothing = smoothing_for(smoother, mu_k, topk)?;

        let start = match warm_start {
            WarmStart::ProxCenter => z.clone(),
            WarmStart::PrevIterate => w.clone(),
            WarmStart::Extrapolation => {
                let c = kappa_k / (kappa_k + lambda);
                w.iter()
                    .zip(&z)
                    .zip(&z_prev)
                    .map(|((&wi, &zi), &zpi)| wi + c * (zi - zpi))
                    .collect()
            }
        };
        let step = match step_override {
            Some(s) => s,
            None => 1.0 / (a_est / mu_k + lambda + kappa_k),
        };
        let outcome = {
            let sub = ProxSubproblem { inner: sum, kappa: kappa_k, center: &z };
            let rule = match budget {
                InnerBudget::Fixed { steps } => StoppingRule::FixedSteps(steps),
                InnerBudget::Relative { max_epochs } => StoppingRule::RelativeToCenter {
                    delta: delta_k,
                    lambda,
                    kappa: kappa_k,
                    center: &z,
                    max_epochs,
                },
            };
            svrg_solve(&sub, Some(&smoothing), &start, step, &rule, rng)?
        };
        component_evals += outcome.component_evals;
        anchor_passes += outcome.anchor_passes;

        let w_prev = std::mem::replace(&mut w, outcome.w);
        let alpha_next = alpha_update(alpha, lambda, kappa_k, kappa_next)?;
        let beta = beta_coeff(alpha, alpha_next, lambda, kappa_k, kappa_next);
        alpha = alpha_next;
        z_prev = std::mem::replace(
            &mut z,
            w.iter()
                .zip(&w_prev)
                .map(|(&wi, &wpi)| wi + beta * (wi - wpi))
                .collect(),
        );

        on_iter(&OuterIterInfo {
            k,
            w: &w,
            prox_center: &z_prev,
            mu: mu_k,
            component_evals,
            anchor_passes,
        })?;
    }
    Ok(w)
}

/// Runs the accelerated smoothed solver on a hinge objective.
///
/// `observer` sees each trace row as it is produced, together with the
/// iterate it describes, so callers can stream progress to disk (and
/// evaluate checkpoints) and keep partial traces when a run later diverges.
/// `outer_iters = 0` returns the start point untouched.
pub fn catalyst_run<M: ScoreModel + ?Sized>(
    model: &M,
    lambda: f64,
    w0: &[f64],
    cfg: &CatalystConfig,
    mut observer: impl FnMut(&TraceRow, &[f64]),
) -> Result<RunOutcome> {
    let d = model.dim();
    if w0.len() != d {
        return Err(Error::InvalidInput(format!(
            "start point has length {}, model dimension is {d}",
            w0.len()
        )));
    }
    if (cfg.schedule.lambda - lambda).abs() > 1e-15 * lambda.abs().max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "schedule was built for lambda {}, run uses {lambda}",
            cfg.schedule.lambda
        )));
    }
    let objective_sum = HingeObjective { model, lambda };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let started = Instant::now();
    let mut trace = Vec::with_capacity(cfg.outer_iters);

    let w = accelerated_loop(
        &objective_sum,
        &cfg.schedule,
        cfg.smoother,
        cfg.topk,
        w0,
        cfg.outer_iters,
        cfg.budget,
        cfg.warm_start,
        cfg.step,
        cfg.a_est,
        &mut rng,
        |info| {
            let step_norm = info
                .w
                .iter()
                .zip(info.prox_center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let smoothing = smoothing_for(cfg.smoother, info.mu, cfg.topk)?;
            let objective = loss::objective(model, info.w, lambda, None)?.value;
            let smoothed_objective =
                loss::objective(model, info.w, lambda, Some(&smoothing))?.value;
            let row = TraceRow {
                iter: info.k,
                objective,
                smoothed_objective,
                oracle_calls: info.component_evals,
                anchor_passes: info.anchor_passes,
                wall_ms: started.elapsed().as_millis() as u64,
                step_norm,
            };
            observer(&row, info.w);
            trace.push(row);
            if !objective.is_finite() {
                return Err(Error::Divergence { iteration: info.k, value: objective });
            }
            Ok(())
        },
    )?;
    Ok(RunOutcome { w, trace })
}

/// Configuration of the stochastic subgradient baseline.
#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    /// Initial step; 0 freezes the iterates (useful as a null baseline).
    pub gamma0: f64,
    /// Steps between stepsize halvings: `gamma_t = gamma0 / (1 + t div t0)`.
    pub t0: usize,
    /// Passes over the data; one trace row per pass.
    pub epochs: usize,
    pub seed: u64,
}

/// Runs stochastic subgradient descent on the non-smooth hinge objective.
///
/// Each step draws one example, takes `w <- w - gamma_t (subgrad f_i + lambda w)`,
/// and counts one oracle call. Trace objectives are diagnostic evaluations.
pub fn sgd_run<M: ScoreModel + ?Sized>(
    model: &M,
    lambda: f64,
    w0: &[f64],
    cfg: &SgdConfig,
    mut observer: impl FnMut(&TraceRow, &[f64]),
) -> Result<RunOutcome> {
    if !(cfg.gamma0.is_finite() && cfg.gamma0 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gamma0 must be finite and nonnegative, got {}",
            cfg.gamma0
        )));
    }
    if cfg.t0 == 0 {
        return Err(Error::InvalidConfig("t0 must be at least 1".into()));
    }
    let n = model.num_examples();
    if n == 0 {
        return Err(Error::InvalidInput("sgd needs at least one example".into()));
    }
    let d = model.dim();
    if w0.len() != d {
        return Err(Error::InvalidInput(format!(
            "start point has length {}, model dimension is {d}",
            w0.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let started = Instant::now();
    let mut w = w0.to_vec();
    let mut grad = vec![0.0; d];
    let mut oracle_calls = 0usize;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let w_epoch_start = w.clone();
        for s in 0..n {
            let t = (epoch - 1) * n + s;
            let gamma = cfg.gamma0 / (1 + t / cfg.t0) as f64;
            let i = rng.random_range(0..n);
            grad.fill(0.0);
            let (value, calls) = loss::hinge_into(model, i, &w, 1.0, &mut grad)?;
            oracle_calls += calls;
            for (x, &g) in w.iter_mut().zip(&grad) {
                *x -= gamma * (g + lambda * *x);
            }
            check_finite(&w, value, t)?;
        }
        let objective = loss::objective(model, &w, lambda, None)?.value;
        let step_norm = w
            .iter()
            .zip(&w_epoch_start)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let row = TraceRow {
            iter: epoch,
            objective,
            smoothed_objective: f64::NAN,
            oracle_calls,
            anchor_passes: 0,
            wall_ms: started.elapsed().as_millis() as u64,
            step_norm,
        };
        observer(&row, &w);
        trace.push(row);
        if !objective.is_finite() {
            return Err(Error::Divergence { iteration: epoch, value: objective });
        }
    }
    Ok(RunOutcome { w, trace })
}

/// Estimates the curvature scale A of the smoothed losses as the largest
/// squared subgradient norm at w = 0 over the training examples.
///
/// The smoothed component gradients are `A/mu`-Lipschitz with A bounded by
/// the squared width of the example's feature differences; the subgradient
/// at zero is one realized feature-difference row, making its squared norm a
/// cheap, structure-aware proxy. Costs one oracle call per example.
pub fn estimate_a<M: ScoreModel + ?Sized>(model: &M) -> Result<f64> {
    let w0 = vec![0.0; model.dim()];
    let mut best: f64 = 0.0;
    for i in 0..model.num_examples() {
        let l = loss::hinge(model, i, &w0)?;
        let sq: f64 = l.gradient.iter().map(|g| g * g).sum();
        best = best.max(sq);
    }
    Ok(best)
}
