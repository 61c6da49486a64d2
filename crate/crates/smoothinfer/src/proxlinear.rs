//! Prox-linear outer loop for smooth non-linear score maps.
//!
//! When scores are non-linear in the parameters the hinge objective is no
//! longer convex, but it is a composition `h(g(w))` of the convex max-of-
//! scores loss h with a smooth map g. The prox-linear method exploits that:
//! around the current iterate it linearizes g (not the whole objective),
//! producing the convex local model
//!
//! ```text
//! m(w; c) = (1/n) sum_i h_i(lin_i(w; c)) + (lambda/2)|w|^2
//! ```
//!
//! and takes `w_next ~= argmin_w m(w; c) + (1/(2 eta)) |w - c|^2`. For
//! `eta <= 1/L` (L the curvature of g) the model plus prox term majorizes
//! the true objective, so exact steps never increase it; this implementation
//! additionally guards every step with an explicit descent test.
//!
//! Subproblems are hinge sums over affine tables, i.e. the same shape the
//! accelerated SVRG machinery in [`crate::catalyst`] minimizes, which is the
//! default inner solver. [`prox_gradient`] is the deterministic alternative:
//! an accelerated full-gradient solve of the smoothed subproblem to a tight
//! gradient-norm tolerance, also used to measure the scaled displacement
//! `rho = (c - argmin)/eta` whose norm is the method's stationarity
//! certificate.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalyst::{
    accelerated_loop, make_schedule, CatalystSchedule, InnerBudget, ScheduleKind, ScheduleParams,
    SmoothableFiniteSum, WarmStart,
};
use crate::error::{Error, Result};
use crate::loss::{self, ScoreModel};
use crate::smoothing::{SmootherKind, SmoothingConfig};

/// How the inner smoothing parameter evolves across outer iterations.
#[derive(Clone, Copy, Debug)]
pub enum MuSchedule {
    Constant(f64),
    /// `mu_k = mu0 / k`, tightening the surrogate as iterates settle.
    Decay(f64),
}

impl MuSchedule {
    pub fn mu(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match *self {
            MuSchedule::Constant(mu) => mu,
            MuSchedule::Decay(mu0) => mu0 / k as f64,
        }
    }

    fn base(&self) -> f64 {
        match *self {
            MuSchedule::Constant(mu) | MuSchedule::Decay(mu) => mu,
        }
    }
}

/// Inner solver for the linearized subproblems.
#[derive(Clone, Copy, Debug)]
pub enum InnerSolver {
    /// Accelerated SVRG sweeps (the stochastic default).
    Accelerated { outer_iters: usize, budget: InnerBudget },
    /// Deterministic accelerated full-gradient descent to `grad_tol`.
    FullGradient { grad_tol: f64, max_iters: usize },
}

/// Configuration of a prox-linear run.
#[derive(Clone, Copy, Debug)]
pub struct ProxLinearConfig {
    /// Prox parameter; steps are safe whenever `eta <= 1/L`, which is the
    /// caller's responsibility (the descent test catches violations).
    pub eta: f64,
    /// Inner-accuracy budget: iteration k is granted `epsilon0 / k`.
    pub epsilon0: f64,
    pub mu_schedule: MuSchedule,
    pub smoother: SmootherKind,
    /// Labelings kept by the top-K smoother (ignored by the others).
    pub topk: usize,
    pub inner: InnerSolver,
    pub outer_iters: usize,
    /// Skip the descent test and always take the candidate step.
    pub always_accept: bool,
    /// Curvature scale of the linearized losses (see
    /// [`crate::catalyst::estimate_a`]).
    pub a_est: f64,
    pub seed: u64,
}

/// One outer-iteration record of a prox-linear run.
#[derive(Clone, Copy, Debug)]
pub struct ProxLinearRow {
    pub iter: usize,
    /// Objective after the accept/reject decision (non-increasing unless
    /// `always_accept` is set).
    pub objective: f64,
    /// Objective at the candidate step, whether or not it was taken.
    pub candidate_objective: f64,
    /// `|c - candidate| / eta`, the stationarity measure.
    pub rho_norm: f64,
    /// `(F(candidate) - m(candidate)) / (|candidate - c|^2 / (2 eta))`;
    /// at most 1 whenever `eta <= 1/L`.
    pub model_gap_ratio: f64,
    /// Inner tolerance `epsilon0 / k` granted to this iteration.
    pub inner_epsilon: f64,
    pub accepted: bool,
    /// Cumulative oracle calls consumed by inner solves.
    pub oracle_calls: usize,
    /// Cumulative full-gradient anchor passes of stochastic inner solves.
    pub anchor_passes: usize,
    pub wall_ms: u64,
}

/// Final iterate plus the per-iteration trace.
#[derive(Clone, Debug)]
pub struct ProxLinearOutcome {
    pub w: Vec<f64>,
    pub trace: Vec<ProxLinearRow>,
}

/// The linearized subproblem as a finite sum: component i is
///
/// ```text
/// h_i(lin_i(w; center)) + ((lambda + 1/eta)/2)|w|^2
///   - (1/eta) <center, w> + (1/(2 eta))|center|^2
/// ```
///
/// whose mean is exactly `m(w; center) + (1/(2 eta))|w - center|^2`. The
/// ridge and prox quadratics live inside every component so stochastic
/// solvers see the full strong convexity `lambda + 1/eta`.
pub struct LinearizedObjective<'a, M: ScoreModel + ?Sized> {
    pub model: &'a M,
    pub center: &'a [f64],
    pub lambda: f64,
    pub eta: f64,
}

impl<'a, M: ScoreModel + ?Sized> SmoothableFiniteSum for LinearizedObjective<'a, M> {
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
        let (mut value, calls) =
            loss::linearized_loss_into(self.model, i, self.center, w, smoothing, coef, grad)?;
        let lambda_eff = self.lambda + 1.0 / self.eta;
        let mut w_sq = 0.0;
        let mut c_sq = 0.0;
        let mut dot = 0.0;
        for ((g, &x), &c) in grad.iter_mut().zip(w).zip(self.center) {
            w_sq += x * x;
            c_sq += c * c;
            dot += c * x;
            *g += coef * (lambda_eff * x - c / self.eta);
        }
        value += 0.5 * lambda_eff * w_sq - dot / self.eta + 0.5 * c_sq / self.eta;
        Ok((value, calls))
    }
}

/// Value of the convex local model `m(w; center)` (no prox term).
fn model_value<M: ScoreModel + ?Sized>(
    model: &M,
    center: &[f64],
    w: &[f64],
    lambda: f64,
    smoothing: Option<&SmoothingConfig>,
) -> Result<f64> {
    let n = model.num_examples();
    if n == 0 {
        return Err(Error::InvalidInput("model value needs at least one example".into()));
    }
    let mut scratch = vec![0.0; model.dim()];
    let mut value = 0.0;
    for i in 0..n {
        let (v, _) = loss::linearized_loss_into(model, i, center, w, smoothing, 0.0, &mut scratch)?;
        value += v / n as f64;
    }
    let sq: f64 = w.iter().map(|x| x * x).sum();
    Ok(value + 0.5 * lambda * sq)
}

/// Result of a deterministic prox-linear subproblem solve.
#[derive(Clone, Debug)]
pub struct ProxStep {
    /// Approximate minimizer of the smoothed subproblem.
    pub w: Vec<f64>,
    /// Scaled displacement `(center - w) / eta`.
    pub rho: Vec<f64>,
    /// Gradient norm at the returned point.
    pub grad_residual: f64,
    pub iterations: usize,
    /// Oracle calls consumed (n per gradient evaluation).
    pub oracle_calls: usize,
}

/// Solves `min_w m_mu(w; center) + (1/(2 eta))|w - center|^2` with
/// deterministic accelerated full-gradient descent.
///
/// The subproblem is `(lambda + 1/eta)`-strongly convex with
/// `a_est/mu + lambda + 1/eta`-Lipschitz gradients, so constant-momentum
/// acceleration applies. Stops when the gradient norm drops to `grad_tol`;
/// exceeding `max_iters` is an error carrying the outstanding residual.
pub fn prox_gradient<M: ScoreModel + ?Sized>(
    model: &M,
    lambda: f64,
    center: &[f64],
    eta: f64,
    smoothing: &SmoothingConfig,
    grad_tol: f64,
    max_iters: usize,
    a_est: f64,
) -> Result<ProxStep> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidConfig(format!("eta must be finite and positive, got {eta}")));
    }
    if !(grad_tol.is_finite() && grad_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "grad_tol must be finite and positive, got {grad_tol}"
        )));
    }
    let d = model.dim();
    if center.len() != d {
        return Err(Error::InvalidInput(format!(
            "center has length {}, model dimension is {d}",
            center.len()
        )));
    }
    let sum = LinearizedObjective { model, center, lambda, eta };
    let n = sum.n();
    let lambda_eff = lambda + 1.0 / eta;
    let lip = a_est / smoothing.mu + lambda_eff;
    let momentum = {
        let (sl, sm) = (lip.sqrt(), lambda_eff.sqrt());
        (sl - sm) / (sl + sm)
    };

    let mut y = center.to_vec();
    let mut x = center.to_vec();
    let mut grad = vec![0.0; d];
    let mut oracle_calls = 0usize;
    for it in 0..max_iters {
        grad.fill(0.0);
        for i in 0..n {
            sum.component_into(i, &y, Some(smoothing), 1.0 / n as f64, &mut grad)?;
        }
        oracle_calls += n;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm <= grad_tol {
            let rho = center.iter().zip(&y).map(|(c, w)| (c - w) / eta).collect();
            return Ok(ProxStep {
                w: y,
                rho,
                grad_residual: norm,
                iterations: it,
                oracle_calls,
            });
        }
        for j in 0..d {
            let x_new = y[j] - grad[j] / lip;
            y[j] = x_new + momentum * (x_new - x[j]);
            x[j] = x_new;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: it, value: f64::NAN });
        }
    }
    grad.fill(0.0);
    for i in 0..n {
        sum.component_into(i, &x, Some(smoothing), 1.0 / n as f64, &mut grad)?;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Err(Error::Integrity(format!(
        "prox-gradient solve stalled: residual {norm:.3e} above tolerance {grad_tol:.3e} \
         after {max_iters} iterations"
    )))
}

fn smoothing_for(kind: SmootherKind, mu: f64, topk: usize) -> Result<SmoothingConfig> {
    match kind {
        SmootherKind::Entropy => SmoothingConfig::entropy(mu),
        SmootherKind::L2 => SmoothingConfig::l2(mu),
        SmootherKind::TopkL2 => SmoothingConfig::topk_l2(mu, topk),
    }
}

/// Runs the prox-linear method on a (possibly non-linear) score model.
///
/// Every outer iteration solves the smoothed linearized subproblem around
/// the current iterate, then accepts the candidate only if the true
/// non-smooth objective does not increase (unless `always_accept`). The
/// trace records the stationarity norm `rho` and the ratio of the true
/// model gap to its prox-quadratic budget, so step-size violations are
/// visible in logs. `observer` streams rows as they are produced.
pub fn proxlinear_run<M: ScoreModel + ?Sized>(
    model: &M,
    lambda: f64,
    w0: &[f64],
    cfg: &ProxLinearConfig,
    mut observer: impl FnMut(&ProxLinearRow, &[f64]),
) -> Result<ProxLinearOutcome> {
    if !(cfg.eta.is_finite() && cfg.eta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eta must be finite and positive, got {}",
            cfg.eta
        )));
    }
    if !(cfg.epsilon0.is_finite() && cfg.epsilon0 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon0 must be finite and nonnegative, got {}",
            cfg.epsilon0
        )));
    }
    if cfg.mu_schedule.base() <= 0.0 {
        return Err(Error::InvalidConfig("mu schedule must start positive".into()));
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
    let mut objective = loss::objective(model, &w, lambda, None)?.value;
    let mut oracle_calls = 0usize;
    let mut anchor_passes = 0usize;
    let mut trace = Vec::with_capacity(cfg.outer_iters);

    for k in 1..=cfg.outer_iters {
        let mu_k = cfg.mu_schedule.mu(k);
        let smoothing = smoothing_for(cfg.smoother, mu_k, cfg.topk)?;
        let inner_epsilon = cfg.epsilon0 / k as f64;

        let candidate = match cfg.inner {
            InnerSolver::FullGradient { grad_tol, max_iters } => {
                let step =
                    prox_gradient(model, lambda, &w, cfg.eta, &smoothing, grad_tol, max_iters, cfg.a_est)?;
                oracle_calls += step.oracle_calls;
                step.w
            }
            InnerSolver::Accelerated { outer_iters, budget } => {
                let lambda_eff = lambda + 1.0 / cfg.eta;
                let sub = LinearizedObjective { model, center: &w, lambda, eta: cfg.eta };
                let schedule: CatalystSchedule = make_schedule(
                    ScheduleKind::ScConst,
                    &ScheduleParams {
                        lambda: lambda_eff,
                        kappa: None,
                        mu: Some(mu_k),
                        epsilon: None,
                        d_omega: 1.0,
                        a_est: cfg.a_est,
                        n: sub.n(),
                    },
                )?;
                let mut evals = 0usize;
                let mut anchors = 0usize;
                let solved = accelerated_loop(
                    &sub,
                    &schedule,
                    cfg.smoother,
                    cfg.topk,
                    &w,
                    outer_iters,
                    budget,
                    WarmStart::ProxCenter,
                    None,
                    cfg.a_est,
                    &mut rng,
                    |info| {
                        evals = info.component_evals;
                        anchors = info.anchor_passes;
                        Ok(())
                    },
                )?;
                oracle_calls += evals;
                anchor_passes += anchors;
                solved
            }
        };

        let displacement_sq: f64 =
            candidate.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        let rho_norm = displacement_sq.sqrt() / cfg.eta;
        let candidate_objective = loss::objective(model, &candidate, lambda, None)?.value;
        let model_at_candidate = model_value(model, &w, &candidate, lambda, None)?;
        let budget_quad = displacement_sq / (2.0 * cfg.eta);
        let model_gap_ratio = if budget_quad > 0.0 {
            (candidate_objective - model_at_candidate) / budget_quad
        } else {
            0.0
        };

        let accepted = cfg.always_accept || candidate_objective <= objective;
        if accepted {
            w = candidate;
            objective = candidate_objective;
        }
        let row = ProxLinearRow {
            iter: k,
            objective,
            candidate_objective,
            rho_norm,
            model_gap_ratio,
            inner_epsilon,
            accepted,
            oracle_calls,
            anchor_passes,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        observer(&row, &w);
        trace.push(row);
        if !objective.is_finite() {
            return Err(Error::Divergence { iteration: k, value: objective });
        }
    }
    Ok(ProxLinearOutcome { w, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::seeded;
    use crate::graph::Labeling;
    use crate::loss::test_support::{random_quadratic_model, random_table_model, random_w, TableModel};
    use crate::loss::QuadraticScoreModel;

    fn full_sum_value<S: SmoothableFiniteSum>(
        sum: &S,
        w: &[f64],
        smoothing: Option<&SmoothingConfig>,
    ) -> f64 {
        let mut scratch = vec![0.0; sum.dim()];
        let mut value = 0.0;
        for i in 0..sum.n() {
            let (v, _) = sum.component_into(i, w, smoothing, 0.0, &mut scratch).unwrap();
            value += v / sum.n() as f64;
        }
        value
    }

    #[test]
    fn linearized_objective_equals_model_plus_prox() {
        let mut rng = seeded(301);
        let model = random_table_model(&mut rng, 4, 4);
        let center = random_w(&mut rng, model.dim());
        let w = random_w(&mut rng, model.dim());
        let (lambda, eta) = (0.3, 0.5);
        let smoothing = SmoothingConfig::entropy(0.2).unwrap();
        let sum = LinearizedObjective { model: &model, center: &center, lambda, eta };
        let got = full_sum_value(&sum, &w, Some(&smoothing));
        // Linear model: the linearization is the model itself, so the sum
        // must equal the smoothed objective plus the prox quadratic.
        let base = loss::objective(&model, &w, lambda, Some(&smoothing)).unwrap().value;
        let prox: f64 =
            w.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * eta);
        let want = base + prox;
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "sum value {got} vs objective+prox {want}"
        );
    }

    #[test]
    fn prox_gradient_closed_form_single_labeling() {
        // One node with one label: the hinge is identically zero, so the
        // subproblem is (lambda/2)|w|^2 + (1/(2 eta))|w - c|^2 with
        // minimizer c / (1 + eta lambda).
        let model = TableModel::new(vec![1], vec![Labeling::new(vec![0])], vec![1.0]);
        let center = vec![2.0];
        let (lambda, eta) = (0.5, 0.25);
        let smoothing = SmoothingConfig::entropy(0.1).unwrap();
        let step =
            prox_gradient(&model, lambda, &center, eta, &smoothing, 1e-10, 10_000, 0.0).unwrap();
        let want = 2.0 / (1.0 + eta * lambda);
        assert!((step.w[0] - want).abs() <= 1e-8, "got {} want {want}", step.w[0]);
        let want_rho = (2.0 - want) / eta;
        assert!((step.rho[0] - want_rho).abs() <= 1e-7);
        assert!(step.grad_residual <= 1e-10);
    }

    #[test]
    fn prox_gradient_reaches_stationarity_of_smoothed_subproblem() {
        let mut rng = seeded(302);
        let model = random_table_model(&mut rng, 3, 3);
        let center = random_w(&mut rng, model.dim());
        let (lambda, eta) = (0.2, 0.5);
        let smoothing = SmoothingConfig::entropy(0.3).unwrap();
        let a_est = crate::catalyst::estimate_a(&model).unwrap();
        let step =
            prox_gradient(&model, lambda, &center, eta, &smoothing, 1e-9, 50_000, a_est).unwrap();
        // Independent check through central differences of the subproblem value.
        let sum = LinearizedObjective { model: &model, center: &center, lambda, eta };
        let h = 1e-6;
        for j in 0..model.dim() {
            let mut wp = step.w.clone();
            let mut wm = step.w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (full_sum_value(&sum, &wp, Some(&smoothing))
                - full_sum_value(&sum, &wm, Some(&smoothing)))
                / (2.0 * h);
            assert!(fd.abs() <= 1e-4, "coordinate {j} has residual slope {fd}");
        }
    }

    #[test]
    fn prox_gradient_errors_when_capped() {
        let mut rng = seeded(303);
        let model = random_table_model(&mut rng, 2, 3);
        let center = random_w(&mut rng, model.dim());
        let smoothing = SmoothingConfig::entropy(0.05).unwrap();
        let a_est = crate::catalyst::estimate_a(&model).unwrap();
        let err = prox_gradient(&model, 0.1, &center, 1.0, &smoothing, 1e-12, 3, a_est)
            .unwrap_err();
        match err {
            Error::Integrity(msg) => {
                assert!(msg.contains("residual"), "message should carry the residual: {msg}")
            }
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    fn toy_config(inner: InnerSolver, outer_iters: usize) -> ProxLinearConfig {
        ProxLinearConfig {
            eta: 0.05,
            epsilon0: 0.01,
            mu_schedule: MuSchedule::Constant(0.05),
            smoother: SmootherKind::Entropy,
            topk: 1,
            inner,
            outer_iters,
            always_accept: false,
            a_est: 0.0,
            seed: 9,
        }
    }

    /// Largest spectral norm of Q_y - Q_gold across a model's examples,
    /// the curvature constant governing safe eta (closed form, 2x2 case).
    fn curvature(model: &QuadraticScoreModel) -> f64 {
        let spectral = |m: &[Vec<f64>]| -> f64 {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            (tr / 2.0 + disc).abs().max((tr / 2.0 - disc).abs())
        };
        let mut worst: f64 = 0.0;
        for (i, qi) in model.q.iter().enumerate() {
            let qg = &qi[model.gold[i]];
            for qy in qi {
                let diff: Vec<Vec<f64>> = qy
                    .iter()
                    .zip(qg)
                    .map(|(ry, rg)| ry.iter().zip(rg).map(|(a, b)| a - b).collect())
                    .collect();
                worst = worst.max(spectral(&diff));
            }
        }
        worst
    }

    #[test]
    fn objective_never_increases_with_descent_test() {
        let mut rng = seeded(304);
        let model = random_quadratic_model(&mut rng, 4, 2);
        let lambda = 0.1;
        let a_est = crate::catalyst::estimate_a(&model).unwrap();
        let lip = curvature(&model);
        let mut cfg = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 100_000 },
            12,
        );
        cfg.eta = 0.5 / lip.max(1e-6);
        cfg.a_est = a_est;
        let w0 = random_w(&mut rng, 2);
        let out = proxlinear_run(&model, lambda, &w0, &cfg, |_, _| {}).unwrap();
        let f0 = loss::objective(&model, &w0, lambda, None).unwrap().value;
        let mut prev = f0;
        for row in &out.trace {
            assert!(
                row.objective <= prev + 1e-12,
                "objective increased: {} after {prev}",
                row.objective
            );
            prev = row.objective;
            assert!((row.inner_epsilon - 0.01 / row.iter as f64).abs() <= 1e-15);
        }
        assert!(out.trace.last().unwrap().objective < f0, "no progress made");
    }

    #[test]
    fn model_gap_ratio_within_budget_for_safe_eta() {
        let mut rng = seeded(305);
        for trial in 0..5 {
            let model = random_quadratic_model(&mut rng, 3, 2);
            let lip = curvature(&model);
            let mut cfg = toy_config(
                InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 100_000 },
                6,
            );
            cfg.eta = 1.0 / (2.0 * lip.max(1e-6));
            cfg.a_est = crate::catalyst::estimate_a(&model).unwrap();
            let w0 = random_w(&mut rng, 2);
            let out = proxlinear_run(&model, 0.05, &w0, &cfg, |_, _| {}).unwrap();
            for row in &out.trace {
                assert!(
                    row.model_gap_ratio <= 1.0 + 1e-6,
                    "trial {trial}: ratio {} exceeds the majorization budget",
                    row.model_gap_ratio
                );
            }
        }
    }

    #[test]
    fn always_accept_takes_every_candidate() {
        let mut rng = seeded(306);
        let model = random_quadratic_model(&mut rng, 3, 2);
        let mut cfg = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 100_000 },
            5,
        );
        cfg.always_accept = true;
        cfg.a_est = crate::catalyst::estimate_a(&model).unwrap();
        let w0 = random_w(&mut rng, 2);
        let out = proxlinear_run(&model, 0.1, &w0, &cfg, |_, _| {}).unwrap();
        assert!(out.trace.iter().all(|r| r.accepted));
        for row in &out.trace {
            assert_eq!(row.objective.to_bits(), row.candidate_objective.to_bits());
        }
    }

    #[test]
    fn accelerated_inner_solver_makes_progress_and_is_deterministic() {
        let mut rng = seeded(307);
        let model = random_quadratic_model(&mut rng, 4, 2);
        let mut cfg = toy_config(
            InnerSolver::Accelerated {
                outer_iters: 5,
                budget: InnerBudget::Fixed { steps: 8 },
            },
            6,
        );
        cfg.a_est = crate::catalyst::estimate_a(&model).unwrap();
        let lip = curvature(&model);
        cfg.eta = 0.5 / lip.max(1e-6);
        let w0 = random_w(&mut rng, 2);
        let a = proxlinear_run(&model, 0.1, &w0, &cfg, |_, _| {}).unwrap();
        let b = proxlinear_run(&model, 0.1, &w0, &cfg, |_, _| {}).unwrap();
        assert_eq!(a.w, b.w, "same seed must reproduce bitwise");
        let f0 = loss::objective(&model, &w0, 0.1, None).unwrap().value;
        assert!(a.trace.last().unwrap().objective <= f0);
        assert!(a.trace.last().unwrap().anchor_passes > 0);
        assert!(a.trace.last().unwrap().oracle_calls > 0);
    }

    #[test]
    fn stationarity_certificate_bound_holds_on_toy() {
        // min_k |rho_k|^2 <= (2/(eta K)) (F(w0) - F* + sum_k eps_k) with
        // F* from a dense grid with local refinement; exact prox steps make
        // the eps terms pure slack.
        let mut rng = seeded(308);
        let model = random_quadratic_model(&mut rng, 4, 2);
        let lambda = 0.1;
        let lip = curvature(&model);
        let outer_iters = 10;
        let mut cfg = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-9, max_iters: 200_000 },
            outer_iters,
        );
        cfg.eta = 1.0 / (2.0 * lip.max(1e-6));
        cfg.epsilon0 = 1e-3;
        cfg.mu_schedule = MuSchedule::Constant(1e-3);
        cfg.a_est = crate::catalyst::estimate_a(&model).unwrap();
        let w0 = vec![1.5, -1.0];
        let out = proxlinear_run(&model, lambda, &w0, &cfg, |_, _| {}).unwrap();

        let f = |w: &[f64]| loss::objective(&model, w, lambda, None).unwrap().value;
        let mut best = f64::INFINITY;
        let mut best_w = [0.0, 0.0];
        let coarse = 31;
        for a in 0..=coarse {
            for b in 0..=coarse {
                let w = [-3.0 + 6.0 * a as f64 / coarse as f64, -3.0 + 6.0 * b as f64 / coarse as f64];
                let v = f(&w);
                if v < best {
                    best = v;
                    best_w = w;
                }
            }
        }
        for a in -20..=20 {
            for b in -20..=20 {
                let w = [best_w[0] + 0.01 * a as f64, best_w[1] + 0.01 * b as f64];
                best = best.min(f(&w));
            }
        }

        let min_rho_sq = out
            .trace
            .iter()
            .map(|r| r.rho_norm * r.rho_norm)
            .fold(f64::INFINITY, f64::min);
        let eps_sum: f64 = (1..=outer_iters).map(|k| cfg.epsilon0 / k as f64).sum();
        let bound =
            (2.0 / (cfg.eta * outer_iters as f64)) * (f(&w0) - best + eps_sum);
        assert!(
            min_rho_sq <= 1.05 * bound,
            "stationarity certificate violated: min |rho|^2 = {min_rho_sq} vs bound {bound}"
        );
    }

    #[test]
    fn zero_outer_iters_returns_start() {
        let mut rng = seeded(309);
        let model = random_quadratic_model(&mut rng, 2, 2);
        let cfg = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 1000 },
            0,
        );
        let w0 = random_w(&mut rng, 2);
        let out = proxlinear_run(&model, 0.1, &w0, &cfg, |_, _| {}).unwrap();
        assert_eq!(out.w, w0);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn rejects_bad_configuration() {
        let mut rng = seeded(310);
        let model = random_quadratic_model(&mut rng, 2, 2);
        let w0 = vec![0.0, 0.0];
        let mut cfg = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 1000 },
            2,
        );
        cfg.eta = 0.0;
        assert!(matches!(
            proxlinear_run(&model, 0.1, &w0, &cfg, |_, _| {}),
            Err(Error::InvalidConfig(_))
        ));
        let mut cfg2 = toy_config(
            InnerSolver::FullGradient { grad_tol: 1e-8, max_iters: 1000 },
            2,
        );
        cfg2.epsilon0 = -1.0;
        assert!(matches!(
            proxlinear_run(&model, 0.1, &w0, &cfg2, |_, _| {}),
            Err(Error::InvalidConfig(_))
        ));
    }
}
