//! Shared training core: dispatches a resolved configuration to the right
//! optimizer and streams uniform per-checkpoint records to the caller.
//!
//! A checkpoint is one outer iteration (accelerated methods, prox-linear)
//! or one epoch (SGD, plain SVRG). Oracle calls count smoothed/non-smooth
//! inference oracle evaluations consumed by training; full-gradient anchor
//! passes are reported separately so callers choose their own accounting.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smoothinfer::catalyst::{
    catalyst_run, estimate_a, make_schedule, sgd_run, svrg_solve, CatalystConfig, HingeObjective,
    ScheduleKind, ScheduleParams, SgdConfig, StoppingRule,
};
use smoothinfer::loss::objective;
use smoothinfer::proxlinear::{proxlinear_run, InnerSolver, MuSchedule, ProxLinearConfig};
use smoothinfer::smoothing::d_omega;
use smoothinfer::{Error, ScoreModel, SmootherKind, SmoothingConfig, TaggingModel};

use crate::config::{Algorithm, MuScheduleKind, RunConfig};

/// One progress record, uniform across optimizers.
pub struct Checkpoint<'a> {
    pub iter: usize,
    /// Cumulative oracle calls consumed by training, anchors excluded.
    pub oracle_calls: usize,
    /// Cumulative full-gradient anchor passes (each costs n oracle calls).
    pub anchor_passes: usize,
    /// Non-smooth regularized objective at this iterate (diagnostic).
    pub objective: f64,
    pub wall_ms: u64,
    pub w: &'a [f64],
}

fn smoothing_config(kind: SmootherKind, mu: f64, topk: usize) -> smoothinfer::Result<SmoothingConfig> {
    match kind {
        SmootherKind::Entropy => SmoothingConfig::entropy(mu),
        SmootherKind::TopkL2 => SmoothingConfig::topk_l2(mu, topk),
        SmootherKind::L2 => SmoothingConfig::l2(mu),
    }
}

/// Log of the largest label-space size over the training examples, for the
/// entropy smoother's simplex constant.
fn max_ln_outcomes(model: &TaggingModel<'_>) -> f64 {
    let t = model.features.num_tags() as f64;
    model
        .data
        .sentences
        .iter()
        .map(|s| s.len() as f64 * t.ln())
        .fold(0.0, f64::max)
}

/// The smoothing level the run optimizes at when `mu` is not set explicitly.
const DEFAULT_MU: f64 = 0.1;

pub fn run_algorithm(
    algorithm: Algorithm,
    cfg: &RunConfig,
    model: &TaggingModel<'_>,
    lambda: f64,
    seed: u64,
    mut on_checkpoint: impl FnMut(&Checkpoint<'_>),
) -> smoothinfer::Result<Vec<f64>> {
    let n = model.num_examples();
    let w0 = vec![0.0; model.dim()];
    match algorithm {
        Algorithm::Sgd => {
            let sgd = SgdConfig {
                gamma0: cfg.gamma0,
                t0: cfg.t0.unwrap_or(n),
                epochs: cfg.outer_iters,
                seed,
            };
            let out = sgd_run(model, lambda, &w0, &sgd, |row, w| {
                on_checkpoint(&Checkpoint {
                    iter: row.iter,
                    oracle_calls: row.oracle_calls,
                    anchor_passes: row.anchor_passes,
                    objective: row.objective,
                    wall_ms: row.wall_ms,
                    w,
                });
            })?;
            Ok(out.w)
        }
        Algorithm::Svrg => {
            let a_est = estimate_a(model)?;
            let mu = cfg.mu.unwrap_or(DEFAULT_MU);
            let smoothing = smoothing_config(cfg.smoother, mu, cfg.topk)?;
            let step = match cfg.step {
                Some(s) => s,
                None => 1.0 / (a_est / mu + lambda),
            };
            let steps_per_round = cfg.inner_steps.unwrap_or(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let started = Instant::now();
            let mut w = w0;
            let mut oracle_calls = 0usize;
            let mut anchor_passes = 0usize;
            for k in 1..=cfg.outer_iters {
                let sum = HingeObjective { model, lambda };
                let out = svrg_solve(
                    &sum,
                    Some(&smoothing),
                    &w,
                    step,
                    &StoppingRule::FixedSteps(steps_per_round),
                    &mut rng,
                )?;
                w = out.w;
                oracle_calls += out.component_evals;
                anchor_passes += out.anchor_passes;
                let value = objective(model, &w, lambda, None)?.value;
                on_checkpoint(&Checkpoint {
                    iter: k,
                    oracle_calls,
                    anchor_passes,
                    objective: value,
                    wall_ms: started.elapsed().as_millis() as u64,
                    w: &w,
                });
                if !value.is_finite() {
                    return Err(Error::Divergence { iteration: k, value });
                }
            }
            Ok(w)
        }
        Algorithm::CatalystSvrgConst | Algorithm::CatalystSvrgAdapt => {
            let a_est = estimate_a(model)?;
            let adaptive = algorithm == Algorithm::CatalystSvrgAdapt;
            let kind = match (adaptive, lambda > 0.0) {
                (false, true) => ScheduleKind::ScConst,
                (false, false) => ScheduleKind::NonscConst,
                (true, true) => ScheduleKind::ScAdaptive,
                (true, false) => ScheduleKind::NonscAdaptive,
            };
            let (mu, epsilon) = match (cfg.mu, cfg.epsilon) {
                (None, None) => (Some(DEFAULT_MU), None),
                other => other,
            };
            let schedule = make_schedule(
                kind,
                &ScheduleParams {
                    lambda,
                    kappa: cfg.kappa,
                    mu,
                    epsilon,
                    d_omega: d_omega(cfg.smoother, max_ln_outcomes(model)),
                    a_est,
                    n,
                },
            )?;
            let run_cfg = CatalystConfig {
                schedule,
                smoother: cfg.smoother,
                topk: cfg.topk,
                outer_iters: cfg.outer_iters,
                budget: cfg.budget(n),
                warm_start: cfg.warm_start,
                step: cfg.step,
                a_est,
                seed,
            };
            let out = catalyst_run(model, lambda, &w0, &run_cfg, |row, w| {
                on_checkpoint(&Checkpoint {
                    iter: row.iter,
                    oracle_calls: row.oracle_calls,
                    anchor_passes: row.anchor_passes,
                    objective: row.objective,
                    wall_ms: row.wall_ms,
                    w,
                });
            })?;
            Ok(out.w)
        }
        Algorithm::ProxLinear => {
            let a_est = estimate_a(model)?;
            let mu = cfg.mu.unwrap_or(DEFAULT_MU);
            let mu_schedule = match cfg.mu_schedule {
                MuScheduleKind::Constant => MuSchedule::Constant(mu),
                MuScheduleKind::Decay => MuSchedule::Decay(mu),
            };
            let run_cfg = ProxLinearConfig {
                eta: cfg.eta,
                epsilon0: cfg.epsilon0,
                mu_schedule,
                smoother: cfg.smoother,
                topk: cfg.topk,
                inner: InnerSolver::Accelerated {
                    outer_iters: cfg.pl_inner_iters,
                    budget: cfg.budget(n),
                },
                outer_iters: cfg.outer_iters,
                always_accept: false,
                a_est,
                seed,
            };
            let out = proxlinear_run(model, lambda, &w0, &run_cfg, |row, w| {
                on_checkpoint(&Checkpoint {
                    iter: row.iter,
                    oracle_calls: row.oracle_calls,
                    anchor_passes: row.anchor_passes,
                    objective: row.objective,
                    wall_ms: row.wall_ms,
                    w,
                });
            })?;
            Ok(out.w)
        }
    }
}
