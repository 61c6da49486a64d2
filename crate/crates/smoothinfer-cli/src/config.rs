//! Run configuration: a flat key = value file, `--set` overrides, and a few
//! dedicated flags, resolved into one validated struct.
//!
//! Precedence is file < `--set` < dedicated flag. Unknown keys are rejected
//! so a typo cannot silently fall back to a default. The regularizer is
//! configured as `lambda_c` with λ = c/n materialized once the training set
//! size is known.

use std::collections::BTreeMap;
use std::path::PathBuf;

use smoothinfer::{InnerBudget, SmootherKind, WarmStart};

/// Keys accepted in config files and `--set` overrides.
const KNOWN_KEYS: &[&str] = &[
    "task",
    "train_data",
    "eval_data",
    "algorithm",
    "algorithms",
    "seeds",
    "seed",
    "smoother",
    "mu",
    "epsilon",
    "topk",
    "lambda_c",
    "kappa",
    "outer_iters",
    "inner_budget",
    "inner_steps",
    "inner_max_epochs",
    "warm_start",
    "step",
    "window",
    "hash_bits",
    "hash_seed",
    "gamma0",
    "t0",
    "eta",
    "epsilon0",
    "mu_schedule",
    "pl_inner_iters",
    "record_wall_time",
    "out_csv",
    "out_model",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Svrg,
    CatalystSvrgConst,
    CatalystSvrgAdapt,
    ProxLinear,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "svrg" => Ok(Algorithm::Svrg),
            "catalyst-svrg-const" => Ok(Algorithm::CatalystSvrgConst),
            "catalyst-svrg-adapt" => Ok(Algorithm::CatalystSvrgAdapt),
            "proxlinear" => Ok(Algorithm::ProxLinear),
            other => Err(format!(
                "unknown algorithm {other:?} (expected sgd, svrg, \
                 catalyst-svrg-const, catalyst-svrg-adapt, or proxlinear)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::CatalystSvrgConst => "catalyst-svrg-const",
            Algorithm::CatalystSvrgAdapt => "catalyst-svrg-adapt",
            Algorithm::ProxLinear => "proxlinear",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuScheduleKind {
    Constant,
    Decay,
}

/// Fully resolved run configuration (data-dependent defaults still pending:
/// `inner_steps` and `t0` fall back to n at run time when `None`).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub seed: u64,
    pub smoother: SmootherKind,
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub topk: usize,
    pub lambda_c: f64,
    pub kappa: Option<f64>,
    pub outer_iters: usize,
    pub budget_kind: BudgetKind,
    pub inner_steps: Option<usize>,
    pub inner_max_epochs: usize,
    pub warm_start: WarmStart,
    pub step: Option<f64>,
    pub window: usize,
    pub hash_bits: u32,
    pub hash_seed: u64,
    pub gamma0: f64,
    pub t0: Option<usize>,
    pub eta: f64,
    pub epsilon0: f64,
    pub mu_schedule: MuScheduleKind,
    pub pl_inner_iters: usize,
    pub record_wall_time: bool,
    pub out_csv: Option<PathBuf>,
    pub out_model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetKind {
    Fixed,
    Relative,
}

impl RunConfig {
    /// The inner budget with the data-dependent default applied.
    pub fn budget(&self, n: usize) -> InnerBudget {
        match self.budget_kind {
            BudgetKind::Fixed => InnerBudget::Fixed { steps: self.inner_steps.unwrap_or(n) },
            BudgetKind::Relative => {
                InnerBudget::Relative { max_epochs: self.inner_max_epochs }
            }
        }
    }
}

/// Parses one `key = value` line; returns None for blanks and comments.
fn parse_line(line: &str, lineno: usize) -> Result<Option<(String, String)>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let Some((key, value)) = line.split_once('=') else {
        return Err(format!("line {lineno}: expected `key = value`, got {line:?}"));
    };
    let key = key.trim().to_string();
    let value = value.trim().to_string();
    if key.is_empty() {
        return Err(format!("line {lineno}: empty key"));
    }
    Ok(Some((key, value)))
}

fn check_known(key: &str) -> Result<(), String> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(format!("unknown config key {key:?}"))
    }
}

/// Reads a config file into an ordered key -> value map. Duplicate keys in
/// one file are rejected; later layers (overrides, flags) replace freely.
pub fn read_config_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if let Some((key, value)) = parse_line(line, idx + 1)? {
            check_known(&key)?;
            if map.insert(key.clone(), value).is_some() {
                return Err(format!("line {}: duplicate key {key:?}", idx + 1));
            }
        }
    }
    Ok(map)
}

/// Applies `--set key=value` items on top of the file map.
pub fn apply_overrides(
    map: &mut BTreeMap<String, String>,
    sets: &[String],
) -> Result<(), String> {
    for item in sets {
        let Some((key, value)) = item.split_once('=') else {
            return Err(format!("--set {item:?}: expected KEY=VALUE"));
        };
        let key = key.trim().to_string();
        check_known(&key)?;
        map.insert(key, value.trim().to_string());
    }
    Ok(())
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("config key {key:?}: cannot parse {value:?}"))
}

fn parse_comma_list<T, F>(key: &str, value: &str, f: F) -> Result<Vec<T>, String>
where
    F: Fn(&str) -> Result<T, String>,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|e| format!("config key {key:?}: {e}")))
        .collect()
}

/// Turns the merged key map into a typed, range-checked configuration.
pub fn resolve(map: &BTreeMap<String, String>) -> Result<RunConfig, String> {
    let mut cfg = RunConfig {
        train_data: None,
        eval_data: None,
        algorithm: None,
        algorithms: Vec::new(),
        seeds: Vec::new(),
        seed: 0,
        smoother: SmootherKind::Entropy,
        mu: None,
        epsilon: None,
        topk: 5,
        lambda_c: 1.0,
        kappa: None,
        outer_iters: 20,
        budget_kind: BudgetKind::Fixed,
        inner_steps: None,
        inner_max_epochs: 10,
        warm_start: WarmStart::ProxCenter,
        step: None,
        window: 2,
        hash_bits: 16,
        hash_seed: 1,
        gamma0: 1.0,
        t0: None,
        eta: 1.0,
        epsilon0: 1.0,
        mu_schedule: MuScheduleKind::Constant,
        pl_inner_iters: 5,
        record_wall_time: false,
        out_csv: None,
        out_model: None,
    };
    for (key, value) in map {
        match key.as_str() {
            "task" => {
                if value != "tagging" {
                    return Err(format!("config key \"task\": only \"tagging\" is supported, got {value:?}"));
                }
            }
            "train_data" => cfg.train_data = Some(PathBuf::from(value)),
            "eval_data" => cfg.eval_data = Some(PathBuf::from(value)),
            "algorithm" => cfg.algorithm = Some(Algorithm::parse(value)?),
            "algorithms" => {
                cfg.algorithms = parse_comma_list(key, value, Algorithm::parse)?;
            }
            "seeds" => {
                cfg.seeds = parse_comma_list(key, value, |s| {
                    s.parse::<u64>().map_err(|_| format!("cannot parse seed {s:?}"))
                })?;
            }
            "seed" => cfg.seed = parse_typed(key, value)?,
            "smoother" => {
                cfg.smoother = match value.as_str() {
                    "entropy" => SmootherKind::Entropy,
                    "topk-l2" => SmootherKind::TopkL2,
                    other => {
                        return Err(format!(
                            "config key \"smoother\": expected entropy or topk-l2, got {other:?}"
                        ))
                    }
                };
            }
            "mu" => cfg.mu = Some(parse_positive(key, value)?),
            "epsilon" => cfg.epsilon = Some(parse_positive(key, value)?),
            "topk" => {
                cfg.topk = parse_typed(key, value)?;
                if cfg.topk == 0 {
                    return Err("config key \"topk\": must be at least 1".into());
                }
            }
            "lambda_c" => {
                cfg.lambda_c = parse_typed(key, value)?;
                if !(cfg.lambda_c.is_finite() && cfg.lambda_c >= 0.0) {
                    return Err(format!(
                        "config key \"lambda_c\": must be finite and nonnegative, got {value}"
                    ));
                }
            }
            "kappa" => cfg.kappa = Some(parse_positive(key, value)?),
            "outer_iters" => cfg.outer_iters = parse_typed(key, value)?,
            "inner_budget" => {
                cfg.budget_kind = match value.as_str() {
                    "fixed" => BudgetKind::Fixed,
                    "relative" => BudgetKind::Relative,
                    other => {
                        return Err(format!(
                            "config key \"inner_budget\": expected fixed or relative, got {other:?}"
                        ))
                    }
                };
            }
            "inner_steps" => cfg.inner_steps = Some(parse_typed(key, value)?),
            "inner_max_epochs" => {
                cfg.inner_max_epochs = parse_typed(key, value)?;
                if cfg.inner_max_epochs == 0 {
                    return Err("config key \"inner_max_epochs\": must be at least 1".into());
                }
            }
            "warm_start" => {
                cfg.warm_start = match value.as_str() {
                    "prox-center" => WarmStart::ProxCenter,
                    "prev-iterate" => WarmStart::PrevIterate,
                    "extrapolation" => WarmStart::Extrapolation,
                    other => {
                        return Err(format!(
                            "config key \"warm_start\": expected prox-center, prev-iterate, \
                             or extrapolation, got {other:?}"
                        ))
                    }
                };
            }
            "step" => cfg.step = Some(parse_positive(key, value)?),
            "window" => cfg.window = parse_typed(key, value)?,
            "hash_bits" => cfg.hash_bits = parse_typed(key, value)?,
            "hash_seed" => cfg.hash_seed = parse_typed(key, value)?,
            "gamma0" => {
                cfg.gamma0 = parse_typed(key, value)?;
                if !(cfg.gamma0.is_finite() && cfg.gamma0 >= 0.0) {
                    return Err(format!(
                        "config key \"gamma0\": must be finite and nonnegative, got {value}"
                    ));
                }
            }
            "t0" => {
                let t0: usize = parse_typed(key, value)?;
                if t0 == 0 {
                    return Err("config key \"t0\": must be at least 1".into());
                }
                cfg.t0 = Some(t0);
            }
            "eta" => cfg.eta = parse_positive(key, value)?,
            "epsilon0" => cfg.epsilon0 = parse_positive(key, value)?,
            "mu_schedule" => {
                cfg.mu_schedule = match value.as_str() {
                    "constant" => MuScheduleKind::Constant,
                    "decay" => MuScheduleKind::Decay,
                    other => {
                        return Err(format!(
                            "config key \"mu_schedule\": expected constant or decay, got {other:?}"
                        ))
                    }
                };
            }
            "pl_inner_iters" => {
                cfg.pl_inner_iters = parse_typed(key, value)?;
                if cfg.pl_inner_iters == 0 {
                    return Err("config key \"pl_inner_iters\": must be at least 1".into());
                }
            }
            "record_wall_time" => {
                cfg.record_wall_time = match value.as_str() {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(format!(
                            "config key \"record_wall_time\": expected true or false, got {other:?}"
                        ))
                    }
                };
            }
            "out_csv" => cfg.out_csv = Some(PathBuf::from(value)),
            "out_model" => cfg.out_model = Some(PathBuf::from(value)),
            other => return Err(format!("unknown config key {other:?}")),
        }
    }
    Ok(cfg)
}

fn parse_positive(key: &str, value: &str) -> Result<f64, String> {
    let v: f64 = parse_typed(key, value)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("config key {key:?}: must be finite and positive, got {value}"))
    }
}
