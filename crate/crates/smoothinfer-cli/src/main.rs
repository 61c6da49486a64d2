//! Command-line front end for the sequence-tagging trainer.
//!
//! Three subcommands: `train` fits a model and writes a metrics CSV plus a
//! versioned binary model; `eval` scores a model on a dataset and prints
//! JSON metrics; `bench` sweeps algorithm x seed grids into a long-format
//! CSV for offline plotting.
//!
//! Exit codes: 0 success, 1 configuration or schema errors, 2 missing or
//! unreadable data, 3 divergence (the partial metrics CSV is retained).

mod config;
mod model_io;
mod runner;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use smoothinfer::{
    evaluate, featurize, read_conll, read_conll_using, Error as CoreError, ScoreModel,
    TaggedDataset, TaggingFeatures, TaggingModel,
};

use config::{resolve, Algorithm, RunConfig};
use runner::{run_algorithm, Checkpoint};

#[derive(Parser)]
#[command(name = "smoothinfer", version, about = "Train and evaluate structured taggers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tagger and write a metrics CSV plus a model file.
    Train(TrainArgs),
    /// Evaluate a model file on a dataset; prints JSON metrics.
    Eval(EvalArgs),
    /// Run an algorithm x seed sweep and write a long-format CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set outer_iters=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training data path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the held-out evaluation data path.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Override the metrics CSV output path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Override the model output path.
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset to score.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Flat key = value config file (needs `algorithms` and `seeds`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the training data path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the held-out evaluation data path.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Override the CSV output path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Count full-gradient anchor passes into the oracle-call column
    /// (n calls per pass); by default only stochastic oracle calls count.
    #[arg(long)]
    count_full_gradients: bool,
    /// Run the seeds of each algorithm on worker threads. Output bytes are
    /// identical to a sequential run.
    #[arg(long)]
    parallel: bool,
}

/// A failed command: message plus contract exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn divergence(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}

/// Builds the merged config map from an optional file plus --set items.
fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, Failure> {
    let mut map = BTreeMap::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        map = config::read_config_file(&text).map_err(Failure::config)?;
    }
    config::apply_overrides(&mut map, sets).map_err(Failure::config)?;
    resolve(&map).map_err(Failure::config)
}

/// Loads and featurizes the training data (and the optional eval set).
/// Everything that goes wrong with the data itself maps to exit code 2.
struct LoadedTask {
    train: TaggedDataset,
    eval: Option<TaggedDataset>,
    features: TaggingFeatures,
}

fn load_task(cfg: &RunConfig) -> Result<LoadedTask, Failure> {
    let train_path = cfg
        .train_data
        .as_ref()
        .ok_or_else(|| Failure::config("no training data configured (key \"train_data\")"))?;
    let file = File::open(train_path).map_err(|e| {
        Failure::data(format!("cannot open training data {}: {e}", train_path.display()))
    })?;
    let train = read_conll(std::io::BufReader::new(file)).map_err(|e| {
        Failure::data(format!("training data {}: {e}", train_path.display()))
    })?;
    let features = featurize(&train, cfg.window, cfg.hash_bits, cfg.hash_seed).map_err(|e| {
        match e {
            CoreError::InvalidConfig(_) => Failure::config(e.to_string()),
            other => Failure::data(other.to_string()),
        }
    })?;
    let eval = match &cfg.eval_data {
        None => None,
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                Failure::data(format!("cannot open eval data {}: {e}", path.display()))
            })?;
            let (dataset, unknown) =
                read_conll_using(std::io::BufReader::new(file), &features.alphabet)
                    .map_err(|e| Failure::data(format!("eval data {}: {e}", path.display())))?;
            if unknown > 0 {
                eprintln!(
                    "warning: {unknown} gold tags in {} are outside the training alphabet \
                     and map to the reserved index",
                    path.display()
                );
            }
            Some(dataset)
        }
    };
    Ok(LoadedTask { train, eval, features })
}

fn map_run_error(e: CoreError) -> Failure {
    match e {
        CoreError::Divergence { iteration, value } => Failure::divergence(format!(
            "objective diverged at iteration {iteration} (value {value}); \
             partial metrics were kept"
        )),
        other => Failure::config(other.to_string()),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(data) = args.data {
        cfg.train_data = Some(data);
    }
    if let Some(eval_data) = args.eval_data {
        cfg.eval_data = Some(eval_data);
    }
    if let Some(out_csv) = args.out_csv {
        cfg.out_csv = Some(out_csv);
    }
    if let Some(out_model) = args.out_model {
        cfg.out_model = Some(out_model);
    }
    let algorithm = cfg
        .algorithm
        .ok_or_else(|| Failure::config("no algorithm configured (key \"algorithm\")"))?;
    let out_csv = cfg
        .out_csv
        .clone()
        .ok_or_else(|| Failure::config("no metrics output configured (key \"out_csv\")"))?;
    let out_model = cfg
        .out_model
        .clone()
        .ok_or_else(|| Failure::config("no model output configured (key \"out_model\")"))?;

    // Validate all inputs before creating any output file, so a missing
    // dataset leaves no partial artifacts behind.
    let task = load_task(&cfg)?;
    let model = TaggingModel::new(&task.features, &task.train)
        .map_err(|e| Failure::data(e.to_string()))?;
    let lambda = cfg.lambda_c / model.num_examples() as f64;
    let metric_set = task.eval.as_ref().unwrap_or(&task.train);

    let csv_file = File::create(&out_csv).map_err(|e| {
        Failure::config(format!("cannot create {}: {e}", out_csv.display()))
    })?;
    let mut csv = BufWriter::new(csv_file);
    writeln!(csv, "iter,oracle_calls,train_objective,eval_metric,wall_ms")
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", out_csv.display())))?;

    let mut stream_err: Option<String> = None;
    let record_wall = cfg.record_wall_time;
    let result = run_algorithm(algorithm, &cfg, &model, lambda, cfg.seed, |cp: &Checkpoint| {
        if stream_err.is_some() {
            return;
        }
        let metric = match evaluate(&task.features, cp.w, metric_set) {
            Ok(m) => m.hamming_accuracy,
            Err(e) => {
                stream_err = Some(e.to_string());
                return;
            }
        };
        let wall = if record_wall { cp.wall_ms } else { 0 };
        if let Err(e) = writeln!(
            csv,
            "{},{},{},{},{}",
            cp.iter, cp.oracle_calls, cp.objective, metric, wall
        )
        .and_then(|_| csv.flush())
        {
            stream_err = Some(format!("cannot write {}: {e}", out_csv.display()));
        }
    });
    if let Some(msg) = stream_err {
        return Err(Failure::config(msg));
    }
    let w = result.map_err(map_run_error)?;
    csv.flush()
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", out_csv.display())))?;
    model_io::save_model(&out_model, &task.features, &w).map_err(Failure::config)?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsOut {
    hamming_accuracy: f64,
    token_f1_micro: f64,
    per_class_f1: Vec<f64>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    if !args.model.exists() {
        return Err(Failure::data(format!(
            "model file {} does not exist",
            args.model.display()
        )));
    }
    let (features, w) = model_io::load_model(&args.model).map_err(Failure::config)?;
    let file = File::open(&args.data).map_err(|e| {
        Failure::data(format!("cannot open data {}: {e}", args.data.display()))
    })?;
    let (dataset, unknown) = read_conll_using(std::io::BufReader::new(file), &features.alphabet)
        .map_err(|e| Failure::data(format!("data {}: {e}", args.data.display())))?;
    if unknown > 0 {
        eprintln!(
            "warning: {unknown} gold tags in {} are outside the model alphabet \
             and map to the reserved index (always scored as errors)",
            args.data.display()
        );
    }
    let metrics = evaluate(&features, &w, &dataset).map_err(|e| Failure::data(e.to_string()))?;
    let out = MetricsOut {
        hamming_accuracy: metrics.hamming_accuracy,
        token_f1_micro: metrics.token_f1_micro,
        per_class_f1: metrics.per_class_f1,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&out)
            .map_err(|e| Failure::config(format!("cannot serialize metrics: {e}")))?
    );
    Ok(())
}

/// One finished bench row, owned so parallel workers can hand results back.
struct BenchRow {
    algorithm: &'static str,
    seed: u64,
    oracle_calls: usize,
    objective: f64,
    metric: f64,
}

/// Runs one (algorithm, seed) cell, collecting rows. A divergence is
/// reported alongside the rows produced before it so partial traces
/// survive into the CSV exactly like a sequential streaming run.
fn bench_cell(
    algorithm: Algorithm,
    seed: u64,
    cfg: &RunConfig,
    model: &TaggingModel<'_>,
    features: &TaggingFeatures,
    metric_set: &TaggedDataset,
    lambda: f64,
    count_full: bool,
) -> (Vec<BenchRow>, Option<Failure>) {
    let n = model.num_examples();
    let mut rows = Vec::new();
    let mut stream_err: Option<String> = None;
    let result = run_algorithm(algorithm, cfg, model, lambda, seed, |cp: &Checkpoint| {
        if stream_err.is_some() {
            return;
        }
        let metric = match evaluate(features, cp.w, metric_set) {
            Ok(m) => m.hamming_accuracy,
            Err(e) => {
                stream_err = Some(e.to_string());
                return;
            }
        };
        let oracle_calls = if count_full {
            cp.oracle_calls + n * cp.anchor_passes
        } else {
            cp.oracle_calls
        };
        rows.push(BenchRow {
            algorithm: algorithm.name(),
            seed,
            oracle_calls,
            objective: cp.objective,
            metric,
        });
    });
    let failure = match (stream_err, result) {
        (Some(msg), _) => Some(Failure::config(msg)),
        (None, Err(e)) => Some(map_run_error(e)),
        (None, Ok(_)) => None,
    };
    (rows, failure)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref(), &args.set)?;
    if let Some(data) = args.data {
        cfg.train_data = Some(data);
    }
    if let Some(eval_data) = args.eval_data {
        cfg.eval_data = Some(eval_data);
    }
    if let Some(out_csv) = args.out_csv {
        cfg.out_csv = Some(out_csv);
    }
    if cfg.algorithms.is_empty() {
        return Err(Failure::config(
            "bench needs at least one algorithm (key \"algorithms\")",
        ));
    }
    if cfg.seeds.is_empty() {
        return Err(Failure::config("bench needs at least one seed (key \"seeds\")"));
    }
    let out_csv = cfg
        .out_csv
        .clone()
        .ok_or_else(|| Failure::config("no CSV output configured (key \"out_csv\")"))?;

    let task = load_task(&cfg)?;
    let model = TaggingModel::new(&task.features, &task.train)
        .map_err(|e| Failure::data(e.to_string()))?;
    let lambda = cfg.lambda_c / model.num_examples() as f64;
    let metric_set = task.eval.as_ref().unwrap_or(&task.train);

    let cells: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();

    let outcomes: Vec<(Vec<BenchRow>, Option<Failure>)> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .iter()
                .map(|&(algorithm, seed)| {
                    let cfg = &cfg;
                    let model = &model;
                    let features = &task.features;
                    scope.spawn(move || {
                        bench_cell(
                            algorithm,
                            seed,
                            cfg,
                            model,
                            features,
                            metric_set,
                            lambda,
                            args.count_full_gradients,
                        )
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
        })
    } else {
        cells
            .iter()
            .map(|&(algorithm, seed)| {
                bench_cell(
                    algorithm,
                    seed,
                    &cfg,
                    &model,
                    &task.features,
                    metric_set,
                    lambda,
                    args.count_full_gradients,
                )
            })
            .collect()
    };

    let csv_file = File::create(&out_csv).map_err(|e| {
        Failure::config(format!("cannot create {}: {e}", out_csv.display()))
    })?;
    let mut csv = BufWriter::new(csv_file);
    let io = |e: std::io::Error| Failure::config(format!("cannot write {}: {e}", out_csv.display()));
    writeln!(csv, "algorithm,seed,oracle_calls,objective,metric").map_err(io)?;
    for (rows, failure) in outcomes {
        for row in rows {
            writeln!(
                csv,
                "{},{},{},{},{}",
                row.algorithm, row.seed, row.oracle_calls, row.objective, row.metric
            )
            .map_err(io)?;
        }
        if let Some(f) = failure {
            csv.flush().map_err(io)?;
            return Err(f);
        }
    }
    csv.flush().map_err(io)?;
    Ok(())
}
