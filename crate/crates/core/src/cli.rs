//! The `uu-refine` command line.
//!
//! Every command validates its configuration and inputs before writing
//! anything. Exit status is 0 on success, 1 for invalid input and 2 for
//! runtime or numeric failures; errors are reported as one JSON object on
//! standard error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::annotate::{simulate_annotator, AnnotatorSpec};
use crate::data::{
    generate_gaussians, read_dataset_csv, read_labeling_csv, summary_json, write_dataset_csv,
    write_json, write_labeling_csv, write_run_result, GaussianSpec,
};
use crate::domain::{CorpusSplit, Dataset, Label, PseudoLabeling};
use crate::error::Error;
use crate::metrics::{measured_priors_of_labeling, Confusion};
use crate::pipeline::{compare_estimators, run_pipeline, PipelineConfig, PipelineError, PriorMode, RunResult};
use crate::risk::Estimator;

#[derive(Debug, Parser)]
#[command(name = "uu-refine", version, about = "Iterative pseudo-label refinement with robust UU learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-Gaussian dataset as CSV.
    Generate(GenerateArgs),
    /// Simulate a noisy annotator over a dataset with truth labels.
    Annotate(AnnotateArgs),
    /// Run the refinement loop and write curves.csv and summary.json.
    Refine(RefineArgs),
    /// Run pn, uu and robust-uu side by side.
    Compare(CompareArgs),
    /// Print accuracy and measured corpus priors of a labeling as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub acc_pos: Option<f64>,
    #[arg(long)]
    pub acc_neg: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub labeling: Option<PathBuf>,
    /// Worker threads for multi-seed runs (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// oracle | few-labeled:<n> | fixed:<pi>,<theta_p>,<theta_n>
    #[arg(long)]
    pub prior_mode: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time in summary.json (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// pn | uu | robust-uu
    #[arg(long)]
    pub estimator: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub labeling: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub labeling: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Contents of the `--config` file. Missing keys take their defaults, which
/// describe the bundled two-Gaussian benchmark; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub gaussian: GaussianSpec,
    pub annotator: AnnotatorSpec,
    pub pipeline: PipelineConfig,
    pub paths: PathsConfig,
    pub jobs: Option<usize>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Validation,
    Runtime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn invalid(e: Error) -> CliError {
    CliError::validation(e.to_string())
}

fn from_pipeline(e: PipelineError) -> CliError {
    if e.seed.is_none() || !e.source.is_runtime() {
        CliError::validation(e.to_string())
    } else {
        CliError::runtime(e.to_string())
    }
}

fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::validation(format!("missing --{name} (or paths.{name} in the config)")))
}

fn write_err(e: Error) -> CliError {
    CliError::runtime(e.to_string())
}

pub fn cmd_generate(cfg: &CliConfig, out: &Path) -> Result<(), CliError> {
    let dataset = generate_gaussians(&cfg.gaussian).map_err(invalid)?;
    write_dataset_csv(&dataset, out).map_err(write_err)
}

pub fn cmd_annotate(cfg: &CliConfig, dataset_path: &Path, out: &Path) -> Result<(), CliError> {
    cfg.annotator.validate().map_err(invalid)?;
    let dataset = read_dataset_csv(dataset_path).map_err(invalid)?;
    if !dataset.has_truth() {
        return Err(CliError::validation(format!(
            "{}: annotator simulation needs a dataset with a label column",
            dataset_path.display()
        )));
    }
    let labeling = simulate_annotator(&dataset, &cfg.annotator).map_err(invalid)?;
    write_labeling_csv(&labeling, out).map_err(write_err)
}

fn load_inputs(
    cfg: &PipelineConfig,
    dataset_path: &Path,
    labeling_path: &Path,
) -> Result<(Dataset, PseudoLabeling), CliError> {
    cfg.validate().map_err(invalid)?;
    let dataset = read_dataset_csv(dataset_path).map_err(invalid)?;
    let labeling = read_labeling_csv(labeling_path, &dataset).map_err(invalid)?;
    let needs_truth = matches!(cfg.prior_mode, PriorMode::Oracle | PriorMode::FewLabeled(_));
    if needs_truth && !dataset.has_truth() && cfg.estimator() != Estimator::Pn {
        return Err(CliError::validation(format!(
            "prior mode {} needs a dataset with a label column",
            cfg.prior_mode
        )));
    }
    Ok((dataset, labeling))
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let threads = match jobs {
        Some(0) => return Err(CliError::validation("--jobs must be positive")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn cmd_refine(
    cfg: &CliConfig,
    dataset_path: &Path,
    labeling_path: &Path,
    out_dir: &Path,
    timing: bool,
) -> Result<RunResult, CliError> {
    let (dataset, labeling) = load_inputs(&cfg.pipeline, dataset_path, labeling_path)?;
    let start = Instant::now();
    let mut result = in_pool(cfg.jobs, || run_pipeline(&dataset, &labeling, &cfg.pipeline))?
        .map_err(from_pipeline)?;
    if timing {
        result.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    write_run_result(&result, out_dir).map_err(write_err)?;
    Ok(result)
}

pub fn cmd_compare(
    cfg: &CliConfig,
    dataset_path: &Path,
    labeling_path: &Path,
    out_dir: &Path,
    timing: bool,
) -> Result<BTreeMap<Estimator, Result<RunResult, PipelineError>>, CliError> {
    for e in Estimator::ALL {
        let mut c = cfg.pipeline.clone();
        c.train.estimator = e;
        load_inputs(&c, dataset_path, labeling_path)?;
    }
    let (dataset, labeling) = load_inputs(&cfg.pipeline, dataset_path, labeling_path)?;
    let start = Instant::now();
    let mut results = in_pool(cfg.jobs, || compare_estimators(&dataset, &labeling, &cfg.pipeline))?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut combined = serde_json::Map::new();
    for (est, res) in results.iter_mut() {
        let entry = match res {
            Ok(run) => {
                if timing {
                    run.wall_clock_seconds = Some(elapsed);
                }
                write_run_result(run, out_dir.join(est.as_str())).map_err(write_err)?;
                let summary = summary_json(run);
                json!({
                    "status": "ok",
                    "final_mean_accuracy": run.final_mean_accuracy(),
                    "iterations": summary["iterations"],
                })
            }
            Err(e) => json!({
                "status": "failed",
                "error": e.to_string(),
                "seed": e.seed,
                "iteration": e.iteration,
            }),
        };
        combined.insert(est.as_str().to_string(), entry);
    }
    let summary = json!({
        "config": cfg.pipeline,
        "estimators": combined,
        "wall_clock_seconds": if timing { Some(elapsed) } else { None },
    });
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;
    write_json(&summary, &out_dir.join("summary.json")).map_err(write_err)?;
    if results.values().all(|r| r.is_err()) {
        return Err(CliError::runtime("every estimator failed"));
    }
    Ok(results)
}

pub fn cmd_eval(dataset_path: &Path, labeling_path: &Path) -> Result<serde_json::Value, CliError> {
    let dataset = read_dataset_csv(dataset_path).map_err(invalid)?;
    let labeling = read_labeling_csv(labeling_path, &dataset).map_err(invalid)?;
    if !dataset.has_truth() {
        return Err(CliError::validation(format!(
            "{}: evaluation needs a dataset with a label column",
            dataset_path.display()
        )));
    }
    let confusion = Confusion::from_labeling(&dataset, &labeling).map_err(invalid)?;
    let (theta_p, theta_n) = measured_priors_of_labeling(&dataset, &labeling).map_err(invalid)?;
    // degenerate splits still evaluate; the missing side reports null
    let degenerate = CorpusSplit::from_labeling(&dataset, &labeling).is_err();
    Ok(json!({
        "accuracy": confusion.accuracy().map_err(invalid)?,
        "confusion": confusion,
        "theta_p": theta_p,
        "theta_n": theta_n,
        "n_pos": labeling.count(Label::Positive),
        "n_neg": labeling.count(Label::Negative),
        "degenerate_split": degenerate,
    }))
}

fn apply_run_flags(cfg: &mut CliConfig, args: &RunArgs) -> Result<(), CliError> {
    if let Some(seed) = args.common.seed {
        cfg.pipeline.seeds = vec![seed];
    }
    if let Some(mode) = &args.prior_mode {
        cfg.pipeline.prior_mode = mode.parse().map_err(invalid)?;
    }
    if let Some(t) = args.iterations {
        cfg.pipeline.iterations = t;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    Ok(())
}

fn run_paths(cfg: &CliConfig, args: &RunArgs) -> Result<(PathBuf, PathBuf, PathBuf), CliError> {
    Ok((
        required(args.dataset.clone(), &cfg.paths.dataset, "dataset")?,
        required(args.labeling.clone(), &cfg.paths.labeling, "labeling")?,
        required(args.out.clone(), &cfg.paths.out, "out")?,
    ))
}

/// Executes a parsed command line. Anything meant for standard output is returned.
pub fn run(cli: Cli) -> Result<Option<String>, CliError> {
    match cli.command {
        Command::Generate(args) => {
            let mut cfg = CliConfig::load(args.common.config.as_deref())?;
            if let Some(seed) = args.common.seed {
                cfg.gaussian.seed = seed;
            }
            let out = required(args.out, &cfg.paths.out, "out")?;
            cmd_generate(&cfg, &out)?;
            Ok(None)
        }
        Command::Annotate(args) => {
            let mut cfg = CliConfig::load(args.common.config.as_deref())?;
            if let Some(seed) = args.common.seed {
                cfg.annotator.seed = seed;
            }
            if let Some(a) = args.acc_pos {
                cfg.annotator.acc_pos = a;
            }
            if let Some(a) = args.acc_neg {
                cfg.annotator.acc_neg = a;
            }
            let dataset = required(args.dataset, &cfg.paths.dataset, "dataset")?;
            let out = required(args.out, &cfg.paths.out, "out")?;
            cmd_annotate(&cfg, &dataset, &out)?;
            Ok(None)
        }
        Command::Refine(args) => {
            let mut cfg = CliConfig::load(args.run.common.config.as_deref())?;
            apply_run_flags(&mut cfg, &args.run)?;
            if let Some(e) = &args.estimator {
                cfg.pipeline.train.estimator = e.parse().map_err(invalid)?;
            }
            let (dataset, labeling, out) = run_paths(&cfg, &args.run)?;
            let result = cmd_refine(&cfg, &dataset, &labeling, &out, args.run.timing)?;
            Ok(Some(
                json!({ "final_mean_accuracy": result.final_mean_accuracy() }).to_string(),
            ))
        }
        Command::Compare(args) => {
            let mut cfg = CliConfig::load(args.run.common.config.as_deref())?;
            apply_run_flags(&mut cfg, &args.run)?;
            let (dataset, labeling, out) = run_paths(&cfg, &args.run)?;
            let results = cmd_compare(&cfg, &dataset, &labeling, &out, args.run.timing)?;
            let finals: BTreeMap<_, _> = results
                .iter()
                .map(|(e, r)| (e.as_str(), r.as_ref().ok().and_then(|r| r.final_mean_accuracy())))
                .collect();
            Ok(Some(json!({ "final_mean_accuracy": finals }).to_string()))
        }
        Command::Eval(args) => Ok(Some(cmd_eval(&args.dataset, &args.labeling)?.to_string())),
    }
}
