//! `dan`: synthetic data, training, gradient checks, prediction, scoring,
//! ensembles and static reports.
//!
//! Exit codes: 0 on success, 1 on an operational failure (a JSON error object
//! is written to stderr), 2 on a usage error.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dan_core::eval::EvalMode;
use dan_core::model::Task;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "dan", version, about = "Multi-head attention network for expression and valence/arousal estimation")]
pub struct Cli {
    /// Training configuration (JSON). Used by train, eval and ensemble-eval.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path; a directory for synth and train, a file otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic 8-class corpus (PPM images plus manifests).
    Synth(SynthArgs),
    /// Train a model and write checkpoints and metrics.jsonl.
    Train(TrainArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Predict every manifest item with a checkpoint (JSONL output).
    Predict(PredictArgs),
    /// Score a prediction file against a manifest.
    Eval(EvalArgs),
    /// Soft-vote several members and score them and the ensemble.
    EnsembleEval(EnsembleArgs),
    /// Render metrics and score reports into a static HTML page.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Expr,
    Va,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Expr => Task::Expr,
            TaskArg::Va => Task::Va,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Concat,
    PerVideo,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Concat => EvalMode::Concat,
            ModeArg::PerVideo => EvalMode::PerVideo,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest(s); records are merged and filtered by task.
    #[arg(long = "train", required = true, value_name = "CSV")]
    pub train: Vec<PathBuf>,
    /// Validation manifest.
    #[arg(long, value_name = "CSV")]
    pub val: Option<PathBuf>,
    /// Image root; defaults to the directory of the first training manifest.
    #[arg(long, value_name = "DIR")]
    pub root: Option<PathBuf>,
    /// Task when no --config is given (desk defaults).
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = dan_core::gradsuite::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub root: Option<PathBuf>,
    /// Required task; a checkpoint trained for the other task is refused.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "JSONL")]
    pub predictions: PathBuf,
    /// Ground-truth manifest.
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    /// Defaults to the task of the first prediction.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum, default_value_t = ModeArg::Concat)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("members").required(true).multiple(true))]
pub struct EnsembleArgs {
    /// Member checkpoint (repeat for each member).
    #[arg(long = "checkpoint", value_name = "CKPT", group = "members")]
    pub checkpoints: Vec<PathBuf>,
    /// Member prediction file (repeat for each member).
    #[arg(long = "predictions", value_name = "JSONL", group = "members", conflicts_with = "checkpoints")]
    pub predictions: Vec<PathBuf>,
    /// Ground-truth manifest; checkpoints predict its items.
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub root: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum, default_value_t = ModeArg::Concat)]
    pub mode: ModeArg,
    /// Member weights, comma separated; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Also write the voted predictions here.
    #[arg(long, value_name = "JSONL")]
    pub voted: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.jsonl written by train (repeat to overlay runs).
    #[arg(long = "metrics", required = true, value_name = "JSONL")]
    pub metrics: Vec<PathBuf>,
    /// Score report JSON written by eval (repeat for several).
    #[arg(long = "score", value_name = "JSON")]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value = "Training report")]
    pub title: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut body = json!({ "error": e.kind(), "message": e.to_string() });
            if let Some(details) = e.details() {
                body["details"] = details;
            }
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
