use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dan_core::data::{load_manifest, merge_sources, synth_generate, AnnotationRecord, Dataset, SynthSpec};
use dan_core::eval::{
    config_hash, evaluate, predict_records, read_predictions, soft_vote, write_predictions, EvalMode, PredictionRecord,
    ScoreReport,
};
use dan_core::gradsuite::{gradient_suite_with, SuiteOptions};
use dan_core::model::Task;
use dan_core::train::{load_checkpoint, load_checkpoint_for_task, train, EpochMetrics, TrainConfig, BEST_CHECKPOINT};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{Cli, Command, EnsembleArgs, EvalArgs, GradcheckArgs, PredictArgs, ReportArgs, SynthArgs, TrainArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dan_core::Error),
    #[error("{} of {total} item(s) could not be predicted; see {out}", .failed.len())]
    PredictFailures { failed: Vec<String>, total: usize, out: String },
    #[error("{} gradient check(s) failed: {}", .0.len(), .0.join(", "))]
    GradCheck(Vec<String>),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::PredictFailures { .. } => "predict_failures",
            CliError::GradCheck(_) => "gradcheck",
            CliError::Write { .. } => "io",
        }
    }

    pub fn details(&self) -> Option<Value> {
        match self {
            CliError::Core(dan_core::Error::MissingPredictions(ids)) => Some(json!({ "missing": ids })),
            CliError::PredictFailures { failed, .. } => Some(json!({ "failed": failed })),
            CliError::GradCheck(names) => Some(json!({ "failed": names })),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Gradcheck(a) => gradcheck(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::EnsembleEval(a) => ensemble_eval(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Write { path: path.into(), source })
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

/// Writes pretty JSON to `--out` when given and prints it compactly to stdout.
fn emit<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    if let Some(out) = &cli.out {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        write_file(out, text.as_bytes())?;
    }
    print_json(value);
    Ok(())
}

/// Exits with a usage error (status 2) when `--out` is absent.
fn require_out<'a>(cli: &'a Cli, command: &str) -> &'a PathBuf {
    cli.out.as_ref().unwrap_or_else(|| {
        use clap::CommandFactory;
        Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, format!("--out is required for {command}"))
            .exit()
    })
}

fn default_root(manifest: &Path, root: &Option<PathBuf>) -> PathBuf {
    root.clone()
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let out = require_out(cli, "synth");
    let spec = SynthSpec {
        num_classes: a.classes,
        per_class: a.per_class,
        image_size: a.size,
        seed: cli.seed.unwrap_or(0),
    };
    let written = synth_generate(&spec, out)?;
    print_json(&json!({
        "images": written.images,
        "manifest": written.manifest,
        "train": written.train,
        "val": written.val,
        "spec": spec,
    }));
    Ok(())
}

fn train_config(cli: &Cli, task: Option<Task>) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::desk(task.unwrap_or(Task::Expr)),
    };
    if let Some(t) = task {
        if t != cfg.task() {
            return Err(dan_core::Error::TaskMismatch {
                expected: t.to_string(),
                found: cfg.task().to_string(),
            }
            .into());
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = require_out(cli, "train");
    let mut cfg = train_config(cli, a.task.map(Task::from))?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let task = cfg.task();
    let root = default_root(&a.train[0], &a.root);
    let manifests = a.train.iter().map(|p| load_manifest(p)).collect::<dan_core::Result<Vec<_>>>()?;
    let merged = merge_sources(&manifests, task)?;
    let size = cfg.model.input_size;
    let train_ds = Dataset::load(merged.records, &root, size)?;
    let val_ds = match &a.val {
        Some(p) => {
            let records = merge_sources(&[load_manifest(p)?], task)?.records;
            Some(Dataset::load(records, &root, size)?)
        }
        None => None,
    };
    fs::create_dir_all(out).map_err(|source| CliError::Write { path: out.to_path_buf(), source })?;
    write_file(&out.join("config.json"), serde_json::to_string_pretty(&cfg).expect("serializable").as_bytes())?;
    let mut stdout = std::io::stdout();
    let outcome = train(&cfg, &train_ds, val_ds.as_ref(), Some(out), &mut |m: &EpochMetrics| {
        let _ = writeln!(stdout, "{}", serde_json::to_string(m).expect("serializable"));
    })?;
    print_json(&json!({
        "task": task,
        "epochs": outcome.state.epoch,
        "train_items": train_ds.len(),
        "val_items": val_ds.as_ref().map(Dataset::len),
        "best_metric": outcome.state.best_metric,
        "best_epoch": outcome.state.best_epoch,
        "best_checkpoint": outcome.state.best_epoch.map(|_| out.join(BEST_CHECKPOINT)),
        "checkpoints": outcome.checkpoints,
        "config_hash": config_hash(&cfg),
    }));
    Ok(())
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let opts = SuiteOptions {
        instances: a.instances,
        seed: cli.seed.unwrap_or(0),
        tolerance: a.tolerance,
        ..SuiteOptions::default()
    };
    let report = gradient_suite_with(&opts, |c| {
        eprintln!(
            "{} {:<28} {:>3} instances {:>5} coords {:>3} skipped  max rel err {:.2e}",
            if c.pass() { "ok  " } else { "FAIL" },
            c.name,
            c.instances,
            c.coordinates,
            c.skipped,
            c.max_rel_err
        )
    });
    emit(cli, &json!({ "pass": report.pass(), "tolerance": opts.tolerance, "report": report }))?;
    let failed: Vec<String> = report.checks.iter().filter(|c| !c.pass()).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed))
    }
}

fn load_member(path: &Path, task: Option<Task>) -> Result<dan_core::train::Checkpoint<f32>> {
    Ok(match task {
        Some(t) => load_checkpoint_for_task::<f32>(path, t)?,
        None => load_checkpoint::<f32>(path)?,
    })
}

fn predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let out = require_out(cli, "predict");
    let ck = load_member(&a.checkpoint, a.task.map(Task::from))?;
    let manifest = load_manifest(&a.manifest)?;
    let records = predict_records(&ck.model, &manifest, &default_root(&a.manifest, &a.root), a.batch_size.max(1));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    }
    write_predictions(out, &records)?;
    let failed: Vec<String> = records.iter().filter(|r| r.is_failed()).map(|r| r.id.clone()).collect();
    print_json(&json!({
        "task": ck.config.task(),
        "items": records.len(),
        "failed": failed.len(),
        "out": out,
    }));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::PredictFailures {
            failed,
            total: records.len(),
            out: out.display().to_string(),
        })
    }
}

fn hash_from(cli: &Cli) -> Result<Option<String>> {
    Ok(match &cli.config {
        Some(p) => Some(config_hash(&TrainConfig::load(p)?)),
        None => None,
    })
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let preds = read_predictions(&a.predictions)?;
    let truth = load_manifest(&a.manifest)?;
    let task = resolve_task(a.task, &preds);
    let report = evaluate(&preds, &truth, task, a.mode.into(), hash_from(cli)?)?;
    emit(cli, &report)
}

fn resolve_task(arg: Option<crate::TaskArg>, preds: &[PredictionRecord]) -> Task {
    arg.map(Task::from).or_else(|| preds.first().map(|p| p.task)).unwrap_or(Task::Expr)
}

#[derive(Serialize)]
struct MemberScore {
    source: PathBuf,
    score: f64,
}

#[derive(Serialize)]
struct EnsembleReport {
    task: Task,
    mode: EvalMode,
    weights: Option<Vec<f64>>,
    members: Vec<MemberScore>,
    worst_member: f64,
    best_member: f64,
    ensemble: ScoreReport,
    ensemble_at_least_worst: bool,
}

fn ensemble_eval(cli: &Cli, a: &EnsembleArgs) -> Result<()> {
    let truth: Vec<AnnotationRecord> = load_manifest(&a.manifest)?;
    let mut task = a.task.map(Task::from);
    let mut hash = hash_from(cli)?;
    let (sources, members): (Vec<PathBuf>, Vec<Vec<PredictionRecord>>) = if a.checkpoints.is_empty() {
        let members = a.predictions.iter().map(|p| read_predictions(p)).collect::<dan_core::Result<Vec<_>>>()?;
        (a.predictions.clone(), members)
    } else {
        let root = default_root(&a.manifest, &a.root);
        let mut members = Vec::new();
        for path in &a.checkpoints {
            let ck = load_member(path, task)?;
            task = Some(ck.config.task());
            if hash.is_none() {
                hash = Some(config_hash(&ck.config));
            }
            members.push(predict_records(&ck.model, &truth, &root, a.batch_size.max(1)));
        }
        (a.checkpoints.clone(), members)
    };
    let task = task.unwrap_or_else(|| resolve_task(None, &members[0]));
    let mode: EvalMode = a.mode.into();
    let mut scores = Vec::new();
    for (source, m) in sources.iter().zip(&members) {
        let r = evaluate(m, &truth, task, mode, None)?;
        scores.push(MemberScore {
            source: source.clone(),
            score: r.score,
        });
    }
    let voted = soft_vote(&members, a.weights.as_deref())?;
    if let Some(path) = &a.voted {
        write_predictions(path, &voted)?;
    }
    let ensemble = evaluate(&voted, &truth, task, mode, hash)?;
    let worst = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let best = scores.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    let report = EnsembleReport {
        task,
        mode,
        weights: a.weights.clone(),
        members: scores,
        worst_member: worst,
        best_member: best,
        ensemble_at_least_worst: ensemble.score >= worst,
        ensemble,
    };
    emit(cli, &report)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let out = require_out(cli, "report");
    let mut runs = Vec::new();
    for path in &a.metrics {
        runs.push((path.display().to_string(), crate::report::read_metrics(path)?));
    }
    let mut scores = Vec::new();
    for path in &a.scores {
        let text = fs::read_to_string(path).map_err(|e| dan_core::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let score: ScoreReport = serde_json::from_str(&text).map_err(dan_core::Error::from)?;
        scores.push((path.display().to_string(), score));
    }
    let html = crate::report::render(&a.title, &runs, &scores);
    write_file(out, html.as_bytes())?;
    print_json(&json!({ "out": out, "runs": runs.len(), "scores": scores.len() }));
    Ok(())
}
