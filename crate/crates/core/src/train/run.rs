use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, TrainState};
use super::config::TrainConfig;
use super::optim::{clip_grad_norm, optimizer_step, OptimizerSettings};
use crate::data::{epoch_permutation, AugmentKey, BalancedSampler, Dataset};
use crate::error::{Error, Result};
use crate::eval::{argmax, predict_dataset};
use crate::model::{DanModel, Task, NUM_EXPRESSIONS};
use crate::objectives::{combined_loss, macro_f1, mean_ccc, ClassCenters, Targets, PROB_FLOOR, VA_BINS};
use crate::tensor::{Element, NormMode, Tape};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub metric_name: String,
    pub metric_value: f64,
    pub wall_ms: u64,
}

/// Split-level result of [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    /// Task loss over the whole split: mean focal loss, or `1 - mean CCC`.
    pub loss: f64,
    pub metric_name: &'static str,
    pub metric_value: f64,
    pub outputs: Vec<Vec<f64>>,
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Expr => "macro_f1",
        Task::Va => "mean_ccc",
    }
}

/// Independent 64-bit stream seed derived from a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const AUGMENT_STREAM: u64 = 1;
const SAMPLER_STREAM: u64 = 2;

/// Task loss and challenge metric from full-split outputs.
pub fn score_outputs(task: Task, focal_gamma: f64, outputs: &[Vec<f64>], data: &Dataset) -> Result<(f64, f64)> {
    let indices: Vec<usize> = (0..data.len()).collect();
    match task {
        Task::Expr => {
            let labels = data.expr_labels(&indices)?;
            let loss = outputs
                .iter()
                .zip(&labels)
                .map(|(p, &y)| {
                    let pt = p[y].max(PROB_FLOOR);
                    -(1.0 - pt).powf(focal_gamma) * pt.ln()
                })
                .sum::<f64>()
                / labels.len() as f64;
            let pred: Vec<usize> = outputs.iter().map(|p| argmax(p)).collect();
            Ok((loss, macro_f1(&pred, &labels, NUM_EXPRESSIONS)?))
        }
        Task::Va => {
            let targets = data.va_targets(&indices)?;
            let pred: Vec<[f64; 2]> = outputs.iter().map(|r| [r[0], r[1]]).collect();
            let (m, _) = mean_ccc(&pred, &targets)?;
            Ok((1.0 - m, m))
        }
    }
}

/// Single deterministic eval-mode pass. Takes the model by shared reference,
/// so parameters and running statistics cannot change.
pub fn validate<T: Element>(model: &DanModel<T>, data: &Dataset, config: &TrainConfig) -> Result<Validation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("validation split is empty".into()));
    }
    let task = model.config().task;
    let outputs = predict_dataset(model, data, config.batch_size)?;
    let (loss, metric_value) = score_outputs(task, config.loss.focal_gamma, &outputs, data)?;
    Ok(Validation {
        loss,
        metric_name: metric_name(task),
        metric_value,
        outputs,
    })
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DanModel<f32>,
    pub state: TrainState<f32>,
    pub history: Vec<EpochMetrics>,
    pub checkpoints: Vec<PathBuf>,
}

struct MetricsLog {
    file: Option<std::fs::File>,
    path: PathBuf,
}

impl MetricsLog {
    fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_vec(m)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

fn check_task_data(task: Task, data: &Dataset, split: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("{split} split is empty")));
    }
    if let Some(r) = data.records().iter().find(|r| !r.usable_for(task)) {
        return Err(Error::TaskMismatch {
            expected: format!("{task} labels on every {split} record"),
            found: format!("unlabeled record {}", r.path),
        });
    }
    Ok(())
}

/// Trains a fresh model. Each epoch draws class-balanced (EXPR) or shuffled
/// batches, steps the optimizer, then validates and logs. With `out_dir`,
/// writes `metrics.jsonl`, `last.ckpt`, `best.ckpt` and `epoch<k>.ckpt`.
/// `progress` sees every metrics line as it is produced.
pub fn train(
    config: &TrainConfig,
    train_data: &Dataset,
    val_data: Option<&Dataset>,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let task = config.task();
    check_task_data(task, train_data, "training")?;
    if let Some(v) = val_data {
        check_task_data(task, v, "validation")?;
    }
    if train_data.input_size() != config.model.input_size {
        return Err(Error::Geometry(format!(
            "dataset prepared at {}px, model expects {}px",
            train_data.input_size(),
            config.model.input_size
        )));
    }
    let mut model = DanModel::<f32>::new(config.model.clone())?;
    let mut state = TrainState::new(&model);
    let feature_dim = config.model.feature_dim();
    let center_keys = match task {
        Task::Expr => NUM_EXPRESSIONS,
        Task::Va => VA_BINS,
    };
    let use_affinity = config.loss.lambda_affinity > 0.0;
    let mut centers = ClassCenters::new(center_keys, feature_dim);

    let mut log = MetricsLog {
        file: None,
        path: PathBuf::new(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        log.path = dir.join(METRICS_FILE);
        log.file = Some(std::fs::File::create(&log.path).map_err(|e| Error::io(&log.path, e))?);
    }

    let all: Vec<usize> = (0..train_data.len()).collect();
    let labels = match task {
        Task::Expr => Some(train_data.expr_labels(&all)?),
        Task::Va => None,
    };
    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| train_data.len().div_ceil(config.batch_size));
    let augment_seed = derive_seed(config.seed, AUGMENT_STREAM);
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let epoch_seed = derive_seed(config.seed, SAMPLER_STREAM.wrapping_add(epoch as u64 * 16));
        let batches: Vec<Vec<usize>> = match (&labels, config.balanced_sampling) {
            (Some(l), true) => {
                let mut sampler = BalancedSampler::new(l, NUM_EXPRESSIONS, epoch_seed)?;
                (0..steps).map(|_| sampler.by_ref().take(config.batch_size).collect()).collect()
            }
            _ => {
                let order: Vec<usize> = (0..steps * config.batch_size)
                    .map(|i| i % train_data.len())
                    .collect::<Vec<_>>();
                let perm = epoch_permutation(train_data.len(), epoch_seed, epoch as u64);
                order
                    .chunks(config.batch_size)
                    .map(|c| c.iter().map(|&i| perm[i]).collect::<Vec<_>>())
                    .filter(|b| b.len() >= 2)
                    .collect()
            }
        };
        let settings = OptimizerSettings::from_config(config, config.learning_rate_at(epoch));
        let mut loss_sum = 0.0;
        let mut outputs: Vec<Vec<f64>> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for (step, batch) in batches.iter().enumerate() {
            let augmentation = config.augment.as_ref().map(|policy| AugmentKey {
                policy,
                seed: augment_seed,
                first_index: state.samples_seen,
            });
            let images = train_data.batch::<f32>(batch, augmentation)?;
            state.samples_seen += batch.len() as u64;
            let expr_labels;
            let va_targets;
            let targets = match task {
                Task::Expr => {
                    expr_labels = train_data.expr_labels(batch)?;
                    Targets::Expr(&expr_labels)
                }
                Task::Va => {
                    va_targets = train_data.va_targets(batch)?;
                    Targets::Va(&va_targets)
                }
            };
            let tape = Tape::new();
            let output = model.forward(&tape, &images, NormMode::Train)?;
            if use_affinity {
                // Classes seen for the first time take this batch's mean before the loss.
                centers.update(&output.backbone_features.value(), &targets.affinity_keys(), 0.0)?;
            }
            let parts = combined_loss(&output, targets, &config.loss, &centers)?;
            let total = parts.total.item().as_f64();
            if !total.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss {total} at epoch {epoch}, batch {step} (task {}, affinity {}, partition {})",
                    parts.task, parts.affinity, parts.partition
                )));
            }
            tape.backward(parts.total)?;
            model.accumulate_grads(&output.params);
            if let Some(max_norm) = config.grad_clip {
                clip_grad_norm(model.params_mut(), max_norm);
            }
            optimizer_step(model.params_mut(), &mut state.optimizer, &settings)?;
            model.zero_grad();
            if use_affinity {
                centers.update(&output.backbone_features.value(), &targets.affinity_keys(), config.loss.affinity_center_lr)?;
            }
            loss_sum += total;
            let values = output.prediction.output().value();
            let width = values.shape()[1];
            outputs.extend(values.data().chunks(width).map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
            seen.extend_from_slice(batch);
        }
        state.epoch = epoch + 1;
        state.centers = use_affinity.then(|| centers.clone());

        let train_metric = if seen.len() >= 2 {
            score_outputs(task, config.loss.focal_gamma, &outputs, &train_data.subset(&seen))?.1
        } else {
            f64::NAN
        };
        let mut lines = vec![EpochMetrics {
            epoch: epoch + 1,
            split: "train".into(),
            loss: loss_sum / batches.len().max(1) as f64,
            metric_name: metric_name(task).into(),
            metric_value: train_metric,
            wall_ms: started.elapsed().as_millis() as u64,
        }];
        let selection = match val_data {
            Some(v) => {
                let val = validate(&model, v, config)?;
                lines.push(EpochMetrics {
                    epoch: epoch + 1,
                    split: "val".into(),
                    loss: val.loss,
                    metric_name: val.metric_name.into(),
                    metric_value: val.metric_value,
                    wall_ms: started.elapsed().as_millis() as u64,
                });
                val.metric_value
            }
            None => train_metric,
        };
        for m in &lines {
            log.write(m)?;
            progress(m);
        }
        history.extend(lines);

        let improved = state.best_metric.is_none_or(|b| selection > b);
        if improved {
            state.best_metric = Some(selection);
            state.best_epoch = Some(epoch + 1);
        }
        if let Some(dir) = out_dir {
            let mut save = |name: String| -> Result<()> {
                let path = dir.join(name);
                save_checkpoint(&path, config, &model, &state)?;
                if !checkpoints.contains(&path) {
                    checkpoints.push(path);
                }
                Ok(())
            };
            save(LAST_CHECKPOINT.into())?;
            if improved {
                save(BEST_CHECKPOINT.into())?;
            }
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                save(format!("epoch{}.ckpt", epoch + 1))?;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        state,
        history,
        checkpoints,
    })
}
