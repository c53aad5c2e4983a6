use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::records::{argmax, PredictionRecord};
use crate::data::{AnnotationRecord, EXPRESSION_NAMES};
use crate::error::{Error, Result};
use crate::model::{Task, NUM_EXPRESSIONS};
use crate::objectives::{ccc, mean_ccc, ConfusionMatrix};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// One score over all frames.
    Concat,
    /// Mean of per-video scores; a video is the directory part of the item id.
    PerVideo,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(EvalMode::Concat),
            "per_video" => Ok(EvalMode::PerVideo),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected concat or per_video)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task: Task,
    pub mode: EvalMode,
    /// Macro F1 (EXPR) or mean CCC of valence and arousal (VA).
    pub score: f64,
    /// Per-class F1 keyed by class name, or per-channel CCC.
    pub breakdown: BTreeMap<String, f64>,
    pub item_count: usize,
    /// Videos contributing in per-video mode (those with at least two frames).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_count: Option<usize>,
    /// SHA-256 of the training config JSON, when known.
    pub config_hash: Option<String>,
}

/// SHA-256 (hex) of the config's JSON serialization.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// Video key of an item id: everything before the last `/`.
pub fn video_of(id: &str) -> &str {
    Path::new(id).parent().and_then(|p| p.to_str()).unwrap_or("")
}

/// Predicted and true (valence, arousal) pairs.
type PairColumns = (Vec<[f64; 2]>, Vec<[f64; 2]>);

/// Scores predictions against the ground-truth records usable for `task`.
/// Extra predictions are ignored; missing or failed ones are an error.
pub fn evaluate(
    predictions: &[PredictionRecord],
    truth: &[AnnotationRecord],
    task: Task,
    mode: EvalMode,
    config_hash: Option<String>,
) -> Result<ScoreReport> {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    if let Some(p) = predictions.iter().find(|p| p.task != task) {
        return Err(Error::TaskMismatch {
            expected: task.to_string(),
            found: p.task.to_string(),
        });
    }
    let items: Vec<&AnnotationRecord> = truth.iter().filter(|r| r.usable_for(task)).collect();
    if items.is_empty() {
        return Err(Error::EmptyDataset(format!("no ground-truth record carries {task} labels")));
    }
    let missing: Vec<String> = items
        .iter()
        .filter(|r| by_id.get(r.path.as_str()).is_none_or(|p| p.is_failed()))
        .map(|r| r.path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let pred = |r: &AnnotationRecord| by_id[r.path.as_str()];

    let mut report = ScoreReport {
        task,
        mode,
        score: 0.0,
        breakdown: BTreeMap::new(),
        item_count: items.len(),
        video_count: None,
        config_hash,
    };
    match task {
        Task::Expr => {
            let mut truth_labels = Vec::with_capacity(items.len());
            let mut pred_labels = Vec::with_capacity(items.len());
            for r in &items {
                let probs = pred(r).probs.as_ref().ok_or_else(|| Error::Config(format!("{} has no probs", r.path)))?;
                truth_labels.push(r.expr.expect("filtered"));
                pred_labels.push(argmax(probs));
            }
            let cm = ConfusionMatrix::new(&pred_labels, &truth_labels, NUM_EXPRESSIONS)?;
            for (name, f1) in EXPRESSION_NAMES.iter().zip(cm.per_class_f1()) {
                report.breakdown.insert(name.to_string(), f1);
            }
            report.score = cm.macro_f1();
        }
        Task::Va => {
            let pairs = |rs: &[&AnnotationRecord]| -> Result<PairColumns> {
                let mut p = Vec::with_capacity(rs.len());
                let mut t = Vec::with_capacity(rs.len());
                for r in rs {
                    p.push(pred(r).va_pair().ok_or_else(|| Error::Config(format!("{} has no valence/arousal", r.path)))?);
                    t.push(r.va.expect("filtered"));
                }
                Ok((p, t))
            };
            let (score, channels) = match mode {
                EvalMode::Concat => {
                    let (p, t) = pairs(&items)?;
                    mean_ccc(&p, &t)?
                }
                EvalMode::PerVideo => {
                    let mut videos: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
                    for r in &items {
                        videos.entry(video_of(&r.path)).or_default().push(r);
                    }
                    let mut sums = [0.0; 2];
                    let mut used = 0usize;
                    for frames in videos.values().filter(|f| f.len() >= 2) {
                        let (p, t) = pairs(frames)?;
                        for (c, s) in sums.iter_mut().enumerate() {
                            let pc: Vec<f64> = p.iter().map(|x| x[c]).collect();
                            let tc: Vec<f64> = t.iter().map(|x| x[c]).collect();
                            *s += ccc(&pc, &tc)?;
                        }
                        used += 1;
                    }
                    if used == 0 {
                        return Err(Error::SampleSize("per-video mode needs a video with at least two frames".into()));
                    }
                    report.video_count = Some(used);
                    let ch = [sums[0] / used as f64, sums[1] / used as f64];
                    ((ch[0] + ch[1]) / 2.0, ch)
                }
            };
            report.breakdown.insert("valence".into(), channels[0]);
            report.breakdown.insert("arousal".into(), channels[1]);
            report.score = score;
        }
    }
    Ok(report)
}
