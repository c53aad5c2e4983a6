use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Task, NUM_EXPRESSIONS};

/// Tolerance on the probability-sum invariant.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// One model output per item. A record carrying `error` stands for an item
/// that could not be scored and has no payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arousal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn expr(id: impl Into<String>, probs: Vec<f64>) -> Self {
        PredictionRecord {
            id: id.into(),
            task: Task::Expr,
            probs: Some(probs),
            valence: None,
            arousal: None,
            error: None,
        }
    }

    pub fn va(id: impl Into<String>, va: [f64; 2]) -> Self {
        PredictionRecord {
            id: id.into(),
            task: Task::Va,
            probs: None,
            valence: Some(va[0]),
            arousal: Some(va[1]),
            error: None,
        }
    }

    pub fn failed(id: impl Into<String>, task: Task, reason: impl Into<String>) -> Self {
        PredictionRecord {
            id: id.into(),
            task,
            probs: None,
            valence: None,
            arousal: None,
            error: Some(reason.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn va_pair(&self) -> Option<[f64; 2]> {
        Some([self.valence?, self.arousal?])
    }

    /// Checks the payload against the task.
    pub fn check(&self) -> std::result::Result<(), String> {
        let has_va = self.valence.is_some() || self.arousal.is_some();
        if self.error.is_some() {
            return if self.probs.is_none() && !has_va {
                Ok(())
            } else {
                Err("error records carry no payload".into())
            };
        }
        match self.task {
            Task::Expr => {
                let p = self.probs.as_ref().ok_or("expr record without probs")?;
                if has_va {
                    return Err("expr record with valence/arousal".into());
                }
                if p.len() != NUM_EXPRESSIONS {
                    return Err(format!("probs has {} entries, expected {NUM_EXPRESSIONS}", p.len()));
                }
                if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return Err("probs must be finite and non-negative".into());
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    return Err(format!("probs sum to {sum}"));
                }
            }
            Task::Va => {
                if self.probs.is_some() {
                    return Err("va record with probs".into());
                }
                let [v, a] = self.va_pair().ok_or("va record needs both valence and arousal")?;
                if !(-1.0..=1.0).contains(&v) || !(-1.0..=1.0).contains(&a) {
                    return Err(format!("valence/arousal ({v}, {a}) outside [-1, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn read_predictions_from<R: BufRead>(reader: R, origin: &str) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let parse = |message: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        rec.check().map_err(|message| Error::Validation {
            path: origin.to_string(),
            line: i + 1,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions_from(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_predictions_to<W: Write>(mut writer: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|f| write_predictions_to(std::io::BufWriter::new(f), records))
        .map_err(|e| Error::io(path, e))
}
