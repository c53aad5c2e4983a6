use super::{affinity_loss, ccc_loss, focal_loss, partition_loss, va_bin, ClassCenters, LossConfig};
use crate::error::{Error, Result};
use crate::model::{ModelOutput, Prediction};
use crate::tensor::{Element, Var};

/// Ground truth for one batch.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Expr(&'a [usize]),
    Va(&'a [[f64; 2]]),
}

impl Targets<'_> {
    /// Keys into the affinity center table: class labels, or VA grid bins.
    pub fn affinity_keys(&self) -> Vec<usize> {
        match self {
            Targets::Expr(labels) => labels.to_vec(),
            Targets::Va(va) => va.iter().map(|p| va_bin(p[0], p[1])).collect(),
        }
    }
}

/// The total objective together with the value of each term.
pub struct LossBreakdown<'t, T: Element> {
    pub total: Var<'t, T>,
    pub task: f64,
    pub affinity: f64,
    pub partition: f64,
}

/// Task loss (focal or CCC) plus the weighted affinity and partition terms.
/// Terms with a zero weight are not evaluated.
pub fn combined_loss<'t, T: Element>(
    output: &ModelOutput<'t, T>,
    targets: Targets<'_>,
    config: &LossConfig,
    centers: &ClassCenters,
) -> Result<LossBreakdown<'t, T>> {
    let task = match (&output.prediction, targets) {
        (Prediction::Expr { probs, .. }, Targets::Expr(labels)) => focal_loss(probs, labels, config)?,
        (Prediction::Va { va }, Targets::Va(pairs)) => ccc_loss(va, pairs)?,
        (Prediction::Expr { .. }, Targets::Va(_)) => {
            return Err(Error::TaskMismatch {
                expected: "expr targets".into(),
                found: "va targets".into(),
            })
        }
        (Prediction::Va { .. }, Targets::Expr(_)) => {
            return Err(Error::TaskMismatch {
                expected: "va targets".into(),
                found: "expr targets".into(),
            })
        }
    };
    let mut breakdown = LossBreakdown {
        total: task,
        task: task.item().as_f64(),
        affinity: 0.0,
        partition: 0.0,
    };
    if config.lambda_affinity > 0.0 {
        let term = affinity_loss(&output.backbone_features, &targets.affinity_keys(), centers)?;
        breakdown.affinity = term.item().as_f64();
        breakdown.total = breakdown.total.add(&term.scale(config.lambda_affinity))?;
    }
    if config.lambda_partition > 0.0 {
        let heads: Vec<_> = output.heads.iter().map(|h| h.features).collect();
        let term = partition_loss(&heads)?;
        breakdown.partition = term.item().as_f64();
        breakdown.total = breakdown.total.add(&term.scale(config.lambda_partition))?;
    }
    Ok(breakdown)
}
