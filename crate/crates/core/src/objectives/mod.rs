//! Training objectives and challenge metrics.

mod affinity;
mod ccc;
mod combined;
mod f1;
mod focal;
mod partition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Task, NUM_EXPRESSIONS};

pub use affinity::{affinity_loss, va_bin, ClassCenters, VA_BINS};
pub use ccc::{ccc, ccc_loss, mean_ccc};
pub use combined::{combined_loss, LossBreakdown, Targets};
pub use f1::{macro_f1, ConfusionMatrix};
pub use focal::{cross_entropy, focal_loss};
pub use partition::partition_loss;

/// Lower bound applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Class weighting of the focal loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FocalAlpha {
    Uniform(f64),
    PerClass(Vec<f64>),
}

impl FocalAlpha {
    pub fn weight(&self, class: usize) -> f64 {
        match self {
            FocalAlpha::Uniform(a) => *a,
            FocalAlpha::PerClass(w) => w[class],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub focal_alpha: FocalAlpha,
    pub lambda_affinity: f64,
    pub lambda_partition: f64,
    /// Step size of the exponential moving average pulling class centers
    /// toward batch class means.
    pub affinity_center_lr: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal_gamma: 2.0,
            focal_alpha: FocalAlpha::Uniform(1.0),
            lambda_affinity: 1.0,
            lambda_partition: 1.0,
            affinity_center_lr: 0.5,
        }
    }
}

impl LossConfig {
    /// Defaults per task; the affinity term is off for VA regression.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Expr => Self::default(),
            Task::Va => LossConfig {
                lambda_affinity: 0.0,
                ..Self::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let alpha_ok = match &self.focal_alpha {
            FocalAlpha::Uniform(a) => ok(*a),
            FocalAlpha::PerClass(w) => w.len() == NUM_EXPRESSIONS && w.iter().all(|&a| ok(a)),
        };
        if !ok(self.focal_gamma) || !alpha_ok || !ok(self.lambda_affinity) || !ok(self.lambda_partition) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative (per-class alpha needs 8 entries)".into(),
            ));
        }
        if !(self.affinity_center_lr > 0.0 && self.affinity_center_lr <= 1.0) {
            return Err(Error::Config(format!(
                "affinity_center_lr must be in (0, 1], got {}",
                self.affinity_center_lr
            )));
        }
        Ok(())
    }
}
