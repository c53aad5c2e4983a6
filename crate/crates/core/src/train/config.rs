use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::AugmentPolicy;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Task};
use crate::objectives::LossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with bias correction and decoupled weight decay.
    Adam,
    /// SGD with heavy-ball momentum and decoupled weight decay.
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run, stepped per epoch.
    Cosine,
}

/// Everything a training run needs. JSON field names match these fields;
/// unknown keys are rejected and missing ones take the desk defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub betas: [f64; 2],
    pub epsilon: f64,
    /// SGD only.
    pub momentum: f64,
    pub schedule: Schedule,
    /// Global gradient-norm ceiling; off when absent.
    pub grad_clip: Option<f64>,
    /// Write `epoch<k>.ckpt` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Class-balanced sampling for EXPR; VA always shuffles uniformly.
    pub balanced_sampling: bool,
    /// Defaults to one pass worth of samples: ceil(train size / batch size).
    pub steps_per_epoch: Option<usize>,
    /// Online augmentation; off when absent.
    pub augment: Option<AugmentPolicy>,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk(Task::Expr)
    }
}

impl TrainConfig {
    /// Published hyper-parameters at CPU scale: batch 32 instead of 1024.
    pub fn desk(task: Task) -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            epochs: 8,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            betas: [0.9, 0.999],
            epsilon: 1e-8,
            momentum: 0.9,
            schedule: Schedule::Constant,
            grad_clip: None,
            checkpoint_every: 1,
            balanced_sampling: true,
            steps_per_epoch: None,
            augment: None,
            loss: LossConfig::for_task(task),
            model: ModelConfig::desk(task),
        }
    }

    /// Published hyper-parameters unchanged: batch 1024 on 224x224 inputs.
    pub fn full_scale(task: Task) -> Self {
        TrainConfig {
            batch_size: 1024,
            model: ModelConfig::full_resolution(task),
            ..Self::desk(task)
        }
    }

    pub fn task(&self) -> Task {
        self.model.task
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay > 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be positive, got {}", self.weight_decay));
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be at least 2 for batch norm, got {}", self.batch_size));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return fail(format!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        if self.steps_per_epoch == Some(0) {
            return fail("steps_per_epoch must be positive".into());
        }
        if let Some(p) = &self.augment {
            p.validate()?;
        }
        self.loss.validate()?;
        self.model.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Learning rate for `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}
