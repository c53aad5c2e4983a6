use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which challenge track a model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// 8-way expression classification.
    Expr,
    /// Valence/arousal regression.
    Va,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Expr => "expr",
            Task::Va => "va",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "expr" => Ok(Task::Expr),
            "va" => Ok(Task::Va),
            other => Err(Error::Config(format!("unknown task '{other}' (expected expr or va)"))),
        }
    }
}

pub const NUM_EXPRESSIONS: usize = 8;

/// Architecture knobs. Missing JSON fields take the [`ModelConfig::desk`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Pixels per side of the square input.
    pub input_size: usize,
    pub channels: usize,
    pub num_heads: usize,
    pub num_classes: usize,
    /// Channel count of each residual stage; the last one is the feature dimension.
    pub backbone_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    /// Channel reduction ratio inside the attention units.
    pub reduction: usize,
    pub task: Task,
    pub seed: u64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(Task::Expr)
    }
}

impl ModelConfig {
    /// CPU-sized configuration: 64x64 input, widths [16, 32, 64], 4 heads.
    pub fn desk(task: Task) -> Self {
        ModelConfig {
            input_size: 64,
            channels: 3,
            num_heads: 4,
            num_classes: NUM_EXPRESSIONS,
            backbone_widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            reduction: 4,
            task,
            seed: 0,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }

    /// Full-resolution 224x224 input as used for face crops in the original setup.
    pub fn full_resolution(task: Task) -> Self {
        ModelConfig {
            input_size: 224,
            ..Self::desk(task)
        }
    }

    /// Smallest useful network, for gradient checks and fast tests.
    pub fn tiny(task: Task) -> Self {
        ModelConfig {
            input_size: 16,
            num_heads: 2,
            backbone_widths: vec![4],
            blocks_per_stage: 1,
            ..Self::desk(task)
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.backbone_widths.last().unwrap_or(&0)
    }

    pub fn stages(&self) -> usize {
        self.backbone_widths.len()
    }

    /// Spatial side of the backbone feature map.
    pub fn feature_size(&self) -> usize {
        self.input_size >> self.stages()
    }

    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Expr => self.num_classes,
            Task::Va => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_heads == 0 {
            return fail("num_heads must be at least 1".into());
        }
        if self.task == Task::Expr && self.num_classes != NUM_EXPRESSIONS {
            return fail(format!("expression task needs {NUM_EXPRESSIONS} classes, got {}", self.num_classes));
        }
        if self.channels != 3 {
            return fail(format!("inputs are RGB, got {} channels", self.channels));
        }
        if self.backbone_widths.is_empty() || self.backbone_widths.contains(&0) {
            return fail("backbone_widths must be non-empty and positive".into());
        }
        if self.blocks_per_stage == 0 {
            return fail("blocks_per_stage must be at least 1".into());
        }
        let factor = 1usize << self.stages();
        if self.input_size == 0 || !self.input_size.is_multiple_of(factor) {
            return fail(format!(
                "input_size {} must be divisible by 2^{} = {factor}",
                self.input_size,
                self.stages()
            ));
        }
        if self.reduction == 0 || self.feature_dim() < self.reduction {
            return fail(format!(
                "attention needs feature_dim {} >= reduction ratio {}",
                self.feature_dim(),
                self.reduction
            ));
        }
        if self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("bn_epsilon must be > 0 and bn_momentum in [0, 1]".into());
        }
        Ok(())
    }
}
