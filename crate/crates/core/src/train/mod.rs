//! Optimizer, training loop, validation and checkpoints.

mod checkpoint;
mod config;
mod optim;
mod run;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for_task, save_checkpoint, Checkpoint,
    TrainState, FORMAT_VERSION, MAGIC,
};
pub use config::{OptimizerKind, Schedule, TrainConfig};
pub use optim::{clip_grad_norm, grad_norm, optimizer_step, OptimizerSettings, OptimizerState};
pub use run::{
    derive_seed, metric_name, score_outputs, train, validate, EpochMetrics, TrainOutcome, Validation, BEST_CHECKPOINT,
    LAST_CHECKPOINT, METRICS_FILE,
};
