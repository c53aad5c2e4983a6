//! The attention network: residual feature extractor, H parallel
//! spatial x channel attention heads, attention fusion and a task head.

mod config;
mod layers;
mod network;
mod params;

pub use config::{ModelConfig, Task, NUM_EXPRESSIONS};
pub use network::{attention_fusion, DanModel, HeadOutput, ModelOutput, Prediction};
pub use params::{Bound, Param, ParamId, ParamStore};
