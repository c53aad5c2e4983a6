//! Multi-head attention network for in-the-wild facial affect: 8-class
//! expression classification and valence/arousal regression.
//!
//! The crate is organized bottom-up:
//! - [`tensor`]: reverse-mode differentiation engine
//! - [`model`]: residual backbone, spatial/channel attention heads, fusion, task heads
//! - [`objectives`]: focal, affinity, partition and CCC losses plus challenge metrics
//! - [`data`]: manifests, PPM images, augmentation, balanced sampling, synthetic fixtures
//! - [`train`]: optimizer, training loop, checkpoints
//! - [`eval`]: prediction files, soft-voting ensembles, scoring

pub mod data;
pub mod error;
pub mod gradsuite;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tape, Tensor, Var};
