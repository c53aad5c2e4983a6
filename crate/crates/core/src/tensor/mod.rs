//! Minimal reverse-mode differentiation engine.
//!
//! [`Tensor`] holds values; [`Tape`] records every operation applied to
//! [`Var`] handles and replays them backwards. Element type is generic:
//! `f32` for training, `f64` for finite-difference checks.

mod element;
mod gradcheck;
pub(crate) mod ops;
mod storage;
mod tape;

pub use element::{DType, Element};
pub use gradcheck::{compare_gradient, finite_diff_check, relative_error, GradCheckReport};
pub use ops::{BatchNormState, NormMode};
pub use storage::{Tensor, MAX_RANK};
pub use tape::{Tape, Var};
