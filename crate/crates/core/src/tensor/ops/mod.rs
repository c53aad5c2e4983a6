pub(crate) mod activation;
pub(crate) mod arith;
pub(crate) mod conv;
pub(crate) mod linear;
pub(crate) mod norm;
pub(crate) mod pool;

pub use norm::{BatchNormState, NormMode};
