//! Dense `n×d` tensors, the forward kernels the model needs, a reverse-mode
//! tape over them, parameter storage with Adam, and a finite-difference
//! gradient checker.

mod gradcheck;
pub mod ops;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, Coordinate, GradCheck};
pub use ops::{cross_entropy, feed_forward, layer_norm, masked_attention};
pub use params::{adam_step, AdamConfig, Param, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("attention row {0} has no allowed key")]
    EmptyRow(usize),
    #[error("every target position is padding")]
    AllPad,
    #[error("function value is not finite")]
    NonFinite,
    #[error("gradient of `{0}` is not finite")]
    NonFiniteGradient(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}
