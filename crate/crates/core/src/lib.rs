//! Code summarization over abstract syntax trees.
//!
//! The pipeline parses a small function language (or ingests AST JSON from an
//! external tool), linearizes the tree in pre-order, restricts each encoder
//! attention head to ancestor-descendant or sibling node pairs, and trains a
//! transformer encoder-decoder that emits a natural-language summary.
//!
//! Numeric code in [`nn`] and [`model`] is generic over [`Scalar`]; the aliases
//! at the crate root fix the scalar to `f64`, which is what training,
//! checkpoints and the gradient checker use.

pub mod ast;
pub mod linearize;
pub mod model;
pub mod nn;
pub mod relations;
pub mod scalar;
pub mod train_eval;

pub use ast::{Ast, AstNode, SourceUnit};
pub use linearize::{LinearSeq, Traversal};
pub use relations::{AttentionPattern, HeadLayout, Relation, RelationMatrices};
pub use scalar::Scalar;

/// Dense row-major tensor of `f64`.
pub type Tensor = nn::Tensor<f64>;
/// Parameter store of `f64` tensors with gradients and Adam moments.
pub type ParamStore = nn::ParamStore<f64>;
/// Encoder-decoder model in `f64`.
pub type Model = model::Model<f64>;
/// Model checkpoint in `f64`.
pub type Checkpoint = model::Checkpoint<f64>;
/// Encoder output in `f64`.
pub type EncoderOutput = model::EncoderOutput<f64>;

/// Single-precision variants, for inference experiments.
pub mod f32 {
    pub type Tensor = crate::nn::Tensor<f32>;
    pub type ParamStore = crate::nn::ParamStore<f32>;
    pub type Model = crate::model::Model<f32>;
}
