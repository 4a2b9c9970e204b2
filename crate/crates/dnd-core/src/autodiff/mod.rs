//! Reverse-mode automatic differentiation over dense real arrays.
//!
//! A [`Tape`] records the forward pass as a flat list of nodes; calling
//! [`Tape::backward`] replays it in reverse and accumulates gradients into a
//! [`Gradients`] store aligned with the tape. Arrays are immutable once
//! produced; gradients accumulate additively across uses of a value, and the
//! optimizer zeroes its store explicitly before each step.

mod gradcheck;
pub mod opchecks;
mod param;
mod tape;
mod tensor;

#[cfg(test)]
mod tests;

pub use gradcheck::{analytic_gradients, grad_check, max_relative_error, numeric_gradients};
pub use param::{
    normal_init, ones_init, xavier_uniform, zeros_init, BoundParams, GradStore, ParamId, ParamSet,
    Parameter,
};
pub use tape::{Gradients, Tape, VarId};
pub use tensor::Tensor;

use std::fmt;

/// Errors emitted by tape operations and the verification harness.
#[derive(Debug, Clone, PartialEq)]
pub enum AdError {
    /// Two operands cannot be combined; both shapes are reported.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A single operand has an unusable shape for the operation.
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: String,
    },
    /// Row or element index outside the operand.
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    /// A softmax row with every entry masked out has no valid distribution.
    DegenerateRow { row: usize },
    /// A masked loss saw zero valid entries.
    DegenerateLoss { op: &'static str },
    /// grad_check requires a scalar-valued function.
    NonScalarOutput { shape: Vec<usize> },
    /// A validation pass found NaN or Inf values.
    NonFinite { context: String },
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch, left {left:?} vs right {right:?}")
            }
            AdError::BadShape { op, shape, detail } => {
                write!(f, "{op}: unusable shape {shape:?} ({detail})")
            }
            AdError::IndexOutOfRange { op, index, bound } => {
                write!(f, "{op}: index {index} out of range (bound {bound})")
            }
            AdError::DegenerateRow { row } => {
                write!(f, "softmax_rows: row {row} has every entry masked out")
            }
            AdError::DegenerateLoss { op } => {
                write!(f, "{op}: zero valid entries")
            }
            AdError::NonScalarOutput { shape } => {
                write!(f, "grad_check: function output has shape {shape:?}, expected a scalar")
            }
            AdError::NonFinite { context } => {
                write!(f, "non-finite value detected in {context}")
            }
        }
    }
}

impl std::error::Error for AdError {}

pub type AdResult<T> = Result<T, AdError>;

/// Epsilon added to the variance denominator in layer normalization.
pub const LAYER_NORM_EPSILON: f64 = 1e-5;
