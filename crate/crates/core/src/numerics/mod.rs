//! Dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Everything differentiable in this crate is built from the handful of
//! operations recorded on a [`Graph`]: matrix products, elementwise maps,
//! softmax, row gathers and concatenations. The tape is rebuilt per
//! forward/backward pass, which keeps variable-length sequences simple.
//! All arithmetic is `f64`; gradient-check tolerances assume this.

mod check;
mod graph;
mod rng;
mod tensor;

pub use check::check_gradient;
pub use graph::{Graph, Var};
pub use rng::Rng;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {op} on {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} elements")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("index {index} out of range for dimension of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph; record a fresh graph")]
    BackwardAlreadyRun,
    #[error("gradients not available before backward")]
    NoGradients,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}
