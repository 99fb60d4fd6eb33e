//! Reverse-mode automatic differentiation over dense real arrays.
//!
//! Operations are recorded on a [`Tape`] and return [`Var`] handles;
//! [`Tape::backward`] then replays the record in reverse. Complex values are
//! carried as paired real/imaginary channels ([`ComplexVar`]), so gradients
//! of real losses with respect to complex parameters fall out of ordinary
//! real backprop: the pair `(dL/dRe, dL/dIm)` is the steepest-ascent
//! direction `2 dL/dconj(w)`.

mod complex;
mod tape;
mod tensor;

pub use complex::{complex_matvec, wirtinger_grad, ComplexTensor, ComplexVar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("{op}: index {index} out of range for {len} rows")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}
