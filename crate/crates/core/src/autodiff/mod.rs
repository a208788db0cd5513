//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Every op records enough state on the [`Tape`] to produce its vector-Jacobian
//! product; [`Tape::backward`] replays the tape once in reverse. All values are
//! `f64` and every op rejects non-finite outputs.

mod checkpoint;
mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry};
pub use params::{glorot_bound, Bound, Linear, ParamId, ParamStore};
pub use gradcheck::{finite_difference_check, finite_difference_check_many};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
