//! Minimal reverse-mode automatic differentiation: dense tensors, a recording
//! tape, multilayer perceptrons and Adam.

mod adam;
mod checkpoint;
mod learner;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, DEFAULT_LR};
pub use checkpoint::{TensorArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use learner::Learner;
pub use mlp::{Activation, BoundMlp, Mlp, DEFAULT_HIDDEN, DEFAULT_LAYERS};
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite gradient, optimizer step skipped")]
    NonFiniteGradient,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
