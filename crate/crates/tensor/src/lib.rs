//! Dense `f64` tensors and a small reverse-mode autodiff tape.
//!
//! Only the ops a conditional U-Net needs are provided: elementwise
//! arithmetic, per-channel broadcasts, SiLU/ReLU, channel concat,
//! convolution and its transpose, non-overlapping pooling, dense layers and
//! scalar reductions.

mod checkpoint;
mod kernels;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use kernels::ConvGeometry;
pub use tape::{Gradients, PoolMode, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
