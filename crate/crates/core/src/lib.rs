//! Low-light enhancement by conditional diffusion with frequency-aware guidance.

pub mod denoiser;
pub mod diffusion;
pub mod gradcheck;
pub mod imaging;
pub mod metrics;
pub mod spectral;
pub mod trainer;

use llie_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),
    /// A NaN or infinity appeared during computation.
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
