use thiserror::Error;

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient check failed for {param}[{index}]: relative error {rel_error:.3e}")]
    GradCheckFailed { param: String, index: usize, rel_error: f64 },

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Graph(#[from] pathlab_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
