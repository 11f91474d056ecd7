use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] pathlab_core::Error),

    #[error(transparent)]
    Neural(#[from] pathlab_neural::NeuralError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("invalid input: {0}")]
    Input(String),

    /// A suite case failed with an error rather than a verdict.
    #[error("case {id}: {source}")]
    Case { id: String, source: Box<HarnessError> },
}

impl HarnessError {
    pub fn in_case(self, id: &str) -> HarnessError {
        match self {
            HarnessError::Case { .. } => self,
            other => HarnessError::Case { id: id.to_string(), source: Box::new(other) },
        }
    }
}

pub fn read_file(path: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| HarnessError::Io { path: path.to_string(), source })
}

pub fn write_file(path: &str, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io { path: path.to_string(), source })
}
