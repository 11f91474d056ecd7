use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("inconsistent feature dimensions: {0}")]
    FeatureDim(String),

    #[error("malformed graph6 on line {line}: {reason}")]
    MalformedGraph6 { line: usize, reason: String },

    #[error("schema error on line {line}: {reason}")]
    Schema { line: usize, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The enumeration would store more items than the configured budget.
    /// `found` is the (deterministic) count reached before aborting.
    #[error("budget of {budget} exceeded ({found} items reached)")]
    BudgetExceeded { budget: usize, found: usize },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
}
