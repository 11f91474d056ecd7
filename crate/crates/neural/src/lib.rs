//! Trainable path neural network with hand-written reverse-mode gradients.

pub mod cell;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod params;
pub mod plan;
pub mod tensor;
pub mod train;

pub use config::{Aggregation, CellVariant, Head, ModelConfig, Norm, Phi};
pub use error::{NeuralError, Result};
pub use model::{Mode, PathNN, Tape};
pub use params::{AdamConfig, Gradients, ParamId, ParamStore};
pub use plan::{compile, GraphPlan};
pub use tensor::DenseTensor;
