use pathlab_core::PathKind;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVariant {
    Plain,
    /// Adds a learned embedding of each node's distance to the path source.
    Distance,
    /// Adds the encoded feature of the edge entering each node.
    Edge,
    EdgeDistance,
}

impl CellVariant {
    pub fn uses_distance(self) -> bool {
        matches!(self, CellVariant::Distance | CellVariant::EdgeDistance)
    }

    pub fn uses_edges(self) -> bool {
        matches!(self, CellVariant::Edge | CellVariant::EdgeDistance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Identity,
    /// Linear, ReLU, Linear.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// Per-layer batch normalization of the node update.
    BatchNorm,
    /// Unit-length rows fed to the recurrent cell; the node update is left as is.
    Euclidean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    /// Linear, ReLU, dropout, Linear.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub max_len: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub edge_dim: usize,
    pub num_outputs: usize,
    pub kind: PathKind,
    pub cell: CellVariant,
    pub phi: Phi,
    pub norm: Norm,
    pub readout: Aggregation,
    pub path_agg: Aggregation,
    pub head: Head,
    pub dropout: f64,
}

impl ModelConfig {
    /// Plain cell, identity update, no normalization, sum aggregations,
    /// linear head, no dropout.
    pub fn new(kind: PathKind, max_len: usize, hidden: usize, input_dim: usize, num_outputs: usize) -> Self {
        ModelConfig {
            max_len,
            hidden,
            input_dim,
            edge_dim: 0,
            num_outputs,
            kind,
            cell: CellVariant::Plain,
            phi: Phi::Identity,
            norm: Norm::None,
            readout: Aggregation::Sum,
            path_agg: Aggregation::Sum,
            head: Head::Linear,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NeuralError::Config(msg));
        if self.hidden == 0 || self.input_dim == 0 || self.num_outputs == 0 {
            return bad(format!(
                "hidden ({}), input_dim ({}) and num_outputs ({}) must be positive",
                self.hidden, self.input_dim, self.num_outputs
            ));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.cell.uses_edges() && self.edge_dim == 0 {
            return bad("edge cell needs edge_dim >= 1".into());
        }
        Ok(())
    }
}
