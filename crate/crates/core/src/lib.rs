//! Combinatorial core of the path-based graph learning toolkit: graphs and
//! their file formats, synthetic generators, bounded path enumeration, WL- and
//! path-trees with canonical hashing, and exact color refinement.

pub mod error;
pub mod format;
pub mod generate;
pub mod graph;
pub mod oracle;
pub mod paths;
pub mod refine;
pub mod trees;

pub use error::{Error, Result};
pub use graph::{Dataset, EdgeFeatures, Graph, Label, NodeFeatures, Task};
pub use paths::{PathKind, PathSet};
pub use refine::{ColorTable, Coloring, GraphFingerprint, RefinementConfig, Verdict};
pub use trees::RootedTree;
