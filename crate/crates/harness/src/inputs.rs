//! Graph and dataset sources named on the command line.

use std::path::Path;

use pathlab_core::format::{parse_graph6, parse_jsonl_dataset};
use pathlab_core::generate::{er_random, from_spec};
use pathlab_core::{Dataset, Graph, Label, Task};

use crate::error::{read_file, HarnessError, Result};
use crate::training::csl_training_set;

/// Graphs from a `.g6`/`.graph6` or `.jsonl` file, or from a generator spec
/// such as `cycle:6` when no such file exists.
pub fn load_graphs(source: &str) -> Result<Vec<Graph>> {
    if Path::new(source).is_file() {
        let bytes = read_file(source)?;
        return if source.ends_with(".jsonl") { Ok(parse_jsonl_dataset(&bytes)?.graphs) } else { Ok(parse_graph6(&bytes)?) };
    }
    Ok(from_spec(source)?)
}

pub fn load_graph(source: &str, index: usize) -> Result<Graph> {
    let graphs = load_graphs(source)?;
    let n = graphs.len();
    graphs.into_iter().nth(index).ok_or_else(|| HarnessError::Input(format!("{source} has {n} graphs, no index {index}")))
}

/// `csl` (150 relabelled CSL graphs), `er` (50 draws of `er_random(100,
/// 0.05)`), a JSONL dataset file, or any graph source as an unlabelled
/// dataset.
pub fn load_dataset(source: &str, seed: u64) -> Result<Dataset> {
    match source {
        "csl" => Ok(csl_training_set(seed)),
        "er" => {
            let graphs = (0..50).map(|i| er_random(100, 0.05, seed.wrapping_add(i))).collect::<Result<Vec<_>, _>>()?;
            Ok(Dataset::new("er", Task::None, graphs)?)
        }
        _ if source.ends_with(".jsonl") && Path::new(source).is_file() => {
            let mut ds = parse_jsonl_dataset(&read_file(source)?)?;
            if ds.name.is_empty() {
                ds.name = stem(source);
            }
            Ok(ds)
        }
        _ => {
            let graphs = load_graphs(source)?;
            Ok(Dataset::new(stem(source), infer_task(&graphs), graphs)?)
        }
    }
}

/// No task without labels, classification when every label is a class,
/// regression otherwise.
pub fn infer_task(graphs: &[Graph]) -> Task {
    if graphs.iter().all(|g| g.label().is_none()) {
        return Task::None;
    }
    let classes: Option<Vec<usize>> = graphs
        .iter()
        .map(|g| match g.label() {
            Some(Label::Class(c)) => Some(c),
            _ => None,
        })
        .collect();
    match classes.and_then(|c| c.into_iter().max()) {
        Some(m) => Task::Classification { num_classes: m + 1 },
        None => Task::Regression,
    }
}

fn stem(source: &str) -> String {
    Path::new(source).file_stem().map_or_else(|| source.to_string(), |s| s.to_string_lossy().into_owned())
}
