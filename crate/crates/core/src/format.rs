//! graph6 and JSONL readers/writers.
//!
//! graph6 follows McKay's format note: a size header `N(n)` followed by the
//! upper triangle of the adjacency matrix in column-major order
//! (`x(0,1) x(0,2) x(1,2) x(0,3) ...`), packed into 6-bit groups, each offset
//! by 63. Both the 1-byte (`n <= 62`) and the extended size headers are read.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{Dataset, EdgeFeatures, Graph, Label, NodeFeatures, Task};

const GRAPH6_HEADER: &[u8] = b">>graph6<<";

/// Parses newline-separated graph6 records. Blank lines are skipped; the
/// optional `>>graph6<<` header is accepted on any line.
pub fn parse_graph6(bytes: &[u8]) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        let mut record = raw.strip_suffix(b"\r").unwrap_or(raw);
        if let Some(rest) = record.strip_prefix(GRAPH6_HEADER) {
            record = rest;
        }
        if record.is_empty() {
            continue;
        }
        let g = decode_graph6_record(record)
            .map_err(|reason| Error::MalformedGraph6 { line, reason })?;
        graphs.push(g.with_id(format!("g{}", graphs.len())));
    }
    Ok(graphs)
}

fn decode_graph6_record(record: &[u8]) -> std::result::Result<Graph, String> {
    if let Some(&b) = record.iter().find(|&&b| !(63..=126).contains(&b)) {
        return Err(format!("byte {b:#04x} outside the printable range 63..=126"));
    }
    let (n, body) = decode_size(record)?;
    let num_bits = n * n.saturating_sub(1) / 2;
    let num_bytes = num_bits.div_ceil(6);
    if body.len() != num_bytes {
        return Err(format!(
            "expected {num_bytes} adjacency bytes for n={n}, found {}",
            body.len()
        ));
    }
    let bit = |k: usize| (body[k / 6] - 63) >> (5 - k % 6) & 1 == 1;
    let mut edges = Vec::new();
    let mut k = 0;
    for j in 1..n {
        for i in 0..j {
            if bit(k) {
                edges.push((i, j));
            }
            k += 1;
        }
    }
    if (num_bits..num_bytes * 6).any(bit) {
        return Err("nonzero padding bits".into());
    }
    Graph::from_edges(n, edges).map_err(|e| e.to_string())
}

fn decode_size(record: &[u8]) -> std::result::Result<(usize, &[u8]), String> {
    let word = |bytes: &[u8]| bytes.iter().fold(0usize, |acc, &b| (acc << 6) | usize::from(b - 63));
    match record {
        [126, 126, rest @ ..] => {
            if rest.len() < 6 {
                return Err("truncated 8-byte size header".into());
            }
            Ok((word(&rest[..6]), &rest[6..]))
        }
        [126, rest @ ..] => {
            if rest.len() < 3 {
                return Err("truncated 4-byte size header".into());
            }
            Ok((word(&rest[..3]), &rest[3..]))
        }
        [b, rest @ ..] => Ok((usize::from(b - 63), rest)),
        [] => Err("empty record".into()),
    }
}

/// Encodes one graph as a graph6 record (without trailing newline).
pub fn encode_graph6(g: &Graph) -> String {
    let n = g.num_nodes();
    let mut out: Vec<u8> = Vec::new();
    if n <= 62 {
        out.push(n as u8 + 63);
    } else if n <= 258_047 {
        out.push(126);
        out.extend((0..3).rev().map(|s| ((n >> (6 * s)) & 63) as u8 + 63));
    } else {
        out.extend([126, 126]);
        out.extend((0..6).rev().map(|s| ((n >> (6 * s)) & 63) as u8 + 63));
    }
    let mut acc = 0u8;
    let mut filled = 0;
    for j in 1..n {
        for i in 0..j {
            acc = (acc << 1) | u8::from(g.has_edge(i, j));
            filled += 1;
            if filled == 6 {
                out.push(acc + 63);
                acc = 0;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        out.push((acc << (6 - filled)) + 63);
    }
    String::from_utf8(out).expect("graph6 bytes are ASCII")
}

pub fn write_graph6(graphs: &[Graph]) -> String {
    graphs.iter().map(|g| encode_graph6(g) + "\n").collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    id: String,
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_feat: Option<NodeFeatRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_feat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeFeatRecord {
    Real(Vec<Vec<f64>>),
    Categorical(Vec<u32>),
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    dataset: String,
    task: Task,
}

/// Parses a JSONL dataset. An optional first line
/// `{"dataset": name, "task": ...}` fixes the task; otherwise the task is
/// inferred from the labels (integers: classification, reals: regression).
pub fn parse_jsonl_dataset(bytes: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Schema { line: 0, reason: format!("invalid UTF-8: {e}") })?;
    let mut header: Option<HeaderRecord> = None;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema = |e: serde_json::Error| Error::Schema { line, reason: e.to_string() };
        let value: Value = serde_json::from_str(raw).map_err(schema)?;
        if value.get("dataset").is_some() {
            if header.is_some() || !records.is_empty() {
                return Err(Error::Schema { line, reason: "header must be the first line".into() });
            }
            header = Some(serde_json::from_value(value).map_err(schema)?);
            continue;
        }
        let record: GraphRecord = serde_json::from_value(value).map_err(schema)?;
        records.push((line, record));
    }

    let task = match &header {
        Some(h) => h.task,
        None => infer_task(&records)?,
    };
    let mut graphs = Vec::with_capacity(records.len());
    for (line, record) in records {
        graphs.push(record_to_graph(record, task).map_err(|e| match e {
            Error::Schema { reason, .. } => Error::Schema { line, reason },
            other => Error::Schema { line, reason: other.to_string() },
        })?);
    }
    let name = header.map(|h| h.dataset).unwrap_or_default();
    Dataset::new(name, task, graphs)
}

fn infer_task(records: &[(usize, GraphRecord)]) -> Result<Task> {
    let mut max_class: Option<u64> = None;
    let mut any_real = false;
    for (line, r) in records {
        match &r.label {
            None => {}
            Some(Value::Number(num)) if num.is_u64() => {
                max_class = max_class.max(num.as_u64());
            }
            Some(Value::Number(_)) => any_real = true,
            Some(other) => {
                return Err(Error::Schema { line: *line, reason: format!("bad label {other}") })
            }
        }
    }
    Ok(match (any_real, max_class) {
        (true, _) => Task::Regression,
        (false, Some(c)) => Task::Classification { num_classes: c as usize + 1 },
        (false, None) => Task::None,
    })
}

fn record_to_graph(r: GraphRecord, task: Task) -> Result<Graph> {
    let schema = |reason: String| Error::Schema { line: 0, reason };
    let mut seen = BTreeMap::new();
    for (pos, &[u, v]) in r.edges.iter().enumerate() {
        if u >= r.num_nodes || v >= r.num_nodes {
            return Err(schema(format!("edge ({u}, {v}) exceeds num_nodes {}", r.num_nodes)));
        }
        if u == v {
            return Err(schema(format!("self-loop on node {u}")));
        }
        if seen.insert((u.min(v), u.max(v)), pos).is_some() {
            return Err(schema(format!("duplicate edge ({u}, {v})")));
        }
    }
    let mut g = Graph::from_edges(r.num_nodes, r.edges.iter().map(|&[u, v]| (u, v)))?.with_id(r.id);
    if let Some(nf) = r.node_feat {
        let features = match nf {
            NodeFeatRecord::Real(rows) => NodeFeatures::Real(rows),
            NodeFeatRecord::Categorical(ids) => NodeFeatures::Categorical(ids),
        };
        g = g.with_node_features(features)?;
    }
    if let Some(ef) = r.edge_feat {
        if ef.len() != r.edges.len() {
            return Err(schema(format!("{} edge_feat rows for {} edges", ef.len(), r.edges.len())));
        }
        let map: EdgeFeatures = seen.into_iter().map(|(key, pos)| (key, ef[pos].clone())).collect();
        g = g.with_edge_features(map)?;
    }
    let label = match (r.label, task) {
        (None, _) => None,
        (Some(Value::Number(num)), Task::Classification { .. }) => Some(Label::Class(
            num.as_u64().ok_or_else(|| schema(format!("class label {num} is not an index")))? as usize,
        )),
        (Some(Value::Number(num)), Task::Regression) => Some(Label::Real(
            num.as_f64().ok_or_else(|| schema(format!("bad regression target {num}")))?,
        )),
        (Some(other), _) => return Err(schema(format!("label {other} does not fit task {task:?}"))),
    };
    Ok(g.with_label(label))
}

/// Serializes a dataset as JSONL with a leading header line.
pub fn write_jsonl_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = serde_json::to_vec(&HeaderRecord { dataset: ds.name.clone(), task: ds.task })
        .expect("header serializes");
    out.push(b'\n');
    for g in &ds.graphs {
        let edges: Vec<[usize; 2]> = g.edges().map(|(u, v)| [u, v]).collect();
        let record = GraphRecord {
            id: g.id().to_string(),
            num_nodes: g.num_nodes(),
            node_feat: g.node_features().map(|f| match f {
                NodeFeatures::Real(rows) => NodeFeatRecord::Real(rows.clone()),
                NodeFeatures::Categorical(ids) => NodeFeatRecord::Categorical(ids.clone()),
            }),
            edge_feat: g
                .edge_features()
                .map(|f| edges.iter().map(|&[u, v]| f[&(u, v)].clone()).collect()),
            edges,
            label: g.label().map(|l| match l {
                Label::Class(c) => Value::from(c),
                Label::Real(x) => Value::from(x),
            }),
        };
        serde_json::to_writer(&mut out, &record).expect("record serializes");
        out.push(b'\n');
    }
    out
}
