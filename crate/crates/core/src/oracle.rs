//! Exhaustive reference enumeration used to check [`crate::paths`].
//!
//! Shares no code with the production enumerator: distances come from
//! Floyd–Warshall, paths from an unrestricted simple-path recursion that is
//! filtered afterwards. Exponential; intended for graphs with at most a dozen
//! nodes.

use std::collections::BTreeMap;

use crate::graph::Graph;
use crate::paths::{PathKind, PathSet};

pub fn naive_path_oracle(g: &Graph, kind: PathKind, max_len: usize) -> PathSet {
    let n = g.num_nodes();
    let dist = floyd_warshall(g);
    let mut per_source = Vec::with_capacity(n);
    for v in 0..n {
        let mut all = Vec::new();
        extend(g, &mut vec![v], max_len, &mut all);
        let kept: Vec<Vec<usize>> = match kind {
            PathKind::Ap => all,
            PathKind::SpPlus | PathKind::Sp => {
                let shortest = all.into_iter().filter(|p| dist[v][*p.last().unwrap()] == Some(p.len() - 1));
                if kind == PathKind::SpPlus {
                    shortest.collect()
                } else {
                    let mut best: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for p in shortest {
                        let slot = best.entry(*p.last().unwrap()).or_insert_with(|| p.clone());
                        if p < *slot {
                            *slot = p;
                        }
                    }
                    best.into_values().collect()
                }
            }
        };
        let mut blocks = vec![Vec::new(); max_len];
        let mut sorted = kept;
        sorted.sort();
        for p in sorted {
            blocks[p.len() - 2].extend(p.iter().map(|&x| x as u32));
        }
        per_source.push(blocks);
    }
    PathSet::from_per_source(kind, max_len, per_source)
}

fn extend(g: &Graph, path: &mut Vec<usize>, max_len: usize, out: &mut Vec<Vec<usize>>) {
    if path.len() > max_len {
        return;
    }
    let tail = *path.last().unwrap();
    for &w in g.neighbors(tail) {
        if path.contains(&w) {
            continue;
        }
        path.push(w);
        out.push(path.clone());
        extend(g, path, max_len, out);
        path.pop();
    }
}

fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    let mut d = vec![vec![None; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = Some(0);
        for &w in g.neighbors(u) {
            row[w] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}
