//! Synthetic graph families used by the expressiveness experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Label, NodeFeatures, Task};

/// Skip lengths of the standard 41-node CSL benchmark, one per class.
pub const CSL_SKIPS: [usize; 10] = [2, 3, 4, 5, 6, 9, 11, 12, 13, 16];
pub const CSL_NODES: usize = 41;

pub fn cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParams(format!("cycle needs n >= 3, got {n}")));
    }
    Ok(Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))?.with_id(format!("C{n}")))
}

/// `parts` disjoint cycles of `n / parts` nodes each.
pub fn disjoint_cycles(n: usize, parts: usize) -> Result<Graph> {
    if parts == 0 || !n.is_multiple_of(parts) || n / parts < 3 {
        return Err(Error::InvalidParams(format!(
            "cannot split {n} nodes into {parts} cycles of length >= 3"
        )));
    }
    let len = n / parts;
    let edges = (0..parts).flat_map(|p| (0..len).map(move |i| (p * len + i, p * len + (i + 1) % len)));
    Ok(Graph::from_edges(n, edges)?.with_id(format!("{parts}xC{len}")))
}

/// Circular skip link graph: the cycle `C_n` plus chords `i -- i+skip (mod n)`.
pub fn csl(n: usize, skip: usize) -> Result<Graph> {
    if n < 5 || skip < 2 || 2 * skip >= n || gcd(n, skip) != 1 {
        return Err(Error::InvalidParams(format!(
            "csl needs 2 <= skip < n/2 with gcd(n, skip) = 1, got n={n} skip={skip}"
        )));
    }
    let edges = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + skip) % n)]);
    Ok(Graph::from_edges(n, edges)?.with_id(format!("csl_{n}_{skip}")))
}

/// The ten 41-node CSL classes, labelled by class index.
pub fn csl_family() -> Vec<Graph> {
    CSL_SKIPS
        .iter()
        .enumerate()
        .map(|(class, &s)| {
            csl(CSL_NODES, s).expect("standard skips are valid").with_label(Some(Label::Class(class)))
        })
        .collect()
}

/// The 150-graph CSL classification set: `copies` randomly relabelled copies of
/// each class, node features all ones.
pub fn csl_dataset(copies: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(copies * CSL_SKIPS.len());
    for base in csl_family() {
        for copy in 0..copies {
            let perm = random_permutation(base.num_nodes(), &mut rng);
            let g = base
                .permute(&perm)
                .expect("valid permutation")
                .with_id(format!("{}_{copy}", base.id()))
                .with_node_features(NodeFeatures::Real(vec![vec![1.0]; base.num_nodes()]))
                .expect("one feature row per node");
            graphs.push(g);
        }
    }
    Dataset::new("csl", Task::Classification { num_classes: CSL_SKIPS.len() }, graphs)
        .expect("labels match task")
}

/// The 4x4 rook's graph `K4 x K4`, an SRG(16, 6, 2, 2).
pub fn rook_4x4() -> Graph {
    let edges = (0..16usize).flat_map(|a| {
        (a + 1..16).filter(move |&b| a / 4 == b / 4 || a % 4 == b % 4).map(move |b| (a, b))
    });
    Graph::from_edges(16, edges).expect("rook graph is simple").with_id("rook_4x4")
}

/// The Shrikhande graph: Cayley graph of `Z4 x Z4` with connection set
/// `{±(1,0), ±(0,1), ±(1,1)}`.
pub fn shrikhande() -> Graph {
    let node = |x: usize, y: usize| (x % 4) * 4 + y % 4;
    let edges = (0..4).flat_map(|x| {
        (0..4).flat_map(move |y| {
            [(1, 0), (0, 1), (1, 1)].into_iter().map(move |(dx, dy)| (node(x, y), node(x + dx, y + dy)))
        })
    });
    Graph::from_edges(16, edges).expect("shrikhande graph is simple").with_id("shrikhande")
}

/// Erdős–Rényi `G(n, p)` drawn from a ChaCha8 stream seeded by `seed`.
pub fn er_random(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok(Graph::from_edges(n, edges)?.with_id(format!("er_{n}_{p}_{seed}")))
}

/// Seeded ER corpus: graph `i` has `min_n + i % span` nodes, edge
/// probability cycling through 0.2, 0.4, 0.6 once per sweep of sizes, and
/// seed `seed + i`.
pub fn er_corpus(count: usize, min_n: usize, max_n: usize, seed: u64) -> Vec<Graph> {
    assert!(min_n <= max_n, "empty size range");
    const PROBS: [f64; 3] = [0.2, 0.4, 0.6];
    let span = max_n - min_n + 1;
    (0..count)
        .map(|i| {
            let n = min_n + i % span;
            let p = PROBS[(i / span) % PROBS.len()];
            er_random(n, p, seed.wrapping_add(i as u64)).expect("probability in range")
        })
        .collect()
}

/// The 1-WL-equivalent pair `(C_2k, C_k + C_k)`.
pub fn wl_hard_pair(k: usize) -> Result<(Graph, Graph)> {
    if k < 3 {
        return Err(Error::InvalidParams(format!("wl_hard_pair needs k >= 3, got {k}")));
    }
    Ok((cycle(2 * k)?, disjoint_cycles(2 * k, 2)?))
}

pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Graphs named by a short spec string, e.g. `cycle:6`, `cycles:6:2`,
/// `csl:41:2`, `csl-family`, `rook`, `shrikhande`, `er:10:0.4:7`,
/// `er-corpus:200:4:12:0` (count, min n, max n, seed), `wl-hard:3`.
pub fn from_spec(spec: &str) -> Result<Vec<Graph>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidParams(format!("unrecognised generator spec {spec:?}"));
    let num = |i: usize| -> Result<usize> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
    match parts[0] {
        "cycle" => Ok(vec![cycle(num(1)?)?]),
        "cycles" => Ok(vec![disjoint_cycles(num(1)?, num(2)?)?]),
        "csl" => Ok(vec![csl(num(1)?, num(2)?)?]),
        "csl-family" => Ok(csl_family()),
        "rook" => Ok(vec![rook_4x4()]),
        "shrikhande" => Ok(vec![shrikhande()]),
        "er" => {
            let p: f64 = parts.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok(vec![er_random(num(1)?, p, num(3)? as u64)?])
        }
        "er-corpus" => {
            let (count, lo, hi) = (num(1)?, num(2)?, num(3)?);
            if lo > hi {
                return Err(bad());
            }
            Ok(er_corpus(count, lo, hi, num(4)? as u64))
        }
        "wl-hard" => {
            let (a, b) = wl_hard_pair(num(1)?)?;
            Ok(vec![a, b])
        }
        _ => Err(bad()),
    }
}

/// Parameters `(n, k, λ, μ)` of a strongly regular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SrgParams {
    pub n: usize,
    pub k: usize,
    pub lambda: usize,
    pub mu: usize,
}

/// Returns the SRG parameters of `g` if it is strongly regular. When no
/// adjacent (resp. non-adjacent) pair exists, λ (resp. μ) is reported as 0.
pub fn check_srg(g: &Graph) -> Option<SrgParams> {
    let n = g.num_nodes();
    if n == 0 {
        return None;
    }
    let k = g.degree(0);
    if (0..n).any(|v| g.degree(v) != k) {
        return None;
    }
    let mut lambda = None;
    let mut mu = None;
    for u in 0..n {
        for v in u + 1..n {
            let common = common_neighbors(g.neighbors(u), g.neighbors(v));
            let slot = if g.has_edge(u, v) { &mut lambda } else { &mut mu };
            match *slot {
                None => *slot = Some(common),
                Some(c) if c != common => return None,
                Some(_) => {}
            }
        }
    }
    Some(SrgParams { n, k, lambda: lambda.unwrap_or(0), mu: mu.unwrap_or(0) })
}

fn common_neighbors(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
