//! WL-trees (bounded walk unfoldings) and path-trees, with AHU-style
//! canonical hashing.
//!
//! Levels are numbered from 0 (the root) to the height `k`; level `j` of a
//! path-tree holds the `(j+1)`-th node of every length-`j` path.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hasher;

use siphasher::sip128::{Hasher128, SipHasher13};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::paths::PathSet;

const NO_PARENT: u32 = u32::MAX;
const DIGEST_KEYS: (u64, u64) = (0x7061_7468_6c61_6221, 0x7472_6565_6861_7368);

/// A rooted tree whose nodes carry graph-node labels. Nodes are stored in
/// level order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    labels: Vec<u32>,
    parents: Vec<u32>,
    levels: Vec<u32>,
    children: Vec<Vec<u32>>,
}

impl RootedTree {
    fn with_root(label: u32) -> Self {
        RootedTree { labels: vec![label], parents: vec![NO_PARENT], levels: vec![0], children: vec![Vec::new()] }
    }

    fn push(&mut self, parent: usize, label: u32) -> usize {
        let id = self.labels.len();
        self.labels.push(label);
        self.parents.push(parent as u32);
        self.levels.push(self.levels[parent] + 1);
        self.children.push(Vec::new());
        self.children[parent].push(id as u32);
        id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn root_label(&self) -> usize {
        self.labels[0] as usize
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node] as usize
    }

    pub fn level(&self, node: usize) -> usize {
        self.levels[node] as usize
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let p = self.parents[node];
        (p != NO_PARENT).then_some(p as usize)
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[node].iter().map(|&c| c as usize)
    }

    pub fn height(&self) -> usize {
        self.levels.last().map_or(0, |&l| l as usize)
    }

    /// Node counts of levels `0..=height`, zero-padded past the deepest level.
    pub fn level_sizes(&self, height: usize) -> Vec<usize> {
        let mut sizes = vec![0; height + 1];
        for &l in &self.levels {
            if (l as usize) <= height {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Graph labels along the path from the root to `node`, root first.
    pub fn label_sequence(&self, node: usize) -> Vec<usize> {
        let mut seq = vec![self.label(node)];
        let mut x = node;
        while let Some(p) = self.parent(x) {
            seq.push(self.label(p));
            x = p;
        }
        seq.reverse();
        seq
    }

    /// Keeps the nodes flagged in `keep`; every kept node's parent must be kept.
    pub fn prune(&self, keep: &[bool]) -> Result<RootedTree> {
        if keep.len() != self.len() {
            return Err(Error::SizeMismatch { left: keep.len(), right: self.len() });
        }
        if !keep[0] {
            return Err(Error::InvalidParams("cannot prune the root".into()));
        }
        let mut map = vec![usize::MAX; self.len()];
        let mut out = RootedTree::with_root(self.labels[0]);
        map[0] = 0;
        for node in 1..self.len() {
            if !keep[node] {
                continue;
            }
            let parent = map[self.parent(node).expect("non-root")];
            if parent == usize::MAX {
                return Err(Error::InvalidParams(format!("node {node} kept without its parent")));
            }
            map[node] = out.push(parent, self.labels[node]);
        }
        Ok(out)
    }

    /// Graphviz rendering; tree node `i` is written `t{i}` with its graph label.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph \"{name}\" {{\n");
        for (i, &label) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  t{i} [label=\"{label}\", level={}];", self.levels[i]);
        }
        for i in 1..self.len() {
            let _ = writeln!(out, "  t{} -> t{i};", self.parents[i]);
        }
        out.push_str("}\n");
        out
    }
}

/// The unfolding tree of all walks of length `<= height` from `root`.
pub fn build_wl_tree(g: &Graph, root: usize, height: usize, budget: usize) -> Result<RootedTree> {
    let mut tree = RootedTree::with_root(root as u32);
    let mut frontier = vec![0usize];
    for _ in 0..height {
        let mut next = Vec::new();
        for &node in &frontier {
            for &w in g.neighbors(tree.label(node)) {
                if tree.len() >= budget {
                    return Err(Error::BudgetExceeded { budget, found: tree.len() + 1 });
                }
                next.push(tree.push(node, w as u32));
            }
        }
        frontier = next;
    }
    Ok(tree)
}

/// The path-tree of `root` pruned to `height`: one tree node per stored path,
/// hung below the node of its one-shorter prefix.
pub fn build_path_tree(ps: &PathSet, root: usize, height: usize) -> Result<RootedTree> {
    if height > ps.max_len() {
        return Err(Error::ConfigMismatch(format!(
            "path-tree height {height} exceeds enumerated length {}",
            ps.max_len()
        )));
    }
    let mut tree = RootedTree::with_root(root as u32);
    let root_key = [root as u32];
    let mut previous: HashMap<&[u32], usize> = HashMap::from([(&root_key[..], 0)]);
    for k in 1..=height {
        let mut current = HashMap::with_capacity(ps.count(root, k));
        for path in ps.paths(root, k) {
            let parent = *previous.get(&path[..k]).ok_or_else(|| {
                Error::ConfigMismatch(format!("prefix of path {path:?} is not in the collection"))
            })?;
            current.insert(path, tree.push(parent, path[k]));
        }
        previous = current;
    }
    Ok(tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashMode {
    /// Keyed 128-bit SipHash of the sorted child digests.
    Digest,
    /// Dense ids from an exact table of sorted child-id lists.
    Exact,
}

/// Canonical hash of an unlabeled rooted tree. Exact-mode values are only
/// comparable when produced by the same [`TreeHasher`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeHash(pub u128);

/// Bottom-up canonical hashing; graph labels are ignored.
#[derive(Debug, Clone)]
pub struct TreeHasher {
    mode: HashMode,
    table: HashMap<Vec<u128>, u128>,
}

impl TreeHasher {
    pub fn new(mode: HashMode) -> Self {
        TreeHasher { mode, table: HashMap::new() }
    }

    pub fn mode(&self) -> HashMode {
        self.mode
    }

    pub fn hash(&mut self, tree: &RootedTree) -> TreeHash {
        let mut codes = vec![0u128; tree.len()];
        let mut child_codes = Vec::new();
        for node in (0..tree.len()).rev() {
            child_codes.clear();
            child_codes.extend(tree.children(node).map(|c| codes[c]));
            child_codes.sort_unstable();
            codes[node] = match self.mode {
                HashMode::Digest => {
                    let mut h = SipHasher13::new_with_keys(DIGEST_KEYS.0, DIGEST_KEYS.1);
                    h.write_usize(child_codes.len());
                    for c in &child_codes {
                        h.write_u128(*c);
                    }
                    h.finish128().as_u128()
                }
                HashMode::Exact => {
                    let next = self.table.len() as u128;
                    *self.table.entry(child_codes.clone()).or_insert(next)
                }
            };
        }
        TreeHash(codes[0])
    }
}

/// Convenience one-shot digest.
pub fn canonical_tree_hash(tree: &RootedTree, mode: HashMode) -> TreeHash {
    TreeHasher::new(mode).hash(tree)
}

/// True iff `path_tree` sits inside `wl_tree`: same root label, every
/// root-to-node label sequence of `path_tree` is one of `wl_tree`, and each
/// level's label multiset is contained in the corresponding level of `wl_tree`.
pub fn level_subset_check(path_tree: &RootedTree, wl_tree: &RootedTree) -> bool {
    if path_tree.root_label() != wl_tree.root_label() || path_tree.height() > wl_tree.height() {
        return false;
    }
    let mut image = vec![0usize; path_tree.len()];
    for node in 1..path_tree.len() {
        let parent = image[path_tree.parent(node).expect("non-root")];
        match wl_tree.children(parent).find(|&c| wl_tree.label(c) == path_tree.label(node)) {
            Some(c) => image[node] = c,
            None => return false,
        }
    }
    let mut counts: HashMap<(usize, usize), isize> = HashMap::new();
    for node in 0..wl_tree.len() {
        *counts.entry((wl_tree.level(node), wl_tree.label(node))).or_default() += 1;
    }
    for node in 0..path_tree.len() {
        let slot = counts.entry((path_tree.level(node), path_tree.label(node))).or_default();
        *slot -= 1;
        if *slot < 0 {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Incremental,
    /// Repeats an ancestor's label, or descends from a redundant node.
    Redundant,
}

pub fn classify_tree_nodes(tree: &RootedTree) -> Vec<NodeRole> {
    let mut roles = vec![NodeRole::Incremental; tree.len()];
    for node in 1..tree.len() {
        let parent = tree.parent(node).expect("non-root");
        let revisits = {
            let mut x = Some(parent);
            let mut hit = false;
            while let Some(a) = x {
                if tree.label(a) == tree.label(node) {
                    hit = true;
                    break;
                }
                x = tree.parent(a);
            }
            hit
        };
        if roles[parent] == NodeRole::Redundant || revisits {
            roles[node] = NodeRole::Redundant;
        }
    }
    roles
}

/// The WL-tree with every redundant node removed.
pub fn prune_redundant(tree: &RootedTree) -> RootedTree {
    let keep: Vec<bool> = classify_tree_nodes(tree).iter().map(|&r| r == NodeRole::Incremental).collect();
    tree.prune(&keep).expect("incremental nodes are closed under ancestors")
}
