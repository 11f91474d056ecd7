use pathlab_core::generate::{er_corpus, wl_hard_pair};
use pathlab_core::paths::{enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::refine::{distinguish_wl, InitColors, Verdict};
use pathlab_core::trees::{
    build_path_tree, build_wl_tree, canonical_tree_hash, level_subset_check, prune_redundant, HashMode, TreeHash,
    TreeHasher,
};
use pathlab_core::{Graph, PathKind};

const MAX_K: usize = 4;
const TREE_BUDGET: usize = 5_000_000;

/// Node pairs whose WL-trees differ while their all-paths trees coincide.
fn wl_ap_violations(g: &Graph, k: usize) -> Vec<(usize, usize)> {
    let ap = enumerate_paths(g, PathKind::Ap, k, DEFAULT_BUDGET).unwrap();
    let mut hasher = TreeHasher::new(HashMode::Exact);
    let n = g.num_nodes();
    let wl: Vec<TreeHash> = (0..n).map(|v| hasher.hash(&build_wl_tree(g, v, k, TREE_BUDGET).unwrap())).collect();
    let pt: Vec<TreeHash> = (0..n).map(|v| hasher.hash(&build_path_tree(&ap, v, k).unwrap())).collect();
    let mut bad = Vec::new();
    for v in 0..n {
        for u in v + 1..n {
            if wl[v] != wl[u] && pt[v] == pt[u] {
                bad.push((v, u));
            }
        }
    }
    bad
}

/// Label-free canonical form built by plain recursion, independent of the
/// tree builders and hashers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Form(Vec<Form>);

fn walk_form(g: &Graph, v: usize, k: usize) -> Form {
    if k == 0 {
        return Form(Vec::new());
    }
    let mut kids: Vec<Form> = g.neighbors(v).iter().map(|&u| walk_form(g, u, k - 1)).collect();
    kids.sort();
    Form(kids)
}

fn simple_path_form(g: &Graph, path: &mut Vec<usize>, k: usize) -> Form {
    if k == 0 {
        return Form(Vec::new());
    }
    let tail = *path.last().unwrap();
    let mut kids = Vec::new();
    for &u in g.neighbors(tail) {
        if !path.contains(&u) {
            path.push(u);
            kids.push(simple_path_form(g, path, k - 1));
            path.pop();
        }
    }
    kids.sort();
    Form(kids)
}

#[test]
fn exact_hashes_match_recursive_forms() {
    for g in er_corpus(60, 4, 10, 0) {
        for k in 1..=3 {
            let ap = enumerate_paths(&g, PathKind::Ap, k, DEFAULT_BUDGET).unwrap();
            let mut hasher = TreeHasher::new(HashMode::Exact);
            let n = g.num_nodes();
            let hashes: Vec<(TreeHash, TreeHash)> = (0..n)
                .map(|v| {
                    let wl = hasher.hash(&build_wl_tree(&g, v, k, TREE_BUDGET).unwrap());
                    (wl, hasher.hash(&build_path_tree(&ap, v, k).unwrap()))
                })
                .collect();
            let forms: Vec<(Form, Form)> =
                (0..n).map(|v| (walk_form(&g, v, k), simple_path_form(&g, &mut vec![v], k))).collect();
            for v in 0..n {
                for u in 0..n {
                    assert_eq!(hashes[v].0 == hashes[u].0, forms[v].0 == forms[u].0);
                    assert_eq!(hashes[v].1 == hashes[u].1, forms[v].1 == forms[u].1);
                }
            }
        }
    }
}

/// Scans the 200-graph corpus for node pairs whose WL-trees differ while
/// their all-paths trees are isomorphic. The scan finds exactly one such
/// pair, and the recursive forms confirm it.
#[test]
fn wl_tree_difference_mostly_carries_over_to_path_trees() {
    let corpus = er_corpus(200, 4, 12, 0);
    let mut violations = Vec::new();
    for g in &corpus {
        for k in 1..=MAX_K {
            violations.extend(wl_ap_violations(g, k).into_iter().map(|p| (g.id().to_string(), k, p)));
        }
    }
    assert_eq!(violations, vec![("er_9_0.4_41".to_string(), 3, (2, 3))]);
    let g = corpus.iter().find(|g| g.id() == "er_9_0.4_41").unwrap();
    assert_ne!(walk_form(g, 2, 3), walk_form(g, 3, 3));
    assert_eq!(simple_path_form(g, &mut vec![2], 3), simple_path_form(g, &mut vec![3], 3));
}

/// A 7-node graph where two WL-trees of height 3 differ yet the unlabeled
/// all-paths trees are isomorphic. Structural tree difference alone does not
/// carry over from walks to paths once labels are erased.
#[test]
fn erased_label_counterexample_on_seven_nodes() {
    let g = Graph::from_edges(
        7,
        [(0, 1), (0, 5), (1, 2), (1, 6), (2, 3), (2, 4), (3, 4), (4, 5), (5, 6)],
    )
    .unwrap();
    assert!(wl_ap_violations(&g, 3).contains(&(0, 3)));
    assert_ne!(walk_form(&g, 0, 3), walk_form(&g, 3, 3));
    assert_eq!(simple_path_form(&g, &mut vec![0], 3), simple_path_form(&g, &mut vec![3], 3));
}

#[test]
fn hard_pair_trees() {
    let (a, b) = wl_hard_pair(3).unwrap();
    let mut hasher = TreeHasher::new(HashMode::Exact);
    let reference = hasher.hash(&build_wl_tree(&a, 0, 3, TREE_BUDGET).unwrap());
    for g in [&a, &b] {
        for v in 0..6 {
            assert_eq!(hasher.hash(&build_wl_tree(g, v, 3, TREE_BUDGET).unwrap()), reference);
        }
    }
    assert_eq!(distinguish_wl(&a, &b, 6, InitColors::Uniform).unwrap(), Verdict::Indistinguishable);
    let ap_a = enumerate_paths(&a, PathKind::Ap, 3, DEFAULT_BUDGET).unwrap();
    let ap_b = enumerate_paths(&b, PathKind::Ap, 3, DEFAULT_BUDGET).unwrap();
    for v in 0..6 {
        for u in 0..6 {
            let ta = hasher.hash(&build_path_tree(&ap_a, v, 3).unwrap());
            let tb = hasher.hash(&build_path_tree(&ap_b, u, 3).unwrap());
            assert_ne!(ta, tb);
        }
    }
}

#[test]
fn p3_centre_and_triangle_node() {
    let p3 = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let k3 = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
    for mode in [HashMode::Digest, HashMode::Exact] {
        let mut hasher = TreeHasher::new(mode);
        let a = hasher.hash(&build_wl_tree(&p3, 1, 2, 100).unwrap());
        let b = hasher.hash(&build_wl_tree(&k3, 0, 2, 100).unwrap());
        assert_ne!(a, b);
        for kind in [PathKind::Sp, PathKind::SpPlus] {
            let pa = enumerate_paths(&p3, kind, 2, DEFAULT_BUDGET).unwrap();
            let pb = enumerate_paths(&k3, kind, 2, DEFAULT_BUDGET).unwrap();
            assert_eq!(
                hasher.hash(&build_path_tree(&pa, 1, 2).unwrap()),
                hasher.hash(&build_path_tree(&pb, 0, 2).unwrap())
            );
        }
    }
}

#[test]
fn path_trees_embed_in_wl_trees_and_prune_to_all_paths() {
    for g in er_corpus(200, 4, 12, 0) {
        let sets: Vec<_> = PathKind::ALL.iter().map(|&kind| enumerate_paths(&g, kind, MAX_K, DEFAULT_BUDGET).unwrap()).collect();
        for v in 0..g.num_nodes() {
            for k in 1..=MAX_K {
                let wl = build_wl_tree(&g, v, k, TREE_BUDGET).unwrap();
                for ps in &sets {
                    let pt = build_path_tree(ps, v, k).unwrap();
                    assert!(level_subset_check(&pt, &wl), "{} {} v={v} k={k}", g.id(), ps.kind());
                }
                let ap_tree = build_path_tree(&sets[2], v, k).unwrap();
                let pruned = prune_redundant(&wl);
                assert_eq!(
                    canonical_tree_hash(&pruned, HashMode::Digest),
                    canonical_tree_hash(&ap_tree, HashMode::Digest)
                );
                assert_eq!(pruned.level_sizes(k), ap_tree.level_sizes(k), "{} v={v} k={k}", g.id());
            }
        }
    }
}
