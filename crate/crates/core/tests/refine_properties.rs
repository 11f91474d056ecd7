use pathlab_core::generate::{csl_family, er_corpus, random_permutation, rook_4x4, shrikhande, wl_hard_pair};
use pathlab_core::paths::{enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::refine::{
    distinguish, distinguish_wl, graph_fingerprint, partition_refines, path_refine, wl_refine, ColorTable,
    InitColors, RefinementConfig, Verdict,
};
use pathlab_core::{Graph, GraphFingerprint, PathKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MAX_K: usize = 4;

fn refine_fresh(g: &Graph, cfg: &RefinementConfig) -> pathlab_core::Coloring {
    let ps = enumerate_paths(g, cfg.kind, cfg.max_len, DEFAULT_BUDGET).unwrap();
    path_refine(g, &ps, cfg, &mut ColorTable::new()).unwrap()
}

#[test]
fn path_partitions_refine_wl_partitions_on_corpus() {
    for g in er_corpus(200, 4, 12, 0) {
        let wl = wl_refine(&g, MAX_K, InitColors::Uniform, &mut ColorTable::new()).unwrap();
        for kind in PathKind::ALL {
            for distance in [false, true] {
                let cfg = RefinementConfig::new(kind, MAX_K).with_distance(distance);
                let c = refine_fresh(&g, &cfg);
                for k in 0..=MAX_K {
                    assert!(partition_refines(c.at(k), wl.at(k)).unwrap(), "{} {cfg:?} k={k}", g.id());
                }
            }
        }
    }
}

#[test]
fn partitions_never_coarsen() {
    for g in er_corpus(60, 4, 12, 1) {
        for kind in PathKind::ALL {
            for padding in [false, true] {
                let c = refine_fresh(&g, &RefinementConfig::new(kind, MAX_K).with_padding(padding));
                for k in 1..=MAX_K {
                    assert!(partition_refines(c.at(k), c.at(k - 1)).unwrap());
                }
            }
        }
    }
}

fn csl_fingerprints(cfg: &RefinementConfig, perms: usize) -> Vec<Vec<GraphFingerprint>> {
    let (kind, k) = (cfg.kind, cfg.max_len);
    let mut table = ColorTable::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    csl_family()
        .iter()
        .map(|g| {
            (0..=perms)
                .map(|i| {
                    let h = if i == 0 { g.clone() } else { g.permute(&random_permutation(g.num_nodes(), &mut rng)).unwrap() };
                    let ps = enumerate_paths(&h, kind, k, DEFAULT_BUDGET).unwrap();
                    graph_fingerprint(&path_refine(&h, &ps, cfg, &mut table).unwrap())
                })
                .collect()
        })
        .collect()
}

fn separated_pairs(classes: &[Vec<GraphFingerprint>]) -> usize {
    let mut count = 0;
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            count += usize::from(classes[i][0] != classes[j][0]);
        }
    }
    count
}

#[test]
fn csl_classes_separate_with_all_shortest_paths() {
    let classes = csl_fingerprints(&RefinementConfig::new(PathKind::SpPlus, 11), 20);
    for class in &classes {
        assert!(class.iter().all(|f| *f == class[0]));
    }
    assert_eq!(separated_pairs(&classes), 45);
}

#[test]
fn csl_classes_separate_with_distance_annotated_paths() {
    let classes = csl_fingerprints(&RefinementConfig::new(PathKind::Ap, 5).with_distance(true), 5);
    for class in &classes {
        assert!(class.iter().all(|f| *f == class[0]));
    }
    assert_eq!(separated_pairs(&classes), 45);
}

#[test]
fn csl_single_shortest_paths_separate_most_classes() {
    let classes = csl_fingerprints(&RefinementConfig::new(PathKind::Sp, 11), 0);
    assert!(separated_pairs(&classes) >= 36);
}

/// CSL graphs are vertex-transitive, so without annotations every node keeps
/// one color and only the per-length path counts can tell graphs apart.
#[test]
fn unannotated_csl_separation_is_bounded_by_path_counts() {
    let profiles: Vec<Vec<usize>> = csl_family()
        .iter()
        .map(|g| enumerate_paths(g, PathKind::Ap, 5, DEFAULT_BUDGET).unwrap().count_by_length())
        .collect();
    let mut expected = 0;
    for i in 0..10 {
        for j in i + 1..10 {
            expected += usize::from(profiles[i] != profiles[j]);
        }
    }
    let classes = csl_fingerprints(&RefinementConfig::new(PathKind::Ap, 5), 0);
    assert_eq!(separated_pairs(&classes), expected);
    assert!(expected < 45);
}

#[test]
fn fingerprints_ignore_node_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for g in er_corpus(20, 6, 12, 2) {
        for kind in [PathKind::SpPlus, PathKind::Ap] {
            let cfg = RefinementConfig::new(kind, 3).with_distance(true);
            let base = graph_fingerprint(&refine_fresh(&g, &cfg));
            for _ in 0..10 {
                let h = g.permute(&random_permutation(g.num_nodes(), &mut rng)).unwrap();
                assert_eq!(graph_fingerprint(&refine_fresh(&h, &cfg)), base);
            }
        }
    }
}

#[test]
fn strongly_regular_pair() {
    let (s, r) = (shrikhande(), rook_4x4());
    assert_eq!(distinguish_wl(&s, &r, 5, InitColors::Uniform).unwrap(), Verdict::Indistinguishable);
    let cfg = RefinementConfig::new(PathKind::Ap, 4).with_distance(true);
    assert!(distinguish(&s, &r, &cfg, DEFAULT_BUDGET).unwrap().is_distinguished());
}

#[test]
fn hard_pair_needs_length_three() {
    let (a, b) = wl_hard_pair(3).unwrap();
    assert_eq!(
        distinguish(&a, &b, &RefinementConfig::new(PathKind::Ap, 3), DEFAULT_BUDGET).unwrap(),
        Verdict::DistinguishedAt(3)
    );
    assert_eq!(
        distinguish(&a, &b, &RefinementConfig::new(PathKind::Ap, 2).with_padding(false), DEFAULT_BUDGET).unwrap(),
        Verdict::Indistinguishable
    );
}

#[test]
fn refinement_is_identical_across_thread_counts() {
    let g = csl_family().remove(3);
    let cfg = RefinementConfig::new(PathKind::Ap, 4).with_distance(true);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| graph_fingerprint(&refine_fresh(&g, &cfg)))
    };
    assert_eq!(run(1), run(4));
}
