use pathlab_core::generate::{csl, cycle, disjoint_cycles, er_random, random_permutation, wl_hard_pair};
use pathlab_core::paths::{bfs_distances, enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::{Dataset, EdgeFeatures, Graph, Label, NodeFeatures, PathKind, PathSet, Task};
use pathlab_neural::cell::{seq_encode_forward, CellParams};
use pathlab_neural::gradcheck::{
    central_difference, check_gradients, grad_check, grad_compare, jitter_biases, DEFAULT_STEP, DEFAULT_TOLERANCE};
use pathlab_neural::train::{compile_dataset, evaluate, train_and_test, TrainConfig};
use pathlab_neural::{
    compile, Aggregation, CellVariant, Head, Mode, ModelConfig, Norm, ParamStore, PathNN, Phi,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Reference model: every path is fed separately through the cell and every
// node carries its own state. Shares no code with the plan executor beyond
// the single-sequence cell.

fn p<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
    store.by_name(name).unwrap_or_else(|| panic!("{name}")).data()
}

fn linear(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let w = p(store, &format!("{name}.weight"));
    let b = p(store, &format!("{name}.bias"));
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + w[r * x.len()..(r + 1) * x.len()].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

fn relu(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.max(0.0)).collect()
}

fn node_inputs(g: &Graph, cfg: &ModelConfig) -> Vec<Vec<f64>> {
    match g.node_features() {
        None => vec![vec![1.0; cfg.input_dim]; g.num_nodes()],
        Some(NodeFeatures::Real(rows)) => rows.clone(),
        Some(NodeFeatures::Categorical(c)) => c
            .iter()
            .map(|&c| (0..cfg.input_dim).map(|j| if j == c as usize { 1.0 } else { 0.0 }).collect())
            .collect(),
    }
}

/// Node states per layer; `batch_stats` normalizes with the statistics of
/// the given node population instead of the running averages.
fn reference_states(store: &ParamStore, cfg: &ModelConfig, graphs: &[(&Graph, &PathSet)], batch_stats: bool) -> Vec<Vec<Vec<f64>>> {
    let d = cfg.hidden;
    let mut states: Vec<Vec<Vec<f64>>> = graphs
        .iter()
        .map(|(g, _)| node_inputs(g, cfg).iter().map(|x| linear(store, "encoder.1", &relu(linear(store, "encoder.0", x)))).collect())
        .collect();
    let cell = CellParams {
        hidden: d,
        w_input: p(store, "cell.w_input"),
        w_hidden: p(store, "cell.w_hidden"),
        bias: p(store, "cell.bias"),
        distance: cfg.cell.uses_distance().then(|| (p(store, "cell.w_distance"), p(store, "cell.distance_table"))),
        w_edge: cfg.cell.uses_edges().then(|| p(store, "cell.w_edge")),
    };
    for k in 1..=cfg.max_len {
        let mut updates = Vec::new();
        for ((g, ps), h) in graphs.iter().zip(&states) {
            let mut gu = Vec::new();
            for v in 0..g.num_nodes() {
                let dist = bfs_distances(g, v);
                let mut agg = vec![0.0; d];
                let mut count = 0.0;
                for path in ps.paths(v, k) {
                    let rev: Vec<usize> = path.iter().rev().map(|&x| x as usize).collect();
                    let inputs: Vec<Vec<f64>> = rev
                        .iter()
                        .map(|&u| {
                            let mut x = h[u].clone();
                            if cfg.norm == Norm::Euclidean {
                                let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                                x.iter_mut().for_each(|a| *a /= n + 1e-12);
                            }
                            x
                        })
                        .collect();
                    let seq: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
                    let dists: Vec<usize> = rev.iter().map(|&u| dist[u]).collect();
                    let edges: Vec<Vec<f64>> = (0..rev.len())
                        .map(|t| {
                            if t == 0 || !cfg.cell.uses_edges() {
                                vec![0.0; d]
                            } else {
                                linear(store, "edge_encoder", g.edge_feature(rev[t - 1], rev[t]).unwrap())
                            }
                        })
                        .collect();
                    let edge_refs: Vec<&[f64]> = edges.iter().map(Vec::as_slice).collect();
                    let (out, _) = seq_encode_forward(
                        &cell,
                        &seq,
                        cfg.cell.uses_distance().then_some(dists.as_slice()),
                        cfg.cell.uses_edges().then_some(edge_refs.as_slice()),
                    )
                    .unwrap();
                    agg.iter_mut().zip(&out).for_each(|(a, o)| *a += o);
                    count += 1.0;
                }
                if cfg.path_agg == Aggregation::Mean && count > 0.0 {
                    agg.iter_mut().for_each(|a| *a /= count);
                }
                gu.push(h[v].iter().zip(&agg).map(|(a, b)| a + b).collect::<Vec<f64>>());
            }
            updates.push(gu);
        }
        if cfg.norm == Norm::BatchNorm {
            let gamma = p(store, &format!("layer{k}.norm.gamma"));
            let beta = p(store, &format!("layer{k}.norm.beta"));
            let (mean, var) = if batch_stats {
                let all: Vec<&Vec<f64>> = updates.iter().flatten().collect();
                let n = all.len() as f64;
                let mean: Vec<f64> = (0..d).map(|j| all.iter().map(|x| x[j]).sum::<f64>() / n).collect();
                let var: Vec<f64> = (0..d).map(|j| all.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).collect();
                (mean, var)
            } else {
                (
                    store.buffer(&format!("layer{k}.norm.running_mean")).unwrap().data().to_vec(),
                    store.buffer(&format!("layer{k}.norm.running_var")).unwrap().data().to_vec(),
                )
            };
            for x in updates.iter_mut().flatten() {
                for j in 0..d {
                    x[j] = gamma[j] * (x[j] - mean[j]) / (var[j] + 1e-5).sqrt() + beta[j];
                }
            }
        }
        if cfg.phi == Phi::Mlp {
            for x in updates.iter_mut().flatten() {
                *x = linear(store, &format!("layer{k}.phi.1"), &relu(linear(store, &format!("layer{k}.phi.0"), x)));
            }
        }
        states = updates;
    }
    states
}

fn reference_logits(store: &ParamStore, cfg: &ModelConfig, graphs: &[(&Graph, &PathSet)], batch_stats: bool) -> Vec<Vec<f64>> {
    let states = reference_states(store, cfg, graphs, batch_stats);
    states
        .iter()
        .map(|hs| {
            let mut emb = vec![0.0; cfg.hidden];
            for h in hs {
                emb.iter_mut().zip(h).for_each(|(a, b)| *a += b);
            }
            if cfg.readout == Aggregation::Mean && !hs.is_empty() {
                emb.iter_mut().for_each(|a| *a /= hs.len() as f64);
            }
            match cfg.head {
                Head::Linear => linear(store, "head.0", &emb),
                Head::Mlp => linear(store, "head.1", &relu(linear(store, "head.0", &emb))),
            }
        })
        .collect()
}

fn with_edge_features(g: Graph, dim: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // few distinct values so that edge rows get shared
    let feats: EdgeFeatures = g.edges().map(|e| (e, (0..dim).map(|_| f64::from(rng.gen_range(0..3u8))).collect())).collect();
    g.with_edge_features(feats).unwrap()
}

fn config(kind: PathKind, k: usize, cell: CellVariant, phi: Phi, agg: Aggregation, norm: Norm) -> ModelConfig {
    let mut cfg = ModelConfig::new(kind, k, 4, 1, 3);
    cfg.cell = cell;
    cfg.phi = phi;
    cfg.path_agg = agg;
    cfg.readout = agg;
    cfg.norm = norm;
    cfg.edge_dim = if cell.uses_edges() { 2 } else { 0 };
    cfg
}

fn prepared(cfg: &ModelConfig, graphs: &[Graph]) -> Vec<(Graph, PathSet)> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let g = if cfg.cell.uses_edges() { with_edge_features(g.clone(), cfg.edge_dim, i as u64) } else { g.clone() };
            let ps = enumerate_paths(&g, cfg.kind, cfg.max_len, DEFAULT_BUDGET).unwrap();
            (g, ps)
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{what}: {x} vs {y}");
    }
}

fn perturb_running_stats(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=cfg.max_len {
        if let Some(m) = store.buffer_mut(&format!("layer{k}.norm.running_mean")) {
            m.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        }
        if let Some(v) = store.buffer_mut(&format!("layer{k}.norm.running_var")) {
            v.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(0.5..2.0));
        }
    }
}

#[test]
fn plan_execution_matches_per_path_reference() {
    let graphs = vec![
        er_random(7, 0.4, 3).unwrap(),
        csl(11, 3).unwrap(),
        disjoint_cycles(6, 2).unwrap(),
        Graph::from_edges(5, [(0, 1), (1, 2)]).unwrap(),
    ];
    let mut checked = 0;
    for kind in [PathKind::Sp, PathKind::SpPlus, PathKind::Ap] {
        for cell in [CellVariant::Plain, CellVariant::Distance, CellVariant::Edge, CellVariant::EdgeDistance] {
            for (phi, agg, norm) in [
                (Phi::Identity, Aggregation::Sum, Norm::None),
                (Phi::Mlp, Aggregation::Mean, Norm::BatchNorm),
                (Phi::Identity, Aggregation::Mean, Norm::Euclidean),
            ] {
                let mut cfg = config(kind, 3, cell, phi, agg, norm);
                cfg.head = if phi == Phi::Mlp { Head::Mlp } else { Head::Linear };
                let (model, mut store) = PathNN::init(&cfg, 17).unwrap();
                perturb_running_stats(&mut store, &cfg, 5);
                let data = prepared(&cfg, &graphs);
                let pairs: Vec<(&Graph, &PathSet)> = data.iter().map(|(g, ps)| (g, ps)).collect();
                let plans: Vec<_> = data.iter().map(|(g, ps)| compile(g, ps, &cfg, false).unwrap()).collect();
                let discrete: Vec<_> = data.iter().map(|(g, ps)| compile(g, ps, &cfg, true).unwrap()).collect();
                let refs: Vec<_> = plans.iter().collect();
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let tape = model.forward(&store, &refs, Mode::Eval, &mut rng).unwrap();
                let expected = reference_logits(&store, &cfg, &pairs, false).concat();
                assert_close(tape.logits(), &expected, 1e-10, &format!("{kind:?} {cell:?} {phi:?} {norm:?}"));

                let dtape = model.forward(&store, &discrete.iter().collect::<Vec<_>>(), Mode::Eval, &mut rng).unwrap();
                assert_close(dtape.logits(), &expected, 1e-10, "discrete plan");

                if norm == Norm::BatchNorm {
                    let train = model.forward(&store, &refs, Mode::Train, &mut rng).unwrap();
                    let expected = reference_logits(&store, &cfg, &pairs, true).concat();
                    assert_close(train.logits(), &expected, 1e-9, "batch statistics");
                }
                let states = reference_states(&store, &cfg, &pairs, false);
                for (b, s) in states.iter().enumerate() {
                    assert_close(&tape.node_states(b).concat(), &s.concat(), 1e-10, "node states");
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 36);
}

#[test]
fn quotient_plans_merge_symmetric_work() {
    let g = csl(41, 9).unwrap();
    let cfg = ModelConfig::new(PathKind::SpPlus, 11, 4, 1, 10);
    let ps = enumerate_paths(&g, cfg.kind, cfg.max_len, DEFAULT_BUDGET).unwrap();
    let merged = compile(&g, &ps, &cfg, false).unwrap();
    let discrete = compile(&g, &ps, &cfg, true).unwrap();
    // vertex-transitive: one class per layer
    assert!(merged.num_classes().iter().all(|&c| c == 1));
    assert_eq!(discrete.num_classes(), vec![41; 12]);
    assert!(merged.num_steps() * 41 <= discrete.num_steps());
}

fn all_check_configs() -> Vec<(ModelConfig, Graph)> {
    let g = er_random(8, 0.4, 1).unwrap();
    let mut out = Vec::new();
    for cell in [CellVariant::Plain, CellVariant::Distance, CellVariant::Edge, CellVariant::EdgeDistance] {
        for phi in [Phi::Identity, Phi::Mlp] {
            for agg in [Aggregation::Sum, Aggregation::Mean] {
                for norm in [Norm::None, Norm::Euclidean, Norm::BatchNorm] {
                    let cfg = config(PathKind::Ap, 3, cell, phi, agg, norm);
                    let g = if cell.uses_edges() { with_edge_features(g.clone(), 2, 4) } else { g.clone() };
                    out.push((cfg, g));
                }
            }
        }
    }
    out
}

#[test]
fn gradients_match_finite_differences() {
    let configs = all_check_configs();
    assert_eq!(configs.len(), 48);
    for (cfg, g) in &configs {
        let report = grad_check(g, cfg, 5, DEFAULT_STEP, DEFAULT_TOLERANCE)
            .unwrap_or_else(|e| panic!("{:?} {:?} {:?} {:?}: {e}", cfg.cell, cfg.phi, cfg.path_agg, cfg.norm));
        assert!(report.checked > 100, "{report:?}");
    }
    let small = [
        (config(PathKind::Ap, 2, CellVariant::Plain, Phi::Identity, Aggregation::Sum, Norm::None), er_random(8, 0.4, 2).unwrap()),
        (config(PathKind::Ap, 3, CellVariant::Distance, Phi::Identity, Aggregation::Sum, Norm::None), er_random(8, 0.4, 2).unwrap()),
        (config(PathKind::Ap, 3, CellVariant::Edge, Phi::Identity, Aggregation::Sum, Norm::None), with_edge_features(er_random(8, 0.4, 2).unwrap(), 2, 1)),
    ];
    for (cfg, g) in &small {
        grad_check(g, cfg, 0, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
    }
}

#[test]
fn tolerance_violations_are_finite_difference_error() {
    // At h = 1e-5 the probe is resolved to about ulp(loss) / h, and strongly
    // curved coordinates carry an O(h²) truncation term, so a few coordinates
    // can miss a 1e-5 relative tolerance on other seeds. Each of them must
    // match a Richardson-extrapolated difference, which removes the h² term
    // while keeping the step wide.
    let mut violations = 0;
    for seed in [1, 3, 4, 11] {
        for (cfg, g) in all_check_configs() {
            let narrow = grad_compare(&g, &cfg, seed, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
            if narrow.violations.is_empty() {
                continue;
            }
            let ps = enumerate_paths(&g, cfg.kind, cfg.max_len, DEFAULT_BUDGET).unwrap();
            let (model, mut store) = PathNN::init(&cfg, seed).unwrap();
            jitter_biases(&mut store, 0.1, seed);
            let plan = model.compile(&g, &ps).unwrap();
            for v in &narrow.violations {
                violations += 1;
                let id = store.id(&v.param).unwrap();
                let diff = |h| central_difference(&model, &store, &[&plan], Mode::Eval, seed, id, v.index, h).unwrap();
                let extrapolated = (4.0 * diff(5e-5) - diff(1e-4)) / 3.0;
                assert!((extrapolated - v.analytic).abs() <= 1e-6 * v.analytic.abs() + 5e-11, "{v:?} vs {extrapolated}");
            }
        }
    }
    assert!(violations > 0);
}

#[test]
fn train_mode_gradients_match_finite_differences() {
    let graphs = vec![er_random(7, 0.5, 2).unwrap(), cycle(5).unwrap(), disjoint_cycles(6, 2).unwrap()];
    for (norm, dropout, head, phi) in [
        (Norm::BatchNorm, 0.0, Head::Mlp, Phi::Mlp),
        (Norm::BatchNorm, 0.3, Head::Mlp, Phi::Mlp),
        (Norm::Euclidean, 0.5, Head::Linear, Phi::Identity),
    ] {
        let mut cfg = config(PathKind::SpPlus, 2, CellVariant::Distance, phi, Aggregation::Sum, norm);
        cfg.dropout = dropout;
        cfg.head = head;
        let (model, mut store) = PathNN::init(&cfg, 23).unwrap();
        jitter_biases(&mut store, 0.1, 23);
        let plans: Vec<_> = prepared(&cfg, &graphs).iter().map(|(g, ps)| model.compile(g, ps).unwrap()).collect();
        let refs: Vec<_> = plans.iter().collect();
        check_gradients(&model, &store, &refs, Mode::Train, 3, DEFAULT_STEP, DEFAULT_TOLERANCE)
            .unwrap_or_else(|e| panic!("{norm:?} dropout {dropout}: {e}"));
    }
}

#[test]
fn single_node_gradient_has_closed_form() {
    let g = Graph::empty(1).with_node_features(NodeFeatures::Real(vec![vec![0.7, -1.2]])).unwrap();
    let mut cfg = ModelConfig::new(PathKind::Ap, 1, 3, 2, 2);
    cfg.head = Head::Linear;
    let (model, store) = PathNN::init(&cfg, 5).unwrap();
    let ps = enumerate_paths(&g, cfg.kind, 1, DEFAULT_BUDGET).unwrap();
    let plan = compile(&g, &ps, &cfg, false).unwrap();
    let tape = model.forward(&store, &[&plan], Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let r = [0.4, -1.5];
    let grads = model.backward(&store, &tape, &r).unwrap();

    // logits = W_h (W_1 relu(W_0 x + b_0) + b_1) + b_h
    let x = [0.7, -1.2];
    let z0 = linear(&store, "encoder.0", &x);
    let a0 = relu(z0.clone());
    let emb = linear(&store, "encoder.1", &a0);
    assert_close(tape.graph_embeddings(), &emb, 1e-14, "embedding is the encoder output");
    let wh = p(&store, "head.0.weight");
    let w1 = p(&store, "encoder.1.weight");
    let d_emb: Vec<f64> = (0..3).map(|j| r[0] * wh[j] + r[1] * wh[3 + j]).collect();
    let d_a0: Vec<f64> = (0..3).map(|j| (0..3).map(|i| d_emb[i] * w1[i * 3 + j]).sum()).collect();
    let d_z0: Vec<f64> = d_a0.iter().zip(&z0).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect();
    let expect_wh: Vec<f64> = r.iter().flat_map(|ri| emb.iter().map(move |e| ri * e)).collect();
    let expect_w1: Vec<f64> = d_emb.iter().flat_map(|di| a0.iter().map(move |a| di * a)).collect();
    let expect_w0: Vec<f64> = d_z0.iter().flat_map(|di| x.iter().map(move |a| di * a)).collect();
    let grad = |name: &str| grads.get(store.id(name).unwrap()).data().to_vec();
    assert_close(&grad("head.0.weight"), &expect_wh, 1e-14, "head weight");
    assert_close(&grad("head.0.bias"), &r, 1e-14, "head bias");
    assert_close(&grad("encoder.1.weight"), &expect_w1, 1e-14, "encoder output weight");
    assert_close(&grad("encoder.1.bias"), &d_emb, 1e-14, "encoder output bias");
    assert_close(&grad("encoder.0.weight"), &expect_w0, 1e-14, "encoder input weight");
    assert!(grad("cell.w_input").iter().all(|&v| v == 0.0));
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let cfg = config(PathKind::Ap, 3, CellVariant::Distance, Phi::Mlp, Aggregation::Sum, Norm::BatchNorm);
    let g = er_random(8, 0.4, 6).unwrap();
    let (model, store) = PathNN::init(&cfg, 1).unwrap();
    let ps = enumerate_paths(&g, cfg.kind, 3, DEFAULT_BUDGET).unwrap();
    let plan = compile(&g, &ps, &cfg, false).unwrap();
    let tape = model.forward(&store, &[&plan], Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let grads = model.backward(&store, &tape, &[0.0; 3]).unwrap();
    assert_eq!(grads.global_norm(), 0.0);
}

#[test]
fn isolated_node_embeds_to_encoder_output() {
    let g = Graph::empty(1);
    let cfg = ModelConfig::new(PathKind::Ap, 1, 5, 1, 2);
    let (model, store) = PathNN::init(&cfg, 8).unwrap();
    let ps = enumerate_paths(&g, cfg.kind, 1, DEFAULT_BUDGET).unwrap();
    let emb = model.embed(&store, &g, &ps).unwrap();
    let expected = linear(&store, "encoder.1", &relu(linear(&store, "encoder.0", &[1.0])));
    assert_close(&emb, &expected, 1e-15, "encoder output");
}

#[test]
fn embeddings_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in [PathKind::SpPlus, PathKind::Ap] {
        for cell in [CellVariant::Plain, CellVariant::EdgeDistance] {
            let mut cfg = config(kind, 3, cell, Phi::Mlp, Aggregation::Mean, Norm::BatchNorm);
            cfg.hidden = 8;
            let (model, store) = PathNN::init(&cfg, 2).unwrap();
            for seed in 0..5 {
                let g = er_random(9, 0.35, seed).unwrap();
                let g = if cell.uses_edges() { with_edge_features(g, 2, seed) } else { g };
                let perm = random_permutation(g.num_nodes(), &mut rng);
                let h = g.permute(&perm).unwrap();
                let a = model.embed(&store, &g, &enumerate_paths(&g, kind, 3, DEFAULT_BUDGET).unwrap()).unwrap();
                let b = model.embed(&store, &h, &enumerate_paths(&h, kind, 3, DEFAULT_BUDGET).unwrap()).unwrap();
                assert_eq!(a, b, "{kind:?} {cell:?} seed {seed}");
            }
        }
    }
}

#[test]
fn parameter_count_grows_only_by_norm_parameters() {
    for cell in [CellVariant::Plain, CellVariant::Edge] {
        for norm in [Norm::BatchNorm, Norm::None, Norm::Euclidean] {
            for d in [4, 16, 64] {
                let count = |k: usize| {
                    let mut cfg = config(PathKind::Ap, k, cell, Phi::Identity, Aggregation::Sum, norm);
                    cfg.hidden = d;
                    PathNN::init(&cfg, 0).unwrap().1.num_params()
                };
                let norm_size = if norm == Norm::BatchNorm { 2 * d } else { 0 };
                for k in 1..6 {
                    assert_eq!(count(k + 1) - count(k), norm_size, "{cell:?} {norm:?} d={d} K={k}");
                }
            }
        }
    }
    // the distance table carries one extra row per unit of K
    let count = |k: usize| PathNN::init(&config(PathKind::Ap, k, CellVariant::Distance, Phi::Identity, Aggregation::Sum, Norm::None), 0).unwrap().1.num_params();
    assert_eq!(count(4) - count(3), 4);
}

#[test]
fn wl_equivalent_pair_gets_distinct_embeddings() {
    let (a, b) = wl_hard_pair(3).unwrap();
    let mut cfg = ModelConfig::new(PathKind::Ap, 3, 16, 1, 2);
    cfg.norm = Norm::None;
    let (model, store) = PathNN::init(&cfg, 42).unwrap();
    let ea = model.embed(&store, &a, &enumerate_paths(&a, cfg.kind, 3, DEFAULT_BUDGET).unwrap()).unwrap();
    let eb = model.embed(&store, &b, &enumerate_paths(&b, cfg.kind, 3, DEFAULT_BUDGET).unwrap()).unwrap();
    let dist = ea.iter().zip(&eb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(dist > 1e-5, "{dist}");
}

fn toy_dataset(copies: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::new();
    for i in 0..copies {
        for (label, g) in [(0, cycle(6).unwrap()), (1, disjoint_cycles(6, 2).unwrap())] {
            let perm = random_permutation(6, &mut rng);
            graphs.push(g.permute(&perm).unwrap().with_id(format!("toy{label}_{i}")).with_label(Some(Label::Class(label))));
        }
    }
    Dataset::new("toy", Task::Classification { num_classes: 2 }, graphs).unwrap()
}

#[test]
fn separates_hexagon_from_two_triangles() {
    let ds = toy_dataset(8, 1);
    let mut cfg = ModelConfig::new(PathKind::Ap, 3, 16, 1, 2);
    cfg.head = Head::Mlp;
    let tc = TrainConfig { lr: 1e-2, epochs: 50, batch_size: 4, seed: 3, folds: 2, budget: DEFAULT_BUDGET };
    let (plans, eval) = compile_dataset(&ds, &cfg, tc.budget).unwrap();
    let train: Vec<_> = plans.iter().collect();
    let eval: Vec<_> = eval.iter().collect();
    let (r, model, store) = train_and_test(&cfg, &tc, ds.task, &train, &eval, &[], tc.seed).unwrap();
    assert_eq!(r.train_metric, 1.0, "{:?}", r.epoch_losses);
    assert_eq!(evaluate(&model, &store, &eval, ds.task, 3).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic() {
    let ds = toy_dataset(4, 2);
    let mut cfg = ModelConfig::new(PathKind::SpPlus, 2, 8, 1, 2);
    cfg.norm = Norm::BatchNorm;
    cfg.dropout = 0.2;
    cfg.head = Head::Mlp;
    let tc = TrainConfig { lr: 1e-2, epochs: 5, batch_size: 3, seed: 9, folds: 2, budget: DEFAULT_BUDGET };
    let run = || {
        let (plans, eval) = compile_dataset(&ds, &cfg, tc.budget).unwrap();
        let (r, _, store) =
            train_and_test(&cfg, &tc, ds.task, &plans.iter().collect::<Vec<_>>(), &eval.iter().collect::<Vec<_>>(), &[], 9).unwrap();
        (r, store.by_name("cell.w_input").unwrap().clone())
    };
    let (a, wa) = run();
    let (b, wb) = run();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(wa, wb);
}

#[test]
fn running_statistics_follow_momentum() {
    let mut cfg = ModelConfig::new(PathKind::Ap, 1, 2, 1, 2);
    cfg.norm = Norm::BatchNorm;
    let g = cycle(4).unwrap();
    let (model, mut store) = PathNN::init(&cfg, 0).unwrap();
    let ps = enumerate_paths(&g, cfg.kind, 1, DEFAULT_BUDGET).unwrap();
    let plan = compile(&g, &ps, &cfg, false).unwrap();
    let before = store.buffer("layer1.norm.running_mean").unwrap().clone();
    let tape = model.forward(&store, &[&plan], Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(store.buffer("layer1.norm.running_mean"), Some(&before));
    model.update_running_stats(&mut store, &tape);
    // all four nodes share one update u, so the batch mean is u and the variance zero
    let plain = ModelConfig { norm: Norm::None, ..cfg.clone() };
    let (_, plain_store) = PathNN::init(&plain, 0).unwrap();
    let u = &reference_states(&plain_store, &plain, &[(&g, &ps)], false)[0][0];
    let mean = store.buffer("layer1.norm.running_mean").unwrap().data();
    assert_close(mean, &u.iter().map(|x| 0.1 * x).collect::<Vec<_>>(), 1e-14, "running mean");
    let var = store.buffer("layer1.norm.running_var").unwrap().data();
    assert!(var.iter().all(|&v| (v - 0.9).abs() < 1e-15), "{var:?}");
}
