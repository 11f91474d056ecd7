//! Path neural network over compiled plans.
//!
//! Layer `k` feeds every path of length `k` backwards through one shared
//! recurrent cell, adds the aggregated path embeddings to the node's
//! previous state, normalizes, and applies φ. The graph embedding is the sum
//! or mean of the final node states.

use pathlab_core::PathSet;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cell::{lstm_pointwise, lstm_pointwise_backward};
use crate::config::{Aggregation, Head, ModelConfig, Norm, Phi};
use crate::error::{NeuralError, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::plan::{compile, BatchPlan, GraphPlan, NO_EDGE};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, DenseTensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const EUCLID_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
    input: usize,
    output: usize,
}

impl Linear {
    fn forward(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let b = store.get(self.b).data();
        let mut y: Vec<f64> = (0..rows).flat_map(|_| b.iter().copied()).collect();
        matmul_nt(rows, self.input, self.output, x, store.get(self.w).data(), 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients; returns the input gradient.
    fn backward(&self, store: &ParamStore, grads: &mut Gradients, x: &[f64], dy: &[f64], rows: usize) -> Vec<f64> {
        matmul_tn(self.output, rows, self.input, dy, x, 1.0, grads.get_mut(self.w).data_mut());
        let db = grads.get_mut(self.b).data_mut();
        for r in 0..rows {
            db.iter_mut().zip(&dy[r * self.output..(r + 1) * self.output]).for_each(|(a, b)| *a += b);
        }
        let mut dx = vec![0.0; rows * self.input];
        matmul_nn(rows, self.output, self.input, dy, store.get(self.w).data(), 0.0, &mut dx);
        dx
    }
}

#[derive(Debug, Clone)]
struct LayerIds {
    norm: Option<(ParamId, ParamId)>,
    phi: Option<(Linear, Linear)>,
}

#[derive(Debug, Clone)]
pub struct PathNN {
    cfg: ModelConfig,
    encoder: (Linear, Linear),
    w_input: ParamId,
    w_hidden: ParamId,
    bias: ParamId,
    distance: Option<(ParamId, ParamId)>,
    edge: Option<(ParamId, Linear)>,
    layers: Vec<LayerIds>,
    head: Vec<Linear>,
}

enum Init {
    Uniform(f64),
    Zeros,
    Ones,
    Normal,
    ForgetBias,
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.hidden;
    let bound = |fan_in: usize| Init::Uniform(1.0 / (fan_in as f64).sqrt());
    let mut specs = Vec::new();
    let linear = |specs: &mut Vec<_>, name: &str, input: usize, output: usize| {
        specs.push((format!("{name}.weight"), vec![output, input], bound(input)));
        specs.push((format!("{name}.bias"), vec![output], Init::Zeros));
    };
    linear(&mut specs, "encoder.0", cfg.input_dim, d);
    linear(&mut specs, "encoder.1", d, d);
    specs.push(("cell.w_input".into(), vec![4 * d, d], bound(d)));
    specs.push(("cell.w_hidden".into(), vec![4 * d, d], bound(d)));
    specs.push(("cell.bias".into(), vec![4 * d], Init::ForgetBias));
    if cfg.cell.uses_distance() {
        specs.push(("cell.w_distance".into(), vec![4 * d, d], bound(d)));
        specs.push(("cell.distance_table".into(), vec![cfg.max_len + 1, d], Init::Normal));
    }
    if cfg.cell.uses_edges() {
        specs.push(("cell.w_edge".into(), vec![4 * d, d], bound(d)));
        linear(&mut specs, "edge_encoder", cfg.edge_dim, d);
    }
    for k in 1..=cfg.max_len {
        if cfg.norm == Norm::BatchNorm {
            specs.push((format!("layer{k}.norm.gamma"), vec![d], Init::Ones));
            specs.push((format!("layer{k}.norm.beta"), vec![d], Init::Zeros));
        }
        if cfg.phi == Phi::Mlp {
            linear(&mut specs, &format!("layer{k}.phi.0"), d, d);
            linear(&mut specs, &format!("layer{k}.phi.1"), d, d);
        }
    }
    match cfg.head {
        Head::Linear => linear(&mut specs, "head.0", d, cfg.num_outputs),
        Head::Mlp => {
            linear(&mut specs, "head.0", d, d);
            linear(&mut specs, "head.1", d, cfg.num_outputs);
        }
    }
    specs
}

fn running_names(k: usize) -> (String, String) {
    (format!("layer{k}.norm.running_mean"), format!("layer{k}.norm.running_var"))
}

impl PathNN {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<(PathNN, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden;
        let mut store = ParamStore::new();
        for (name, shape, init) in param_specs(cfg) {
            let t = match init {
                Init::Uniform(b) => DenseTensor::uniform(&shape, b, &mut rng),
                Init::Zeros => DenseTensor::zeros(&shape),
                Init::Ones => DenseTensor::filled(&shape, 1.0),
                Init::Normal => {
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    DenseTensor::from_vec(&shape, data)?
                }
                Init::ForgetBias => {
                    let mut t = DenseTensor::zeros(&shape);
                    t.data_mut()[d..2 * d].fill(1.0);
                    t
                }
            };
            store.add(&name, t);
        }
        if cfg.norm == Norm::BatchNorm {
            for k in 1..=cfg.max_len {
                let (mean, var) = running_names(k);
                store.set_buffer(&mean, DenseTensor::zeros(&[d]));
                store.set_buffer(&var, DenseTensor::filled(&[d], 1.0));
            }
        }
        let model = PathNN::bind(cfg, &store)?;
        Ok((model, store))
    }

    /// Resolves parameters by name, checking their shapes.
    pub fn bind(cfg: &ModelConfig, store: &ParamStore) -> Result<PathNN> {
        cfg.validate()?;
        for (name, shape, _) in param_specs(cfg) {
            match store.by_name(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(NeuralError::ShapeMismatch(format!("{name} has shape {:?}, expected {shape:?}", t.shape())))
                }
                None => return Err(NeuralError::Config(format!("missing parameter {name}"))),
            }
        }
        if cfg.norm == Norm::BatchNorm {
            for k in 1..=cfg.max_len {
                let (mean, var) = running_names(k);
                if store.buffer(&mean).is_none() || store.buffer(&var).is_none() {
                    return Err(NeuralError::Config(format!("missing running statistics of layer {k}")));
                }
            }
        }
        let id = |name: &str| store.id(name).expect("checked above");
        let linear = |name: &str, input: usize, output: usize| Linear {
            w: id(&format!("{name}.weight")),
            b: id(&format!("{name}.bias")),
            input,
            output,
        };
        let d = cfg.hidden;
        let layers = (1..=cfg.max_len)
            .map(|k| LayerIds {
                norm: (cfg.norm == Norm::BatchNorm)
                    .then(|| (id(&format!("layer{k}.norm.gamma")), id(&format!("layer{k}.norm.beta")))),
                phi: (cfg.phi == Phi::Mlp)
                    .then(|| (linear(&format!("layer{k}.phi.0"), d, d), linear(&format!("layer{k}.phi.1"), d, d))),
            })
            .collect();
        let head = match cfg.head {
            Head::Linear => vec![linear("head.0", d, cfg.num_outputs)],
            Head::Mlp => vec![linear("head.0", d, d), linear("head.1", d, cfg.num_outputs)],
        };
        Ok(PathNN {
            cfg: cfg.clone(),
            encoder: (linear("encoder.0", cfg.input_dim, d), linear("encoder.1", d, d)),
            w_input: id("cell.w_input"),
            w_hidden: id("cell.w_hidden"),
            bias: id("cell.bias"),
            distance: cfg.cell.uses_distance().then(|| (id("cell.w_distance"), id("cell.distance_table"))),
            edge: cfg.cell.uses_edges().then(|| (id("cell.w_edge"), linear("edge_encoder", cfg.edge_dim, d))),
            layers,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Compiles a graph for this model; per-node plans are used when dropout
    /// is active.
    pub fn compile(&self, g: &pathlab_core::Graph, ps: &PathSet) -> Result<GraphPlan> {
        compile(g, ps, &self.cfg, self.cfg.dropout > 0.0)
    }

    /// Runs the model on a batch of plans and records everything the reverse
    /// pass needs. The store is not modified; see
    /// [`PathNN::update_running_stats`].
    pub fn forward(&self, store: &ParamStore, plans: &[&GraphPlan], mode: Mode, rng: &mut impl Rng) -> Result<Tape> {
        let batch = BatchPlan::new(plans)?;
        let cfg = &self.cfg;
        let d = cfg.hidden;
        let dropout = if mode == Mode::Train { cfg.dropout } else { 0.0 };
        if dropout > 0.0 && plans.iter().any(|p| !p.is_discrete()) {
            return Err(NeuralError::Config("dropout needs per-node plans".into()));
        }
        if plans.iter().any(|p| p.input_dim != cfg.input_dim || p.layers.len() != cfg.max_len) {
            return Err(NeuralError::ShapeMismatch("plan compiled for another configuration".into()));
        }

        let c0 = batch.class_sizes[0].len();
        let enc_hidden = self.encoder.0.forward(store, &batch.features, c0);
        let enc_act: Vec<f64> = enc_hidden.iter().map(|x| x.max(0.0)).collect();
        let h0 = self.encoder.1.forward(store, &enc_act, c0);
        let mut states = vec![h0];

        let dist_proj = match self.distance {
            Some((w_d, table)) => {
                let mut q = vec![0.0; (cfg.max_len + 1) * 4 * d];
                matmul_nt(cfg.max_len + 1, d, 4 * d, store.get(table).data(), store.get(w_d).data(), 0.0, &mut q);
                q
            }
            None => Vec::new(),
        };
        let (edge_enc, edge_proj) = match &self.edge {
            Some((w_e, enc)) => {
                let rows = batch.edge_rows.len() / cfg.edge_dim;
                let e = enc.forward(store, &batch.edge_rows, rows);
                let mut r = vec![0.0; rows * 4 * d];
                matmul_nt(rows, d, 4 * d, &e, store.get(*w_e).data(), 0.0, &mut r);
                (e, r)
            }
            None => (Vec::new(), Vec::new()),
        };

        let w_in = store.get(self.w_input).data();
        let w_h = store.get(self.w_hidden).data();
        let bias = store.get(self.bias).data();
        let mut layers = Vec::with_capacity(cfg.max_len);
        for (l, lp) in batch.layers.iter().enumerate() {
            let prev = &states[l];
            let cp = batch.class_sizes[l].len();
            let mut x_in = prev.clone();
            let mut in_norms = Vec::new();
            if cfg.norm == Norm::Euclidean {
                for r in 0..cp {
                    let row = &mut x_in[r * d..(r + 1) * d];
                    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                    row.iter_mut().for_each(|x| *x /= norm + EUCLID_EPS);
                    in_norms.push(norm);
                }
            }
            let mut mask = Vec::new();
            if dropout > 0.0 {
                let keep = 1.0 / (1.0 - dropout);
                mask = (0..cp * d).map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep }).collect();
                x_in.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
            }
            let mut proj: Vec<f64> = (0..cp).flat_map(|_| bias.iter().copied()).collect();
            matmul_nt(cp, d, 4 * d, &x_in, w_in, 1.0, &mut proj);

            let mut depths: Vec<DepthTape> = Vec::with_capacity(lp.depths.len());
            for (t, dp) in lp.depths.iter().enumerate() {
                let rows = dp.len();
                let mut pre = vec![0.0; rows * 4 * d];
                for r in 0..rows {
                    let out = &mut pre[r * 4 * d..(r + 1) * 4 * d];
                    let i = dp.input[r] as usize;
                    out.copy_from_slice(&proj[i * 4 * d..(i + 1) * 4 * d]);
                    if !dist_proj.is_empty() {
                        let q = dp.dist[r] as usize;
                        out.iter_mut().zip(&dist_proj[q * 4 * d..(q + 1) * 4 * d]).for_each(|(a, b)| *a += b);
                    }
                    if dp.edge[r] != NO_EDGE && !edge_proj.is_empty() {
                        let e = dp.edge[r] as usize;
                        out.iter_mut().zip(&edge_proj[e * 4 * d..(e + 1) * 4 * d]).for_each(|(a, b)| *a += b);
                    }
                }
                let mut cell = vec![0.0; rows * d];
                let mut hidden = vec![0.0; rows * d];
                if t == 0 {
                    for r in 0..rows {
                        lstm_pointwise(
                            &mut pre[r * 4 * d..(r + 1) * 4 * d],
                            None,
                            &mut cell[r * d..(r + 1) * d],
                            &mut hidden[r * d..(r + 1) * d],
                        );
                    }
                } else {
                    let parent = &depths[t - 1];
                    let gathered = gather(&parent.hidden, &dp.parent, d);
                    matmul_nt(rows, d, 4 * d, &gathered, w_h, 1.0, &mut pre);
                    for r in 0..rows {
                        let p = dp.parent[r] as usize;
                        lstm_pointwise(
                            &mut pre[r * 4 * d..(r + 1) * 4 * d],
                            Some(&parent.cell[p * d..(p + 1) * d]),
                            &mut cell[r * d..(r + 1) * d],
                            &mut hidden[r * d..(r + 1) * d],
                        );
                    }
                }
                depths.push(DepthTape { gates: pre, cell, hidden });
            }

            let c = lp.class_prev.len();
            let leaves = &depths.last().expect("k + 1 depths").hidden;
            let mut update = vec![0.0; c * d];
            for ci in 0..c {
                let row = &mut update[ci * d..(ci + 1) * d];
                let scale = agg_scale(cfg.path_agg, lp.path_total[ci]);
                for j in lp.agg_offsets[ci] as usize..lp.agg_offsets[ci + 1] as usize {
                    let w = lp.agg_count[j] * scale;
                    let leaf = lp.agg_leaf[j] as usize;
                    row.iter_mut().zip(&leaves[leaf * d..(leaf + 1) * d]).for_each(|(a, b)| *a += w * b);
                }
                let p = lp.class_prev[ci] as usize;
                row.iter_mut().zip(&prev[p * d..(p + 1) * d]).for_each(|(a, b)| *a += b);
            }

            let ids = &self.layers[l];
            let sizes = &batch.class_sizes[l + 1];
            let (normed, bn) = match ids.norm {
                Some((gamma, beta)) => {
                    let gamma = store.get(gamma).data();
                    let beta = store.get(beta).data();
                    let (mean, var) = match mode {
                        Mode::Train => weighted_moments(&update, sizes, d),
                        Mode::Eval => {
                            let (m, v) = running_names(l + 1);
                            (store.buffer(&m).expect("bound").data().to_vec(), store.buffer(&v).expect("bound").data().to_vec())
                        }
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let mut xhat = update.clone();
                    let mut y = vec![0.0; c * d];
                    for ci in 0..c {
                        for j in 0..d {
                            let x = (update[ci * d + j] - mean[j]) * inv_std[j];
                            xhat[ci * d + j] = x;
                            y[ci * d + j] = gamma[j] * x + beta[j];
                        }
                    }
                    (y, Some(BnTape { xhat, inv_std, mean, var }))
                }
                None => (update.clone(), None),
            };
            let (out, phi_hidden) = match &ids.phi {
                Some((a, b)) => {
                    let z = a.forward(store, &normed, c);
                    let act: Vec<f64> = z.iter().map(|x| x.max(0.0)).collect();
                    (b.forward(store, &act, c), z)
                }
                None => (normed.clone(), Vec::new()),
            };
            layers.push(LayerTape { x_in, in_norms, mask, depths, normed, bn, phi_hidden });
            states.push(out);
        }

        let last = states.last().expect("encoder output");
        let sizes = &batch.class_sizes[cfg.max_len];
        let mut graph_emb = vec![0.0; batch.num_graphs * d];
        for (ci, &g) in batch.final_graph.iter().enumerate() {
            let g = g as usize;
            let w = sizes[ci] * agg_scale(cfg.readout, batch.num_nodes[g]);
            graph_emb[g * d..(g + 1) * d].iter_mut().zip(&last[ci * d..(ci + 1) * d]).for_each(|(a, b)| *a += w * b);
        }

        let b = batch.num_graphs;
        let (logits, head_hidden, head_mask) = match self.head.as_slice() {
            [lin] => (lin.forward(store, &graph_emb, b), Vec::new(), Vec::new()),
            [first, second] => {
                let z = first.forward(store, &graph_emb, b);
                let mask: Vec<f64> = if dropout > 0.0 {
                    let keep = 1.0 / (1.0 - dropout);
                    (0..z.len()).map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep }).collect()
                } else {
                    vec![1.0; z.len()]
                };
                let act: Vec<f64> = z.iter().zip(&mask).map(|(x, m)| x.max(0.0) * m).collect();
                (second.forward(store, &act, b), z, mask)
            }
            _ => unreachable!("head has one or two layers"),
        };
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite("model output".into()));
        }
        Ok(Tape { batch, mode, enc_hidden, states, dist_proj, edge_enc, layers, graph_emb, head_hidden, head_mask, logits })
    }

    /// Forward in eval mode over one graph; returns its embedding.
    pub fn embed(&self, store: &ParamStore, g: &pathlab_core::Graph, ps: &PathSet) -> Result<Vec<f64>> {
        let plan = compile(g, ps, &self.cfg, false)?;
        let tape = self.forward(store, &[&plan], Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(tape.graph_emb)
    }

    /// Reverse pass from the gradient of the loss with respect to the logits.
    pub fn backward(&self, store: &ParamStore, tape: &Tape, d_logits: &[f64]) -> Result<Gradients> {
        let cfg = &self.cfg;
        let d = cfg.hidden;
        let batch = &tape.batch;
        let b = batch.num_graphs;
        if d_logits.len() != b * cfg.num_outputs {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} logit gradients for {b} graphs with {} outputs",
                d_logits.len(),
                cfg.num_outputs
            )));
        }
        let mut grads = store.zero_grads();

        let d_emb = match self.head.as_slice() {
            [lin] => lin.backward(store, &mut grads, &tape.graph_emb, d_logits, b),
            [first, second] => {
                let act: Vec<f64> =
                    tape.head_hidden.iter().zip(&tape.head_mask).map(|(x, m)| x.max(0.0) * m).collect();
                let mut dz = second.backward(store, &mut grads, &act, d_logits, b);
                dz.iter_mut()
                    .zip(tape.head_hidden.iter().zip(&tape.head_mask))
                    .for_each(|(g, (z, m))| *g *= if *z > 0.0 { *m } else { 0.0 });
                first.backward(store, &mut grads, &tape.graph_emb, &dz, b)
            }
            _ => unreachable!("head has one or two layers"),
        };

        let sizes = &batch.class_sizes[cfg.max_len];
        let mut d_state = vec![0.0; sizes.len() * d];
        for (ci, &g) in batch.final_graph.iter().enumerate() {
            let g = g as usize;
            let w = sizes[ci] * agg_scale(cfg.readout, batch.num_nodes[g]);
            d_state[ci * d..(ci + 1) * d].iter_mut().zip(&d_emb[g * d..(g + 1) * d]).for_each(|(a, b)| *a = w * b);
        }

        let w_in = store.get(self.w_input).data();
        let w_h = store.get(self.w_hidden).data();
        let mut d_dist = vec![0.0; tape.dist_proj.len()];
        let edge_rows = tape.edge_enc.len() / d;
        let mut d_edge = vec![0.0; edge_rows * 4 * d];
        for l in (0..cfg.max_len).rev() {
            let lt = &tape.layers[l];
            let lp = &batch.layers[l];
            let ids = &self.layers[l];
            let c = lp.class_prev.len();
            let cp = batch.class_sizes[l].len();

            let d_normed = match &ids.phi {
                Some((a, bl)) => {
                    let act: Vec<f64> = lt.phi_hidden.iter().map(|x| x.max(0.0)).collect();
                    let mut dz = bl.backward(store, &mut grads, &act, &d_state, c);
                    dz.iter_mut().zip(&lt.phi_hidden).for_each(|(g, z)| *g *= if *z > 0.0 { 1.0 } else { 0.0 });
                    a.backward(store, &mut grads, &lt.normed, &dz, c)
                }
                None => d_state,
            };
            let d_update = match (ids.norm, &lt.bn) {
                (Some((gamma_id, beta_id)), Some(bn)) => {
                    let gamma = store.get(gamma_id).data().to_vec();
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for ci in 0..c {
                        for j in 0..d {
                            dgamma[j] += d_normed[ci * d + j] * bn.xhat[ci * d + j];
                            dbeta[j] += d_normed[ci * d + j];
                        }
                    }
                    grads.get_mut(gamma_id).data_mut().iter_mut().zip(&dgamma).for_each(|(a, b)| *a += b);
                    grads.get_mut(beta_id).data_mut().iter_mut().zip(&dbeta).for_each(|(a, b)| *a += b);
                    let mut du = vec![0.0; c * d];
                    match tape.mode {
                        Mode::Eval => {
                            for ci in 0..c {
                                for j in 0..d {
                                    du[ci * d + j] = gamma[j] * d_normed[ci * d + j] * bn.inv_std[j];
                                }
                            }
                        }
                        Mode::Train => {
                            // class rows carry the summed gradient of their members
                            let sizes = &batch.class_sizes[l + 1];
                            let n: f64 = sizes.iter().sum();
                            for j in 0..d {
                                let sum_dx = gamma[j] * dbeta[j];
                                let sum_dx_xhat = gamma[j] * dgamma[j];
                                for ci in 0..c {
                                    let dx = gamma[j] * d_normed[ci * d + j];
                                    du[ci * d + j] = bn.inv_std[j] / n
                                        * (n * dx - sizes[ci] * sum_dx - sizes[ci] * bn.xhat[ci * d + j] * sum_dx_xhat);
                                }
                            }
                        }
                    }
                    du
                }
                _ => d_normed,
            };

            let mut d_prev = vec![0.0; cp * d];
            let k = lp.depths.len() - 1;
            let mut d_hidden = vec![0.0; lp.depths[k].len() * d];
            for ci in 0..c {
                let row = &d_update[ci * d..(ci + 1) * d];
                let p = lp.class_prev[ci] as usize;
                d_prev[p * d..(p + 1) * d].iter_mut().zip(row).for_each(|(a, b)| *a += b);
                let scale = agg_scale(cfg.path_agg, lp.path_total[ci]);
                for j in lp.agg_offsets[ci] as usize..lp.agg_offsets[ci + 1] as usize {
                    let w = lp.agg_count[j] * scale;
                    let leaf = lp.agg_leaf[j] as usize;
                    d_hidden[leaf * d..(leaf + 1) * d].iter_mut().zip(row).for_each(|(a, b)| *a += w * b);
                }
            }

            let mut d_proj = vec![0.0; cp * 4 * d];
            let mut d_cell = vec![0.0; lp.depths[k].len() * d];
            for t in (0..=k).rev() {
                let dp = &lp.depths[t];
                let dt = &lt.depths[t];
                let rows = dp.len();
                let mut d_pre = vec![0.0; rows * 4 * d];
                let (mut d_hidden_up, mut d_cell_up) = if t > 0 {
                    (vec![0.0; lp.depths[t - 1].len() * d], vec![0.0; lp.depths[t - 1].len() * d])
                } else {
                    (Vec::new(), Vec::new())
                };
                for r in 0..rows {
                    let c_prev = (t > 0).then(|| {
                        let p = dp.parent[r] as usize;
                        &lt.depths[t - 1].cell[p * d..(p + 1) * d]
                    });
                    lstm_pointwise_backward(
                        &dt.gates[r * 4 * d..(r + 1) * 4 * d],
                        c_prev,
                        &dt.cell[r * d..(r + 1) * d],
                        &d_hidden[r * d..(r + 1) * d],
                        &mut d_cell[r * d..(r + 1) * d],
                        &mut d_pre[r * 4 * d..(r + 1) * 4 * d],
                    );
                    if t > 0 {
                        let p = dp.parent[r] as usize;
                        d_cell_up[p * d..(p + 1) * d]
                            .iter_mut()
                            .zip(&d_cell[r * d..(r + 1) * d])
                            .for_each(|(a, b)| *a += b);
                    }
                    let g = &d_pre[r * 4 * d..(r + 1) * 4 * d];
                    let i = dp.input[r] as usize;
                    d_proj[i * 4 * d..(i + 1) * 4 * d].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    if !d_dist.is_empty() {
                        let q = dp.dist[r] as usize;
                        d_dist[q * 4 * d..(q + 1) * 4 * d].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                    if dp.edge[r] != NO_EDGE && !d_edge.is_empty() {
                        let e = dp.edge[r] as usize;
                        d_edge[e * 4 * d..(e + 1) * 4 * d].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                }
                if t > 0 {
                    let gathered = gather(&lt.depths[t - 1].hidden, &dp.parent, d);
                    matmul_tn(4 * d, rows, d, &d_pre, &gathered, 1.0, grads.get_mut(self.w_hidden).data_mut());
                    let mut d_gathered = vec![0.0; rows * d];
                    matmul_nn(rows, 4 * d, d, &d_pre, w_h, 0.0, &mut d_gathered);
                    for r in 0..rows {
                        let p = dp.parent[r] as usize;
                        d_hidden_up[p * d..(p + 1) * d]
                            .iter_mut()
                            .zip(&d_gathered[r * d..(r + 1) * d])
                            .for_each(|(a, b)| *a += b);
                    }
                    d_hidden = d_hidden_up;
                    d_cell = d_cell_up;
                }
            }

            let db = grads.get_mut(self.bias).data_mut();
            for r in 0..cp {
                db.iter_mut().zip(&d_proj[r * 4 * d..(r + 1) * 4 * d]).for_each(|(a, b)| *a += b);
            }
            matmul_tn(4 * d, cp, d, &d_proj, &lt.x_in, 1.0, grads.get_mut(self.w_input).data_mut());
            let mut d_x = vec![0.0; cp * d];
            matmul_nn(cp, 4 * d, d, &d_proj, w_in, 0.0, &mut d_x);
            if !lt.mask.is_empty() {
                d_x.iter_mut().zip(&lt.mask).for_each(|(a, m)| *a *= m);
            }
            if !lt.in_norms.is_empty() {
                let prev = &tape.states[l];
                for r in 0..cp {
                    let h = &prev[r * d..(r + 1) * d];
                    let dx = &mut d_x[r * d..(r + 1) * d];
                    let norm = lt.in_norms[r];
                    let s = norm + EUCLID_EPS;
                    let dot: f64 = h.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
                    let radial = if norm > 0.0 { dot / (s * s * norm) } else { 0.0 };
                    dx.iter_mut().zip(h).for_each(|(g, hv)| *g = *g / s - hv * radial);
                }
            }
            d_prev.iter_mut().zip(&d_x).for_each(|(a, b)| *a += b);
            d_state = d_prev;
        }

        if let Some((w_d, table)) = self.distance {
            let rows = cfg.max_len + 1;
            matmul_tn(4 * d, rows, d, &d_dist, store.get(table).data(), 1.0, grads.get_mut(w_d).data_mut());
            matmul_nn(rows, 4 * d, d, &d_dist, store.get(w_d).data(), 1.0, grads.get_mut(table).data_mut());
        }
        if let Some((w_e, enc)) = &self.edge {
            matmul_tn(4 * d, edge_rows, d, &d_edge, &tape.edge_enc, 1.0, grads.get_mut(*w_e).data_mut());
            let mut d_enc = vec![0.0; edge_rows * d];
            matmul_nn(edge_rows, 4 * d, d, &d_edge, store.get(*w_e).data(), 0.0, &mut d_enc);
            enc.backward(store, &mut grads, &batch.edge_rows, &d_enc, edge_rows);
        }

        let c0 = batch.class_sizes[0].len();
        let act: Vec<f64> = tape.enc_hidden.iter().map(|x| x.max(0.0)).collect();
        let mut dz = self.encoder.1.backward(store, &mut grads, &act, &d_state, c0);
        dz.iter_mut().zip(&tape.enc_hidden).for_each(|(g, z)| *g *= if *z > 0.0 { 1.0 } else { 0.0 });
        self.encoder.0.backward(store, &mut grads, &batch.features, &dz, c0);

        grads.check_finite()?;
        Ok(grads)
    }

    /// Moves the batch-norm running averages toward the statistics of a
    /// train-mode tape.
    pub fn update_running_stats(&self, store: &mut ParamStore, tape: &Tape) {
        if tape.mode != Mode::Train {
            return;
        }
        for (l, lt) in tape.layers.iter().enumerate() {
            let Some(bn) = &lt.bn else { continue };
            let n: f64 = tape.batch.class_sizes[l + 1].iter().sum();
            let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let (mean, var) = running_names(l + 1);
            let rm = store.buffer_mut(&mean).expect("bound").data_mut();
            rm.iter_mut().zip(&bn.mean).for_each(|(r, m)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
            let rv = store.buffer_mut(&var).expect("bound").data_mut();
            rv.iter_mut()
                .zip(&bn.var)
                .for_each(|(r, v)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * correction);
        }
    }
}

fn agg_scale(agg: Aggregation, count: f64) -> f64 {
    match agg {
        Aggregation::Sum => 1.0,
        Aggregation::Mean if count > 0.0 => 1.0 / count,
        Aggregation::Mean => 0.0,
    }
}

fn gather(rows: &[f64], index: &[u32], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(index.len() * d);
    for &i in index {
        out.extend_from_slice(&rows[i as usize * d..(i as usize + 1) * d]);
    }
    out
}

/// Mean and biased variance of the rows, each counted `weights[row]` times.
fn weighted_moments(x: &[f64], weights: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (r, w) in weights.iter().enumerate() {
        mean.iter_mut().zip(&x[r * d..(r + 1) * d]).for_each(|(m, v)| *m += w * v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for (r, w) in weights.iter().enumerate() {
        for j in 0..d {
            let c = x[r * d + j] - mean[j];
            var[j] += w * c * c;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[derive(Debug, Clone)]
struct DepthTape {
    gates: Vec<f64>,
    cell: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BnTape {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    x_in: Vec<f64>,
    in_norms: Vec<f64>,
    mask: Vec<f64>,
    depths: Vec<DepthTape>,
    /// Node update after normalization, the input of φ.
    normed: Vec<f64>,
    bn: Option<BnTape>,
    phi_hidden: Vec<f64>,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: BatchPlan,
    mode: Mode,
    enc_hidden: Vec<f64>,
    states: Vec<Vec<f64>>,
    dist_proj: Vec<f64>,
    edge_enc: Vec<f64>,
    layers: Vec<LayerTape>,
    graph_emb: Vec<f64>,
    head_hidden: Vec<f64>,
    head_mask: Vec<f64>,
    logits: Vec<f64>,
}

impl Tape {
    pub fn num_graphs(&self) -> usize {
        self.batch.num_graphs
    }

    /// Row-major `graphs × outputs`.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Row-major `graphs × hidden`.
    pub fn graph_embeddings(&self) -> &[f64] {
        &self.graph_emb
    }

    /// Final state of every node of graph `b`.
    pub fn node_states(&self, b: usize) -> Vec<Vec<f64>> {
        let last = self.states.last().expect("encoder output");
        let d = last.len() / self.batch.class_sizes.last().map_or(1, |s| s.len().max(1));
        let offset = self.batch.final_offsets[b];
        self.batch.node_class[b].iter().map(|&c| last[(offset + c as usize) * d..(offset + c as usize + 1) * d].to_vec()).collect()
    }
}
