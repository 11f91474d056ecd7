//! Named parameters, their Adam state, non-learned buffers, and checkpoints.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<DenseTensor>,
    first_moment: Vec<DenseTensor>,
    second_moment: Vec<DenseTensor>,
    index: BTreeMap<String, usize>,
    buffers: BTreeMap<String, DenseTensor>,
    step: u64,
}

/// One gradient tensor per parameter, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<DenseTensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &DenseTensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseTensor {
        &mut self.values[id.0]
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.values {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(NeuralError::ShapeMismatch("gradient sets of different models".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.values.iter().map(|t| t.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.values.iter().try_for_each(|t| t.check_finite("gradient"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: DenseTensor) -> ParamId {
        assert!(!self.index.contains_key(name), "parameter {name} registered twice");
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.first_moment.push(DenseTensor::zeros(value.shape()));
        self.second_moment.push(DenseTensor::zeros(value.shape()));
        self.values.push(value);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &DenseTensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseTensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&DenseTensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &DenseTensor)> {
        self.index.iter().map(|(name, &i)| (ParamId(i), name.as_str(), &self.values[i]))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn num_params(&self) -> usize {
        self.values.iter().map(DenseTensor::len).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn buffer(&self, name: &str) -> Option<&DenseTensor> {
        self.buffers.get(name)
    }

    pub fn set_buffer(&mut self, name: &str, value: DenseTensor) {
        self.buffers.insert(name.to_string(), value);
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut DenseTensor> {
        self.buffers.get_mut(name)
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients { values: self.values.iter().map(|v| DenseTensor::zeros(v.shape())).collect() }
    }

    /// Bias-corrected Adam update of every parameter.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: AdamConfig) -> Result<()> {
        if grads.values.len() != self.values.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.values.len(),
                self.values.len()
            )));
        }
        for (i, g) in grads.values.iter().enumerate() {
            if g.shape() != self.values[i].shape() {
                return Err(NeuralError::ShapeMismatch(format!(
                    "gradient {:?} for parameter {} of shape {:?}",
                    g.shape(),
                    self.names[i],
                    self.values[i].shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (i, g) in grads.values.iter().enumerate() {
            let p = self.values[i].data_mut();
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 8] = b"PATHLAB\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: serde_json::Value,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    buffer: bool,
}

/// Layout: magic, version (u32 LE), header length (u64 LE), JSON header,
/// then every tensor's values as f64 LE in header order.
pub fn write_checkpoint(store: &ParamStore, config: &serde_json::Value, mut out: impl Write) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<&DenseTensor> = Vec::new();
    for (_, name, t) in store.iter() {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), buffer: false });
        payload.push(t);
    }
    for (name, t) in &store.buffers {
        tensors.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), buffer: true });
        payload.push(t);
    }
    let header = serde_json::to_vec(&CheckpointHeader { config: config.clone(), step: store.step, tensors })
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for t in payload {
        for x in t.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Restores parameters (in name order, fresh optimizer moments) and buffers,
/// returning the stored configuration.
pub fn read_checkpoint(mut input: impl Read) -> Result<(ParamStore, serde_json::Value)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    let mut store = ParamStore::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        input.read_exact(&mut raw)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let t = DenseTensor::from_vec(&entry.shape, data)?;
        if entry.buffer {
            store.set_buffer(&entry.name, t);
        } else {
            store.add(&entry.name, t);
        }
    }
    store.step = header.step;
    Ok((store, header.config))
}
