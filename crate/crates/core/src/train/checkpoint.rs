//! Checkpoint container:
//!
//! ```text
//! magic "DANCKPT\0" | header length (u64 LE) | SHA-256 of header (32 bytes)
//! | JSON header | tensor data (little-endian IEEE-754, index order)
//! ```
//!
//! The header holds the format version, the training config verbatim, the
//! tensor index (name, shape, dtype, offset into the data section), the
//! data SHA-256 and the loop state.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{OptimizerKind, TrainConfig};
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::model::{DanModel, Task};
use crate::objectives::ClassCenters;
use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: &[u8; 8] = b"DANCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 8 + 32;

/// Loop state carried between epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    /// Completed epochs.
    pub epoch: usize,
    /// Training samples drawn so far; augmentation keys continue from here.
    pub samples_seen: u64,
    pub optimizer: OptimizerState<T>,
    pub best_metric: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Affinity centers (absent when the affinity term is off).
    pub centers: Option<ClassCenters>,
}

impl<T: Element> TrainState<T> {
    pub fn new(model: &DanModel<T>) -> Self {
        TrainState {
            epoch: 0,
            samples_seen: 0,
            optimizer: OptimizerState::new(model.params()),
            best_metric: None,
            best_epoch: None,
            centers: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CentersMeta {
    num_classes: usize,
    dim: usize,
    present: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateMeta {
    epoch: usize,
    step: u64,
    samples_seen: u64,
    optimizer: OptimizerKind,
    best_metric: Option<f64>,
    best_epoch: Option<usize>,
    centers: Option<CentersMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: TrainConfig,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
    state: StateMeta,
}

/// A decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Element> {
    pub config: TrainConfig,
    pub model: DanModel<T>,
    pub state: TrainState<T>,
}

fn ckpt_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Writer {
    entries: Vec<TensorEntry>,
    data: Vec<u8>,
}

impl Writer {
    fn push<U: Element>(&mut self, name: String, t: &Tensor<U>) {
        self.entries.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: U::DTYPE,
            offset: self.data.len() as u64,
        });
        for &v in t.data() {
            v.to_le_bytes_into(&mut self.data);
        }
    }
}

pub fn encode_checkpoint<T: Element>(config: &TrainConfig, model: &DanModel<T>, state: &TrainState<T>) -> Result<Vec<u8>> {
    let mut w = Writer {
        entries: Vec::new(),
        data: Vec::new(),
    };
    let params = model.params();
    for (name, t) in params.named_tensors() {
        w.push(format!("model/{name}"), t);
    }
    for (p, (m, v)) in params.iter().zip(state.optimizer.first.iter().zip(&state.optimizer.second)) {
        w.push(format!("optim.first/{}", p.name), m);
        w.push(format!("optim.second/{}", p.name), v);
    }
    let centers = state.centers.as_ref().map(|c| {
        let t = Tensor::new(vec![c.num_classes(), c.dim()], c.values().to_vec()).expect("center table shape");
        w.push("centers".into(), &t);
        CentersMeta {
            num_classes: c.num_classes(),
            dim: c.dim(),
            present: c.present().to_vec(),
        }
    });
    let header = Header {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        tensors: w.entries,
        data_sha256: hex::encode(Sha256::digest(&w.data)),
        state: StateMeta {
            epoch: state.epoch,
            step: state.optimizer.step,
            samples_seen: state.samples_seen,
            optimizer: config.optimizer,
            best_metric: state.best_metric,
            best_epoch: state.best_epoch,
            centers,
        },
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + w.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&json));
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.data);
    Ok(out)
}

pub fn decode_checkpoint<T: Element>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < PREAMBLE {
        return Err(ckpt_err(bytes.len(), format!("truncated preamble ({} of {PREAMBLE} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(ckpt_err(0, "not a checkpoint (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = PREAMBLE
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| ckpt_err(bytes.len(), format!("truncated header (declared {header_len} bytes)")))?;
    let json = &bytes[PREAMBLE..data_start];
    if Sha256::digest(json).as_slice() != &bytes[16..48] {
        return Err(ckpt_err(PREAMBLE, "header checksum mismatch"));
    }
    let header: Header =
        serde_json::from_slice(json).map_err(|e| ckpt_err(PREAMBLE, format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ckpt_err(
            PREAMBLE,
            format!("format version {} (this build reads {FORMAT_VERSION})", header.format_version),
        ));
    }
    let data = &bytes[data_start..];
    if hex::encode(Sha256::digest(data)) != header.data_sha256 {
        let expected: usize = header
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>() * e.dtype.size_of())
            .sum();
        if data.len() < expected {
            return Err(ckpt_err(bytes.len(), format!("truncated data ({} of {expected} bytes)", data.len())));
        }
        return Err(ckpt_err(data_start, "tensor data checksum mismatch"));
    }

    let mut tensors: HashMap<String, (&TensorEntry, &[u8])> = HashMap::new();
    let mut cursor = 0usize;
    for e in &header.tensors {
        let len = e.shape.iter().product::<usize>() * e.dtype.size_of();
        if e.offset as usize != cursor || cursor + len > data.len() {
            return Err(ckpt_err(data_start + cursor, format!("tensor {} has an inconsistent offset", e.name)));
        }
        tensors.insert(e.name.clone(), (e, &data[cursor..cursor + len]));
        cursor += len;
    }
    if cursor != data.len() {
        return Err(ckpt_err(data_start + cursor, "trailing bytes after the last tensor"));
    }
    let mut take = |name: &str, dtype: DType| -> Result<(Vec<usize>, &[u8])> {
        let (e, raw) = tensors
            .remove(name)
            .ok_or_else(|| ckpt_err(data_start, format!("missing tensor {name}")))?;
        if e.dtype != dtype {
            return Err(ckpt_err(data_start + e.offset as usize, format!("tensor {name} is {:?}, expected {dtype:?}", e.dtype)));
        }
        Ok((e.shape.clone(), raw))
    };
    fn build<U: Element>(shape: Vec<usize>, raw: &[u8]) -> Result<Tensor<U>> {
        let values = raw.chunks_exact(U::DTYPE.size_of()).map(U::from_le_slice).collect();
        Tensor::new(shape, values)
    }

    let mut model = DanModel::<T>::new(header.config.model.clone())?;
    let names: Vec<String> = model.params().named_tensors().into_iter().map(|(n, _)| n).collect();
    for name in &names {
        let (shape, raw) = take(&format!("model/{name}"), T::DTYPE)?;
        model.params_mut().set_tensor(name, build(shape, raw)?)?;
    }
    let mut optimizer = OptimizerState::new(model.params());
    optimizer.step = header.state.step;
    for (i, p) in model.params().iter().enumerate() {
        for (prefix, slot) in [("optim.first", &mut optimizer.first[i]), ("optim.second", &mut optimizer.second[i])] {
            let (shape, raw) = take(&format!("{prefix}/{}", p.name), T::DTYPE)?;
            let t = build::<T>(shape, raw)?;
            if t.shape() != p.value.shape() {
                return Err(ckpt_err(data_start, format!("{prefix}/{} shape differs from its parameter", p.name)));
            }
            *slot = t;
        }
    }
    let centers = match header.state.centers {
        Some(meta) => {
            let (shape, raw) = take("centers", DType::F64)?;
            let values = build::<f64>(shape, raw)?.into_data();
            Some(ClassCenters::restore(meta.num_classes, meta.dim, values, meta.present)?)
        }
        None => None,
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(ckpt_err(data_start, format!("unexpected tensor {extra}")));
    }
    Ok(Checkpoint {
        config: header.config,
        model,
        state: TrainState {
            epoch: header.state.epoch,
            samples_seen: header.state.samples_seen,
            optimizer,
            best_metric: header.state.best_metric,
            best_epoch: header.state.best_epoch,
            centers,
        },
    })
}

pub fn save_checkpoint<T: Element>(path: &Path, config: &TrainConfig, model: &DanModel<T>, state: &TrainState<T>) -> Result<()> {
    let bytes = encode_checkpoint(config, model, state)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads and insists the checkpoint was trained for `task`.
pub fn load_checkpoint_for_task<T: Element>(path: &Path, task: Task) -> Result<Checkpoint<T>> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config.task() != task {
        return Err(Error::TaskMismatch {
            expected: task.to_string(),
            found: ckpt.config.task().to_string(),
        });
    }
    Ok(ckpt)
}
