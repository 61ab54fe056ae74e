//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `CGADCKPT`, a little-endian `u32` version, a
//! `u64` header length, a JSON header (config, node names, normalization,
//! parameter names and shapes), then the adjacency and every parameter as
//! little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ForecastModel, ModelConfig, Parameter};
use super::tensor::Tensor;
use crate::error::{CgadError, Result};
use crate::series::NormalizationSpec;

const MAGIC: &[u8; 8] = b"CGADCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    node_names: Vec<String>,
    normalization: Option<NormalizationSpec>,
    parameters: Vec<(String, Vec<usize>)>,
    /// Free-form provenance lines; not part of the model.
    #[serde(default)]
    notes: Vec<String>,
}

pub fn save_model(model: &ForecastModel, path: &Path) -> Result<()> {
    save_model_with_header(model, path, &[])
}

/// Saves the model with provenance `notes` stored in the header.
pub fn save_model_with_header(model: &ForecastModel, path: &Path, notes: &[String]) -> Result<()> {
    std::fs::write(path, encode(model, notes)?).map_err(|e| CgadError::io(path, e))
}

/// Loads a checkpoint of any node count.
pub fn load_model(path: &Path) -> Result<ForecastModel> {
    let bytes = std::fs::read(path).map_err(|e| CgadError::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint and checks it was trained on `n_nodes` sensors.
pub fn load_model_for(path: &Path, n_nodes: usize) -> Result<ForecastModel> {
    let model = load_model(path)?;
    if model.n_nodes() != n_nodes {
        return Err(CgadError::Dimension(format!(
            "checkpoint has {} nodes, data has {n_nodes}",
            model.n_nodes()
        )));
    }
    Ok(model)
}

fn encode(model: &ForecastModel, notes: &[String]) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config.clone(),
        node_names: model.node_names.clone(),
        normalization: model.normalization.clone(),
        parameters: model
            .parameters
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
            .collect(),
        notes: notes.to_vec(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CgadError::Format(format!("checkpoint header: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let values = model
        .normalized_adjacency
        .iter()
        .chain(model.parameters.iter().flat_map(|p| p.tensor.data()));
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CgadError::Format(format!("checkpoint truncated while reading {what}"))
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CgadError::Format("oversized tensor".into()))?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn decode(bytes: &[u8]) -> Result<ForecastModel> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(CgadError::Format("not a cgad checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CgadError::Format(format!(
            "checkpoint version {version}, this build reads version {VERSION}"
        )));
    }
    let len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| CgadError::Format("header length overflows".into()))?;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| CgadError::Format(format!("checkpoint header: {e}")))?;
    let n = header.node_names.len();
    let normalized_adjacency = r.f64s(n * n, "adjacency")?;
    let mut parameters = Vec::with_capacity(header.parameters.len());
    for (name, shape) in header.parameters {
        let numel = shape.iter().product();
        let data = r.f64s(numel, &name)?;
        parameters.push(Parameter { name, tensor: Tensor::new(shape, data)?.with_grad() });
    }
    if r.at != bytes.len() {
        return Err(CgadError::Format(format!("{} trailing bytes in checkpoint", bytes.len() - r.at)));
    }
    let model = ForecastModel {
        config: header.config,
        node_names: header.node_names,
        normalized_adjacency,
        parameters,
        normalization: header.normalization,
    };
    model.config.validate()?;
    model.check_layout()?;
    if !model.is_finite() {
        return Err(CgadError::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(model)
}
