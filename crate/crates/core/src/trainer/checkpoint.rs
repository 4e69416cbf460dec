//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `SVLCKPT1`, the manifest length as a
//! little-endian `u64`, the JSON manifest, then every tensor's values as
//! little-endian IEEE-754 `f64` in row-major order, concatenated in
//! manifest order. Each manifest tensor entry records its byte offset into
//! the payload section.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{LoraConfig, MetricRecord, TrainConfig};
use crate::decoder::{ModelAssembly, ModelConfig, Role};
use crate::error::{Error, Result};
use crate::nn::{LoraAdapter, Param, ParamGroup, ParamStore};

pub const MAGIC: &[u8; 8] = b"SVLCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    pub group: ParamGroup,
    pub frozen: bool,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub role: Role,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub lora: LoraConfig,
    pub step: usize,
    pub history: Vec<MetricRecord>,
    /// Resolved run configuration of the command that wrote the file.
    #[serde(default)]
    pub run_config: Option<serde_json::Value>,
    pub adapters: BTreeMap<String, LoraAdapter>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub assembly: ModelAssembly,
    pub train: TrainConfig,
    pub lora: LoraConfig,
    pub step: usize,
    pub history: Vec<MetricRecord>,
    pub run_config: Option<serde_json::Value>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let params = &ckpt.assembly.params;
    let mut tensors = Vec::with_capacity(params.len());
    let mut payload = Vec::with_capacity(params.num_scalars() * 8);
    for (name, p) in params.iter() {
        let (r, c) = p.value.dim();
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [r, c],
            dtype: "f64".into(),
            group: p.group,
            frozen: p.frozen,
            offset: payload.len() as u64,
        });
        for v in p.value.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        role: ckpt.assembly.role(),
        model: ckpt.assembly.config.clone(),
        train: ckpt.train.clone(),
        lora: ckpt.lora.clone(),
        step: ckpt.step,
        history: ckpt.history.clone(),
        run_config: ckpt.run_config.clone(),
        adapters: params.adapters().map(|(k, v)| (k.to_string(), *v)).collect(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: CheckpointManifest = serde_json::from_slice(json)?;
    let payload = &bytes[16 + len..];
    let mut params = ParamStore::new();
    for t in &manifest.tensors {
        if t.dtype != "f64" {
            return Err(Error::Checkpoint(format!("{}: unsupported dtype {}", t.name, t.dtype)));
        }
        let n = t.shape[0] * t.shape[1];
        let start = t.offset as usize;
        let raw = payload
            .get(start..start + n * 8)
            .ok_or_else(|| Error::Checkpoint(format!("{}: payload out of bounds", t.name)))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Array2::from_shape_vec((t.shape[0], t.shape[1]), values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        params.insert_param(
            t.name.clone(),
            Param {
                value,
                frozen: t.frozen,
                group: t.group,
            },
        );
    }
    for (target, adapter) in &manifest.adapters {
        params.set_adapter(target.clone(), *adapter);
    }
    Ok(Checkpoint {
        assembly: ModelAssembly::from_parts(manifest.model, manifest.role, params)?,
        train: manifest.train,
        lora: manifest.lora,
        step: manifest.step,
        history: manifest.history,
        run_config: manifest.run_config,
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_checkpoint(&bytes)
}
