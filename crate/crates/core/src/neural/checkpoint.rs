//! Checkpoints: a JSON manifest next to a little-endian `f32` tensor blob.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{DecoderConfig, DecoderModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset in `f32` elements from the start of the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: DecoderConfig,
    pub positions: Vec<[f64; 2]>,
    pub epoch: usize,
    pub metrics: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    /// Anything else the caller wants stored alongside (e.g. the scaler).
    pub extra: serde_json::Value,
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<manifest>` and the blob next to it (same stem, `.bin`).
pub fn save_checkpoint(manifest: &Path, model: &DecoderModel, epoch: usize, metrics: serde_json::Value, extra: serde_json::Value) -> Result<Checkpoint> {
    let mut blob = Vec::with_capacity(model.params.count() * 4);
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, v) in model.params.names.iter().zip(&model.params.values) {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: [v.nrows(), v.ncols()],
            offset,
        });
        offset += v.len();
        for x in v.iter() {
            blob.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    let ck = Checkpoint {
        config: model.config.clone(),
        positions: model.positions.clone(),
        epoch,
        metrics,
        tensors,
        extra,
    };
    std::fs::write(blob_path(manifest), blob)?;
    std::fs::write(manifest, serde_json::to_string_pretty(&ck)?)?;
    Ok(ck)
}

pub fn load_checkpoint(manifest: &Path) -> Result<(DecoderModel, Checkpoint)> {
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(manifest)?)?;
    let blob = std::fs::read(blob_path(manifest))?;
    let total: usize = ck.tensors.iter().map(|t| t.shape[0] * t.shape[1]).sum();
    if blob.len() != total * 4 {
        return Err(Error::Format(format!("checkpoint blob has {} bytes, expected {}", blob.len(), total * 4)));
    }
    let mut values = Vec::with_capacity(ck.tensors.len());
    for t in &ck.tensors {
        let n = t.shape[0] * t.shape[1];
        let bytes = blob
            .get(t.offset * 4..(t.offset + n) * 4)
            .ok_or_else(|| Error::Format(format!("tensor {} outside the blob", t.name)))?;
        let data: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let arr = Array2::from_shape_vec((t.shape[0], t.shape[1]), data).map_err(|e| Error::Format(e.to_string()))?;
        values.push((t.name.clone(), arr));
    }
    let model = DecoderModel::with_params(ck.config.clone(), &ck.positions, values)?;
    Ok((model, ck))
}
