//! Flat weight archive: concatenated little-endian `f32` tensors plus a
//! JSON manifest with names, shapes and byte offsets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderModel, ModelConfig};
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_file};
use crate::params::ParamSet;

pub const ARCHIVE_FORMAT: &str = "f32-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format: String,
    pub model_config: ModelConfig,
    pub total_bytes: usize,
    pub tensors: Vec<TensorEntry>,
}

impl EncoderModel {
    /// Serializes all tensors; values are rounded to `f32`.
    pub fn encode_weights(&self) -> (Vec<u8>, ArchiveManifest) {
        let mut bytes = Vec::with_capacity(4 * self.param_count());
        let mut tensors = Vec::new();
        for t in self.tensors() {
            let offset = bytes.len();
            for v in t.data {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: t.name,
                shape: t.shape,
                offset,
                nbytes: bytes.len() - offset,
            });
        }
        let manifest = ArchiveManifest {
            format: ARCHIVE_FORMAT.to_string(),
            model_config: self.config.clone(),
            total_bytes: bytes.len(),
            tensors,
        };
        (bytes, manifest)
    }

    pub fn decode_weights(bytes: &[u8], manifest: &ArchiveManifest) -> Result<Self> {
        if manifest.format != ARCHIVE_FORMAT {
            return Err(Error::Archive(format!("unsupported format `{}`", manifest.format)));
        }
        if manifest.total_bytes != bytes.len() {
            return Err(Error::Archive(format!(
                "manifest declares {} bytes, archive has {}",
                manifest.total_bytes,
                bytes.len()
            )));
        }
        let mut model = EncoderModel::from_seed(manifest.model_config.clone(), 0)?;
        let expected: Vec<(String, Vec<usize>)> =
            model.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        if expected.len() != manifest.tensors.len() {
            return Err(Error::Archive(format!(
                "expected {} tensors, manifest lists {}",
                expected.len(),
                manifest.tensors.len()
            )));
        }
        for ((name, shape), (entry, dst)) in expected
            .iter()
            .zip(manifest.tensors.iter().zip(model.tensors_mut()))
        {
            if &entry.name != name || &entry.shape != shape {
                return Err(Error::Archive(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    entry.name, entry.shape
                )));
            }
            let end = entry.offset.checked_add(entry.nbytes).filter(|&e| e <= bytes.len());
            if entry.nbytes != 4 * dst.len() || end.is_none() {
                return Err(Error::Archive(format!("tensor `{name}` has an invalid byte range")));
            }
            let raw = &bytes[entry.offset..entry.offset + entry.nbytes];
            for (v, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
            }
        }
        Ok(model)
    }
}

/// Writes `<stem>.bin` and `<stem>.json` atomically.
pub fn save_weights(model: &EncoderModel, bin_path: &Path, manifest_path: &Path) -> Result<()> {
    let (bytes, manifest) = model.encode_weights();
    let json = serde_json::to_vec_pretty(&manifest)?;
    atomic_write(bin_path, &bytes)?;
    atomic_write(manifest_path, &json)
}

pub fn load_weights(bin_path: &Path, manifest_path: &Path) -> Result<EncoderModel> {
    let manifest: ArchiveManifest = serde_json::from_slice(&read_file(manifest_path)?)?;
    EncoderModel::decode_weights(&read_file(bin_path)?, &manifest)
}
