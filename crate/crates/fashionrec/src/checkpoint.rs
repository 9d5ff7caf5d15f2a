//! Checkpoint directory: `manifest.json` (format version, model config and
//! the ordered tensor names and shapes) plus `params.bin`, the tensors as
//! little-endian `f32` concatenated in manifest order.

use std::fs;
use std::path::Path;

use fashionrec_core::model::{diff_specs, ModelConfig, ModelParams, ParamSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_bytes, read_json, sha256_hex, write_atomic, write_json};

pub const FORMAT: &str = "fashionrec-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const BLOB: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<ParamSpec>,
    pub n_values: usize,
    pub params_sha256: String,
}

pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format(format!(
            "float payload of {} bytes is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save(params: &ModelParams<f32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob = encode_f32(params.data());
    let manifest = Manifest {
        format: FORMAT.into(),
        format_version: VERSION,
        config: params.config().clone(),
        tensors: params.specs().to_vec(),
        n_values: params.data().len(),
        params_sha256: sha256_hex(&blob),
    };
    write_atomic(&dir.join(BLOB), &blob)?;
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(&dir.join(MANIFEST))?;
    if m.format != FORMAT || m.format_version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint format {} v{}",
            dir.display(),
            m.format,
            m.format_version
        )));
    }
    Ok(m)
}

pub fn load(dir: &Path) -> Result<ModelParams<f32>> {
    let manifest = read_manifest(dir)?;
    let fresh = ModelParams::<f32>::zeros(&manifest.config)?;
    if let Some(diff) = diff_specs(fresh.specs(), &manifest.tensors) {
        return Err(Error::Format(format!(
            "{}: manifest tensors disagree with its config: {diff}",
            dir.display()
        )));
    }
    let bytes = read_bytes(&dir.join(BLOB))?;
    if sha256_hex(&bytes) != manifest.params_sha256 {
        return Err(Error::Format(format!(
            "{}: params.bin digest mismatch",
            dir.display()
        )));
    }
    let data = decode_f32(&bytes)?;
    if data.len() != manifest.n_values || data.len() != fresh.data().len() {
        return Err(Error::Format(format!(
            "{}: params.bin holds {} values, manifest expects {}",
            dir.display(),
            data.len(),
            manifest.n_values
        )));
    }
    Ok(ModelParams::from_data(&manifest.config, data)?)
}

/// Loads a checkpoint that must fit `expected`; on mismatch the error lists
/// the differing tensors.
pub fn load_for(dir: &Path, expected: &ModelConfig) -> Result<ModelParams<f32>> {
    let params = load(dir)?;
    let want = ModelParams::<f32>::zeros(expected)?;
    if let Some(diff) = diff_specs(want.specs(), params.specs()) {
        return Err(Error::Format(format!(
            "{}: checkpoint does not fit the configured model: {diff}",
            dir.display()
        )));
    }
    Ok(params)
}
