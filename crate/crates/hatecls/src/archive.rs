//! Named-tensor archive: a directory holding `manifest.json` (tensor names,
//! shapes, byte offsets, integrity checksum, free-form metadata) plus
//! `tensors.bin` (little-endian f64 payload). Used for encoder weights and
//! training checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::tensor::ParamStore;

pub const ARCHIVE_VERSION: &str = "1";
const MANIFEST_FILE: &str = "manifest.json";
const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestTensor {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into tensors.bin.
    offset: u64,
    /// Element count.
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    dtype: String,
    checksum: String,
    tensors: Vec<ManifestTensor>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hex checksum of an f64 buffer's little-endian bytes; used for freeze
/// checks and golden-state fixtures.
pub fn checksum_f64s(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes `store` plus free-form `meta` under `dir` (created if needed).
pub fn write_archive(dir: &Path, store: &ParamStore, meta: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir.display().to_string(), e))?;
    let payload = f64s_to_bytes(store.data());
    let tensors = store
        .specs()
        .iter()
        .map(|s| ManifestTensor {
            name: s.name.clone(),
            shape: s.shape.clone(),
            offset: (s.offset * 8) as u64,
            len: s.len,
        })
        .collect();
    let manifest = Manifest {
        version: ARCHIVE_VERSION.to_string(),
        dtype: "f64le".to_string(),
        checksum: format!("sha256:{}", sha256_hex(&payload)),
        tensors,
        meta,
    };
    let bin_path = dir.join(TENSORS_FILE);
    std::fs::write(&bin_path, payload)
        .map_err(|e| PipelineError::io(bin_path.display().to_string(), e))?;
    let man_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::InvalidConfig(format!("manifest serialization: {e}")))?;
    std::fs::write(&man_path, json)
        .map_err(|e| PipelineError::io(man_path.display().to_string(), e))?;
    Ok(())
}

/// Reads an archive back into a [`ParamStore`] (tensors in manifest order)
/// plus its metadata document.
pub fn read_archive(dir: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let display = dir.display().to_string();
    let man_path = dir.join(MANIFEST_FILE);
    let json = std::fs::read_to_string(&man_path)
        .map_err(|e| PipelineError::io(man_path.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&json).map_err(|e| {
        PipelineError::InvalidConfig(format!("{}: bad manifest: {e}", man_path.display()))
    })?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(PipelineError::VersionMismatch {
            found: manifest.version,
            expected: ARCHIVE_VERSION.to_string(),
        });
    }
    if manifest.dtype != "f64le" {
        return Err(PipelineError::InvalidConfig(format!(
            "{display}: unsupported dtype {:?}",
            manifest.dtype
        )));
    }

    let bin_path = dir.join(TENSORS_FILE);
    let payload = std::fs::read(&bin_path)
        .map_err(|e| PipelineError::io(bin_path.display().to_string(), e))?;
    let stated = manifest
        .checksum
        .strip_prefix("sha256:")
        .unwrap_or(&manifest.checksum);
    if stated != sha256_hex(&payload) {
        return Err(PipelineError::MissingTensor {
            name: TENSORS_FILE.to_string(),
            path: display,
        });
    }

    let mut store = ParamStore::new();
    let mut data = Vec::new();
    for t in &manifest.tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.len {
            return Err(PipelineError::ShapeMismatch {
                what: t.name.clone(),
                expected: format!("{:?} ({expected} elements)", t.shape),
                actual: format!("{} elements", t.len),
            });
        }
        let start = t.offset as usize;
        let end = start + t.len * 8;
        let bytes = payload.get(start..end).ok_or_else(|| PipelineError::MissingTensor {
            name: t.name.clone(),
            path: display.clone(),
        })?;
        store.add(&t.name, &t.shape);
        data.extend(bytes.chunks_exact(8).map(|c| {
            f64::from_le_bytes(c.try_into().expect("8-byte chunk"))
        }));
    }
    store.load_data(data)?;
    Ok((store, manifest.meta))
}
