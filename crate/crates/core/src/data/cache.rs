//! Dataset cache: a flat little-endian blob plus a JSON sidecar.
//!
//! For each domain, in sidecar order, the blob holds its images as `f64` LE
//! (`N·H·W·Ch` values) followed by its labels as `u32` LE (`N` values). The
//! sidecar records names, ids, shapes, class counts, byte offsets and the
//! seed the domains were built with.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DomainDataset, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub name: String,
    pub domain_id: usize,
    pub shape: Vec<usize>,
    pub class_count: usize,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub version: u32,
    pub seed: u64,
    /// Free-form description of the builder settings.
    pub key: String,
    pub domains: Vec<CacheEntry>,
}

pub const CACHE_VERSION: u32 = 1;

fn io_err(path: &Path, e: impl ToString) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_cache(stem: &Path, key: &str, seed: u64, domains: &[DomainDataset]) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for d in domains {
        entries.push(CacheEntry {
            name: d.name.clone(),
            domain_id: d.domain_id,
            shape: d.images.shape().to_vec(),
            class_count: d.class_count,
            offset: blob.len() as u64,
        });
        for v in d.images.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &d.labels {
            blob.extend_from_slice(&(l as u32).to_le_bytes());
        }
    }
    let sidecar = CacheSidecar {
        version: CACHE_VERSION,
        seed,
        key: key.to_string(),
        domains: entries,
    };
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(&bin, blob).map_err(|e| io_err(&bin, e))?;
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| io_err(&json, e))?;
    std::fs::write(&json, text).map_err(|e| io_err(&json, e))
}

/// Reads a cache written by [`write_cache`]; `None` when absent or built
/// with a different key or seed.
pub fn read_cache(stem: &Path, key: &str, seed: u64) -> Result<Option<Vec<DomainDataset>>> {
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    if !bin.exists() || !json.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&json).map_err(|e| io_err(&json, e))?;
    let sidecar: CacheSidecar = serde_json::from_str(&text).map_err(|e| io_err(&json, e))?;
    if sidecar.version != CACHE_VERSION || sidecar.key != key || sidecar.seed != seed {
        return Ok(None);
    }
    let blob = std::fs::read(&bin).map_err(|e| io_err(&bin, e))?;
    let mut out = Vec::with_capacity(sidecar.domains.len());
    for e in sidecar.domains {
        let n_px: usize = e.shape.iter().product();
        let n = e.shape.first().copied().unwrap_or(0);
        let start = e.offset as usize;
        let end = start + n_px * 8 + n * 4;
        if blob.len() < end {
            return Err(DataError::Truncated {
                expected: end,
                got: blob.len(),
            });
        }
        let images: Vec<f64> = blob[start..start + n_px * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let labels: Vec<usize> = blob[start + n_px * 8..end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let images = Tensor::new(e.shape, images).map_err(|err| DataError::Invalid(err.to_string()))?;
        out.push(DomainDataset::new(e.name, e.domain_id, images, labels, e.class_count)?);
    }
    Ok(Some(out))
}
