//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "AGFACKPT"
//! version      u32       1
//! config_len   u32       followed by the TOML config echo (UTF-8)
//! meta_len     u32       followed by JSON metadata (UTF-8): iterations,
//!                        image shape, classes, bias feature, SWAD summary
//! n_tensors    u32
//! per tensor:
//!   name_len   u32       followed by the name (UTF-8)
//!   ndim       u32
//!   dims       ndim × u64
//!   data       prod(dims) × f64
//! ```
//!
//! Tensor names: `extractor.{i}.weight|bias`, `head.mean`, `head.log_var`,
//! `generator.{i}.weight|bias`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TrainConfig;
use crate::generator::{GeneratorParams, ImageShape};
use crate::head::VariationalHead;
use crate::nn::Extractor;
use crate::tensor::Tensor;
use crate::trainer::{Model, SwadSummary, TrainedModel};

pub const MAGIC: &[u8; 8] = b"AGFACKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iterations: usize,
    pub shape: ImageShape,
    pub classes: usize,
    pub bias_feature: bool,
    pub swad: Option<SwadSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
    pub generator: Option<GeneratorParams>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_trained(config: &TrainConfig, trained: &TrainedModel) -> Self {
        Checkpoint {
            config: config.clone(),
            model: trained.model.clone(),
            generator: trained.generator.clone(),
            meta: CheckpointMeta {
                iterations: trained.iterations,
                shape: trained.model.shape,
                classes: trained.model.head.classes(),
                bias_feature: trained.model.extractor.bias_feature(),
                swad: trained.swad.clone(),
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.config.to_toml());
        put_str(&mut out, &serde_json::to_string(&self.meta).expect("metadata serialises"));
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        for (i, (w, b)) in self.model.extractor.layers().iter().enumerate() {
            tensors.push((format!("extractor.{i}.weight"), w));
            tensors.push((format!("extractor.{i}.bias"), b));
        }
        tensors.push(("head.mean".into(), self.model.head.mean()));
        tensors.push(("head.log_var".into(), self.model.head.log_var()));
        if let Some(g) = &self.generator {
            for (i, (w, b)) in g.layers().iter().enumerate() {
                tensors.push((format!("generator.{i}.weight"), w));
                tensors.push((format!("generator.{i}.bias"), b));
            }
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            put_str(&mut out, &name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let config = TrainConfig::from_toml(&r.string()?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&r.string()?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let n = r.u32()? as usize;
        let mut tensors = std::collections::BTreeMap::new();
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len.ok_or_else(|| CheckpointError::Malformed(format!("{name}: dims overflow")))?;
            let raw = r.take(len.checked_mul(8).ok_or(CheckpointError::Truncated(r.at))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            tensors.insert(name, t);
        }
        let mut take = |name: String| {
            tensors
                .remove(&name)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor {name}")))
        };
        let layers = |prefix: &str, take: &mut dyn FnMut(String) -> Result<Tensor>, count: usize| {
            (0..count)
                .map(|i| Ok((take(format!("{prefix}.{i}.weight"))?, take(format!("{prefix}.{i}.bias"))?)))
                .collect::<Result<Vec<_>>>()
        };
        let extractor = Extractor::from_layers(
            config.extractor.kind,
            meta.shape,
            layers("extractor", &mut take, config.extractor.layers.len())?,
            meta.bias_feature,
        )
        .map_err(CheckpointError::Malformed)?;
        let head = VariationalHead::from_parts(take("head.mean".into())?, take("head.log_var".into())?)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let generator = if config.method.uses_generator() {
            let count = if config.generator_hidden > 0 { 2 } else { 1 };
            let g = GeneratorParams::from_layers(
                config.method.generator_kind(),
                meta.shape,
                layers("generator", &mut take, count)?,
            )
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            Some(g)
        } else {
            None
        };
        if r.at != bytes.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        if head.dim() != extractor.feature_dim() {
            return Err(CheckpointError::Malformed("head width disagrees with the extractor".into()));
        }
        Ok(Checkpoint {
            config,
            model: Model {
                extractor,
                head,
                shape: meta.shape,
            },
            generator,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.at))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}
