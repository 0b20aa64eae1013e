//! Domain datasets: MNIST ingestion, Rotated/Colored-MNIST builders, the
//! procedural glyph domains, and source/target splitting.

pub mod cache;
pub mod colored;
pub mod glyph;
pub mod idx;
pub mod rotated;
pub mod split;

use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::ImageShape;
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

pub use idx::{load_idx, parse_idx, IdxArray};
pub use split::{split_leave_one_out, split_single_source, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("bad IDX magic {0:#010x}")]
    BadMagic(u32),
    #[error("truncated file: need {expected} bytes, have {got}")]
    Truncated { expected: usize, got: usize },
    #[error("IDX dimensions {0:?} overflow")]
    DimensionOverflow(Vec<usize>),
    #[error("unknown domain {id} (have {count})")]
    UnknownDomain { id: usize, count: usize },
    #[error("MNIST files not found under {0} (run scripts/fetch_mnist.py)")]
    MissingMnist(PathBuf),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One labelled domain with images `[N, H, W, Ch]` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub domain_id: usize,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, domain_id: usize, images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let name = name.into();
        if images.shape().len() != 4 || images.shape()[0] != labels.len() {
            return Err(DataError::Invalid(format!(
                "{name}: images {:?} for {} labels",
                images.shape(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::Invalid(format!("{name}: label {l} >= {class_count}")));
        }
        if images.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DataError::Invalid(format!("{name}: pixel outside [0, 1]")));
        }
        Ok(DomainDataset {
            name,
            domain_id,
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        let s = self.images.shape();
        ImageShape {
            height: s[1],
            width: s[2],
            channels: s[3],
        }
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let per = self.shape().pixels();
        &self.images.data()[i * per..(i + 1) * per]
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DomainDataset {
        let per = self.shape().pixels();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        DomainDataset {
            name: self.name.clone(),
            domain_id: self.domain_id,
            images: Tensor::new(shape, data).expect("subset shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Zero-pads the byte images at `indices` of an `[N, h, w]` array into the
/// centre of `size × size`, scaled to `[0, 1]`, as `[len, size, size, 1]`.
/// Images larger than `size` are first average-pooled by the smallest
/// integer factor that makes them fit (28 → 14 for `size = 16`).
pub fn pad_images(raw: &IdxArray, indices: &[usize], size: usize) -> Result<Tensor> {
    let [n, h, w] = raw.dims[..] else {
        return Err(DataError::Invalid(format!("expected 3-D image array, got {:?}", raw.dims)));
    };
    if size == 0 {
        return Err(DataError::Invalid("image size must be positive".into()));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= n) {
        return Err(DataError::Invalid(format!("image index {i} out of {n}")));
    }
    let k = h.max(w).div_ceil(size);
    let (ph, pw) = (h / k, w / k);
    let (top, left) = ((size - ph) / 2, (size - pw) / 2);
    let norm = 255.0 * (k * k) as f64;
    let mut out = vec![0.0; indices.len() * size * size];
    for (j, &i) in indices.iter().enumerate() {
        let img = &raw.data[i * h * w..(i + 1) * h * w];
        for y in 0..ph {
            for x in 0..pw {
                let mut acc = 0u32;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += u32::from(img[(y * k + dy) * w + x * k + dx]);
                    }
                }
                out[j * size * size + (y + top) * size + x + left] = f64::from(acc) / norm;
            }
        }
    }
    Ok(Tensor::new(vec![indices.len(), size, size, 1], out).expect("padded shape"))
}

const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

/// Raw MNIST digits kept as bytes until selected.
#[derive(Clone, Debug)]
pub struct MnistDigits {
    pub images: IdxArray,
    pub labels: Vec<usize>,
}

impl MnistDigits {
    /// Loads plain or `.gz` IDX files from `dir`, preferring the training
    /// split.
    pub fn load(dir: &Path) -> Result<Self> {
        let find = |stem: &str| {
            [format!("{stem}.gz"), stem.to_string()]
                .into_iter()
                .map(|f| dir.join(f))
                .find(|p| p.exists())
        };
        for (images, labels) in MNIST_FILES {
            if let (Some(ip), Some(lp)) = (find(images), find(labels)) {
                let raw = load_idx(&ip)?;
                let lab = load_idx(&lp)?;
                if raw.dims.len() != 3 || lab.dims.len() != 1 || lab.dims[0] != raw.dims[0] {
                    return Err(DataError::Invalid(format!(
                        "label dims {:?} for image dims {:?}",
                        lab.dims, raw.dims
                    )));
                }
                let labels = lab.data.iter().map(|&l| l as usize).collect();
                return Ok(MnistDigits { images: raw, labels });
            }
        }
        Err(DataError::MissingMnist(dir.to_path_buf()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The digits at `indices`, padded to `size × size`, as one domain.
    pub fn select(&self, name: &str, indices: &[usize], size: usize) -> Result<DomainDataset> {
        let images = pad_images(&self.images, indices, size)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        DomainDataset::new(name, 0, images, labels, 10)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Glyph,
    RotatedMnist,
    ColoredMnist,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Glyph => "glyph",
            DatasetKind::RotatedMnist => "rotated_mnist",
            DatasetKind::ColoredMnist => "colored_mnist",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train on all domains but the target.
    #[default]
    LeaveOneOut,
    /// Train on the given domain, evaluate on every other one.
    SingleSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    /// Target domain (leave-one-out) or the single source domain.
    pub domain: usize,
    pub val_frac: f64,
    pub samples_per_domain: usize,
    pub image_size: usize,
    /// MNIST directory; relative paths resolve against `AGFA_DATA_DIR` when
    /// set, else the working directory.
    pub mnist_dir: String,
    pub angles: Vec<f64>,
    pub correlations: Vec<f64>,
    pub glyph_domains: usize,
    /// Horizontal-flip augmentation of source batches.
    pub augment_flip: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: DatasetKind::Glyph,
            protocol: Protocol::LeaveOneOut,
            domain: 0,
            val_frac: 0.2,
            samples_per_domain: 500,
            image_size: 32,
            mnist_dir: "data/mnist".into(),
            angles: vec![0.0, 30.0, 60.0],
            correlations: vec![0.1, 0.2, 0.9],
            glyph_domains: 3,
            augment_flip: false,
        }
    }
}

impl DataConfig {
    pub fn mnist_path(&self) -> PathBuf {
        let p = PathBuf::from(&self.mnist_dir);
        match std::env::var_os("AGFA_DATA_DIR") {
            Some(root) if p.is_relative() => PathBuf::from(root).join(p),
            _ => p,
        }
    }

    pub fn domain_count(&self) -> usize {
        match self.dataset {
            DatasetKind::Glyph => self.glyph_domains,
            DatasetKind::RotatedMnist => self.angles.len(),
            DatasetKind::ColoredMnist => self.correlations.len(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(format!("data.val_frac must lie in [0, 1), got {}", self.val_frac));
        }
        if self.domain_count() < 2 {
            return Err("at least two domains are required".into());
        }
        if self.domain >= self.domain_count() {
            return Err(format!("data.domain {} out of range ({} domains)", self.domain, self.domain_count()));
        }
        if self.samples_per_domain == 0 {
            return Err("data.samples_per_domain must be positive".into());
        }
        if !self.image_size.is_power_of_two() || self.image_size < 8 {
            return Err(format!("data.image_size must be a power of two >= 8, got {}", self.image_size));
        }
        if self.correlations.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return Err("data.correlations must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Builds every domain described by `cfg`. The dataset stream of `seed`
/// decides which digits go to which domain.
pub fn build_domains(cfg: &DataConfig, seed: u64) -> Result<Vec<DomainDataset>> {
    cfg.validate().map_err(DataError::Invalid)?;
    let n = cfg.samples_per_domain;
    match cfg.dataset {
        DatasetKind::Glyph => Ok(glyph::make_glyph_domains(&glyph::GlyphSpec {
            domains: glyph::default_styles(cfg.glyph_domains),
            samples_per_domain: n,
            size: cfg.image_size,
            seed,
        })),
        DatasetKind::RotatedMnist | DatasetKind::ColoredMnist => match std::env::var_os("AGFA_DATA_DIR") {
            Some(root) => {
                let key = cache_key(cfg);
                let mut h = std::collections::hash_map::DefaultHasher::new();
                key.hash(&mut h);
                let stem = PathBuf::from(root)
                    .join("cache")
                    .join(format!("{}-{:016x}-{seed}", cfg.dataset.as_str(), h.finish()));
                if let Some(domains) = cache::read_cache(&stem, &key, seed)? {
                    return Ok(domains);
                }
                let domains = build_mnist_domains(cfg, seed)?;
                if let Some(dir) = stem.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| DataError::Io {
                        path: dir.to_path_buf(),
                        message: e.to_string(),
                    })?;
                }
                cache::write_cache(&stem, &key, seed, &domains)?;
                Ok(domains)
            }
            None => build_mnist_domains(cfg, seed),
        },
    }
}

/// The settings that determine built MNIST domains.
fn cache_key(cfg: &DataConfig) -> String {
    format!(
        "{} n={} size={} angles={:?} correlations={:?} mnist={}",
        cfg.dataset.as_str(),
        cfg.samples_per_domain,
        cfg.image_size,
        cfg.angles,
        cfg.correlations,
        cfg.mnist_path().display()
    )
}

fn build_mnist_domains(cfg: &DataConfig, seed: u64) -> Result<Vec<DomainDataset>> {
    let n = cfg.samples_per_domain;
    let digits = MnistDigits::load(&cfg.mnist_path())?;
    let domains = cfg.domain_count();
    let mut order: Vec<usize> = (0..digits.len()).collect();
    order.shuffle(&mut rng::stream(seed, Stream::Dataset));
    if n * domains > order.len() {
        return Err(DataError::Invalid(format!(
            "{domains} disjoint domains of {n} need {} digits, have {}",
            n * domains,
            order.len()
        )));
    }
    let parts = (0..domains)
        .map(|d| digits.select("mnist", &order[d * n..(d + 1) * n], cfg.image_size))
        .collect::<Result<Vec<_>>>()?;
    if cfg.dataset == DatasetKind::RotatedMnist {
        Ok(rotated::make_rotated_domains(&parts, &cfg.angles))
    } else {
        let mut rng = rng::stream(seed ^ 0x5eed, Stream::Dataset);
        Ok(colored::make_colored_domains(&parts, &cfg.correlations, &mut rng))
    }
}

/// The workspace's bundled MNIST directory, for tests and examples.
pub fn bundled_mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}
