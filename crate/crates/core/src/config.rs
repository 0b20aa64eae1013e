//! Run configuration: TOML file, dotted `--set` overrides, validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataConfig;
use crate::generator::GeneratorKind;
use crate::losses::McdRule;
use crate::nn::ExtractorSpec;
use crate::optim::Adam;
use crate::swad::SwadConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}` (expected key=value)")]
    Override(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Agfa,
    Erm,
    ErmSwad,
    AmpMixup,
    AgfaUnsupMcd,
    AgfaNoMixup,
    AgfaNoSwad,
    AgfaPixelGen,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Agfa,
        Method::Erm,
        Method::ErmSwad,
        Method::AmpMixup,
        Method::AgfaUnsupMcd,
        Method::AgfaNoMixup,
        Method::AgfaNoSwad,
        Method::AgfaPixelGen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Agfa => "agfa",
            Method::Erm => "erm",
            Method::ErmSwad => "erm_swad",
            Method::AmpMixup => "amp_mixup",
            Method::AgfaUnsupMcd => "agfa_unsup_mcd",
            Method::AgfaNoMixup => "agfa_no_mixup",
            Method::AgfaNoSwad => "agfa_no_swad",
            Method::AgfaPixelGen => "agfa_pixel_gen",
        }
    }

    /// Trains an adversarial generator.
    pub fn uses_generator(self) -> bool {
        !matches!(self, Method::Erm | Method::ErmSwad | Method::AmpMixup)
    }

    pub fn uses_swad(self) -> bool {
        !matches!(self, Method::Erm | Method::AgfaNoSwad)
    }

    pub fn generator_kind(self) -> GeneratorKind {
        if self == Method::AgfaPixelGen {
            GeneratorKind::Pixel
        } else {
            GeneratorKind::Amplitude
        }
    }

    /// Applies post-synthesis mixup to generated amplitudes.
    pub fn uses_mixup(self) -> bool {
        self.uses_generator() && !matches!(self, Method::AgfaNoMixup | Method::AgfaPixelGen)
    }

    /// Uses the label-free discrepancy instead of the supervised one.
    pub fn unsupervised(self) -> bool {
        self == Method::AgfaUnsupMcd
    }
}

impl std::str::FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub seed: u64,
    pub max_iters: usize,
    /// Validation period `V` (iterations).
    pub val_period: usize,
    /// Weight of the discrepancy term in the model loss.
    pub eta: f64,
    pub alpha_conf: f64,
    /// Upper bound of the post-mixup coefficient.
    pub alpha_mix: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_per_domain: usize,
    /// Head weight draws per ELBO evaluation.
    pub n_mc: usize,
    /// KL multiplier on top of the `1/N` per-sample scaling.
    pub kl_weight: f64,
    pub mcd_rule: McdRule,
    /// Hidden width of the generator; 0 for a single affine layer.
    pub generator_hidden: usize,
    /// Sampled head pairs for the discrepancy metric.
    pub eval_pairs: usize,
    pub swad: SwadConfig,
    pub extractor: ExtractorSpec,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Agfa,
            seed: 0,
            max_iters: 2000,
            val_period: 100,
            eta: 0.1,
            alpha_conf: 1.96,
            alpha_mix: 1.0,
            learning_rate: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_per_domain: 16,
            n_mc: 50,
            kl_weight: 1.0,
            mcd_rule: McdRule::Anchor,
            generator_hidden: 0,
            eval_pairs: 10,
            swad: SwadConfig::default(),
            extractor: ExtractorSpec::default(),
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Loads `path` (defaults when `None`) and applies `key=value` overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: TrainConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            match msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
                Some(key) => ConfigError::UnknownKey(key.to_string()),
                None => ConfigError::Parse(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field materialised, in a stable order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn adam(&self) -> Adam {
        Adam {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return bad(format!("alpha_mix must lie in [0, 1], got {}", self.alpha_mix));
        }
        if !(self.alpha_conf >= 0.0 && self.alpha_conf.is_finite()) {
            return bad(format!("alpha_conf must be finite and >= 0, got {}", self.alpha_conf));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("kl_weight", self.kl_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("max_iters", self.max_iters),
            ("val_period", self.val_period),
            ("batch_per_domain", self.batch_per_domain),
            ("n_mc", self.n_mc),
            ("eval_pairs", self.eval_pairs),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.extractor.layers.is_empty() || self.extractor.layers.contains(&0) {
            return bad("extractor.layers must be non-empty and positive".into());
        }
        self.swad.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.data.validate().map_err(ConfigError::Invalid)
    }
}

/// Parses the right-hand side as a TOML value, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted key, e.g. `swad.n_s=2` or `method=erm`.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(format!("{spec}: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value));
    Ok(())
}
