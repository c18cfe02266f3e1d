//! TOML experiment configuration.
//!
//! Every section has defaults; only `data` and `model` must be given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::nn::{Architecture, TrainConfig};
use crate::selection::RlConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub windowing: WindowingConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: Architecture,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Where `run` writes its outputs unless overridden on the command line.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn default_repeats() -> usize {
    5
}

/// Exactly one of `csv` and `synthetic` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Seed of the synthetic generator.
    #[serde(default)]
    pub synthetic_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    pub width: usize,
    pub stride: usize,
    /// Per-channel z-score, fit on each fold's training windows.
    pub normalize: bool,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            width: 32,
            stride: 16,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Loso,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub scheme: SplitScheme,
    /// Fold count for `kfold`.
    pub k: usize,
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            scheme: SplitScheme::Loso,
            k: 5,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of members.
    pub k: usize,
    /// Bernoulli inclusion probability per channel.
    pub p: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { k: 10, p: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One model on all channels.
    Base,
    /// The `k_top` individually best members.
    Topk,
    /// Every member.
    All,
    /// Policy-gradient selection.
    Rl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Topk => "topk",
            Method::All => "all",
            Method::Rl => "rl",
        }
    }

    pub fn needs_ensemble(self) -> bool {
        self != Method::Base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub methods: Vec<Method>,
    pub k_top: usize,
    pub rl: RlConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Base, Method::Topk, Method::All, Method::Rl],
            k_top: 5,
            rl: RlConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(csv) = &cfg.data.csv {
            if csv.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.data.csv = Some(base.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::Config(format!("{name}: {msg}")));
        match (&self.data.csv, &self.data.synthetic) {
            (Some(_), Some(_)) => return field("data", "set exactly one of `csv` and `synthetic`, not both".into()),
            (None, None) => return field("data", "set one of `csv` or `synthetic`".into()),
            (None, Some(spec)) => spec.validate().map_err(|e| Error::Config(format!("data.synthetic: {e}")))?,
            (Some(_), None) => {}
        }
        if self.windowing.width == 0 {
            return field("windowing.width", "must be ≥ 1".into());
        }
        if self.windowing.stride == 0 {
            return field("windowing.stride", "must be ≥ 1".into());
        }
        if !(self.split.val_fraction > 0.0 && self.split.val_fraction < 1.0) {
            return field("split.val_fraction", format!("must lie in (0, 1), got {}", self.split.val_fraction));
        }
        if self.split.scheme == SplitScheme::Kfold && self.split.k < 2 {
            return field("split.k", format!("must be ≥ 2, got {}", self.split.k));
        }
        self.training
            .validate()
            .map_err(|e| Error::Config(format!("training: {e}")))?;
        if self.ensemble.k == 0 {
            return field("ensemble.k", "must be ≥ 1".into());
        }
        if !(self.ensemble.p > 0.0 && self.ensemble.p <= 1.0) {
            return field("ensemble.p", format!("must lie in (0, 1], got {}", self.ensemble.p));
        }
        if self.selection.methods.is_empty() {
            return field("selection.methods", "list at least one method".into());
        }
        if self.selection.methods.contains(&Method::Topk) && !(1..=self.ensemble.k).contains(&self.selection.k_top) {
            return field(
                "selection.k_top",
                format!("must be in 1..={} (ensemble.k), got {}", self.ensemble.k, self.selection.k_top),
            );
        }
        self.selection
            .rl
            .validate()
            .map_err(|e| Error::Config(format!("selection.rl: {e}")))?;
        if self.repeats == 0 {
            return field("repeats", "must be ≥ 1".into());
        }
        Ok(())
    }

    /// Methods in canonical order without duplicates.
    pub fn methods(&self) -> Vec<Method> {
        let mut m = self.selection.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
