//! The declarative run configuration: one JSON document drives dataset
//! construction, training, attacks, defences, evaluation, and simulation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{AttackConfig, ClipBox, CwConfig, FgsmConfig, JsmaConfig, PgdConfig};
use crate::data::{FillStrategy, SplitSpec, SynthConfig};
use crate::defence::{GdaConfig, HcConfig};
use crate::error::{Error, Result};
use crate::flowsim::SimCase;
use crate::net::{Optimizer, TrainConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// How attacks pick their clip box: the per-feature training-data box,
/// the global [-0.98, 0.99] preset, or explicit global bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClipSpec {
    #[default]
    Data,
    Narrow,
    Global {
        lo: f64,
        hi: f64,
    },
}

impl ClipSpec {
    pub fn resolve(&self, data_box: &ClipBox) -> Result<ClipBox> {
        match self {
            ClipSpec::Data => Ok(data_box.clone()),
            ClipSpec::Narrow => Ok(ClipBox::narrow_preset(data_box.dim())),
            ClipSpec::Global { lo, hi } => ClipBox::global(*lo, *hi, data_box.dim()),
        }
    }
}

/// File-level attack description; resolved against the dataset's clip box
/// at run time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AttackSpec {
    Fgsm {
        eps: f64,
        #[serde(default)]
        clip: ClipSpec,
    },
    Pgd {
        eps: f64,
        #[serde(default)]
        eps_step: Option<f64>,
        #[serde(default = "default_pgd_iter")]
        max_iter: usize,
        #[serde(default)]
        random_start: bool,
        #[serde(default)]
        clip: ClipSpec,
    },
    Jsma {
        theta: f64,
        gamma: f64,
        #[serde(default)]
        clip: ClipSpec,
    },
    Cw {
        #[serde(default = "default_cw_lr")]
        learning_rate: f64,
        #[serde(default = "default_cw_steps")]
        binary_search_steps: usize,
        #[serde(default = "default_cw_steps")]
        max_iter: usize,
        #[serde(default = "default_cw_const")]
        initial_const: f64,
        #[serde(default)]
        confidence: f64,
        #[serde(default = "default_cw_hd")]
        max_halving: usize,
        #[serde(default = "default_cw_hd")]
        max_doubling: usize,
        #[serde(default)]
        clip: ClipSpec,
    },
}

fn default_pgd_iter() -> usize {
    100
}
fn default_cw_lr() -> f64 {
    0.02
}
fn default_cw_steps() -> usize {
    10
}
fn default_cw_const() -> f64 {
    0.01
}
fn default_cw_hd() -> usize {
    5
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::Fgsm { .. } => "fgsm",
            AttackSpec::Pgd { .. } => "pgd",
            AttackSpec::Jsma { .. } => "jsma",
            AttackSpec::Cw { .. } => "cw_l2",
        }
    }

    pub fn resolve(&self, data_box: &ClipBox, seed: u64) -> Result<AttackConfig> {
        Ok(match self {
            AttackSpec::Fgsm { eps, clip } => {
                AttackConfig::Fgsm(FgsmConfig::new(*eps, clip.resolve(data_box)?))
            }
            AttackSpec::Pgd {
                eps,
                eps_step,
                max_iter,
                random_start,
                clip,
            } => {
                let mut cfg = PgdConfig::new(
                    *eps,
                    eps_step.unwrap_or(*eps / 10.0),
                    *max_iter,
                    clip.resolve(data_box)?,
                );
                cfg.random_start = *random_start;
                cfg.seed = seed;
                AttackConfig::Pgd(cfg)
            }
            AttackSpec::Jsma { theta, gamma, clip } => {
                AttackConfig::Jsma(JsmaConfig::new(*theta, *gamma, clip.resolve(data_box)?))
            }
            AttackSpec::Cw {
                learning_rate,
                binary_search_steps,
                max_iter,
                initial_const,
                confidence,
                max_halving,
                max_doubling,
                clip,
            } => AttackConfig::Cw(CwConfig {
                learning_rate: *learning_rate,
                binary_search_steps: *binary_search_steps,
                max_iter: *max_iter,
                initial_const: *initial_const,
                confidence: *confidence,
                max_halving: *max_halving,
                max_doubling: *max_doubling,
                clip: clip.resolve(data_box)?,
                batch_size: 1000,
                immutable_features: Vec::new(),
            }),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synth {
        #[serde(flatten)]
        config: SynthConfig,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label")]
        label_column: String,
        #[serde(default)]
        fill: FillStrategy,
    },
}

fn default_label() -> String {
    "Label".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenceSpec {
    #[serde(default)]
    pub adversarial_training: Option<AtSpec>,
    #[serde(default)]
    pub gaussian: Option<GdaConfig>,
    #[serde(default)]
    pub high_confidence: Option<HcConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtSpec {
    pub attacks: Vec<AttackSpec>,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    pub epochs: usize,
}

fn default_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub case: SimCase,
    #[serde(default)]
    pub adversary_router: Option<String>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    /// Flows sampled from the test set.
    #[serde(default = "default_flows")]
    pub flows: usize,
    #[serde(default = "default_threshold")]
    pub detection_threshold: f64,
    /// Seed offset for the black-box surrogate's training data split.
    #[serde(default)]
    pub surrogate_seed: u64,
}

fn default_flows() -> usize {
    30
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Canonical mode drops timestamps so reruns are byte-identical.
    #[serde(default)]
    pub canonical: bool,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    #[serde(default = "default_l2")]
    pub l2_lambda: f64,
    #[serde(default)]
    pub training: Option<TrainConfig>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub defence: Option<DefenceSpec>,
    #[serde(default)]
    pub simulation: Option<SimSpec>,
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_l2() -> f64 {
    1e-4
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        if let DatasetSpec::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(Error::config(format!(
                    "dataset file does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Stable hash of the config contents, embedded in every artifact.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn effective_training(&self) -> TrainConfig {
        self.training.clone().unwrap_or(TrainConfig {
            epochs: 50,
            batch_size: 128,
            learning_rate: 0.01,
            optimizer: Optimizer::default(),
            seed: self.seed,
            shuffle: true,
        })
    }

    pub fn effective_hidden(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| vec![60, 40, 20, 10])
    }
}
