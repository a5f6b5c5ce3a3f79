//! Heuristic hardening: adversarial training, Gaussian data augmentation,
//! and high-confidence postprocessing, composable into a defended
//! classifier.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{self, MlpModel, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdaConfig {
    pub sigma: f64,
    /// Noisy copies appended per original row; may be fractional.
    pub ratio: f64,
    #[serde(default = "default_true")]
    pub keep_originals: bool,
    /// Also add noise at inference time inside `defended_predict`.
    #[serde(default)]
    pub apply_predict: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl GdaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("gda sigma must be finite and >= 0"));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(Error::config("gda ratio must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HcConfig {
    pub cutoff: f64,
    #[serde(default = "default_true")]
    pub apply_predict: bool,
}

impl HcConfig {
    fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 0.0 && self.cutoff < 1.0) {
            return Err(Error::config("hc cutoff must be in [0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtConfig {
    pub attacks: Vec<AttackConfig>,
    /// Adversarial rows generated per clean row.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    pub epochs: usize,
    pub seed: u64,
}

fn default_ratio() -> f64 {
    1.0
}

impl AtConfig {
    fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(Error::config("adversarial training needs at least one attack"));
        }
        if self.epochs == 0 {
            return Err(Error::config("retrain epochs must be >= 1"));
        }
        if !(self.ratio > 0.0) {
            return Err(Error::config("augmentation ratio must be > 0"));
        }
        Ok(())
    }
}

/// Which defences produced a model, embedded in saved model files.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DefenceProvenance {
    pub applied: Vec<String>,
    pub configs: Vec<serde_json::Value>,
}

impl DefenceProvenance {
    pub fn record(&mut self, name: &str, config: &impl Serialize) {
        self.applied.push(name.to_string());
        self.configs
            .push(serde_json::to_value(config).unwrap_or(serde_json::Value::Null));
    }
}

/// Prediction pipeline: optional input-noise preprocessor, the base
/// model, optional score postprocessor.
#[derive(Debug, Clone)]
pub struct DefendedModel {
    pub base: MlpModel,
    pub gda: Option<GdaConfig>,
    pub hc: Option<HcConfig>,
    pub provenance: DefenceProvenance,
}

impl DefendedModel {
    pub fn plain(base: MlpModel) -> Self {
        DefendedModel {
            base,
            gda: None,
            hc: None,
            provenance: DefenceProvenance::default(),
        }
    }
}

/// One defended prediction: postprocessed score pair, hard label, and the
/// abstain flag (both scores below the cutoff).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HcOutcome {
    pub p0: f64,
    pub p1: f64,
    pub label: u8,
    pub abstain: bool,
}

/// Retrain on clean rows plus adversarial copies generated against the
/// current model with each configured attack, labels preserved.
pub fn adversarial_train(
    model: MlpModel,
    train_data: &Dataset,
    validation: &Dataset,
    at: &AtConfig,
    base_train: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    at.validate()?;
    let n = train_data.n_samples();
    let take = ((at.ratio * n as f64).floor() as usize).min(n).max(1);

    let mut parts: Vec<Array2<f64>> = vec![train_data.features.clone()];
    let mut labels: Vec<u8> = train_data.labels.to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(at.seed);
    for attack in &at.attacks {
        // sample `take` clean rows (without replacement, re-shuffled per attack)
        let mut idx: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        idx.truncate(take);
        idx.sort_unstable();
        let subset = train_data.subset(&idx);
        let batch = attack.run(&model, &subset.features.view(), &subset.labels.view())?;
        parts.push(batch.x_adv);
        labels.extend(subset.labels.iter());
    }

    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let features = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::numerical(format!("concat failed: {e}")))?;
    let augmented = Dataset {
        features,
        labels: Array1::from_vec(labels),
        feature_names: train_data.feature_names.clone(),
        scaler: train_data.scaler.clone(),
        clip_box: train_data.clip_box.clone(),
    };

    let mut cfg = base_train.clone();
    cfg.epochs = at.epochs;
    cfg.seed = at.seed;
    net::train(model, &augmented, validation, &cfg)
}

/// Append floor(ratio * n) rows drawn uniformly from the originals with
/// additive N(0, sigma^2) noise per feature, labels copied.
pub fn gaussian_augment(data: &Dataset, config: &GdaConfig) -> Result<Dataset> {
    config.validate()?;
    let n = data.n_samples();
    let d = data.n_features();
    let extra = (config.ratio * n as f64).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::numerical(format!("bad sigma: {e}")))?;

    let total = if config.keep_originals { n + extra } else { extra };
    let mut features = Array2::zeros((total, d));
    let mut labels = Array1::zeros(total);
    let mut row_idx = 0;
    if config.keep_originals {
        features
            .slice_mut(ndarray::s![..n, ..])
            .assign(&data.features);
        labels.slice_mut(ndarray::s![..n]).assign(&data.labels);
        row_idx = n;
    }
    // sources drawn before any noise so sigma does not perturb the
    // source sequence for a fixed seed
    let sources: Vec<usize> = (0..extra).map(|_| rng.random_range(0..n)).collect();
    for src in sources {
        for j in 0..d {
            let noise = if config.sigma == 0.0 { 0.0 } else { normal.sample(&mut rng) };
            features[[row_idx, j]] = data.features[[src, j]] + noise;
        }
        labels[row_idx] = data.labels[src];
        row_idx += 1;
    }

    Ok(Dataset {
        features,
        labels,
        feature_names: data.feature_names.clone(),
        scaler: data.scaler.clone(),
        clip_box: data.clip_box.clone(),
    })
}

/// Zero any class score below the cutoff; label is the larger remaining
/// score (tie to the attack class). Both zeroed sets the abstain flag and
/// falls back to the raw argmax.
pub fn high_confidence(scores: &[(f64, f64)], config: &HcConfig) -> Result<Vec<HcOutcome>> {
    config.validate()?;
    let mut out = Vec::with_capacity(scores.len());
    for &(p0, p1) in scores {
        if !(p0.is_finite() && p1.is_finite()) || (p0 + p1 - 1.0).abs() > 1e-6 {
            return Err(Error::data(format!("malformed score pair ({p0}, {p1})")));
        }
        let q0 = if p0 < config.cutoff { 0.0 } else { p0 };
        let q1 = if p1 < config.cutoff { 0.0 } else { p1 };
        let abstain = p0.max(p1) < config.cutoff;
        let label = if abstain {
            (p1 >= p0) as u8
        } else {
            (q1 >= q0) as u8
        };
        out.push(HcOutcome {
            p0: q0,
            p1: q1,
            label,
            abstain,
        });
    }
    Ok(out)
}

/// Full defended prediction path: input noise (when configured for
/// inference), base model, score postprocessor. `noise_seed` feeds the
/// per-call noise stream.
pub fn defended_predict(
    dm: &DefendedModel,
    x: &ArrayView2<f64>,
    noise_seed: u64,
) -> Result<Vec<HcOutcome>> {
    let input = match &dm.gda {
        Some(gda) if gda.apply_predict && gda.sigma > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let normal = Normal::new(0.0, gda.sigma)
                .map_err(|e| Error::numerical(format!("bad sigma: {e}")))?;
            let mut noisy = x.to_owned();
            for v in noisy.iter_mut() {
                *v += normal.sample(&mut rng);
            }
            noisy
        }
        _ => x.to_owned(),
    };

    let (p, _) = net::forward(&dm.base, &input.view())?;
    let pairs: Vec<(f64, f64)> = p.iter().map(|&p1| (1.0 - p1, p1)).collect();
    match &dm.hc {
        Some(hc) if hc.apply_predict => high_confidence(&pairs, hc),
        _ => Ok(pairs
            .into_iter()
            .map(|(p0, p1)| HcOutcome {
                p0,
                p1,
                label: (p1 >= 0.5) as u8,
                abstain: false,
            })
            .collect()),
    }
}
