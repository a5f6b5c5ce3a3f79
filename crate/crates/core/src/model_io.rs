//! Model persistence: a versioned JSON format carrying the architecture,
//! row-major weights, scaler stats, clip box, and defence provenance so a
//! saved model is self-contained for inference.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{ClipBox, ScalerStats};
use crate::defence::{DefenceProvenance, DefendedModel, GdaConfig, HcConfig};
use crate::error::{Error, Result};
use crate::net::{Architecture, MlpModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    /// Row-major weight values.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainingFingerprint {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub seed: u64,
    pub layers: Vec<LayerFile>,
    pub scaler: Option<ScalerStats>,
    pub clip_box: Option<ClipBox>,
    #[serde(default)]
    pub defence_provenance: DefenceProvenance,
    #[serde(default)]
    pub gda: Option<GdaConfig>,
    #[serde(default)]
    pub hc: Option<HcConfig>,
    #[serde(default)]
    pub fingerprint: TrainingFingerprint,
}

/// Model plus the inference context that travels with it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: MlpModel,
    pub scaler: Option<ScalerStats>,
    pub clip_box: Option<ClipBox>,
    pub defended: DefendedModel,
    pub fingerprint: TrainingFingerprint,
}

pub fn to_model_file(
    model: &MlpModel,
    scaler: Option<&ScalerStats>,
    clip_box: Option<&ClipBox>,
    defended: Option<&DefendedModel>,
    fingerprint: TrainingFingerprint,
) -> Result<ModelFile> {
    for (w, b) in model.weights.iter().zip(&model.biases) {
        if w.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("refusing to save non-finite weights"));
        }
    }
    let layers = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| LayerFile {
            rows: w.nrows(),
            cols: w.ncols(),
            weights: w.iter().copied().collect(),
            bias: b.to_vec(),
        })
        .collect();
    Ok(ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        architecture: model.arch.clone(),
        seed: model.seed,
        layers,
        scaler: scaler.cloned(),
        clip_box: clip_box.cloned(),
        defence_provenance: defended.map(|d| d.provenance.clone()).unwrap_or_default(),
        gda: defended.and_then(|d| d.gda.clone()),
        hc: defended.and_then(|d| d.hc.clone()),
        fingerprint,
    })
}

pub fn from_model_file(file: &ModelFile) -> Result<LoadedModel> {
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::config(format!(
            "unsupported model format version {} (expected {})",
            file.format_version, MODEL_FORMAT_VERSION
        )));
    }
    let expected_dims = file.architecture.layer_dims();
    if expected_dims.len() != file.layers.len() {
        return Err(Error::data(format!(
            "model has {} layers, architecture expects {}",
            file.layers.len(),
            expected_dims.len()
        )));
    }
    let mut weights = Vec::with_capacity(file.layers.len());
    let mut biases = Vec::with_capacity(file.layers.len());
    for (li, (layer, (fan_in, fan_out))) in file.layers.iter().zip(expected_dims).enumerate() {
        if layer.rows != fan_in || layer.cols != fan_out {
            return Err(Error::data(format!(
                "layer {li}: expected shape {fan_in}x{fan_out}, file says {}x{}",
                layer.rows, layer.cols
            )));
        }
        if layer.weights.len() != layer.rows * layer.cols {
            return Err(Error::data(format!(
                "layer {li}: weight array truncated ({} values for {}x{})",
                layer.weights.len(),
                layer.rows,
                layer.cols
            )));
        }
        if layer.bias.len() != layer.cols {
            return Err(Error::data(format!("layer {li}: bias length mismatch")));
        }
        if layer.weights.iter().any(|v| !v.is_finite()) || layer.bias.iter().any(|v| !v.is_finite())
        {
            return Err(Error::data(format!("layer {li}: non-finite values")));
        }
        weights.push(
            Array2::from_shape_vec((layer.rows, layer.cols), layer.weights.clone())
                .expect("length checked"),
        );
        biases.push(Array1::from_vec(layer.bias.clone()));
    }

    let model = MlpModel {
        weights,
        biases,
        arch: file.architecture.clone(),
        seed: file.seed,
    };
    let defended = DefendedModel {
        base: model.clone(),
        gda: file.gda.clone(),
        hc: file.hc.clone(),
        provenance: file.defence_provenance.clone(),
    };
    Ok(LoadedModel {
        model,
        scaler: file.scaler.clone(),
        clip_box: file.clip_box.clone(),
        defended,
        fingerprint: file.fingerprint.clone(),
    })
}

/// Atomic save: write to a temp file in the target directory, then rename.
pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&tmp, file)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_reader(std::fs::File::open(path.as_ref())?)?;
    from_model_file(&file)
}
