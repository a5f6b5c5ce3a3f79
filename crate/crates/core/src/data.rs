//! Dataset ingestion, cleaning, standardization, splitting, and synthetic
//! two-class generation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parsed CSV table before cleaning. Feature cells are f64 with NaN
/// standing for missing; label cells stay as raw text.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub label_column: String,
    /// Row-major feature cells, `rows.len() x feature_names.len()`.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Fill value source for NaN/inf replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FillStrategy {
    #[default]
    Median,
    Mean,
}

/// What `clean` replaced, per column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningReport {
    pub missing_replaced: Vec<usize>,
    pub infinite_replaced: Vec<usize>,
    pub fill_values: Vec<f64>,
    pub strategy: FillStrategy,
}

impl CleaningReport {
    pub fn total_replaced(&self) -> usize {
        self.missing_replaced.iter().sum::<usize>() + self.infinite_replaced.iter().sum::<usize>()
    }
}

/// Per-feature z-score statistics. Variance uses the population (divide
/// by n) convention, recorded in `convention` so files are unambiguous.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub convention: String,
}

impl ScalerStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-feature [min, max] bounds that adversarial iterates must respect.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClipBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ClipBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dimension(lo.len(), hi.len(), "clip box bounds"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::config("clip box has min > max"));
        }
        Ok(ClipBox { lo, hi })
    }

    /// Broadcast a global scalar pair over `dim` features.
    pub fn global(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        ClipBox::new(vec![lo; dim], vec![hi; dim])
    }

    /// The global [-0.98, +0.99] box the reference evaluation uses.
    pub fn narrow_preset(dim: usize) -> Self {
        ClipBox::global(-0.98, 0.99, dim).expect("static bounds")
    }

    /// Per-feature [min, max] of a feature matrix.
    pub fn from_matrix(features: &Array2<f64>) -> Self {
        let d = features.ncols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in features.rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        ClipBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp_value(&self, j: usize, v: f64) -> f64 {
        v.max(self.lo[j]).min(self.hi[j])
    }
}

/// A cleaned (finite) feature matrix with binary labels and optional
/// scaler/clip metadata carried along for inference and attacks.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    /// 0 = benign, 1 = attack.
    pub labels: Array1<u8>,
    pub feature_names: Vec<String>,
    pub scaler: Option<ScalerStats>,
    pub clip_box: Option<ClipBox>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Row subset by index, metadata preserved.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut features = Array2::zeros((indices.len(), d));
        let mut labels = Array1::zeros(indices.len());
        for (i, &idx) in indices.iter().enumerate() {
            features.row_mut(i).assign(&self.features.row(idx));
            labels[i] = self.labels[idx];
        }
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            scaler: self.scaler.clone(),
            clip_box: self.clip_box.clone(),
        }
    }
}

/// Train/validation/test split parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must be in (0,1)"));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction must be in [0,1)"));
        }
        if self.test_fraction + self.validation_fraction >= 1.0 {
            return Err(Error::config("fractions leave no training data"));
        }
        Ok(())
    }
}

/// Synthetic two-Gaussian dataset parameters. `separation` is the
/// Euclidean distance between class means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub samples_per_class: usize,
    pub dimensions: usize,
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
    /// How many leading dimensions carry the class separation; the rest
    /// are pure noise. `None` spreads it over every dimension (minus any
    /// fragile block).
    #[serde(default)]
    pub signal_dims: Option<usize>,
    /// Size of an optional block of weakly-predictive dimensions whose
    /// noise is common-mode-removed: individually each carries only a
    /// small class offset, but their zero-noise aggregate is perfectly
    /// predictive. Models fitted by plain risk minimisation latch onto
    /// that aggregate, which small L-infinity perturbations can reverse.
    #[serde(default)]
    pub fragile_dims: Option<usize>,
    /// Per-dimension class offset of the fragile block in standardized
    /// units; keep it below the attack budget so the block is flippable.
    #[serde(default = "default_fragile_offset")]
    pub fragile_offset: f64,
}

fn default_fragile_offset() -> f64 {
    0.2
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be >= 1"));
        }
        if self.dimensions == 0 {
            return Err(Error::config("dimensions must be >= 1"));
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::config("noise_scale must be > 0"));
        }
        if let Some(k) = self.signal_dims {
            if k == 0 || k > self.dimensions {
                return Err(Error::config("signal_dims must be in 1..=dimensions"));
            }
        }
        if let Some(kf) = self.fragile_dims {
            if kf < 2 {
                return Err(Error::config("fragile_dims must be >= 2 (noise cancels across the block)"));
            }
            if !(self.fragile_offset > 0.0 && self.fragile_offset < 1.0) {
                return Err(Error::config("fragile_offset must lie in (0, 1)"));
            }
            let ks = self.signal_dims.unwrap_or(self.dimensions.saturating_sub(kf));
            if ks == 0 || ks + kf > self.dimensions {
                return Err(Error::config(
                    "signal_dims + fragile_dims must leave at least one robust dimension and fit in dimensions",
                ));
            }
        }
        Ok(())
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Some(f64::NAN);
    }
    let lower = t.to_ascii_lowercase();
    match lower.as_str() {
        "nan" => Some(f64::NAN),
        "inf" | "infinity" | "+inf" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => t.parse::<f64>().ok(),
    }
}

/// Parse an RFC-4180-style CSV with a header row. Non-label cells become
/// floats (NaN for missing); label cells are kept as text.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::data(format!("file not found: {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::data(format!("header lacks label column '{label_column}'")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row_idx,
                message: format!(
                    "ragged row: expected {} fields, got {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                labels.push(cell.to_string());
            } else {
                let v = parse_cell(cell).ok_or_else(|| Error::Parse {
                    row: row_idx,
                    message: format!("unparseable cell '{}' in column '{}'", cell, headers[i]),
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }

    Ok(RawTable {
        feature_names,
        label_column: label_column.to_string(),
        rows,
        labels,
    })
}

fn finite_fill(values: &[f64], strategy: FillStrategy) -> Option<f64> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    match strategy {
        FillStrategy::Mean => Some(finite.iter().sum::<f64>() / finite.len() as f64),
        FillStrategy::Median => {
            finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = finite.len();
            if n % 2 == 1 {
                Some(finite[n / 2])
            } else {
                Some((finite[n / 2 - 1] + finite[n / 2]) / 2.0)
            }
        }
    }
}

/// Map a raw label to the binary scheme: BENIGN (case-insensitive,
/// trimmed) is 0, anything else is 1.
pub fn encode_label(raw: &str) -> u8 {
    let t = raw.trim();
    // "0" keeps already-numeric label columns stable across round trips
    if t.eq_ignore_ascii_case("benign") || t == "0" {
        0
    } else {
        1
    }
}

/// Replace every NaN and +-infinity with the per-column fill value and
/// encode labels to {0,1}.
pub fn clean(table: &RawTable) -> Result<(Dataset, CleaningReport)> {
    clean_with(table, FillStrategy::Median)
}

pub fn clean_with(table: &RawTable, strategy: FillStrategy) -> Result<(Dataset, CleaningReport)> {
    if table.rows.is_empty() {
        return Err(Error::data("empty table"));
    }
    let n = table.n_rows();
    let d = table.n_features();

    let mut missing_replaced = vec![0usize; d];
    let mut infinite_replaced = vec![0usize; d];
    let mut fill_values = vec![0f64; d];

    let mut features = Array2::zeros((n, d));
    for j in 0..d {
        let col: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
        let fill = finite_fill(&col, strategy).ok_or_else(|| {
            Error::data(format!(
                "column '{}' has no finite values to fill from",
                table.feature_names[j]
            ))
        })?;
        fill_values[j] = fill;
        for (i, &v) in col.iter().enumerate() {
            features[[i, j]] = if v.is_nan() {
                missing_replaced[j] += 1;
                fill
            } else if v.is_infinite() {
                infinite_replaced[j] += 1;
                fill
            } else {
                v
            };
        }
    }

    let labels = Array1::from_iter(table.labels.iter().map(|l| encode_label(l)));

    Ok((
        Dataset {
            features,
            labels,
            feature_names: table.feature_names.clone(),
            scaler: None,
            clip_box: None,
        },
        CleaningReport {
            missing_replaced,
            infinite_replaced,
            fill_values,
            strategy,
        },
    ))
}

/// Z-score the feature matrix. With `stats` absent, per-feature mean and
/// population std are computed from `data`; with `stats` present they are
/// applied unchanged (test data must use train stats). Zero-std features
/// map to 0 (the recorded std stays 0, substituted by 1 on apply).
pub fn standardize(data: &Dataset, stats: Option<&ScalerStats>) -> Result<(Dataset, ScalerStats)> {
    let d = data.n_features();
    let stats = match stats {
        Some(s) => {
            if s.dim() != d {
                return Err(Error::dimension(d, s.dim(), "scaler stats"));
            }
            s.clone()
        }
        None => {
            let n = data.n_samples() as f64;
            let mean: Vec<f64> = data
                .features
                .mean_axis(Axis(0))
                .ok_or_else(|| Error::data("empty dataset"))?
                .to_vec();
            let std: Vec<f64> = (0..d)
                .map(|j| {
                    let var = data
                        .features
                        .column(j)
                        .iter()
                        .map(|&v| (v - mean[j]).powi(2))
                        .sum::<f64>()
                        / n;
                    var.sqrt()
                })
                .collect();
            ScalerStats {
                mean,
                std,
                convention: "population".to_string(),
            }
        }
    };

    let mut features = data.features.clone();
    for mut row in features.rows_mut() {
        for j in 0..d {
            let s = if stats.std[j] == 0.0 { 1.0 } else { stats.std[j] };
            row[j] = (row[j] - stats.mean[j]) / s;
        }
    }

    Ok((
        Dataset {
            features,
            labels: data.labels.clone(),
            feature_names: data.feature_names.clone(),
            scaler: Some(stats.clone()),
            clip_box: data.clip_box.clone(),
        },
        stats,
    ))
}

fn take_counts(total: usize, spec: &SplitSpec) -> (usize, usize) {
    // round to nearest so stratified class ratios stay within one sample
    let test = (total as f64 * spec.test_fraction).round() as usize;
    let val = (total as f64 * spec.validation_fraction).round() as usize;
    (test.min(total), val.min(total - test.min(total)))
}

/// Deterministic train/validation/test split, stratified by class when
/// requested.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = data.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut test_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut train_idx = Vec::new();

    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut benign = Vec::new();
        let mut attack = Vec::new();
        for i in 0..n {
            if data.labels[i] == 0 {
                benign.push(i);
            } else {
                attack.push(i);
            }
        }
        vec![benign, attack].into_iter().filter(|g| !g.is_empty()).collect()
    } else {
        vec![(0..n).collect()]
    };

    for mut group in groups {
        group.shuffle(&mut rng);
        let (n_test, n_val) = take_counts(group.len(), spec);
        for (k, idx) in group.into_iter().enumerate() {
            if k < n_test {
                test_idx.push(idx);
            } else if k < n_test + n_val {
                val_idx.push(idx);
            } else {
                train_idx.push(idx);
            }
        }
    }

    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::config("split fractions leave an empty partition"));
    }
    if spec.validation_fraction > 0.0 && val_idx.is_empty() {
        return Err(Error::config("validation fraction leaves an empty partition"));
    }

    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();

    Ok((
        data.subset(&train_idx),
        data.subset(&val_idx),
        data.subset(&test_idx),
    ))
}

/// Two Gaussian clusters labelled 0/1, deterministic per seed, returned
/// already standardized to zero mean / unit variance with scaler and
/// clip-box metadata filled in.
pub fn synth_gen(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let d = config.dimensions;
    let per_class = config.samples_per_class;
    let n = per_class * 2;

    // The squared half-separation budget (separation/2)^2 is spread over
    // the signal block (and optional fragile block) so the Euclidean
    // distance between the class means equals `separation`; any leftover
    // dimensions are zero-mean noise.
    //
    // Fragile block: each dimension carries a small class offset, and the
    // block's noise has its common mode removed, so per dimension the
    // feature looks weakly predictive but the block's sum is noiseless.
    let kf = config.fragile_dims.unwrap_or(0);
    let ks = config.signal_dims.unwrap_or(d - kf);
    let fragile_o = if kf > 0 {
        // choose the pre-standardization offset so that after unit-variance
        // scaling the per-dimension offset is `fragile_offset`
        let t = config.fragile_offset;
        let s_z = config.noise_scale * (1.0 - 1.0 / kf as f64).sqrt();
        t / (1.0 - t * t).sqrt() * s_z
    } else {
        0.0
    };
    let half_sq = (config.separation / 2.0).powi(2);
    let robust_sq = half_sq - kf as f64 * fragile_o * fragile_o;
    if robust_sq <= 0.0 {
        return Err(Error::config(
            "fragile block consumes the whole separation budget; reduce fragile_dims or fragile_offset",
        ));
    }
    let offset = (robust_sq / ks as f64).sqrt();
    let normal = Normal::new(0.0, config.noise_scale)
        .map_err(|e| Error::numerical(format!("bad noise scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut features = Array2::zeros((n, d));
    let mut labels = Array1::zeros(n);
    let mut block = vec![0.0f64; kf];
    for i in 0..n {
        let class = (i >= per_class) as u8;
        let sign = if class == 0 { -1.0 } else { 1.0 };
        labels[i] = class;
        for j in 0..ks {
            features[[i, j]] = sign * offset + normal.sample(&mut rng);
        }
        if kf > 0 {
            for z in block.iter_mut() {
                *z = normal.sample(&mut rng);
            }
            let mean = block.iter().sum::<f64>() / kf as f64;
            for (b, z) in block.iter().enumerate() {
                features[[i, ks + b]] = sign * fragile_o + (z - mean);
            }
        }
        for j in (ks + kf)..d {
            features[[i, j]] = normal.sample(&mut rng);
        }
    }

    let feature_names = (0..d).map(|j| format!("f{j}")).collect();
    let raw = Dataset {
        features,
        labels,
        feature_names,
        scaler: None,
        clip_box: None,
    };
    let (mut data, _) = standardize(&raw, None)?;
    data.clip_box = Some(ClipBox::from_matrix(&data.features));
    Ok(data)
}

/// Sidecar metadata written next to a cleaned/standardized CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub scaler: Option<ScalerStats>,
    pub clip_box: Option<ClipBox>,
    pub label_map: BTreeMap<String, u8>,
    pub cleaning: Option<CleaningReport>,
}

/// Persist a dataset as CSV plus a JSON sidecar with scaler stats, label
/// map, and the cleaning report.
pub fn save_dataset(
    data: &Dataset,
    cleaning: Option<&CleaningReport>,
    csv_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path.as_ref())?;
    let mut header = data.feature_names.clone();
    header.push("Label".to_string());
    writer.write_record(&header)?;
    for i in 0..data.n_samples() {
        let mut record: Vec<String> = data.features.row(i).iter().map(|v| v.to_string()).collect();
        record.push(data.labels[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let mut label_map = BTreeMap::new();
    label_map.insert("BENIGN".to_string(), 0u8);
    label_map.insert("*".to_string(), 1u8);
    let sidecar = DatasetSidecar {
        scaler: data.scaler.clone(),
        clip_box: data.clip_box.clone(),
        label_map,
        cleaning: cleaning.cloned(),
    };
    let mut f = std::fs::File::create(sidecar_path.as_ref())?;
    f.write_all(serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok(())
}

/// Load a dataset previously written by `save_dataset` (numeric labels,
/// optional sidecar).
pub fn load_dataset(
    csv_path: impl AsRef<Path>,
    sidecar_path: Option<&Path>,
) -> Result<Dataset> {
    let table = load_csv(csv_path, "Label")?;
    let (mut data, _) = clean(&table)?;
    if let Some(p) = sidecar_path {
        let sidecar: DatasetSidecar = serde_json::from_reader(std::fs::File::open(p)?)?;
        data.scaler = sidecar.scaler;
        data.clip_box = sidecar.clip_box;
    }
    Ok(data)
}
