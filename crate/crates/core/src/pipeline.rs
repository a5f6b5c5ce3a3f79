//! End-to-end orchestration: one function per CLI stage, all driven by the
//! declarative run configuration so a full run is reproducible from a
//! single JSON document.

use std::path::{Path, PathBuf};

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{AdvBatch, AttackConfig, ClipBox};
use crate::config::{AttackSpec, DatasetSpec, RunConfig, SimSpec};
use crate::data::{self, CleaningReport, Dataset, SplitSpec};
use crate::defence::{AtConfig, DefendedModel};
use crate::error::{Error, Result};
use crate::eval::{self, Classifier, EvalReport, Phase};
use crate::flowsim::{
    build_topology, run_simulation, surrogate_transfer, AdversaryPlacement, AttackMode,
    PacketFlow, SimCase, SimConfig, SimReport,
};
use crate::model_io::{self, TrainingFingerprint};
use crate::net::{self, init_model, Architecture, MlpModel, TrainHistory};
use crate::report::{tool_version, write_report, ReportFile};

/// Train/validation/test datasets plus the cleaning report for CSV inputs.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub cleaning: Option<CleaningReport>,
}

impl DataBundle {
    pub fn clip_box(&self) -> ClipBox {
        self.train
            .clip_box
            .clone()
            .unwrap_or_else(|| ClipBox::from_matrix(&self.train.features))
    }
}

fn effective_split(cfg: &RunConfig) -> SplitSpec {
    cfg.split.clone().unwrap_or(SplitSpec {
        test_fraction: 0.2,
        validation_fraction: 0.1,
        seed: cfg.seed,
        stratified: true,
    })
}

/// Build the train/validation/test bundle from the configured source
/// (synthetic generator or CSV with cleaning and standardization).
pub fn build_data(cfg: &RunConfig) -> Result<DataBundle> {
    let spec = effective_split(cfg);
    match &cfg.dataset {
        DatasetSpec::Synth { config } => {
            let data = data::synth_gen(config)?;
            let (train, validation, test) = data::split(&data, &spec)?;
            Ok(DataBundle { train, validation, test, cleaning: None })
        }
        DatasetSpec::Csv { path, label_column, fill } => {
            let table = data::load_csv(path, label_column)?;
            let (raw, cleaning) = data::clean_with(&table, *fill)?;
            let (train_raw, val_raw, test_raw) = data::split(&raw, &spec)?;
            // scaler fitted on the training partition only
            let (train, stats) = data::standardize(&train_raw, None)?;
            let (validation, _) = data::standardize(&val_raw, Some(&stats))?;
            let (test, _) = data::standardize(&test_raw, Some(&stats))?;
            Ok(DataBundle { train, validation, test, cleaning: Some(cleaning) })
        }
    }
}

/// Initialise and train the base network per the run configuration.
pub fn train_base(cfg: &RunConfig, bundle: &DataBundle) -> Result<(MlpModel, TrainHistory)> {
    let arch = Architecture::new(bundle.train.n_features(), cfg.effective_hidden(), cfg.l2_lambda)?;
    let model = init_model(&arch, cfg.seed)?;
    net::train(model, &bundle.train, &bundle.validation, &cfg.effective_training())
}

/// Resolve the configured attack list against the data's clip box.
pub fn resolve_attacks(cfg: &RunConfig, clip: &ClipBox) -> Result<Vec<AttackConfig>> {
    cfg.attacks.iter().map(|s| s.resolve(clip, cfg.seed)).collect()
}

/// Apply the configured defences: adversarial retraining and Gaussian
/// training-set augmentation change the weights; inference-time noise and
/// the high-confidence filter travel with the returned model.
pub fn apply_defences(
    cfg: &RunConfig,
    bundle: &DataBundle,
    model: MlpModel,
    clip: &ClipBox,
) -> Result<DefendedModel> {
    let Some(spec) = &cfg.defence else {
        return Ok(DefendedModel::plain(model));
    };
    let base_train = cfg.effective_training();
    let mut provenance = crate::defence::DefenceProvenance::default();
    let mut current = model;

    if let Some(at) = &spec.adversarial_training {
        let attacks: Vec<AttackConfig> =
            at.attacks.iter().map(|s| s.resolve(clip, cfg.seed)).collect::<Result<_>>()?;
        let at_cfg = AtConfig {
            attacks,
            ratio: at.ratio,
            epochs: at.epochs,
            seed: cfg.seed,
        };
        let (retrained, _) =
            crate::defence::adversarial_train(current, &bundle.train, &bundle.validation, &at_cfg, &base_train)?;
        provenance.record("adversarial_training", &at_cfg);
        current = retrained;
    }

    let mut gda_predict = None;
    if let Some(gda) = &spec.gaussian {
        let augmented = crate::defence::gaussian_augment(&bundle.train, gda)?;
        let (retrained, _) = net::train(current, &augmented, &bundle.validation, &base_train)?;
        provenance.record("gaussian_augmentation", gda);
        current = retrained;
        if gda.apply_predict {
            gda_predict = Some(gda.clone());
        }
    }

    let mut hc = None;
    if let Some(cfg_hc) = &spec.high_confidence {
        provenance.record("high_confidence", cfg_hc);
        hc = Some(cfg_hc.clone());
    }

    Ok(DefendedModel { base: current, gda: gda_predict, hc, provenance })
}

fn path_names(topology: &crate::flowsim::Topology) -> Vec<String> {
    topology.paths.iter().map(|(n, _)| n.clone()).collect()
}

/// Sample flows from the test set: deterministic shuffle, paths assigned
/// round-robin across the topology.
pub fn flows_from_dataset(
    test: &Dataset,
    topology: &crate::flowsim::Topology,
    count: usize,
    seed: u64,
) -> Result<Vec<PacketFlow>> {
    if test.n_samples() == 0 {
        return Err(Error::data("empty test set: no flows to draw"));
    }
    let take = count.min(test.n_samples()).max(1);
    let mut idx: Vec<usize> = (0..test.n_samples()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(take);
    let names = path_names(topology);
    Ok(idx
        .iter()
        .enumerate()
        .map(|(k, &i)| PacketFlow {
            id: format!("flow-{k:04}"),
            path: names[k % names.len()].clone(),
            features: test.features.row(i).to_vec(),
            ground_truth: test.labels[i],
        })
        .collect())
}

/// Outcome of the simulation stage: the report plus the surrogate transfer
/// rate for the black-box case.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub transfer_rate: Option<f64>,
}

/// Build and run the configured simulation case against the target.
pub fn run_sim_stage(
    cfg: &RunConfig,
    spec: &SimSpec,
    bundle: &DataBundle,
    target: &Classifier,
    clip: &ClipBox,
) -> Result<SimOutcome> {
    let topology = build_topology(None)?;
    let flows = flows_from_dataset(&bundle.test, &topology, spec.flows, cfg.seed)?;

    let adversary = match spec.case {
        SimCase::Case1 => None,
        SimCase::Case2 | SimCase::Case3 => {
            let attack_spec = spec.attack.clone().unwrap_or(AttackSpec::Fgsm {
                eps: 0.3,
                clip: Default::default(),
            });
            let attack = attack_spec.resolve(clip, cfg.seed)?;
            let router = spec.adversary_router.clone().unwrap_or_else(|| "R5".to_string());
            let surrogate = if spec.case == SimCase::Case3 {
                // independently initialised surrogate trained on the same data
                let arch = Architecture::new(
                    bundle.train.n_features(),
                    cfg.effective_hidden(),
                    cfg.l2_lambda,
                )?;
                let init = init_model(&arch, cfg.seed ^ spec.surrogate_seed.wrapping_add(1))?;
                let mut tc = cfg.effective_training();
                tc.seed = tc.seed.wrapping_add(spec.surrogate_seed).wrapping_add(1);
                let (m, _) = net::train(init, &bundle.train, &bundle.validation, &tc)?;
                Some(m)
            } else {
                None
            };
            Some(AdversaryPlacement {
                router,
                mode: if spec.case == SimCase::Case2 {
                    AttackMode::WhiteBox
                } else {
                    AttackMode::BlackBox
                },
                attack,
                surrogate,
                perturb_benign: false,
            })
        }
    };

    let sim_config = SimConfig {
        topology,
        case: spec.case,
        adversary,
        detection_threshold: spec.detection_threshold,
        seed: cfg.seed,
    };
    let report = run_simulation(&sim_config, &flows, target)?;

    let transfer_rate = match sim_config.adversary {
        Some(adv) if adv.mode == AttackMode::BlackBox => {
            let surrogate = adv.surrogate.as_ref().expect("validated");
            let malicious: Vec<usize> = (0..bundle.test.n_samples())
                .filter(|&i| bundle.test.labels[i] == 1)
                .collect();
            if malicious.is_empty() {
                None
            } else {
                let subset = bundle.test.subset(&malicious);
                let (_, rate) = surrogate_transfer(
                    target.base(),
                    surrogate,
                    &subset.features.view(),
                    &subset.labels.view(),
                    &adv.attack,
                )?;
                Some(rate)
            }
        }
        _ => None,
    };

    Ok(SimOutcome { report, transfer_rate })
}

/// Everything a full run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub bundle: DataBundle,
    pub model: MlpModel,
    pub defended: Option<DefendedModel>,
    pub report: ReportFile,
    pub model_path: PathBuf,
    pub report_paths: Vec<PathBuf>,
}

fn timestamp_now() -> String {
    // seconds since the epoch; enough to distinguish non-canonical runs
    // without pulling in a clock/formatting dependency
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// The full chain: data, training, attacks, defences, evaluation,
/// simulation, artifacts. Deterministic per config in canonical mode.
pub fn run_full(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let bundle = build_data(cfg)?;
    let clip = bundle.clip_box();

    let (model, _history) = train_base(cfg, &bundle)?;
    let attacks = resolve_attacks(cfg, &clip)?;

    let plain = Classifier::Plain(model.clone());
    let mut eval_reports: Vec<EvalReport> =
        eval::evaluate_pipeline(&plain, &bundle.test, &[], Phase::PreAttack, cfg.seed)?;
    if !attacks.is_empty() {
        let post = eval::evaluate_pipeline(&plain, &bundle.test, &attacks, Phase::PostAttack, cfg.seed)?;
        // the clean row is already covered by the pre-attack phase
        eval_reports.extend(post.into_iter().filter(|r| r.scenario != "clean"));
    }

    let defended = if cfg.defence.is_some() {
        let dm = apply_defences(cfg, &bundle, model.clone(), &clip)?;
        let subject = Classifier::Defended(dm.clone());
        eval_reports.extend(eval::evaluate_pipeline(
            &subject,
            &bundle.test,
            &attacks,
            Phase::PostDefence,
            cfg.seed,
        )?);
        Some(dm)
    } else {
        None
    };

    let subject_for_sim = match &defended {
        Some(dm) => Classifier::Defended(dm.clone()),
        None => plain.clone(),
    };
    let sim_report = match &cfg.simulation {
        Some(spec) => Some(run_sim_stage(cfg, spec, &bundle, &subject_for_sim, &clip)?.report),
        None => None,
    };

    let report = ReportFile {
        tool_version: tool_version(),
        config_hash: cfg.hash(),
        timestamp: if cfg.canonical { None } else { Some(timestamp_now()) },
        eval_reports,
        sim_report,
    };
    let report_paths = write_report(&report, &cfg.output_dir)?;

    let fingerprint = TrainingFingerprint { seed: cfg.seed, config_hash: cfg.hash() };
    let final_model = defended.as_ref().map(|d| &d.base).unwrap_or(&model);
    let file = model_io::to_model_file(
        final_model,
        bundle.train.scaler.as_ref(),
        Some(&clip),
        defended.as_ref(),
        fingerprint,
    )?;
    let model_path = cfg.output_dir.join("model.json");
    model_io::save_model(&file, &model_path)?;

    Ok(RunOutput {
        bundle,
        model,
        defended,
        report,
        model_path,
        report_paths,
    })
}

/// Persist an adversarial batch: rows-plus-labels CSV and a JSON sidecar
/// with norms, success flags, and the attack configuration echo.
pub fn save_adv_batch(
    batch: &AdvBatch,
    labels: &[u8],
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}_adv.csv"));
    {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        let d = batch.x_adv.len_of(Axis(1));
        let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        header.push("Label".into());
        writer.write_record(&header)?;
        for (i, row) in batch.x_adv.rows().into_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(labels.get(i).copied().unwrap_or(0).to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
    }

    let meta = serde_json::json!({
        "attack": batch.attack,
        "config": batch.config_echo,
        "linf": batch.linf,
        "l0": batch.l0,
        "l2": batch.l2,
        "success": batch.success,
        "summary": crate::attack::perturbation_stats(batch)?,
    });
    let meta_path = dir.join(format!("{stem}_meta.json"));
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(vec![csv_path, meta_path])
}
