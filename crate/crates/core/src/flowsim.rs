//! Deterministic packet-flow simulator: sources emit flow records along
//! routed paths through six routers, an adversary on one router
//! intercepts and perturbs malicious flows, and the NIDS gateway
//! classifies every arriving record.

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, PerturbationSummary};
use crate::error::{Error, Result};
use crate::eval::Classifier;
use crate::net::MlpModel;

/// Routed topology: six routers between a source and the gateway, three
/// named paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub routers: Vec<String>,
    /// Path name -> ordered router hops (first hop R1, last hop R6).
    pub paths: Vec<(String, Vec<String>)>,
}

impl Topology {
    pub fn path(&self, name: &str) -> Option<&[String]> {
        self.paths
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, hops)| hops.as_slice())
    }
}

/// The default graph: R1-R2-R3-R6, R1-R5-R6, and R1-R4-R5-R6, all ending
/// at the R6 gateway hop.
pub fn build_topology(overrides: Option<Topology>) -> Result<Topology> {
    let topo = overrides.unwrap_or_else(|| Topology {
        routers: (1..=6).map(|i| format!("R{i}")).collect(),
        paths: vec![
            ("Path-1".into(), vec!["R1".into(), "R2".into(), "R3".into(), "R6".into()]),
            ("Path-2".into(), vec!["R1".into(), "R5".into(), "R6".into()]),
            ("Path-3".into(), vec!["R1".into(), "R4".into(), "R5".into(), "R6".into()]),
        ],
    });
    if topo.paths.is_empty() {
        return Err(Error::config("topology needs at least one path"));
    }
    for (name, hops) in &topo.paths {
        if hops.is_empty() {
            return Err(Error::config(format!("path '{name}' is empty")));
        }
        for hop in hops {
            if !topo.routers.contains(hop) {
                return Err(Error::config(format!(
                    "path '{name}' references unknown router '{hop}'"
                )));
            }
        }
    }
    Ok(topo)
}

/// One flow record moving through the network.
#[derive(Debug, Clone)]
pub struct PacketFlow {
    pub id: String,
    pub path: String,
    /// Standardized feature vector.
    pub features: Vec<f64>,
    pub ground_truth: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    WhiteBox,
    BlackBox,
}

/// Where the adversary sits and how it crafts perturbations. Black-box
/// mode crafts against the surrogate instead of the target.
#[derive(Debug, Clone)]
pub struct AdversaryPlacement {
    pub router: String,
    pub mode: AttackMode,
    pub attack: AttackConfig,
    pub surrogate: Option<MlpModel>,
    /// Perturb benign flows too (availability-style); defaults off.
    pub perturb_benign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimCase {
    /// No adversary.
    Case1,
    /// White-box interception.
    Case2,
    /// Black-box interception through a surrogate.
    Case3,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    pub case: SimCase,
    pub adversary: Option<AdversaryPlacement>,
    pub detection_threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Block,
}

/// Per-flow trace record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: String,
    pub path: String,
    pub hop_trace: Vec<String>,
    pub intercepted: bool,
    pub perturbed: bool,
    pub delta_linf: Option<f64>,
    pub delta_l2: Option<f64>,
    pub nids_score: f64,
    pub verdict: Verdict,
    pub ground_truth: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub case: SimCase,
    pub records: Vec<FlowRecord>,
    /// Malicious flows passed / malicious flows sent.
    pub evasion_rate: f64,
    /// Benign flows blocked / benign flows sent.
    pub false_block_rate: f64,
    pub perturbation: Option<PerturbationSummary>,
    pub warnings: Vec<String>,
}

fn validate_sim(config: &SimConfig) -> Result<()> {
    match config.case {
        SimCase::Case1 => Ok(()),
        SimCase::Case2 => match &config.adversary {
            Some(adv) if adv.mode == AttackMode::WhiteBox => Ok(()),
            Some(_) => Err(Error::config("case 2 requires white-box placement")),
            None => Err(Error::config("case 2 requires an adversary placement")),
        },
        SimCase::Case3 => match &config.adversary {
            Some(adv) if adv.mode == AttackMode::BlackBox => {
                if adv.surrogate.is_none() {
                    Err(Error::config("case 3 requires a surrogate model"))
                } else {
                    Ok(())
                }
            }
            Some(_) => Err(Error::config("case 3 requires black-box placement")),
            None => Err(Error::config("case 3 requires an adversary placement")),
        },
    }
}

/// Run every flow hop by hop: intercept-and-perturb at the adversary's
/// router (cases 2 and 3), classify at the gateway, block iff the attack
/// probability reaches the threshold. Deterministic per seed.
pub fn run_simulation(
    config: &SimConfig,
    flows: &[PacketFlow],
    target: &Classifier,
) -> Result<SimReport> {
    validate_sim(config)?;
    if flows.is_empty() {
        return Err(Error::data("no flows to simulate"));
    }

    let mut warnings = Vec::new();
    if let Some(adv) = &config.adversary {
        if config.case != SimCase::Case1
            && !flows
                .iter()
                .any(|f| config.topology.path(&f.path).is_some_and(|p| p.contains(&adv.router)))
        {
            warnings.push(format!(
                "adversary router '{}' lies on no configured flow path",
                adv.router
            ));
        }
    }

    let mut records = Vec::with_capacity(flows.len());
    let mut perturbed_batch: Option<crate::attack::AdvBatch> = None;
    let mut perturbed_rows: Vec<(usize, usize)> = Vec::new(); // (flow idx, batch row)

    // craft all perturbations in one batch for determinism and speed
    if config.case != SimCase::Case1 {
        let adv = config.adversary.as_ref().expect("validated");
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, flow) in flows.iter().enumerate() {
            let on_path = config
                .topology
                .path(&flow.path)
                .ok_or_else(|| Error::config(format!("flow '{}' uses unknown path '{}'", flow.id, flow.path)))?
                .contains(&adv.router);
            let eligible = flow.ground_truth == 1 || adv.perturb_benign;
            if on_path && eligible {
                perturbed_rows.push((i, rows.len()));
                rows.push(flow.features.clone());
                labels.push(flow.ground_truth);
            }
        }
        if !rows.is_empty() {
            let d = rows[0].len();
            let x = ndarray::Array2::from_shape_vec(
                (rows.len(), d),
                rows.into_iter().flatten().collect(),
            )
            .map_err(|e| Error::data(format!("ragged flow features: {e}")))?;
            let y = Array1::from_vec(labels);
            let craft_model = match adv.mode {
                AttackMode::WhiteBox => target.base(),
                AttackMode::BlackBox => adv.surrogate.as_ref().expect("validated"),
            };
            perturbed_batch = Some(adv.attack.run(craft_model, &x.view(), &y.view())?);
        }
    }

    for (i, flow) in flows.iter().enumerate() {
        let hops = config
            .topology
            .path(&flow.path)
            .ok_or_else(|| Error::config(format!("flow '{}' uses unknown path '{}'", flow.id, flow.path)))?
            .to_vec();

        let batch_row = perturbed_rows.iter().find(|(fi, _)| *fi == i).map(|(_, r)| *r);
        let (features, intercepted, perturbed, linf, l2) = match (batch_row, &perturbed_batch) {
            (Some(r), Some(batch)) => {
                let delta_linf = batch.linf[r];
                (
                    batch.x_adv.row(r).to_vec(),
                    true,
                    delta_linf > 0.0,
                    Some(batch.linf[r]),
                    Some(batch.l2[r]),
                )
            }
            _ => (flow.features.clone(), false, false, None, None),
        };

        let x = Array1::from_vec(features).insert_axis(Axis(0));
        let (scores, _) = target.score(&x.view(), config.seed)?;
        let score = scores[0];
        let verdict = if score >= config.detection_threshold {
            Verdict::Block
        } else {
            Verdict::Pass
        };

        records.push(FlowRecord {
            id: flow.id.clone(),
            path: flow.path.clone(),
            hop_trace: hops,
            intercepted,
            perturbed,
            delta_linf: linf,
            delta_l2: l2,
            nids_score: score,
            verdict,
            ground_truth: flow.ground_truth,
        });
    }

    let malicious = records.iter().filter(|r| r.ground_truth == 1).count();
    let benign = records.len() - malicious;
    let evaded = records
        .iter()
        .filter(|r| r.ground_truth == 1 && r.verdict == Verdict::Pass)
        .count();
    let false_blocked = records
        .iter()
        .filter(|r| r.ground_truth == 0 && r.verdict == Verdict::Block)
        .count();

    let perturbation = perturbed_batch
        .as_ref()
        .map(crate::attack::perturbation_stats)
        .transpose()?;

    Ok(SimReport {
        case: config.case,
        records,
        evasion_rate: if malicious > 0 {
            evaded as f64 / malicious as f64
        } else {
            0.0
        },
        false_block_rate: if benign > 0 {
            false_blocked as f64 / benign as f64
        } else {
            0.0
        },
        perturbation,
        warnings,
    })
}

/// Adversarial examples crafted against the surrogate, evaluated against
/// the target. Transfer rate is the fraction of surrogate successes that
/// also fool the target.
pub fn surrogate_transfer(
    target: &MlpModel,
    surrogate: &MlpModel,
    x: &ndarray::ArrayView2<f64>,
    y: &ndarray::ArrayView1<u8>,
    attack: &AttackConfig,
) -> Result<(crate::attack::AdvBatch, f64)> {
    if target.input_dim() != surrogate.input_dim() {
        return Err(Error::dimension(
            target.input_dim(),
            surrogate.input_dim(),
            "surrogate model",
        ));
    }
    let batch = attack.run(surrogate, x, y)?;
    let target_pred = crate::net::predict(target, &batch.x_adv.view(), 0.5)?;
    let mut surrogate_successes = 0usize;
    let mut transferred = 0usize;
    for i in 0..batch.n_samples() {
        if batch.success[i] {
            surrogate_successes += 1;
            if target_pred[i] != y[i] {
                transferred += 1;
            }
        }
    }
    let rate = if surrogate_successes == 0 {
        0.0
    } else {
        transferred as f64 / surrogate_successes as f64
    };
    Ok((batch, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{ClipBox, FgsmConfig};
    use crate::data::{synth_gen, SynthConfig};
    use crate::net::{init_model, train, Architecture, Optimizer, TrainConfig};
    use ndarray::Array2;

    fn trained_model(seed: u64) -> (crate::net::MlpModel, crate::data::Dataset) {
        let data = synth_gen(&SynthConfig {
            samples_per_class: 150,
            dimensions: 6,
            separation: 6.0,
            noise_scale: 1.0,
            seed,
            signal_dims: None,
            fragile_dims: None,
            fragile_offset: 0.2,
        })
        .unwrap();
        let arch = Architecture::new(6, vec![12], 0.0).unwrap();
        let cfg = TrainConfig {
            epochs: 25,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: Optimizer::default(),
            seed,
            shuffle: true,
        };
        let (m, _) = train(init_model(&arch, seed).unwrap(), &data, &data, &cfg).unwrap();
        (m, data)
    }

    fn flows_from(data: &crate::data::Dataset, n: usize) -> Vec<PacketFlow> {
        let paths = ["Path-1", "Path-2", "Path-3"];
        let total = data.n_samples();
        // alternate rows from the front (class 0) and back (class 1) so
        // every flow set mixes both classes
        (0..n)
            .map(|i| {
                let row = if i % 2 == 0 { i / 2 } else { total - 1 - i / 2 };
                PacketFlow {
                    id: format!("P{i}"),
                    path: paths[i % 3].to_string(),
                    features: data.features.row(row).to_vec(),
                    ground_truth: data.labels[row],
                }
            })
            .collect()
    }

    #[test]
    fn default_topology_shape() {
        let t = build_topology(None).unwrap();
        assert_eq!(t.routers.len(), 6);
        assert_eq!(t.paths.len(), 3);
        assert_eq!(
            t.path("Path-1").unwrap(),
            &["R1", "R2", "R3", "R6"]
        );
    }

    #[test]
    fn topology_overrides() {
        let bad = Topology {
            routers: vec!["R1".into()],
            paths: vec![],
        };
        assert!(build_topology(Some(bad)).is_err());

        let unknown = Topology {
            routers: vec!["R1".into()],
            paths: vec![("P".into(), vec!["R1".into(), "R9".into()])],
        };
        assert!(build_topology(Some(unknown)).is_err());

        let custom = Topology {
            routers: vec!["R1".into(), "R2".into(), "R6".into()],
            paths: vec![("P".into(), vec!["R1".into(), "R2".into(), "R6".into()])],
        };
        assert!(build_topology(Some(custom)).is_ok());
    }

    #[test]
    fn case1_no_interception_and_path_fidelity() {
        let (model, data) = trained_model(1);
        let flows = flows_from(&data, 30);
        let config = SimConfig {
            topology: build_topology(None).unwrap(),
            case: SimCase::Case1,
            adversary: None,
            detection_threshold: 0.5,
            seed: 0,
        };
        let report = run_simulation(&config, &flows, &Classifier::Plain(model)).unwrap();
        for (rec, flow) in report.records.iter().zip(&flows) {
            assert!(!rec.perturbed);
            assert!(!rec.intercepted);
            assert_eq!(
                rec.hop_trace,
                config.topology.path(&flow.path).unwrap().to_vec()
            );
        }
    }

    #[test]
    fn case2_zero_eps_matches_case1() {
        let (model, data) = trained_model(2);
        let flows = flows_from(&data, 24);
        let clip = ClipBox::from_matrix(&data.features);
        let topo = build_topology(None).unwrap();

        let case1 = SimConfig {
            topology: topo.clone(),
            case: SimCase::Case1,
            adversary: None,
            detection_threshold: 0.5,
            seed: 7,
        };
        let case2 = SimConfig {
            topology: topo,
            case: SimCase::Case2,
            adversary: Some(AdversaryPlacement {
                router: "R3".into(),
                mode: AttackMode::WhiteBox,
                attack: AttackConfig::Fgsm(FgsmConfig::new(0.0, clip)),
                surrogate: None,
                perturb_benign: false,
            }),
            detection_threshold: 0.5,
            seed: 7,
        };
        let target = Classifier::Plain(model);
        let r1 = run_simulation(&case1, &flows, &target).unwrap();
        let r2 = run_simulation(&case2, &flows, &target).unwrap();
        for (a, b) in r1.records.iter().zip(&r2.records) {
            assert_eq!(a.verdict, b.verdict);
            assert_eq!(a.nids_score, b.nids_score);
        }
    }

    #[test]
    fn case_validation() {
        let topo = build_topology(None).unwrap();
        let bad = SimConfig {
            topology: topo,
            case: SimCase::Case2,
            adversary: None,
            detection_threshold: 0.5,
            seed: 0,
        };
        assert!(validate_sim(&bad).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let (model, data) = trained_model(3);
        let flows = flows_from(&data, 18);
        let clip = ClipBox::from_matrix(&data.features);
        let config = SimConfig {
            topology: build_topology(None).unwrap(),
            case: SimCase::Case2,
            adversary: Some(AdversaryPlacement {
                router: "R1".into(),
                mode: AttackMode::WhiteBox,
                attack: AttackConfig::Fgsm(FgsmConfig::new(0.3, clip)),
                surrogate: None,
                perturb_benign: false,
            }),
            detection_threshold: 0.5,
            seed: 11,
        };
        let target = Classifier::Plain(model);
        let a = run_simulation(&config, &flows, &target).unwrap();
        let b = run_simulation(&config, &flows, &target).unwrap();
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
        // aggregates recomputable from records
        let malicious = a.records.iter().filter(|r| r.ground_truth == 1).count();
        let evaded = a
            .records
            .iter()
            .filter(|r| r.ground_truth == 1 && r.verdict == Verdict::Pass)
            .count();
        assert_eq!(a.evasion_rate, evaded as f64 / malicious as f64);
    }

    #[test]
    fn off_path_adversary_warns() {
        let (model, data) = trained_model(4);
        // all flows on Path-2 (R1-R5-R6); adversary on R3 never intercepts
        let flows: Vec<PacketFlow> = flows_from(&data, 9)
            .into_iter()
            .map(|mut f| {
                f.path = "Path-2".into();
                f
            })
            .collect();
        let clip = ClipBox::from_matrix(&data.features);
        let config = SimConfig {
            topology: build_topology(None).unwrap(),
            case: SimCase::Case2,
            adversary: Some(AdversaryPlacement {
                router: "R3".into(),
                mode: AttackMode::WhiteBox,
                attack: AttackConfig::Fgsm(FgsmConfig::new(0.3, clip)),
                surrogate: None,
                perturb_benign: false,
            }),
            detection_threshold: 0.5,
            seed: 0,
        };
        let report = run_simulation(&config, &flows, &Classifier::Plain(model)).unwrap();
        assert!(!report.warnings.is_empty());
        assert!(report.records.iter().all(|r| !r.intercepted));
    }

    #[test]
    fn identical_surrogate_transfers_fully() {
        let (model, data) = trained_model(5);
        let clip = ClipBox::from_matrix(&data.features);
        let x: Array2<f64> = data.features.clone();
        let attack = AttackConfig::Fgsm(FgsmConfig::new(0.3, clip));
        let (batch, rate) =
            surrogate_transfer(&model, &model, &x.view(), &data.labels.view(), &attack).unwrap();
        assert!(batch.success.iter().any(|&s| s), "attack should succeed somewhere");
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn zero_eps_transfer_is_clean_errors_only() {
        let (model, data) = trained_model(6);
        let clip = ClipBox::from_matrix(&data.features);
        let attack = AttackConfig::Fgsm(FgsmConfig::new(0.0, clip));
        let (batch, _) = surrogate_transfer(
            &model,
            &model,
            &data.features.view(),
            &data.labels.view(),
            &attack,
        )
        .unwrap();
        let clean_pred = crate::net::predict(&model, &data.features.view(), 0.5).unwrap();
        for i in 0..batch.n_samples() {
            assert_eq!(batch.success[i], clean_pred[i] != data.labels[i]);
        }
    }
}
