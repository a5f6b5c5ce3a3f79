//! The metric suite: confusion matrices, classification reports with
//! macro/weighted averages, ROC curves with trapezoidal AUC, and the
//! three-phase evaluation pipeline (clean, post-attack, post-defence).

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::attack::{AdvBatch, AttackConfig, PerturbationSummary};
use crate::data::Dataset;
use crate::defence::{self, DefendedModel};
use crate::error::{Error, Result};
use crate::net::{self, MlpModel};

/// Positive class = attack = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a zero denominator forced a metric to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    PreAttack,
    PostAttack,
    PostDefence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub phase: Phase,
    /// Attack name, or "clean".
    pub scenario: String,
    pub config_echo: serde_json::Value,
    pub report: ClassReport,
    pub confusion: ConfusionMatrix,
    pub roc: RocCurve,
    pub auc: f64,
    pub perturbation: Option<PerturbationSummary>,
}

/// Exact binary confusion counts.
pub fn confusion(true_labels: &[u8], predicted: &[u8]) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::dimension(true_labels.len(), predicted.len(), "predictions"));
    }
    if true_labels.is_empty() {
        return Err(Error::data("empty label set"));
    }
    let mut cm = ConfusionMatrix { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t > 1 || p > 1 {
            return Err(Error::data("labels must be binary"));
        }
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: u64, fp: u64, fn_: u64, support: u64) -> ClassMetrics {
    let mut degenerate = false;
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + fn_, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support,
        degenerate,
    }
}

/// Per-class precision/recall/F1 with macro (unweighted mean) and
/// support-weighted averages. Class-0 metrics treat 0 as the positive
/// role.
pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    if cm.total() == 0 {
        return Err(Error::data("empty confusion matrix"));
    }
    let support1 = cm.tp + cm.fn_;
    let support0 = cm.tn + cm.fp;
    let class1 = class_metrics(cm.tp, cm.fp, cm.fn_, support1);
    let class0 = class_metrics(cm.tn, cm.fn_, cm.fp, support0);
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let total = cm.total() as f64;
    let (w0, w1) = (support0 as f64 / total, support1 as f64 / total);
    let mut degenerate = false;
    Ok(ClassReport {
        class0,
        class1,
        accuracy,
        macro_precision: (class0.precision + class1.precision) / 2.0,
        macro_recall: (class0.recall + class1.recall) / 2.0,
        macro_f1: (class0.f1 + class1.f1) / 2.0,
        weighted_precision: w0 * class0.precision + w1 * class1.precision,
        weighted_recall: w0 * class0.recall + w1 * class1.recall,
        weighted_f1: w0 * class0.f1 + w1 * class1.f1,
        fpr: ratio(cm.fp, cm.fp + cm.tn, &mut degenerate),
    })
}

/// Score-ranked ROC curve: one threshold per distinct score (descending),
/// ties grouped, sentinel endpoints at (0,0) and (1,1).
pub fn roc_curve(scores: &[f64], true_labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != true_labels.len() {
        return Err(Error::dimension(scores.len(), true_labels.len(), "scores"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite score"));
    }
    let pos = true_labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = true_labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::data("roc curve needs both classes present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // consume the whole tie group at this threshold
        while i < order.len() && scores[order[i]] == s {
            if true_labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp / neg,
            tpr: tp / pos,
        });
    }
    if points.last().map(|p| (p.fpr, p.tpr)) != Some((1.0, 1.0)) {
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            fpr: 1.0,
            tpr: 1.0,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal integral of the ROC curve over fpr.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        area += (pair[1].fpr - pair[0].fpr) * (pair[1].tpr + pair[0].tpr) / 2.0;
    }
    area
}

/// The classifier under evaluation: either a bare network or the full
/// defended pipeline. Attacks always target the base network's gradients.
#[derive(Debug, Clone)]
pub enum Classifier {
    Plain(MlpModel),
    Defended(DefendedModel),
}

impl Classifier {
    pub fn base(&self) -> &MlpModel {
        match self {
            Classifier::Plain(m) => m,
            Classifier::Defended(d) => &d.base,
        }
    }

    /// Score and label every row through the full prediction path.
    pub fn score(&self, x: &ArrayView2<f64>, noise_seed: u64) -> Result<(Vec<f64>, Vec<u8>)> {
        match self {
            Classifier::Plain(m) => {
                let (p, _) = net::forward(m, x)?;
                let labels = p.iter().map(|&v| (v >= 0.5) as u8).collect();
                Ok((p.to_vec(), labels))
            }
            Classifier::Defended(d) => {
                let out = defence::defended_predict(d, x, noise_seed)?;
                Ok((
                    out.iter().map(|o| o.p1).collect(),
                    out.iter().map(|o| o.label).collect(),
                ))
            }
        }
    }
}

fn report_for(
    subject: &Classifier,
    features: &ArrayView2<f64>,
    labels: &[u8],
    phase: Phase,
    scenario: &str,
    config_echo: serde_json::Value,
    perturbation: Option<PerturbationSummary>,
    noise_seed: u64,
) -> Result<EvalReport> {
    let (scores, predicted) = subject.score(features, noise_seed)?;
    let cm = confusion(labels, &predicted)?;
    let report = classification_report(&cm)?;
    let roc = roc_curve(&scores, labels)?;
    let area = auc(&roc);
    Ok(EvalReport {
        phase,
        scenario: scenario.to_string(),
        config_echo,
        report,
        confusion: cm,
        roc,
        auc: area,
        perturbation,
    })
}

/// The evaluation loop: one clean report, then one report per configured
/// attack with adversarial test sets generated against the subject's base
/// network and scored through the full prediction path.
pub fn evaluate_pipeline(
    subject: &Classifier,
    test: &Dataset,
    attacks: &[AttackConfig],
    phase: Phase,
    noise_seed: u64,
) -> Result<Vec<EvalReport>> {
    let labels: Vec<u8> = test.labels.to_vec();
    let mut reports = vec![report_for(
        subject,
        &test.features.view(),
        &labels,
        phase,
        "clean",
        serde_json::Value::Null,
        None,
        noise_seed,
    )?];

    for attack in attacks {
        let batch = attack.run(subject.base(), &test.features.view(), &test.labels.view())?;
        let summary = crate::attack::perturbation_stats(&batch)?;
        reports.push(report_for(
            subject,
            &batch.x_adv.view(),
            &labels,
            phase,
            attack.name(),
            batch.config_echo.clone(),
            Some(summary),
            noise_seed,
        )?);
    }
    Ok(reports)
}

/// Replay mode: score pre-generated adversarial batches (for example the
/// ones crafted against the undefended model) through the subject.
pub fn evaluate_replay(
    subject: &Classifier,
    test: &Dataset,
    batches: &[AdvBatch],
    phase: Phase,
    noise_seed: u64,
) -> Result<Vec<EvalReport>> {
    let labels: Vec<u8> = test.labels.to_vec();
    let mut reports = Vec::with_capacity(batches.len());
    for batch in batches {
        let summary = crate::attack::perturbation_stats(batch)?;
        reports.push(report_for(
            subject,
            &batch.x_adv.view(),
            &labels,
            phase,
            &batch.attack,
            batch.config_echo.clone(),
            Some(summary),
            noise_seed,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
pub(crate) mod oracle {
    /// O(n^2) concordance probability with ties counted one half; the
    /// independent check for the trapezoidal AUC.
    pub fn pair_counting_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for (i, (&si, &li)) in scores.iter().zip(labels).enumerate() {
            for (&sj, &lj) in scores.iter().zip(labels).skip(i + 1) {
                let (pos, neg) = match (li, lj) {
                    (1, 0) => (si, sj),
                    (0, 1) => (sj, si),
                    _ => continue,
                };
                pairs += 1.0;
                if pos > neg {
                    concordant += 1.0;
                } else if pos == neg {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The published full-scale confusion counts used for exact metric
    /// arithmetic checks.
    pub const FULL_SCALE_CM: ConfusionMatrix = ConfusionMatrix {
        tn: 41986,
        fp: 1207,
        fn_: 122,
        tp: 47545,
    };

    fn pct(v: f64) -> f64 {
        (v * 10000.0).round() / 100.0
    }

    #[test]
    fn confusion_hand_counts() {
        let cm = confusion(&[1, 0], &[1, 0]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 });

        let cm2 = confusion(&[0, 0, 1], &[1, 0, 0]).unwrap();
        assert_eq!(cm2, ConfusionMatrix { tp: 0, tn: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(confusion(&[1, 0], &[1]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn report_reproduces_published_table() {
        let r = classification_report(&FULL_SCALE_CM).unwrap();
        assert_eq!(pct(r.accuracy), 98.54);
        assert_eq!(pct(r.class0.precision), 99.71);
        assert_eq!(pct(r.class0.recall), 97.21);
        assert_eq!(pct(r.class0.f1), 98.44);
        assert_eq!(pct(r.class1.precision), 97.52);
        assert_eq!(pct(r.class1.recall), 99.74);
        assert_eq!(pct(r.class1.f1), 98.62);
        // FPR = 1207/43193
        assert!((r.fpr - 1207.0 / 43193.0).abs() < 1e-15);
        assert_eq!(pct(r.fpr), 2.79);
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let cm = ConfusionMatrix {
                tp: rng.random_range(1..1000),
                tn: rng.random_range(1..1000),
                fp: rng.random_range(0..1000),
                fn_: rng.random_range(0..1000),
            };
            let r = classification_report(&cm).unwrap();
            assert!((r.weighted_recall - r.accuracy).abs() < 1e-12);
            assert!((r.accuracy - (cm.tp + cm.tn) as f64 / cm.total() as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn macro_equals_weighted_for_balanced_supports() {
        let cm = ConfusionMatrix { tp: 80, fn_: 20, tn: 70, fp: 30 };
        let r = classification_report(&cm).unwrap();
        assert!((r.macro_precision - r.weighted_precision).abs() < 1e-12);
        assert!((r.macro_f1 - r.weighted_f1).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier_all_ones() {
        let cm = ConfusionMatrix { tp: 5, tn: 5, fp: 0, fn_: 0 };
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.class0.f1, 1.0);
        assert_eq!(r.class1.f1, 1.0);
    }

    #[test]
    fn zero_denominator_flags_degenerate() {
        // no predicted positives: precision degenerate
        let cm = ConfusionMatrix { tp: 0, tn: 5, fp: 0, fn_: 5 };
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.class1.precision, 0.0);
        assert!(r.class1.degenerate);
    }

    #[test]
    fn roc_perfect_separation() {
        let curve = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert!(curve
            .points
            .iter()
            .any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&curve), 1.0);
        assert_eq!(curve.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(curve.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn roc_all_ties_is_diagonal() {
        let curve = roc_curve(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert!((auc(&curve) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn roc_pair_counting_example() {
        let scores = [0.9, 0.4, 0.6, 0.2];
        let labels = [1u8, 0, 0, 1];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert!((auc(&curve) - 0.5).abs() < 1e-12);
        assert!((oracle::pair_counting_auc(&scores, &labels) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_monotone_and_auc_matches_oracle_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(2..60);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                // coarse grid to force plenty of ties
                scores.push((rng.random_range(0..10) as f64) / 10.0);
                labels.push(rng.random_range(0..2) as u8);
            }
            if !labels.contains(&0) || !labels.contains(&1) {
                continue;
            }
            let curve = roc_curve(&scores, &labels).unwrap();
            for pair in curve.points.windows(2) {
                assert!(pair[1].fpr >= pair[0].fpr);
                assert!(pair[1].tpr >= pair[0].tpr);
            }
            let trap = auc(&curve);
            let pairs = oracle::pair_counting_auc(&scores, &labels);
            assert!(
                (trap - pairs).abs() < 1e-9,
                "trapezoid {trap} vs pair counting {pairs}"
            );
        }
    }

    #[test]
    fn roc_single_class_rejected() {
        assert!(roc_curve(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn metrics_invariant_under_permutation() {
        let scores = [0.9, 0.1, 0.7, 0.3, 0.5];
        let labels = [1u8, 0, 1, 0, 1];
        let a = auc(&roc_curve(&scores, &labels).unwrap());
        let perm = [4usize, 2, 0, 3, 1];
        let ps: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
        let pl: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let b = auc(&roc_curve(&ps, &pl).unwrap());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn pipeline_report_counts() {
        let data = crate::data::synth_gen(&crate::data::SynthConfig {
            samples_per_class: 60,
            dimensions: 4,
            separation: 6.0,
            noise_scale: 1.0,
            seed: 1,
            signal_dims: None,
            fragile_dims: None,
            fragile_offset: 0.2,
        })
        .unwrap();
        let arch = crate::net::Architecture::new(4, vec![8], 0.0).unwrap();
        let cfg = crate::net::TrainConfig {
            epochs: 15,
            batch_size: 16,
            learning_rate: 0.01,
            optimizer: crate::net::Optimizer::default(),
            seed: 2,
            shuffle: true,
        };
        let (model, _) =
            crate::net::train(crate::net::init_model(&arch, 2).unwrap(), &data, &data, &cfg)
                .unwrap();
        let subject = Classifier::Plain(model);

        let none = evaluate_pipeline(&subject, &data, &[], Phase::PreAttack, 0).unwrap();
        assert_eq!(none.len(), 1);
        assert_eq!(none[0].scenario, "clean");

        let clip = crate::attack::ClipBox::from_matrix(&data.features);
        let attacks = vec![
            AttackConfig::Fgsm(crate::attack::FgsmConfig::new(0.1, clip.clone())),
            AttackConfig::Pgd(crate::attack::PgdConfig::new(0.1, 0.02, 10, clip)),
        ];
        let reports = evaluate_pipeline(&subject, &data, &attacks, Phase::PostAttack, 0).unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(reports[1].scenario, "fgsm");
        assert_eq!(reports[2].scenario, "pgd");
        assert!(!reports[1].config_echo.is_null());
    }
}
