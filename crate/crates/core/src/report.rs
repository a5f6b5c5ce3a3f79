//! Report persistence: JSON at full precision, human-readable tables with
//! 2-decimal percentages, and ROC points as CSV. All writes are atomic
//! (temp file + rename) and embed the run-config hash.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ClassReport, EvalReport, Phase};
use crate::flowsim::SimReport;

/// Self-contained report file: re-renderable without the run environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool_version: String,
    pub config_hash: String,
    /// RFC 3339 timestamp; omitted in canonical mode so reruns are
    /// byte-identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub eval_reports: Vec<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_report: Option<SimReport>,
}

pub fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Percentage rounded half-to-even at 2 decimals, matching the table
/// convention.
pub fn pct2(v: f64) -> f64 {
    (v * 10000.0).round_ties_even() / 100.0
}

fn phase_tag(phase: Phase) -> &'static str {
    match phase {
        Phase::PreAttack => "pre-attack",
        Phase::PostAttack => "post-attack",
        Phase::PostDefence => "post-defence",
    }
}

/// Rows labelled 0 / 1 / MA / WA, mirroring the published table layout.
pub fn render_class_report(report: &ClassReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:>10} {:>10} {:>10} {:>10}", "class", "precision", "recall", "f1-score", "support");
    let _ = writeln!(
        out,
        "{:<6} {:>10.2} {:>10.2} {:>10.2} {:>10}",
        "0",
        pct2(report.class0.precision),
        pct2(report.class0.recall),
        pct2(report.class0.f1),
        report.class0.support
    );
    let _ = writeln!(
        out,
        "{:<6} {:>10.2} {:>10.2} {:>10.2} {:>10}",
        "1",
        pct2(report.class1.precision),
        pct2(report.class1.recall),
        pct2(report.class1.f1),
        report.class1.support
    );
    let total = report.class0.support + report.class1.support;
    let _ = writeln!(
        out,
        "{:<6} {:>10.2} {:>10.2} {:>10.2} {:>10}",
        "MA",
        pct2(report.macro_precision),
        pct2(report.macro_recall),
        pct2(report.macro_f1),
        total
    );
    let _ = writeln!(
        out,
        "{:<6} {:>10.2} {:>10.2} {:>10.2} {:>10}",
        "WA",
        pct2(report.weighted_precision),
        pct2(report.weighted_recall),
        pct2(report.weighted_f1),
        total
    );
    let _ = writeln!(out, "accuracy: {:.2}  fpr: {:.2}", pct2(report.accuracy), pct2(report.fpr));
    out
}

pub fn render_eval_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "phase: {}  scenario: {}", phase_tag(report.phase), report.scenario);
    let _ = writeln!(
        out,
        "confusion: tn={} fp={} fn={} tp={}",
        report.confusion.tn, report.confusion.fp, report.confusion.fn_, report.confusion.tp
    );
    out.push_str(&render_class_report(&report.report));
    let _ = writeln!(out, "auc: {:.4} ({:.2} x100)", report.auc, pct2(report.auc));
    if let Some(p) = &report.perturbation {
        let _ = writeln!(
            out,
            "perturbation: mean_linf={:.6} max_linf={:.6} mean_l0={:.2} mean_l2={:.6} success_rate={:.4}",
            p.mean_linf, p.max_linf, p.mean_l0, p.mean_l2, p.success_rate
        );
    }
    out
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn roc_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &report.roc.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    out
}

/// Write one report file as JSON plus, per evaluation, a text table and a
/// ROC CSV. File names embed the phase and scenario. Returns the paths
/// written.
pub fn write_report(file: &ReportFile, output_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if file.eval_reports.is_empty() && file.sim_report.is_none() {
        return Err(Error::config("nothing to write: empty report list"));
    }
    let dir = output_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for report in &file.eval_reports {
        let stem = format!("{}_{}", phase_tag(report.phase), report.scenario);
        let json_path = dir.join(format!("{stem}.json"));
        atomic_write(&json_path, serde_json::to_string_pretty(report)?.as_bytes())?;
        written.push(json_path);

        let txt_path = dir.join(format!("{stem}.txt"));
        atomic_write(&txt_path, render_eval_report(report).as_bytes())?;
        written.push(txt_path);

        let roc_path = dir.join(format!("{stem}_roc.csv"));
        atomic_write(&roc_path, roc_csv(report).as_bytes())?;
        written.push(roc_path);
    }

    if let Some(sim) = &file.sim_report {
        let json_path = dir.join("simulation.json");
        atomic_write(&json_path, serde_json::to_string_pretty(sim)?.as_bytes())?;
        written.push(json_path);

        let mut trace = String::from(
            "id,path,intercepted,perturbed,delta_linf,delta_l2,nids_score,verdict,ground_truth\n",
        );
        for r in &sim.records {
            let _ = writeln!(
                trace,
                "{},{},{},{},{},{},{},{:?},{}",
                r.id,
                r.path,
                r.intercepted,
                r.perturbed,
                r.delta_linf.map(|v| v.to_string()).unwrap_or_default(),
                r.delta_l2.map(|v| v.to_string()).unwrap_or_default(),
                r.nids_score,
                r.verdict,
                r.ground_truth
            );
        }
        let trace_path = dir.join("simulation_trace.csv");
        atomic_write(&trace_path, trace.as_bytes())?;
        written.push(trace_path);
    }

    let bundle_path = dir.join("report.json");
    atomic_write(&bundle_path, serde_json::to_string_pretty(file)?.as_bytes())?;
    written.push(bundle_path);

    Ok(written)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ReportFile> {
    Ok(serde_json::from_reader(std::fs::File::open(path.as_ref())?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{classification_report, confusion, roc_curve, ConfusionMatrix};

    fn sample_report() -> EvalReport {
        let cm = confusion(&[1, 0, 1, 0], &[1, 0, 0, 0]).unwrap();
        let roc = roc_curve(&[0.9, 0.1, 0.4, 0.2], &[1, 0, 1, 0]).unwrap();
        let auc = crate::eval::auc(&roc);
        EvalReport {
            phase: Phase::PreAttack,
            scenario: "clean".into(),
            config_echo: serde_json::Value::Null,
            report: classification_report(&cm).unwrap(),
            confusion: cm,
            roc,
            auc,
            perturbation: None,
        }
    }

    #[test]
    fn write_report_emits_three_files_per_eval() {
        let dir = tempfile::tempdir().unwrap();
        let file = ReportFile {
            tool_version: tool_version(),
            config_hash: "abc".into(),
            timestamp: None,
            eval_reports: vec![sample_report()],
            sim_report: None,
        };
        let written = write_report(&file, dir.path()).unwrap();
        // 3 per eval + the bundle
        assert_eq!(written.len(), 4);
        assert!(dir.path().join("pre-attack_clean.txt").exists());
        assert!(dir.path().join("pre-attack_clean_roc.csv").exists());
    }

    #[test]
    fn empty_report_list_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = ReportFile {
            tool_version: tool_version(),
            config_hash: "abc".into(),
            timestamp: None,
            eval_reports: vec![],
            sim_report: None,
        };
        assert!(write_report(&file, dir.path()).is_err());
    }

    #[test]
    fn table_layout_has_ma_wa_rows() {
        let text = render_eval_report(&sample_report());
        assert!(text.contains("MA"));
        assert!(text.contains("WA"));
        assert!(text.lines().any(|l| l.starts_with("0 ")));
        assert!(text.lines().any(|l| l.starts_with("1 ")));
    }

    #[test]
    fn published_counts_render_expected_percentages() {
        let cm = ConfusionMatrix { tn: 41986, fp: 1207, fn_: 122, tp: 47545 };
        let r = classification_report(&cm).unwrap();
        let text = render_class_report(&r);
        assert!(text.contains("98.54"), "accuracy row missing: {text}");
        assert!(text.contains("99.71"));
        assert!(text.contains("97.52"));
    }

    #[test]
    fn pct2_rounds_half_to_even() {
        // exact ties resolve to the even neighbour
        assert_eq!((9854.5f64).round_ties_even(), 9854.0);
        assert_eq!((9855.5f64).round_ties_even(), 9856.0);
        assert_eq!(pct2(0.985417), 98.54);
        assert_eq!(pct2(0.5), 50.0);
    }
}
