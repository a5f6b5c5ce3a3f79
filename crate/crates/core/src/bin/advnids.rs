//! Command-line front end: train, attack, defend, evaluate, simulate,
//! re-render reports, or reproduce an entire run from one configuration
//! file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use advnids::config::RunConfig;
use advnids::error::{Error, Result};
use advnids::eval::{Classifier, Phase};
use advnids::model_io::{self, LoadedModel, TrainingFingerprint};
use advnids::pipeline;
use advnids::report::{load_report, render_eval_report, tool_version, write_report, ReportFile};

#[derive(Parser)]
#[command(name = "advnids", version, about = "Adversarial robustness toolkit for NIDS classifiers")]
struct Cli {
    /// Override the configuration's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configuration's output directory.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset and train the base classifier.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Craft adversarial test sets against a trained model and report the
    /// post-attack metrics.
    Attack {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Apply the configured defences to a trained model and report the
    /// post-defence metrics.
    Defend {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Evaluate a saved model on the configured test set.
    Evaluate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Run the packet-flow simulation against a saved model.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Re-render tables and ROC CSVs from a saved report bundle.
    Report {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the whole pipeline (data, training, attacks, defences,
    /// evaluation, simulation) from one configuration file.
    Reproduce {
        #[arg(short, long)]
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf, cli_seed: Option<u64>, cli_output: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli_seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli_output {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn classifier_for(loaded: &LoadedModel) -> Classifier {
    if loaded.defended.provenance.applied.is_empty()
        && loaded.defended.gda.is_none()
        && loaded.defended.hc.is_none()
    {
        Classifier::Plain(loaded.model.clone())
    } else {
        Classifier::Defended(loaded.defended.clone())
    }
}

fn emit(cfg: &RunConfig, eval_reports: Vec<advnids::eval::EvalReport>, sim: Option<advnids::flowsim::SimReport>) -> Result<()> {
    let file = ReportFile {
        tool_version: tool_version(),
        config_hash: cfg.hash(),
        timestamp: None,
        eval_reports,
        sim_report: sim,
    };
    for report in &file.eval_reports {
        print!("{}", render_eval_report(report));
        println!();
    }
    if let Some(sim) = &file.sim_report {
        println!(
            "simulation {:?}: evasion_rate={:.4} false_block_rate={:.4} flows={}",
            sim.case,
            sim.evasion_rate,
            sim.false_block_rate,
            sim.records.len()
        );
    }
    let written = write_report(&file, &cfg.output_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let bundle = pipeline::build_data(cfg)?;
    let clip = bundle.clip_box();
    let (model, history) = pipeline::train_base(cfg, &bundle)?;
    if let (Some(loss), Some(acc)) = (history.train_loss.last(), history.train_accuracy.last()) {
        println!("final epoch: loss={loss:.6} accuracy={acc:.4}");
    }

    let fingerprint = TrainingFingerprint { seed: cfg.seed, config_hash: cfg.hash() };
    let file = model_io::to_model_file(
        &model,
        bundle.train.scaler.as_ref(),
        Some(&clip),
        None,
        fingerprint,
    )?;
    let model_path = cfg.output_dir.join("model.json");
    model_io::save_model(&file, &model_path)?;
    println!("wrote {}", model_path.display());

    let subject = Classifier::Plain(model);
    let reports = advnids::eval::evaluate_pipeline(&subject, &bundle.test, &[], Phase::PreAttack, cfg.seed)?;
    emit(cfg, reports, None)
}

fn cmd_attack(cfg: &RunConfig, model_path: &PathBuf) -> Result<()> {
    if cfg.attacks.is_empty() {
        return Err(Error::config("no attacks configured"));
    }
    let loaded = model_io::load_model(model_path)?;
    let bundle = pipeline::build_data(cfg)?;
    let clip = loaded.clip_box.clone().unwrap_or_else(|| bundle.clip_box());
    let attacks = pipeline::resolve_attacks(cfg, &clip)?;

    let subject = classifier_for(&loaded);
    let labels: Vec<u8> = bundle.test.labels.to_vec();
    for attack in &attacks {
        let batch = attack.run(subject.base(), &bundle.test.features.view(), &bundle.test.labels.view())?;
        let written = pipeline::save_adv_batch(&batch, &labels, &cfg.output_dir, attack.name())?;
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    let reports = advnids::eval::evaluate_pipeline(&subject, &bundle.test, &attacks, Phase::PostAttack, cfg.seed)?;
    emit(cfg, reports, None)
}

fn cmd_defend(cfg: &RunConfig, model_path: &PathBuf) -> Result<()> {
    if cfg.defence.is_none() {
        return Err(Error::config("no defences configured"));
    }
    let loaded = model_io::load_model(model_path)?;
    let bundle = pipeline::build_data(cfg)?;
    let clip = loaded.clip_box.clone().unwrap_or_else(|| bundle.clip_box());

    let defended = pipeline::apply_defences(cfg, &bundle, loaded.model.clone(), &clip)?;
    let fingerprint = TrainingFingerprint { seed: cfg.seed, config_hash: cfg.hash() };
    let file = model_io::to_model_file(
        &defended.base,
        loaded.scaler.as_ref().or(bundle.train.scaler.as_ref()),
        Some(&clip),
        Some(&defended),
        fingerprint,
    )?;
    let out_path = cfg.output_dir.join("model_defended.json");
    model_io::save_model(&file, &out_path)?;
    println!("wrote {}", out_path.display());

    let attacks = pipeline::resolve_attacks(cfg, &clip)?;
    let subject = Classifier::Defended(defended);
    let reports = advnids::eval::evaluate_pipeline(&subject, &bundle.test, &attacks, Phase::PostDefence, cfg.seed)?;
    emit(cfg, reports, None)
}

fn cmd_evaluate(cfg: &RunConfig, model_path: &PathBuf) -> Result<()> {
    let loaded = model_io::load_model(model_path)?;
    let bundle = pipeline::build_data(cfg)?;
    let clip = loaded.clip_box.clone().unwrap_or_else(|| bundle.clip_box());
    let attacks = pipeline::resolve_attacks(cfg, &clip)?;
    let subject = classifier_for(&loaded);
    let phase = match &subject {
        Classifier::Plain(_) if attacks.is_empty() => Phase::PreAttack,
        Classifier::Plain(_) => Phase::PostAttack,
        Classifier::Defended(_) => Phase::PostDefence,
    };
    let reports = advnids::eval::evaluate_pipeline(&subject, &bundle.test, &attacks, phase, cfg.seed)?;
    emit(cfg, reports, None)
}

fn cmd_simulate(cfg: &RunConfig, model_path: &PathBuf) -> Result<()> {
    let Some(spec) = &cfg.simulation else {
        return Err(Error::config("no simulation configured"));
    };
    let loaded = model_io::load_model(model_path)?;
    let bundle = pipeline::build_data(cfg)?;
    let clip = loaded.clip_box.clone().unwrap_or_else(|| bundle.clip_box());
    let subject = classifier_for(&loaded);
    let outcome = pipeline::run_sim_stage(cfg, spec, &bundle, &subject, &clip)?;
    if let Some(rate) = outcome.transfer_rate {
        println!("surrogate transfer rate: {rate:.4}");
    }
    emit(cfg, Vec::new(), Some(outcome.report))
}

fn cmd_report(input: &PathBuf, output: &PathBuf) -> Result<()> {
    let file = load_report(input)?;
    let written = write_report(&file, output)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_reproduce(cfg: &RunConfig) -> Result<()> {
    let out = pipeline::run_full(cfg)?;
    for report in &out.report.eval_reports {
        print!("{}", render_eval_report(report));
        println!();
    }
    if let Some(sim) = &out.report.sim_report {
        println!(
            "simulation {:?}: evasion_rate={:.4} false_block_rate={:.4} flows={}",
            sim.case,
            sim.evasion_rate,
            sim.false_block_rate,
            sim.records.len()
        );
    }
    println!("wrote {}", out.model_path.display());
    for path in &out.report_paths {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config } => cmd_train(&load_config(config, cli.seed, cli.output.as_ref())?),
        Command::Attack { config, model } => {
            cmd_attack(&load_config(config, cli.seed, cli.output.as_ref())?, model)
        }
        Command::Defend { config, model } => {
            cmd_defend(&load_config(config, cli.seed, cli.output.as_ref())?, model)
        }
        Command::Evaluate { config, model } => {
            cmd_evaluate(&load_config(config, cli.seed, cli.output.as_ref())?, model)
        }
        Command::Simulate { config, model } => {
            cmd_simulate(&load_config(config, cli.seed, cli.output.as_ref())?, model)
        }
        Command::Report { input, output } => cmd_report(input, output),
        Command::Reproduce { config } => {
            cmd_reproduce(&load_config(config, cli.seed, cli.output.as_ref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
