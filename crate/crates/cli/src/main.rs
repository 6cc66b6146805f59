use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qrotor_cli::{CliError, ExperimentConfig, ExperimentKind};

/// Run a rotor-chain experiment and write its artifacts.
#[derive(Parser)]
#[command(name = "qrotor", version)]
struct Args {
    /// Experiment to run; overrides `kind` in the config file.
    #[arg(value_enum)]
    kind: Option<ExperimentKind>,
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent scan points.
    #[arg(long)]
    threads: Option<usize>,
    /// Bond dimension cap for both finite and infinite DMRG.
    #[arg(long)]
    chi: Option<usize>,
}

fn build(args: Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, args.kind) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(k)) => ExperimentConfig::defaults(k),
        (None, None) => return Err(CliError::Config(vec!["give an experiment kind or --config".into()])),
    };
    if let Some(k) = args.kind {
        cfg.kind = Some(k);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(c) = args.chi {
        cfg.truncation.chi_max = c;
        cfg.idmrg.chi_max = c;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let result = build(Args::parse()).and_then(|cfg| qrotor_cli::run(&cfg));
    match result {
        Ok(m) => {
            println!(
                "{}: {} ({} points, {:.1} s)",
                m.kind,
                m.status,
                m.points.len(),
                m.seconds
            );
            if m.points.iter().any(|p| !p.ok) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
