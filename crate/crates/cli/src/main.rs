//! `brwocc`: batch driver for branching random walk occupation-time experiments.
//!
//! Exit codes: 0 pass, 1 gate failure, 2 configuration or module error,
//! 3 data integrity error (checksum or config-hash mismatch).

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Profile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Module(#[from] brw_occupation::Error),
    #[error("integrity error: {0}")]
    Integrity(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Module(_) => 2,
            Self::Integrity(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "brwocc", version, about = "Occupation-time fluctuations of critical branching random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config (overrides --profile).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in config used when --config is absent.
    #[arg(long, global = true, value_enum, default_value = "d3-poisson")]
    profile: Profile,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance, Green function, local CLT, normings and clan curve of the kernel.
    AnalyzeKernel,
    /// Run (or resume) the replicate ensembles of every N in the ladder.
    Simulate,
    /// Compare ensembles with the exact finite-N covariance; builds missing ones.
    Verify,
    /// Sample Gaussian paths of the limit process.
    SampleLimit,
    /// Print tables of stored summaries and the last verification.
    Report,
    /// Print the resolved config as JSON.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => cli.profile.config(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = resolve(cli)?;
    let hash = cfg.hash();
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::ShowConfig => {
            println!("{}", pretty(&cfg));
            println!("hash {hash}");
        }
        Command::AnalyzeKernel => {
            let report = commands::analyze_kernel(&cfg)?;
            commands::write_config(&cfg, &hash, &out)?;
            store::write_envelope(&out.join("kernel_report.json"), &hash, &report)?;
            println!("{}", pretty(&report));
        }
        Command::Simulate => {
            commands::write_config(&cfg, &hash, &out)?;
            for s in commands::simulate(&cfg, &hash, &out)? {
                println!(
                    "N = {}: {} valid of {} (excluded {:.4}), summary {}",
                    s.n,
                    s.moments.count,
                    s.requested,
                    s.excluded_fraction,
                    store::summary_path(&out, s.n).display()
                );
            }
        }
        Command::Verify => {
            commands::write_config(&cfg, &hash, &out)?;
            let report = commands::verify(&cfg, &hash, &out)?;
            store::write_envelope(&out.join("verify_report.json"), &hash, &report)?;
            print!("{}", commands::report(&cfg, &hash, &out)?);
            return Ok(report.pass);
        }
        Command::SampleLimit => {
            commands::write_config(&cfg, &hash, &out)?;
            let prov = commands::sample_limit(&cfg, &hash, &out)?;
            println!("{}", pretty(&prov));
        }
        Command::Report => print!("{}", commands::report(&cfg, &hash, &out)?),
    }
    Ok(true)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gate failure");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
