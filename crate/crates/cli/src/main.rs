//! Batch experiment runner for the lattice secret-key generation library.
//!
//! Subcommands: reliability, uniformity, leakage, tradeoff, flatness,
//! resolvability. Each writes a CSV with a fixed header and a JSON sidecar
//! `<out>.meta.json` carrying the seed, config hash and estimates. Identical
//! (config, seed) runs produce byte-identical CSV files regardless of thread
//! count.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

// `!(x > 0.0)`-style guards reject NaN, which the suggested rewrite would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Core(skg_core::Error),
}

impl From<skg_core::Error> for CliError {
    fn from(e: skg_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Core(e) => write!(f, "numeric failure: {e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Core(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "skg",
    about = "Lattice secret-key generation experiments",
    version
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo sample count override.
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Output CSV path override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key agreement error probability over protocol rounds.
    Reliability,
    /// Key distance to uniform against the flatness budget.
    Uniformity,
    /// Eavesdropper posterior distance to uniform.
    Leakage,
    /// Public-rate / key-rate trade-off curve.
    Tradeoff,
    /// Flatness factors over a volume-to-noise grid.
    Flatness,
    /// Output divergence of random linear codes on the mod channel.
    Resolvability,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Reliability => ExperimentKind::Reliability,
            Command::Uniformity => ExperimentKind::Uniformity,
            Command::Leakage => ExperimentKind::Leakage,
            Command::Tradeoff => ExperimentKind::Tradeoff,
            Command::Flatness => ExperimentKind::FlatnessScan,
            Command::Resolvability => ExperimentKind::Resolvability,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let kind = cli.command.kind();
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.samples = samples;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    cfg.validate(kind)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name())));
    let hash = cfg.hash();

    let start = Instant::now();
    let output = match kind {
        ExperimentKind::Reliability => experiments::reliability::run(&cfg)?,
        ExperimentKind::Uniformity => experiments::uniformity::run(&cfg)?,
        ExperimentKind::Leakage => experiments::leakage::run(&cfg)?,
        ExperimentKind::Tradeoff => experiments::tradeoff::run(&cfg)?,
        ExperimentKind::FlatnessScan => experiments::flatness_scan::run(&cfg)?,
        ExperimentKind::Resolvability => experiments::resolvability::run(&cfg)?,
    };
    let wall = start.elapsed().as_millis();
    report::write_outputs(&out, kind.name(), cfg.seed, cfg.samples, &hash, wall, &output)?;
    log::info!("{} finished in {wall} ms -> {}", kind.name(), out.display());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SKG_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
