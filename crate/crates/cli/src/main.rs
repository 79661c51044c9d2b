//! `bdf-vacuum`: batch driver for the cutoff BDF vacuum solver.
//!
//! Exit status: 0 success, 1 error (a JSON error object goes to stderr and,
//! when the output directory is known, to `error.json`), 2 a failed
//! invariant-suite criterion, 3 a solver run that did not converge.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bdf_vacuum::BdfError;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::RunConfig;
use output::Emitter;

/// Overrides `output.directory`; `--out` wins over it.
const OUT_DIR_ENV: &str = "BDF_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "bdf-vacuum",
    version,
    about = "Polarized Dirac vacuum on a momentum lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized inputs, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Tabulate B_Lambda(k) and U_Lambda(k) for each cutoff.
    ScreeningTable,
    /// Track the eigenvalue of D^{kappa nu} nearest zero over the kappa grid.
    LinearScan,
    /// Solve the self-consistent vacuum at (alpha, kappa, mu).
    Scf,
    /// Scan F(kappa, alpha) and locate the critical couplings.
    PairProduction,
    /// Run the acceptance checks and print a pass/fail table.
    InvariantSuite,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ScreeningTable => "screening-table",
            Command::LinearScan => "linear-scan",
            Command::Scf => "scf",
            Command::PairProduction => "pair-production",
            Command::InvariantSuite => "invariant-suite",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Run(#[from] BdfError),
    #[error("output: {0}")]
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(_) => "solver",
            CliError::Io(_) => "io",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(dir) = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
    {
        config.output.directory = dir;
    }
    Ok(config)
}

fn run(cli: &Cli, config: &RunConfig) -> Result<i32, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut out = Emitter::new(&config.output.directory, cli.command.name(), config)?;
    let status = match cli.command {
        Command::ScreeningTable => commands::screening_table(config, &mut out),
        Command::LinearScan => commands::linear_scan(config, &mut out),
        Command::Scf => commands::scf(config, &mut out),
        Command::PairProduction => commands::pair_production(config, &mut out),
        Command::InvariantSuite => commands::invariant_suite(config, &mut out),
    }?;
    out.finish(json!({ "exit_status": status }))?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let mut out_dir = None;
    let result = resolve(&cli).and_then(|config| {
        out_dir = Some(config.output.directory.clone());
        run(&cli, &config)
    });
    match result {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            if let Some(dir) = out_dir.filter(|d| d.is_dir()) {
                let _ = std::fs::write(dir.join("error.json"), format!("{body:#}\n"));
                let _ = output::write_metadata(
                    &dir,
                    cli.command.name(),
                    started,
                    &[],
                    json!({ "exit_status": 1 }),
                );
            }
            ExitCode::from(1)
        }
    }
}
