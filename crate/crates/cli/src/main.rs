//! `efla`: verification suites, sweeps, recall experiments and benchmarks.
//!
//! Exit codes: 0 when everything passes, 1 when a checked property fails,
//! 2 for usage, configuration or I/O errors.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use config::{RunConfig, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] efla::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Parser)]
#[command(name = "efla", version, about = "Exact and Runge-Kutta linear-attention recurrences")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// JSON config; flags given here override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Comma-separated methods, e.g. `euler,rk4,rkn:6,efla`.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, global = true, value_name = "N")]
    chunk_size: Option<usize>,
    /// Replaces every suite's default tolerance.
    #[arg(long, global = true, value_name = "FLOAT")]
    tolerance: Option<f64>,
    /// Print the verify report as JSON.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ClapSubcommand)]
enum Command {
    /// Run every property suite.
    Verify,
    /// RK-N gate error against the exact gate, as CSV.
    Converge,
    /// Associative-recall trials under perturbation, as CSV.
    Recall,
    /// Time the recurrent and chunkwise scans and fit the scaling exponent.
    Bench,
    /// Per-step growth factor along the key, as CSV.
    Stability,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Verify => Subcommand::Verify,
            Command::Converge => Subcommand::Converge,
            Command::Recall => Subcommand::Recall,
            Command::Bench => Subcommand::Bench,
            Command::Stability => Subcommand::Stability,
        }
    }
}

fn resolve(cli: &Cli) -> Result<(Subcommand, RunConfig), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(methods) = &cli.methods {
        cfg.methods = methods.clone();
    }
    if let Some(c) = cli.chunk_size {
        cfg.chunk_size = c;
    }
    if let Some(t) = cli.tolerance {
        cfg.tolerance = Some(t);
    }
    cfg.validate()?;
    let sub = cli
        .command
        .map(Subcommand::from)
        .or(cfg.subcommand)
        .ok_or_else(|| CliError::Usage("no subcommand given on the command line or in the config".into()))?;
    Ok((sub, cfg))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let (sub, cfg) = resolve(cli)?;
    match sub {
        Subcommand::Verify => {
            let report = verify::run(&cfg)?;
            if cli.json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
                println!("{text}");
            } else {
                for s in &report.suites {
                    println!(
                        "{} {:<18} max_error {:.3e}  tolerance {:.1e}  {}",
                        if s.passed { "PASS" } else { "FAIL" },
                        s.name,
                        s.max_error,
                        s.tolerance,
                        s.detail
                    );
                }
            }
            Ok(if report.passed { Outcome::Pass } else { Outcome::Fail })
        }
        Subcommand::Converge => commands::converge(&cfg),
        Subcommand::Recall => commands::recall(&cfg),
        Subcommand::Bench => commands::bench(&cfg),
        Subcommand::Stability => commands::stability(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
