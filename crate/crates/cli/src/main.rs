mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::RunConfig;
use crate::output::Artifacts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Covariance,
    Bfunc,
    Lfunc,
    ClosedFormAudit,
    WeightsAudit,
    Theorem1,
    Theorem2,
    Simulate,
    Figures,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default()
    }
}

/// Covariance functionals and limit-theorem diagnostics for cyclical
/// long-range dependent random fields.
#[derive(Debug, Parser)]
#[command(name = "cyclofield", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "CYCLOFIELD_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl From<cyclofield_core::Error> for CliError {
    fn from(e: cyclofield_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(c) = &cfg.command {
        if *c != cli.command.name() {
            return Err(CliError::Config(format!(
                "at `command`: config is for `{c}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {k} threads: {e}")))?;
    }
    let mut out = Artifacts::new(&cfg.output_dir, cfg.hash())?;
    let outcome = commands::run(cli.command, &cfg, &mut out)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    for path in out.written() {
        println!("wrote {}", path.display());
    }
    println!("{}", if outcome.passed { "PASSED" } else { "FAILED" });
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cyclofield: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
