use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dppfluct::Execution;
use dppfluct_cli::commands::{self, Outcome, RunOptions};
use dppfluct_cli::config::{self, config_error, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "dppfluct", version, about = "Fluctuation calculators and checks for multi-time determinantal processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON report path; tables go next to it as `.csv`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write per-sample values (`mc` only) to `<out>.samples.csv`.
    #[arg(long, global = true)]
    dump_samples: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Limiting variance from the symbols.
    Predict,
    /// Finite-n cumulants from recurrence matrices.
    Cumulant,
    /// Monte Carlo on the matrix-valued Ornstein-Uhlenbeck process.
    Mc,
    /// Free-field quadratic-form check.
    Gff,
    /// Exact single-time oracles for discrete ensembles.
    Oracle,
    /// Recurrence coefficients and limits of an ensemble.
    EnsembleInfo,
}

fn execution(threads: Option<usize>) -> Result<Execution> {
    match threads {
        Some(0) => Err(config_error("--threads must be positive")),
        Some(1) => Ok(Execution::Sequential),
        Some(_k) if !Execution::parallel_available() => Ok(Execution::Sequential),
        Some(k) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .context("configuring the thread pool")?;
            let _ = k;
            Ok(Execution::Parallel)
        }
        None if Execution::parallel_available() => Ok(Execution::Parallel),
        None => Ok(Execution::Sequential),
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| config_error("--config <path> is required"))?;
    if cli.dump_samples && cli.out.is_none() {
        return Err(config_error("--dump-samples needs --out"));
    }
    let opts = RunOptions {
        seed: cli.seed,
        dump_samples: cli.dump_samples,
        execution: execution(cli.threads)?,
    };
    match cli.command {
        Command::Predict => commands::predict(&config::load(path)?, opts),
        Command::Cumulant => commands::cumulant(&config::load(path)?, opts),
        Command::Mc => commands::mc(&config::load(path)?, opts),
        Command::Gff => commands::gff(&config::load(path)?, opts),
        Command::Oracle => commands::oracle(&config::load(path)?, opts),
        Command::EnsembleInfo => commands::ensemble_info(&config::load(path)?, opts),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<()> {
    match &cli.out {
        Some(out) => {
            write(out, &outcome.json)?;
            if let Some(t) = &outcome.table {
                write(&sibling(out, ".csv"), &t.to_csv()?)?;
            }
            if let Some(t) = &outcome.samples {
                write(&sibling(out, ".samples.csv"), &t.to_csv()?)?;
            }
        }
        None => print!("{}", outcome.json),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = dispatch(&cli).and_then(|o| emit(&cli, &o).map(|_| o.passed));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("tolerance check failed; see the report");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
