//! `oforest`: train, evaluate, distort, benchmark and probe oblique model forests.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "oforest",
    version,
    about = "Oblique model forests on image spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for tree building (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file, overriding the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Forest file, overriding the config's `model`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Transform tag for `distort`, e.g. `rot90+translate:1,0`.
    #[arg(long, global = true)]
    transform: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build a forest from CSV or synthetic data.
    Train,
    /// Error and weight statistics of a forest on a data set.
    Eval,
    /// Permute a forest to answer on transformed images.
    Distort,
    /// Time a forest against its convolved twin.
    Bench,
    /// Check continuity and smoothness across hyperplane crossings.
    Probe,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    if let Some(model) = cli.model {
        cfg.model = Some(model);
    }
    if let Some(t) = cli.transform {
        cfg.transform = Some(t);
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    let report = match cli.command {
        Command::Train => commands::train(&cfg)?,
        Command::Eval => commands::eval(&cfg)?,
        Command::Distort => commands::distort(&cfg)?,
        Command::Bench => commands::bench(&cfg)?,
        Command::Probe => commands::probe_cmd(&cfg)?,
    };
    if let Some(path) = &cfg.report {
        report.write_json(path)?;
    }
    Ok(report.text())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("oforest: {e}");
            e.exit_code()
        }
    }
}
