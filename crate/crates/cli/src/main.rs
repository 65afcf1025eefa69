//! `parisi`: batch front end for the solvers.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 numerical failure, 4 optimizer
//! budget exhausted (the best result found is still written).

mod config;
mod run;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use config::{parse_config, Command, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "parisi", version, about = "Parisi measures for mean-field spin glasses")]
struct Cli {
    /// Command to run; may instead be given as `command` in the config.
    command: Option<Command>,
    /// Config file path or inline JSON.
    #[arg(long)]
    config: String,
    /// Result JSON path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// CSV path for plot data.
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_k: Option<usize>,
    /// Certification tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PARISI_THREADS") {
        let n: usize = v.parse().with_context(|| format!("PARISI_THREADS = {v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn write_or_print(path: Option<&str>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {p}")),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.context("cannot write to stdout"),
        },
    }
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    let mut cfg = parse_config(&cli.config, cli.command)?;
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.csv.is_some() {
        cfg.csv = cli.csv;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.optimizer.seed = seed;
    }
    if let Some(k) = cli.max_k {
        cfg.optimizer.max_k = k;
    }
    if let Some(tol) = cli.tol {
        cfg.optimizer.tol = tol;
    }
    let outcome = run::execute(&cfg)?;
    let text = serde_json::to_string_pretty(&outcome.json)?;
    write_or_print(cfg.out.as_deref(), &text)?;
    if let (Some(path), Some(csv)) = (cfg.csv.as_deref(), outcome.csv.as_deref()) {
        std::fs::write(path, csv).with_context(|| format!("cannot write {path}"))?;
    }
    Ok(outcome.exhausted)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<parisi::Error>() {
        Some(parisi::Error::BudgetExhausted { .. }) => 4,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: optimizer budget exhausted; best result written");
            ExitCode::from(4)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
