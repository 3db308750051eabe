//! `fullhead` command-line front end.
//!
//! Exit codes: 0 success, 1 contract violation (including bad arguments),
//! 2 I/O or file-format error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fullhead_core::{exec::with_threads, Error, Result};

use config::{Command, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fullhead", version, about = "Full-head morphable model toolkit")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Use 1 for bitwise reproducible runs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Replay a `run.json` written by an earlier run; other arguments are
    /// ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

fn load_config(cli: Cli) -> Result<RunConfig> {
    if let Some(path) = &cli.config {
        return RunConfig::from_json(&std::fs::read_to_string(path)?);
    }
    let mut command = cli
        .command
        .ok_or_else(|| Error::Contract("a subcommand is required (see --help)".into()))?;
    command.resolve_defaults()?;
    Ok(RunConfig::new(cli.seed, cli.threads, command))
}

fn run(cli: Cli) -> Result<String> {
    let cfg = load_config(cli)?;
    cfg.command.validate_paths()?;
    let dir = cfg.command.run_json_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&cfg)?)?;
    with_threads(cfg.threads, || commands::execute(&cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
