//! `aloe`: train detectors, evaluate them clean and under attack, and check
//! the disk-example risk bound.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::run::{Command, Options};

#[derive(Parser, Debug)]
#[command(
    name = "aloe",
    version,
    about = "Robust out-of-distribution detection lab"
)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; defaults to the built-in benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Write a checkpoint after every training epoch.
    #[arg(long)]
    save_epochs: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => config::load(path),
        None => Ok(config::RunConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match run::run(
        &cfg,
        cli.command,
        &Options {
            save_epochs: cli.save_epochs,
        },
    ) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
