mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CliOverrides, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "ebm", version, about = "Train, sample, audit and map energy-based models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config file (key = value with [sections]).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Hyperparameter preset: toy-nonconv, toy-conv, image-nonconv, image-conv.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Worker threads for chain and gradient parallelism.
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,

    /// Override one config key, e.g. `--set trainer.steps=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Learn a potential from data.
    Train,
    /// Draw MCMC samples from a checkpoint.
    Sample,
    /// Long-run steady-state audit of a checkpoint.
    Audit,
    /// Train on a 2D toy and compare learned, sampled and true densities.
    Toy,
    /// Map the basins of a learned energy.
    Map,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Sample => Command::Sample,
            Cmd::Audit => Command::Audit,
            Cmd::Toy => Command::Toy,
            Cmd::Map => Command::Map,
        }
    }
}

fn run(cli: Cli) -> ebm_core::Result<()> {
    let overrides = CliOverrides {
        config: cli.config,
        preset: cli.preset,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        set: cli.set,
    };
    let cfg = ExperimentConfig::resolve(cli.command.into(), &overrides)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| ebm_core::Error::Config(format!("thread pool: {e}")))?;
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::FAILURE
        }
    }
}
