//! `topomil`: generate datasets, train and evaluate topologically
//! regularized MIL models, inspect persistence diagrams, and run
//! data-scarcity sweeps.
//!
//! Exit codes: 0 on success, 2 on usage/config errors, 1 on runtime
//! failures. Diagnostics go to stderr; data goes to stdout or files.

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "topomil", version, about = "Topologically regularized multiple-instance learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Toy,
    PoolBags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Space {
    Input,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a bag dataset (bag CSV plus a re-runnable manifest).
    Gen {
        /// Dataset family; may also come from a `kind=` key in the spec.
        #[arg(long, value_enum)]
        kind: Option<GenKind>,
        /// Flat key=value spec file.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a bag CSV; writes a checkpoint and a history CSV.
    Train {
        /// Flat key=value training config.
        #[arg(long)]
        config: PathBuf,
        /// Bag CSV with the training data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a bag CSV; prints the five metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print the 0-dim persistence diagram of one bag as CSV.
    Ph {
        /// Bag CSV to read.
        #[arg(long)]
        data: PathBuf,
        /// Bag id to inspect.
        #[arg(long)]
        bag: String,
        /// Which space to compute distances in.
        #[arg(long, value_enum, default_value = "input")]
        space: Space,
    },
    /// Run the data-scarcity sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Skip (bag_count, size, run) cells already present in the output.
        #[arg(long)]
        resume: bool,
    },
}

/// Errors that indicate a bad invocation or config (exit 2) versus a
/// failure at runtime (exit 1).
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Config(e) | CliError::Runtime(e) => e,
        }
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { kind, spec, out } => commands::gen::run(kind, &spec, &out),
        Command::Train { config, data, out } => commands::train::run(&config, &data, &out),
        Command::Eval { checkpoint, data } => commands::eval::run(&checkpoint, &data),
        Command::Ph { data, bag, space } => commands::ph::run(&data, &bag, space),
        Command::Sweep { config, resume } => commands::sweep::run(&config, resume),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err.message());
            ExitCode::from(err.code())
        }
    }
}
