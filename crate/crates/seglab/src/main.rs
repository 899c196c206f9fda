//! `seglab`: generate synthetic data, corrupt labels, superpixelize, train,
//! evaluate, and sweep noise grids.
//!
//! Every subcommand accepts `--config FILE` followed by any number of
//! `--key value` overrides (dotted keys such as `--train.lr 0.01`, or the
//! short aliases `--alpha`, `--beta`, `--mode`, `--k`, `--jobs`, ...).
//!
//! Exit codes: 0 success, 2 bad configuration, 3 domain/numeric/state error,
//! 4 I/O or file-format error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seglab_core::harness::{self, Config, SEED_ENV};
use seglab_core::Error;

#[derive(Parser)]
#[command(
    name = "seglab",
    version,
    about = "Noisy-label segmentation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// `--key value` overrides.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    rest: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (images, labels, manifest).
    GenData(Overrides),
    /// Corrupt the training labels of a dataset.
    Corrupt(Overrides),
    /// Compute SLIC superpixels for the training images.
    Superpixelize(Overrides),
    /// Train one mode and write metrics, checkpoints and refined labels.
    Train(Overrides),
    /// Dice of predicted label maps against ground truth.
    Eval(Overrides),
    /// Sweep the noise grid over several modes and write a report.
    Experiment(Overrides),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownKey(_) | Error::InvalidValue { .. } => 2,
        Error::Domain(_) | Error::Numeric(_) | Error::State(_) => 3,
        Error::Io { .. } | Error::Format(_) | Error::Truncated { .. } => 4,
    }
}

fn run(cli: Cli) -> Result<String, Error> {
    let (cmd, o): (fn(&Config) -> seglab_core::Result<String>, _) = match cli.command {
        Command::GenData(o) => (harness::cmd_gen_data, o),
        Command::Corrupt(o) => (harness::cmd_corrupt, o),
        Command::Superpixelize(o) => (harness::cmd_superpixelize, o),
        Command::Train(o) => (harness::cmd_train, o),
        Command::Eval(o) => (harness::cmd_eval, o),
        Command::Experiment(o) => (harness::cmd_experiment, o),
    };
    let cfg = Config::resolve(o.config.as_deref(), std::env::var(SEED_ENV).ok(), &o.rest)?;
    cmd(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("seglab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
