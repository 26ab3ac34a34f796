//! `tmc`: data generation, training, segmentation and the error-rate table.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Marks an error caused by the user's configuration or input files.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Parser)]
#[command(name = "tmc", version, about = "Semi-supervised segmentation with triplet Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration; defaults apply to every omitted key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed. Data seed for gen-data and oracle, model seed for train and
    /// segment (training and decoding seeds derive from it).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Root of the run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Run directory name under --out; overrides `name` in the config.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a noisy, partially labeled sequence and preview images.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a sequence archive.
    Train {
        #[command(flatten)]
        common: Common,
        /// Sequence archive; defaults to the run directory's archive.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Decode the hidden labels with a trained checkpoint.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Posterior samples averaged per step.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train every scenario x model x seed cell and emit the error-rate table.
    /// Cells with existing results are skipped.
    ReproTable {
        #[command(flatten)]
        common: Common,
        /// Cells trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare decoding by an embedded known chain against exact smoothing.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<tmc_core::Error>() {
            use tmc_core::Error::*;
            return match e {
                TrainingAborted { .. } | NonFinite(_) | ZeroEvidence { .. } => 3,
                _ => 2,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { common } => commands::gen_data(&common),
        Command::Train { common, archive } => commands::train(&common, archive),
        Command::Segment {
            common,
            checkpoint,
            archive,
            samples,
        } => commands::segment(&common, checkpoint, archive, samples),
        Command::ReproTable { common, jobs } => commands::repro_table(&common, jobs),
        Command::Oracle { common } => commands::oracle(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
