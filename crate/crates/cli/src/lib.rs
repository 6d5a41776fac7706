//! `privsplit`: reproducible experiment recipes over the privsplit library.

mod commands;
pub mod config;

use std::error::Error as StdError;
use std::fmt;
use std::io;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use privsplit::checkpoint::CheckpointError;
use privsplit::data::DataError;
use privsplit::evaluation::EvalError;
use privsplit::experiments::ExperimentError;
use privsplit::image::PixmapError;
use privsplit::trainer::TrainError;

use crate::config::DatasetKind;

#[derive(Parser, Debug)]
#[command(name = "privsplit", version, about = "Feature-split privacy training, classic obfuscators and attack evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration; unset keys keep their defaults
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (defaults to runs/<command>)
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed, overriding PRIVSPLIT_SEED and the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gradient, divergence-identity and optimal-discriminator self-checks
    Check {
        #[arg(long)]
        networks: Option<usize>,
        #[arg(long)]
        recovery_samples: Option<usize>,
        /// Flip every parameter gradient so the gradient checks must fail
        #[arg(long, hide = true)]
        inject_gradient_fault: bool,
    },
    /// Train on the 2-D clusters and draw the scatter panels
    TrainToy {
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train on tiny images
    TrainImage {
        #[arg(long)]
        iterations: Option<usize>,
        /// Privacy proportion such as 1/64
        #[arg(long)]
        proportion: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Obfuscate one pixmap
    Obfuscate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long, value_enum)]
        method: ObfuscateMethod,
        /// Encrypted (or decoded) output pixmap
        #[arg(long)]
        output: PathBuf,
        /// Pixelation factor (default from [baselines])
        #[arg(long)]
        factor: Option<usize>,
        /// Blur radius (default from [baselines])
        #[arg(long)]
        radius: Option<usize>,
        /// P3 threshold (default from [baselines])
        #[arg(long)]
        threshold: Option<u32>,
        /// P3 secret part (written by p3, read by p3-decode)
        #[arg(long)]
        secret: Option<PathBuf>,
        /// P3 public coefficient stream (defaults to the output with a .p3c extension)
        #[arg(long)]
        public_stream: Option<PathBuf>,
        /// Model checkpoint for the model method
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Reconstruction written by the model method
        #[arg(long)]
        reconstruction: Option<PathBuf>,
    },
    /// Attack each obfuscation with a fresh classifier and tabulate
    Attack {
        #[arg(long, value_enum)]
        dataset: Option<DatasetKind>,
        /// Trained models to include, as name=checkpoint.json
        #[arg(long = "model", value_name = "NAME=PATH")]
        models: Vec<String>,
        /// Train the full model and the decomposition baseline first
        #[arg(long)]
        train: bool,
        /// Leave out the classic image baselines
        #[arg(long)]
        no_baselines: bool,
    },
    /// Retrain at every configured privacy proportion
    SweepProportion {
        #[arg(long, value_enum)]
        dataset: Option<DatasetKind>,
    },
    /// Redraw the plots of a finished run and summarize it
    Report {
        /// Directory holding history.csv and friends
        run_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObfuscateMethod {
    Pixelate,
    Blur,
    P3,
    P3Decode,
    Model,
}

/// Bad invocation or configuration; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for UsageError {}

/// A self-check or assertion did not hold; exit code 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for CheckFailed {}

fn io_failure(e: &(dyn StdError + 'static)) -> bool {
    if e.is::<io::Error>() {
        return true;
    }
    if let Some(e) = e.downcast_ref::<csv::Error>() {
        return e.is_io_error();
    }
    if let Some(e) = e.downcast_ref::<PixmapError>() {
        return matches!(e, PixmapError::Io(_));
    }
    if let Some(e) = e.downcast_ref::<CheckpointError>() {
        return matches!(e, CheckpointError::Io(_));
    }
    if let Some(e) = e.downcast_ref::<DataError>() {
        return match e {
            DataError::Io(_) => true,
            DataError::Pixmap(p) => io_failure(p),
            DataError::Csv(c) => io_failure(c),
            _ => false,
        };
    }
    if let Some(e) = e.downcast_ref::<EvalError>() {
        return match e {
            EvalError::Io(_) => true,
            EvalError::Data(d) => io_failure(d),
            EvalError::Csv(c) => io_failure(c),
            _ => false,
        };
    }
    if let Some(e) = e.downcast_ref::<TrainError>() {
        return match e {
            TrainError::Io(_) => true,
            TrainError::Csv(c) => io_failure(c),
            _ => false,
        };
    }
    if let Some(e) = e.downcast_ref::<ExperimentError>() {
        return match e {
            ExperimentError::Train(t) => io_failure(t),
            ExperimentError::Eval(v) => io_failure(v),
            ExperimentError::Data(d) => io_failure(d),
            _ => false,
        };
    }
    false
}

/// 0 success, 1 failed check or other error, 2 usage, 3 I/O.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else if err.chain().any(io_failure) {
        3
    } else {
        1
    }
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::run(cli)
}
