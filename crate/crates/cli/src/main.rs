//! `actionsense`: prepare, extract, train, evaluate, predict, report.
//!
//! Exit codes: 0 success, 1 validation errors (bad input, bad config,
//! unknown subcommand), 2 I/O or subprocess failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use actionsense::backbone::{BackboneError, CacheError};
use actionsense::dataset::DatasetError;
use actionsense::frames::FrameError;
use actionsense::head::HeadError;
use clap::{Parser, Subcommand};

use config::CommonArgs;

/// A problem with user input rather than with the environment.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Parser)]
#[command(name = "actionsense", version, about = "Frame-sampled video action classification")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the manifest, split it into train/val/test and write it back
    Prepare,
    /// Decode, sample and embed every video into the feature cache
    Extract,
    /// Fit normalization and the classification head on cached features
    Train,
    /// Classify every test video and write a report
    Evaluate,
    /// Classify one video (file or frame directory) with a trained bundle
    Predict {
        #[arg(long)]
        input: PathBuf,
        /// Frame rate of a frame directory (default: the sampling rate)
        #[arg(long)]
        input_fps: Option<u32>,
    },
    /// Re-render a saved report
    Report {
        /// Also write the confusion matrix as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate the synthetic color-pattern clip dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        clips_per_class: usize,
        #[arg(long, default_value_t = 3)]
        seconds: u32,
    },
}

/// Maps an error chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ValidationError>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
        let io = match cause {
            c if c.is::<DatasetError>() => matches!(c.downcast_ref(), Some(DatasetError::Io { .. })),
            c if c.is::<CacheError>() => matches!(c.downcast_ref(), Some(CacheError::Io { .. })),
            c if c.is::<HeadError>() => matches!(c.downcast_ref(), Some(HeadError::Io { .. })),
            c if c.is::<BackboneError>() => {
                matches!(c.downcast_ref(), Some(BackboneError::ModelLoad { .. } | BackboneError::Inference { .. }))
            }
            c if c.is::<FrameError>() => matches!(
                c.downcast_ref(),
                Some(FrameError::DecoderUnavailable { .. } | FrameError::Decode { .. })
            ),
            _ => continue,
        };
        return if io { 2 } else { 1 };
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
