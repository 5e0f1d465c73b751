//! `imgspam` command-line front end: corpus preparation, scenario runs, model
//! bundles, batch scoring and the HTTP scoring endpoint.

pub mod args;
mod commands;
pub mod selftest;
pub mod serve;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use image::RgbImage;
use imgspam_core::bundle::ModelBundle;
use imgspam_core::config::ConfigError;
use imgspam_core::corpus::Label;
use imgspam_core::imaging::decode_rgb;
use imgspam_core::model::Detector;
use serde::Serialize;
use thiserror::Error;

pub use args::Cli;

/// Failure categories, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Locked(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Locked(_) => 4,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Runtime(_) => "error",
            CliError::Usage(_) => "usage error",
            CliError::Config(_) => "config error",
            CliError::Locked(_) => "lock error",
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("imgspam: {}: {e}", e.category());
            e.exit_code()
        }
    }
}

/// One scored image, as printed by `predict` and returned by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub label: Label,
    pub margin: f64,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("scoring failed: {0}")]
    Model(String),
}

pub fn score_image(detector: &Detector, pixels: &RgbImage) -> Result<Score, ScoreError> {
    let margin = detector.margin_image(pixels).map_err(|e| ScoreError::Model(e.to_string()))?;
    Ok(Score {
        label: Detector::label_for(margin),
        margin,
    })
}

/// Decodes and scores raw upload/file bytes. Offline and served predictions
/// both go through here.
pub fn score_bytes(bundle: &ModelBundle, bytes: &[u8]) -> Result<Score, ScoreError> {
    let pixels = decode_rgb(bytes).map_err(|e| ScoreError::Decode(e.to_string()))?;
    if pixels.width() == 0 || pixels.height() == 0 {
        return Err(ScoreError::Decode("empty image".into()));
    }
    score_image(&bundle.detector, &pixels)
}
