use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use imgspam_core::model::ModelId;

#[derive(Debug, Parser)]
#[command(name = "imgspam", version, about = "Image spam detection pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// mixed, cross-archive-to-personal (cross-1) or cross-personal-to-archive (cross-2).
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Train with augmented samples only.
    #[arg(long, global = true, conflicts_with = "no_augment")]
    pub augment: bool,
    /// Train without augmented samples only.
    #[arg(long, global = true)]
    pub no_augment: bool,
    /// Model bundle to write (train) or read (predict, serve).
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormatArg::Text)]
    pub report_format: ReportFormatArg,
}

impl GlobalArgs {
    pub fn augmentation(&self) -> Option<bool> {
        match (self.augment, self.no_augment) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormatArg {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a manifest and summarize what decoded.
    Ingest {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Ingest, remove unusable and duplicate images, print the cleaning report.
    Clean {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write the cleaned corpus (images + manifest) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate augmented samples from the scenario's training split.
    Augment {
        /// Directory for the augmented images and their manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and save it as a bundle.
    Train {
        #[arg(long, default_value = "cnn-boosted-trees")]
        model: ModelId,
    },
    /// Run a scenario and print its performance report.
    Evaluate,
    /// Run the cross-source scenarios and print their reports.
    CrossEval,
    /// Score images with a bundle; one JSON line per image.
    Predict {
        /// Image file or directory of images.
        #[arg(long)]
        input: PathBuf,
    },
    /// Serve a bundle over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Upload size cap in bytes.
        #[arg(long, default_value_t = crate::serve::DEFAULT_MAX_UPLOAD)]
        max_upload: usize,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Write the built-in synthetic corpus to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spam: Option<usize>,
        #[arg(long)]
        ham: Option<usize>,
        #[arg(long)]
        pool: Option<usize>,
    },
}
