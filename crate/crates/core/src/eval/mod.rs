//! Metrics, experiment scenarios and report rendering.

mod metrics;
mod report;
mod scenario;

pub use metrics::{compute_metrics, f1_score, percent, ConfusionMatrix, Metrics};
pub use report::{
    emit_report, parse_structured, Hardware, LeakageAudit, MetricsReport, ReportDocument, ReportFormat,
    REPORT_SCHEMA_VERSION,
};
pub use scenario::{
    augment_training, run_scenario, scenario_sets, BoostTuning, PipelineConfig, ScenarioKind, ScenarioOutcome, ScenarioSpec,
    CROSS_ARCHIVE_TO_PERSONAL_ID, CROSS_PERSONAL_TO_ARCHIVE_ID, MIXED_ID,
};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::baselines::BaselineError;
use crate::boost::BoostError;
use crate::convnet::NetError;
use crate::corpus::{CorpusError, Label};
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("{preds} predictions for {truth} ground-truth labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("cannot score a {0} label")]
    Unlabeled(Label),
    #[error("no reports to render")]
    EmptyReports,
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("train/test leakage: {0} test samples share a byte digest with training data")]
    Leakage(usize),
    #[error("{0} augmented samples reached training with augmentation disabled")]
    AugmentationIsolation(usize),
    #[error("cannot parse report: {0}")]
    Parse(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
