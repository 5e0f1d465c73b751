use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{percent, ConfusionMatrix};
use super::EvalError;
use crate::model::ModelId;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub model_id: ModelId,
    pub augmentation: bool,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    /// Wall-clock seconds spent fitting (including the shared CNN for
    /// CNN-based models).
    pub train_seconds: f64,
    /// Wall-clock seconds to score the whole test set.
    pub test_seconds: f64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub annotations: Vec<String>,
}

/// Train/test separation check recorded for every scenario run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub scenario_id: String,
    pub augmentation: bool,
    pub train_samples: usize,
    pub augmented_in_training: usize,
    pub test_samples: usize,
    /// Test samples whose byte digest also occurs in training.
    pub digest_overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
}

impl Hardware {
    pub fn current() -> Self {
        Hardware {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// One scenario run (possibly both augmentation settings) as a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub scenario_id: String,
    pub hardware: Hardware,
    pub reports: Vec<MetricsReport>,
    pub audits: Vec<LeakageAudit>,
}

impl ReportDocument {
    pub fn new(scenario_id: impl Into<String>, reports: Vec<MetricsReport>, audits: Vec<LeakageAudit>) -> Self {
        ReportDocument {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario_id: scenario_id.into(),
            hardware: Hardware::current(),
            reports,
            audits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TableText,
    Structured,
}

fn row_label(r: &MetricsReport) -> String {
    if r.augmentation {
        format!("{} with DA", r.model_id)
    } else {
        r.model_id.to_string()
    }
}

/// Renders a report document. The text form has one row per (model,
/// augmentation) with integer percentages rounded half up, then a timing
/// table; the structured form is lossless JSON.
pub fn emit_report(doc: &ReportDocument, format: ReportFormat) -> Result<String, EvalError> {
    if doc.reports.is_empty() {
        return Err(EvalError::EmptyReports);
    }
    match format {
        ReportFormat::Structured => Ok(serde_json::to_string_pretty(doc).expect("report serializes")),
        ReportFormat::TableText => Ok(table_text(doc)),
    }
}

pub fn parse_structured(text: &str) -> Result<ReportDocument, EvalError> {
    let doc: ReportDocument = serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    if doc.schema_version != REPORT_SCHEMA_VERSION {
        return Err(EvalError::Parse(format!(
            "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    Ok(doc)
}

fn table_text(doc: &ReportDocument) -> String {
    let mut rows: Vec<&MetricsReport> = doc.reports.iter().collect();
    rows.sort_by_key(|r| (r.model_id, r.augmentation));
    let width = rows.iter().map(|r| row_label(r).len()).max().unwrap_or(0).max("Model".len());
    let mut out = String::new();
    let mut notes: Vec<String> = Vec::new();

    let _ = writeln!(out, "Performance of classifiers (scenario: {}; DA = data augmentation)", doc.scenario_id);
    let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}  {:>5}", "Model", "Acc", "Pre", "Rec", "F1");
    for r in &rows {
        let mut cells = [r.accuracy, r.precision, r.recall, r.f1].map(|v| format!("{}%", percent(v)));
        if r.confusion.tp + r.confusion.fp == 0 {
            cells[1].push('*');
        }
        if r.confusion.tp + r.confusion.fn_ == 0 {
            cells[2].push('*');
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>5}  {:>5}  {:>5}",
            row_label(r),
            cells[0],
            cells[1],
            cells[2],
            cells[3]
        );
        for a in &r.annotations {
            let note = format!("{}: {a}", row_label(r));
            if !notes.contains(&note) {
                notes.push(note);
            }
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Training and testing times (sec.)");
    let _ = writeln!(out, "{:<width$}  {:>13}  {:>12}", "Model", "Training time", "Testing time");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>13.2}  {:>12.2}",
            row_label(r),
            r.train_seconds,
            r.test_seconds
        );
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Leakage audit");
    for a in &doc.audits {
        let _ = writeln!(
            out,
            "{} (DA {}): train {} (augmented {}), test {}, shared digests {}",
            a.scenario_id,
            if a.augmentation { "on" } else { "off" },
            a.train_samples,
            a.augmented_in_training,
            a.test_samples,
            a.digest_overlap
        );
    }
    let _ = writeln!(
        out,
        "Hardware: {} {} ({} logical CPUs)",
        doc.hardware.os, doc.hardware.arch, doc.hardware.logical_cpus
    );
    if !notes.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "* Notes");
        for n in notes {
            let _ = writeln!(out, "  {n}");
        }
    }
    out
}
