use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;

/// Binary confusion counts with spam as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl ConfusionMatrix {
    /// Counts over boolean predictions (`true` = spam). Lengths must match.
    pub fn tally(preds: &[bool], truth: &[bool]) -> Self {
        assert_eq!(preds.len(), truth.len(), "prediction/truth length mismatch");
        let mut m = ConfusionMatrix::default();
        for (&p, &t) in preds.iter().zip(truth) {
            match (p, t) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fn_ += 1,
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// 0 when nothing was predicted spam.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no spam samples.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy(),
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }

    /// Notes for cells whose value comes from the zero-denominator rule.
    pub fn annotations(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.tp + self.fp == 0 {
            notes.push("precision undefined (no spam predictions), reported as 0".to_string());
        }
        if self.tp + self.fn_ == 0 {
            notes.push("recall undefined (no spam in test set), reported as 0".to_string());
        }
        notes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion counts and the four metrics for spam/ham predictions.
pub fn compute_metrics(preds: &[Label], truth: &[Label]) -> Result<(ConfusionMatrix, Metrics), EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if let Some(l) = preds.iter().chain(truth).find(|l| **l == Label::Unlabeled) {
        return Err(EvalError::Unlabeled(*l));
    }
    let p: Vec<bool> = preds.iter().map(|l| l.is_spam()).collect();
    let t: Vec<bool> = truth.iter().map(|l| l.is_spam()).collect();
    let cm = ConfusionMatrix::tally(&p, &t);
    Ok((cm, cm.metrics()))
}

/// Integer percentage, rounded half up.
pub fn percent(v: f64) -> u32 {
    // The small offset absorbs binary representation error in values such as
    // 0.875 that are meant to sit exactly on a half.
    (v * 100.0 + 0.5 + 1e-9).floor().max(0.0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_of_table_row() {
        let f = f1_score(0.91, 0.85);
        assert!((f - 0.879_000_000).abs() < 5e-5, "{f}");
        assert_eq!(percent(f), 88);
    }

    #[test]
    fn all_correct_is_perfect() {
        let t = [Label::Spam, Label::Ham, Label::Spam];
        let (cm, m) = compute_metrics(&t, &t).unwrap();
        assert_eq!(cm.total(), 3);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(compute_metrics(&[], &[]), Err(EvalError::EmptyPredictions)));
        assert!(compute_metrics(&[Label::Spam], &[]).is_err());
        assert!(compute_metrics(&[Label::Unlabeled], &[Label::Spam]).is_err());
    }

    #[test]
    fn zero_denominators() {
        let cm = ConfusionMatrix::tally(&[false, false], &[false, false]);
        assert_eq!(cm.precision(), 0.0);
        assert_eq!(cm.recall(), 0.0);
        assert_eq!(cm.f1(), 0.0);
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.annotations().len(), 2);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(percent(0.875), 88);
        assert_eq!(percent(0.8749), 87);
        assert_eq!(percent(0.005), 1);
        assert_eq!(percent(1.0), 100);
        assert_eq!(percent(0.0), 0);
    }

    proptest! {
        #[test]
        fn metric_identities(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::tally(&p, &t);
            let m = cm.metrics();
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert_eq!(m.f1 == 0.0, cm.tp == 0);
            prop_assert_eq!(cm.total() as usize, p.len());
        }
    }
}
