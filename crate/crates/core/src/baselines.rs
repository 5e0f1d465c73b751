//! Linear max-margin comparison heads: one over CNN features, one over raw
//! 32×32 pixels (a stand-in for hand-engineered-feature SVM baselines).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, NET_INPUT_LEN};

pub const DEFAULT_EPOCHS: usize = 30;
/// Small training sets get extra epochs so every fit takes at least this many
/// stochastic steps.
pub const MIN_STEPS: usize = 20_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("labels contain a single class; both spam and ham are required")]
    SingleClass,
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("feature vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
    #[error("features contain NaN or infinite values")]
    NonFinite,
}

/// `spam iff w·x + b > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMarginModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Trade-off between hinge loss and the `‖w‖² / 2C` penalty.
    pub c: f64,
}

impl LinearMarginModel {
    pub fn zeros(dim: usize, c: f64) -> Self {
        LinearMarginModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            c,
        }
    }

    pub fn margin(&self, x: &[f32]) -> Result<f64, BaselineError> {
        if x.len() != self.weights.len() {
            return Err(BaselineError::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.weights.len() + 2));
        for v in self.weights.iter().chain([&self.bias, &self.c]) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if !bytes.len().is_multiple_of(8) || bytes.len() < 16 {
            return None;
        }
        let mut vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let c = vals.pop()?;
        let bias = vals.pop()?;
        Some(LinearMarginModel {
            weights: vals,
            bias,
            c,
        })
    }
}

fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum()
}

pub fn predict_linear(model: &LinearMarginModel, feature: &[f32]) -> Result<Label, BaselineError> {
    Ok(if model.margin(feature)? > 0.0 {
        Label::Spam
    } else {
        Label::Ham
    })
}

/// `mean hinge + ‖w‖² / 2C`.
pub fn objective(model: &LinearMarginModel, features: &[Vec<f32>], labels: &[bool]) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &l)| {
            let y = if l { 1.0 } else { -1.0 };
            (1.0 - y * (dot(&model.weights, x) + model.bias)).max(0.0)
        })
        .sum();
    hinge / labels.len() as f64 + model.norm().powi(2) / (2.0 * model.c)
}

fn check(features: &[Vec<f32>], labels: &[bool], c: f64) -> Result<usize, BaselineError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(BaselineError::BadC(c));
    }
    if features.len() != labels.len() {
        return Err(BaselineError::LabelCount {
            rows: features.len(),
            labels: labels.len(),
        });
    }
    let spam = labels.iter().filter(|&&l| l).count();
    if spam == 0 || spam == labels.len() {
        return Err(BaselineError::SingleClass);
    }
    let d = features[0].len();
    for x in features {
        if x.len() != d {
            return Err(BaselineError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFinite);
        }
    }
    Ok(d)
}

/// Stochastic subgradient descent on `mean hinge + ‖w‖²/2C` with step
/// `1/(λ(t + t0))`, `λ = 1/C`, the bias left unregularized, examples
/// reshuffled each epoch, and the running average of all iterates returned.
///
/// The offset `t0 = C·R²` (`R²` the largest squared norm of `(x, 1)`) caps the
/// first step near `1/R²`; without it the unregularized bias takes steps of
/// size `C` early on and the average never recovers. Features are centered
/// before descent (an exact reparametrization, since the bias is free) so the
/// bias does not have to travel far along a poorly scaled direction.
pub fn fit_linear_margin(
    features: &[Vec<f32>],
    labels: &[bool],
    c: f64,
    seed: u64,
) -> Result<LinearMarginModel, BaselineError> {
    let epochs = DEFAULT_EPOCHS.max(MIN_STEPS.div_ceil(labels.len().max(1)));
    Ok(fit_linear_margin_traced(features, labels, c, seed, epochs)?.0)
}

/// As [`fit_linear_margin`], also returning the averaged model's objective at
/// the end of every epoch.
pub fn fit_linear_margin_traced(
    features: &[Vec<f32>],
    labels: &[bool],
    c: f64,
    seed: u64,
    epochs: usize,
) -> Result<(LinearMarginModel, Vec<f64>), BaselineError> {
    let d = check(features, labels, c)?;
    let n = labels.len() as f64;
    let mut mean = vec![0.0f64; d];
    for x in features {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m += f64::from(v) / n;
        }
    }
    let centered: Vec<Vec<f32>> = features
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(&v, m)| (f64::from(v) - m) as f32).collect())
        .collect();
    let uncenter = |m: &LinearMarginModel| {
        let mut out = m.clone();
        out.bias -= m.weights.iter().zip(&mean).map(|(w, mu)| w * mu).sum::<f64>();
        out
    };
    let features = &centered[..];
    let lambda = 1.0 / c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    // `w` is kept as `scale * v` so the shrink step costs O(1).
    let mut scale = 1.0;
    let mut avg = LinearMarginModel::zeros(d, c);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    let r2 = features
        .iter()
        .map(|x| 1.0 + x.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>())
        .fold(0.0, f64::max);
    let t0 = c * r2;
    let mut t = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * (t as f64 + t0));
            let y = if labels[i] { 1.0 } else { -1.0 };
            let x = &features[i];
            let m = scale * dot(&w, x) + b;
            scale *= 1.0 - eta * lambda;
            if y * m < 1.0 {
                let step = eta * y / scale;
                for (wj, &xj) in w.iter_mut().zip(x) {
                    *wj += step * f64::from(xj);
                }
                b += eta * y;
            }
            if scale < 1e-100 {
                w.iter_mut().for_each(|v| *v *= scale);
                scale = 1.0;
            }
            let k = 1.0 / t as f64;
            for (a, &v) in avg.weights.iter_mut().zip(&w) {
                *a += k * (scale * v - *a);
            }
            avg.bias += k * (b - avg.bias);
        }
        history.push(objective(&avg, features, labels));
    }
    Ok((uncenter(&avg), history))
}

/// Linear max-margin classifier on flattened, normalized 32×32×3 pixels.
pub fn fit_pixel_margin(
    images: &[Vec<f32>],
    labels: &[bool],
    c: f64,
    seed: u64,
) -> Result<LinearMarginModel, BaselineError> {
    if let Some(x) = images.iter().find(|x| x.len() != NET_INPUT_LEN) {
        return Err(BaselineError::Dimension {
            expected: NET_INPUT_LEN,
            got: x.len(),
        });
    }
    fit_linear_margin(images, labels, c, seed)
}
