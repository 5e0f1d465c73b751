use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{forward, loss_and_gradient, Mode};
use super::real::Real;
use super::{NetError, NetParams, Params};
use crate::eval::ConfusionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Single precision.
    Fast,
    /// Double precision throughout (used for gradient checks).
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation-F1 improvement
    /// (0 disables early stopping).
    pub early_stop_patience: usize,
    pub precision_mode: PrecisionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            early_stop_patience: 5,
            precision_mode: PrecisionMode::Fast,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.batch_size == 0 {
            return Err(NetError::TrainConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NetError::TrainConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Network inputs (flattened, `len * input_len` values) with binary labels
/// (`true` = spam).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<f32>,
    pub labels: Vec<bool>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_f1: f64,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(Self::BETA1), T::of(Self::BETA2));
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let step = T::of(lr * c2.sqrt() / c1);
        let eps = T::of(Self::EPS * c2.sqrt());
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        }
    }
}

/// Trains the network and its temporary head with Adam on mean binary
/// cross-entropy plus the L2 penalty.
///
/// Returns the parameters from the epoch with the best validation F1 (ties
/// keep the earlier epoch) and the per-epoch history. Early stopping kicks in
/// after `early_stop_patience` epochs without improvement.
pub fn train(
    params: NetParams,
    train_set: &LabeledSet,
    valid_set: &LabeledSet,
    tc: &TrainConfig,
) -> Result<(NetParams, Vec<EpochRecord>), NetError> {
    tc.validate()?;
    params.config.validate()?;
    let n = params.config.input_len();
    for (name, set) in [("train", train_set), ("valid", valid_set)] {
        if set.is_empty() {
            return Err(NetError::Data(format!("{name} set is empty")));
        }
        if set.inputs.len() != set.len() * n {
            return Err(NetError::Shape(format!(
                "{name} set has {} values for {} labels",
                set.inputs.len(),
                set.len()
            )));
        }
    }
    if tc.epochs == 0 {
        return Ok((params, Vec::new()));
    }
    match tc.precision_mode {
        PrecisionMode::Fast => train_impl::<f32>(params, train_set, valid_set, tc),
        PrecisionMode::Check => {
            let (p, h) = train_impl::<f64>(params.cast(), train_set, valid_set, tc)?;
            Ok((p.cast(), h))
        }
    }
}

fn train_impl<T: Real>(
    mut params: Params<T>,
    train_set: &LabeledSet,
    valid_set: &LabeledSet,
    tc: &TrainConfig,
) -> Result<(Params<T>, Vec<EpochRecord>), NetError> {
    let n = params.config.input_len();
    let inputs: Vec<T> = train_set.inputs.iter().map(|&v| T::of(f64::from(v))).collect();
    let valid_inputs: Vec<T> = valid_set.inputs.iter().map(|&v| T::of(f64::from(v))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, Params<T>)> = None;
    let mut since_best = 0;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let mut batch = Vec::with_capacity(tc.batch_size * n);
        let mut labels = Vec::with_capacity(tc.batch_size);
        for (bi, chunk) in order.chunks(tc.batch_size).enumerate() {
            batch.clear();
            labels.clear();
            for &i in chunk {
                batch.extend_from_slice(&inputs[i * n..(i + 1) * n]);
                labels.push(train_set.labels[i]);
            }
            let (loss, grad) = loss_and_gradient(&params, &batch, &labels, Mode::Train, &mut rng)?;
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            adam.step(&mut params.data, &grad.data, tc.learning_rate);
            loss_sum += loss;
            batches += 1;
        }

        let out = forward(&params, &valid_inputs, Mode::Infer, &mut rng)?;
        let preds: Vec<bool> = out.logits.iter().map(|z| z.f64() > 0.0).collect();
        let valid_f1 = ConfusionMatrix::tally(&preds, &valid_set.labels).f1();
        let train_loss = loss_sum / batches as f64;
        log::debug!("epoch {} loss {train_loss:.4} valid F1 {valid_f1:.4}", epoch + 1);
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            valid_f1,
        });

        if best.as_ref().is_none_or(|(f, _)| valid_f1 > *f) {
            best = Some((valid_f1, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if tc.early_stop_patience > 0 && since_best >= tc.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{build, NetConfig};

    fn small_config() -> NetConfig {
        NetConfig {
            input_shape: (8, 8, 3),
            conv_filters: vec![4, 4],
            kernel_size: 3,
            pool_after: vec![2],
            leaky_alpha: 0.1,
            dropout_rates: vec![0.0],
            l2_coefficient: 1e-4,
        }
    }

    /// Bright images are spam, dark ones ham.
    fn bright_dark(n: usize, cfg: &NetConfig, salt: u64) -> LabeledSet {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        let mut set = LabeledSet::default();
        for i in 0..n {
            let spam = i % 2 == 0;
            let base = if spam { 0.75 } else { 0.15 };
            for _ in 0..cfg.input_len() {
                set.inputs.push(base + rng.random_range(-0.1f32..0.1));
            }
            set.labels.push(spam);
        }
        set
    }

    #[test]
    fn zero_epochs_is_identity() {
        let cfg = small_config();
        let p = build(&cfg, 1).unwrap();
        let data = bright_dark(4, &cfg, 0);
        let tc = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, hist) = train(p.clone(), &data, &data, &tc).unwrap();
        assert_eq!(out, p);
        assert!(hist.is_empty());
    }

    #[test]
    fn separable_toy_reaches_perfect_f1() {
        let cfg = small_config();
        let p = build(&cfg, 3).unwrap();
        let train_set = bright_dark(64, &cfg, 1);
        let valid = bright_dark(32, &cfg, 2);
        let tc = TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 5,
            early_stop_patience: 30,
            precision_mode: PrecisionMode::Fast,
        };
        let (_, hist) = train(p, &train_set, &valid, &tc).unwrap();
        assert!(hist.iter().any(|h| h.valid_f1 == 1.0), "{hist:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_config();
        let data = bright_dark(20, &cfg, 4);
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        };
        let a = train(build(&cfg, 1).unwrap(), &data, &data, &tc).unwrap();
        let b = train(build(&cfg, 1).unwrap(), &data, &data, &tc).unwrap();
        assert_eq!(a.0.to_le_bytes(), b.0.to_le_bytes());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn full_batch_gradient_descent_is_monotone() {
        use crate::convnet::loss_and_gradient;
        let mut cfg = small_config();
        cfg.dropout_rates = vec![0.0];
        let mut p = build(&cfg, 9).unwrap().cast::<f64>();
        let data = bright_dark(16, &cfg, 7);
        let x: Vec<f64> = data.inputs.iter().map(|&v| v as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let (loss, grad) = loss_and_gradient(&p, &x, &data.labels, Mode::Infer, &mut rng).unwrap();
            assert!(loss <= last + 1e-12, "{loss} > {last}");
            last = loss;
            p.add_scaled(&grad, -0.01);
        }
    }

    #[test]
    fn empty_sets_rejected() {
        let cfg = small_config();
        let data = bright_dark(4, &cfg, 0);
        let r = train(build(&cfg, 1).unwrap(), &LabeledSet::default(), &data, &TrainConfig::default());
        assert!(matches!(r, Err(NetError::Data(_))));
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(train(build(&cfg, 1).unwrap(), &data, &data, &bad).is_err());
    }
}
