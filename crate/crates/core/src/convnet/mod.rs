//! Compact convolutional feature extractor.
//!
//! The reference architecture stacks six same-padded 3x3 convolutions with
//! Leaky ReLU, 2x2 max pooling (plus dropout while training) after the third
//! and sixth, and flattens the final 8x8x64 map into a 4096-dim feature
//! vector. A single-unit logistic head is attached only for training and is
//! ignored when extracting features.
//!
//! Parameters live in one flat buffer with a named, layer-ordered layout so
//! optimizers, gradient checks and serialization all see the same view.

mod gradcheck;
mod net;
pub mod real;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{gradient_check, gradient_check_coords, GradientCheck};
pub use net::{extract_features, forward, loss_and_gradient, ForwardOutput, Mode};
pub use real::Real;
pub use train::{train, EpochRecord, LabeledSet, PrecisionMode, TrainConfig};

pub const KERNEL: usize = 3;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    TrainConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("training data: {0}")]
    Data(String),
}

/// Architecture of the feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Height, width, channels.
    pub input_shape: (usize, usize, usize),
    /// Output filters of each 3x3 convolution, in order.
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    /// 1-based conv layer indices followed by a 2x2/stride-2 max pool.
    pub pool_after: Vec<usize>,
    pub leaky_alpha: f64,
    /// Dropout rate applied after each pooling block (training only).
    pub dropout_rates: Vec<f64>,
    pub l2_coefficient: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_shape: (32, 32, 3),
            conv_filters: vec![32, 32, 32, 64, 64, 64],
            kernel_size: KERNEL,
            pool_after: vec![3, 6],
            leaky_alpha: 0.1,
            dropout_rates: vec![0.25, 0.25],
            l2_coefficient: 1e-4,
        }
    }
}

impl NetConfig {
    /// 4×4 single-channel input, one 3-filter convolution, no pooling: small
    /// enough for exhaustive gradient checks and fixtures.
    pub fn toy() -> Self {
        NetConfig {
            input_shape: (4, 4, 1),
            conv_filters: vec![3],
            kernel_size: KERNEL,
            pool_after: vec![],
            leaky_alpha: 0.1,
            dropout_rates: vec![],
            l2_coefficient: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return bad(format!("input shape {:?} has a zero dimension", self.input_shape));
        }
        if self.kernel_size != KERNEL {
            return bad(format!("kernel size must be {KERNEL}, got {}", self.kernel_size));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("every conv layer needs at least one filter".into());
        }
        if self.pool_after.windows(2).any(|p| p[0] >= p[1])
            || self.pool_after.iter().any(|&p| p == 0 || p > self.conv_filters.len())
        {
            return bad(format!("pool_after {:?} must be increasing layer indices", self.pool_after));
        }
        if self.dropout_rates.len() != self.pool_after.len() {
            return bad("one dropout rate per pooling block is required".into());
        }
        if self.dropout_rates.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if !(self.leaky_alpha.is_finite() && self.leaky_alpha >= 0.0) {
            return bad("leaky_alpha must be finite and non-negative".into());
        }
        if !(self.l2_coefficient.is_finite() && self.l2_coefficient >= 0.0) {
            return bad("l2_coefficient must be finite and non-negative".into());
        }
        let (mut h, mut w) = (h, w);
        for _ in &self.pool_after {
            if h % 2 != 0 || w % 2 != 0 {
                return bad(format!("cannot 2x2-pool a {h}x{w} map"));
            }
            h /= 2;
            w /= 2;
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    /// Spatial size after all pooling.
    pub fn output_hw(&self) -> (usize, usize) {
        let shrink = 1 << self.pool_after.len();
        (self.input_shape.0 / shrink, self.input_shape.1 / shrink)
    }

    pub fn feature_len(&self) -> usize {
        let (h, w) = self.output_hw();
        h * w * self.conv_filters.last().copied().unwrap_or(0)
    }

    /// The six-conv, two-pool reference architecture.
    pub fn is_reference_shape(&self) -> bool {
        self.conv_filters.len() == 6 && self.pool_after == [3, 6] && self.input_shape == (32, 32, 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Weight,
    Bias,
}

/// Where one named tensor lives inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSlot {
    pub name: String,
    pub kind: SlotKind,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Layer-ordered tensor layout: `conv{i}.weight` `[3, 3, cin, cout]`,
/// `conv{i}.bias` `[cout]` for each conv, then `head.weight` `[features]`
/// and `head.bias` `[1]`.
pub fn layout(config: &NetConfig) -> Vec<TensorSlot> {
    let mut slots = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, kind, shape: Vec<usize>| {
        let len: usize = shape.iter().product();
        slots.push(TensorSlot {
            name,
            kind,
            shape,
            offset,
        });
        offset += len;
    };
    let mut cin = config.input_shape.2;
    for (i, &cout) in config.conv_filters.iter().enumerate() {
        push(format!("conv{}.weight", i + 1), SlotKind::Weight, vec![KERNEL, KERNEL, cin, cout]);
        push(format!("conv{}.bias", i + 1), SlotKind::Bias, vec![cout]);
        cin = cout;
    }
    push("head.weight".into(), SlotKind::Weight, vec![config.feature_len()]);
    push("head.bias".into(), SlotKind::Bias, vec![1]);
    slots
}

/// Network weights in a flat buffer plus the layout describing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub config: NetConfig,
    pub slots: Vec<TensorSlot>,
    pub data: Vec<T>,
    pub seed: u64,
}

/// Stored parameters are single precision.
pub type NetParams = Params<f32>;

impl<T: Real> Params<T> {
    pub fn zeros(config: &NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let slots = layout(config);
        let total = slots.last().map(|s| s.offset + s.len()).unwrap_or(0);
        Ok(Params {
            config: config.clone(),
            slots,
            data: vec![T::zero(); total],
            seed: 0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            config: self.config.clone(),
            slots: self.slots.clone(),
            data: vec![T::zero(); self.data.len()],
            seed: self.seed,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.slot(name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.slot(name)?.range();
        Some(&mut self.data[r])
    }

    pub fn conv_weight(&self, layer: usize) -> &[T] {
        &self.data[self.slots[2 * layer].range()]
    }

    pub fn conv_bias(&self, layer: usize) -> &[T] {
        &self.data[self.slots[2 * layer + 1].range()]
    }

    pub fn head_weight(&self) -> &[T] {
        let n = self.slots.len();
        &self.data[self.slots[n - 2].range()]
    }

    pub fn head_bias(&self) -> T {
        *self.data.last().expect("head bias present")
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            slots: self.slots.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
            seed: self.seed,
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params<T>, scale: T) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * b;
        }
    }

    /// Sum of squares over weight tensors (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.slots
            .iter()
            .filter(|s| s.kind == SlotKind::Weight)
            .flat_map(|s| self.data[s.range()].iter())
            .map(|v| v.f64() * v.f64())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl NetParams {
    /// Little-endian byte image of the parameter buffer.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// He-normal initialization (std `sqrt(2 / fan_in)`) for conv weights,
/// `sqrt(1 / fan_in)` for the logistic head, zero biases.
pub fn build(config: &NetConfig, seed: u64) -> Result<NetParams, NetError> {
    let mut p = NetParams::zeros(config)?;
    p.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_slots = p.slots.len();
    for (i, slot) in p.slots.iter().enumerate() {
        if slot.kind != SlotKind::Weight {
            continue;
        }
        let is_head = i == n_slots - 2;
        let fan_in: usize = if is_head { slot.len() } else { slot.shape[..3].iter().product() };
        let std = if is_head {
            (1.0 / fan_in as f64).sqrt()
        } else {
            (2.0 / fan_in as f64).sqrt()
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        for v in &mut p.data[slot.range()] {
            *v = normal.sample(&mut rng) as f32;
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_shapes() {
        let c = NetConfig::default();
        c.validate().unwrap();
        assert!(c.is_reference_shape());
        assert_eq!(c.feature_len(), 4096);
        assert_eq!(c.output_hw(), (8, 8));
        let p = build(&c, 1).unwrap();
        assert_eq!(p.slot("conv1.weight").unwrap().shape, [3, 3, 3, 32]);
        assert_eq!(p.slot("conv4.weight").unwrap().shape, [3, 3, 32, 64]);
        assert_eq!(p.slot("head.weight").unwrap().shape, [4096]);
        assert!(p.tensor("conv1.bias").unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let c = NetConfig::default();
        let a = build(&c, 7).unwrap();
        let b = build(&c, 7).unwrap();
        assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        let other = build(&c, 8).unwrap();
        assert_ne!(
            crate::digest::ByteDigest::of(&a.to_le_bytes()),
            crate::digest::ByteDigest::of(&other.to_le_bytes())
        );
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut c = NetConfig::default();
        c.kernel_size = 5;
        assert!(build(&c, 0).is_err());
        let mut c = NetConfig::default();
        c.dropout_rates = vec![0.25];
        assert!(c.validate().is_err());
        let mut c = NetConfig::default();
        c.input_shape = (30, 30, 3);
        assert!(c.validate().is_err(), "30 -> 15 cannot pool again");
        let mut c = NetConfig::default();
        c.pool_after = vec![6, 3];
        assert!(c.validate().is_err());
    }
}
