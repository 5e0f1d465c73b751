//! Binary gradient-boosted regression trees over feature vectors.

mod fit;
mod search;
mod tree;

pub use fit::{fit, improves, leaf_weight, sigmoid, split_gain, GAIN_TIE_TOLERANCE};
pub use search::{random_search, sample_config, SearchSpace, Trial};
pub use tree::{Node, RegressionTree};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::digest::ByteDigest;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("invalid boosting config: {0}")]
    Config(String),
    #[error("labels contain a single class; both spam and ham are required")]
    SingleClass,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("features contain NaN or infinite values")]
    NonFinite,
    #[error("corrupt tree encoding: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every tree's leaf values.
    pub learning_rate: f64,
    /// Fraction of rows sampled (without replacement) per tree.
    pub subsample: f64,
    /// Fraction of features sampled per tree.
    pub feature_subsample: f64,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    pub lambda_reg: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            num_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            subsample: 0.8,
            feature_subsample: 0.5,
            min_child_weight: 1.0,
            lambda_reg: 1.0,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), BoostError> {
        let bad = |m: &str| Err(BoostError::Config(m.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for (name, v) in [("subsample", self.subsample), ("feature_subsample", self.feature_subsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(BoostError::Config(format!("{name} must be in (0, 1]")));
            }
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be non-negative");
        }
        if !(self.lambda_reg.is_finite() && self.lambda_reg >= 0.0) {
            return bad("lambda_reg must be non-negative");
        }
        Ok(())
    }
}

/// Additive tree ensemble. The margin is `base_score + learning_rate * Σ leaf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub config: BoostConfig,
    pub n_features: usize,
    /// Log-odds of the training spam rate.
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostModel {
    pub fn predict_margin(&self, feature: &[f32]) -> Result<f64, BoostError> {
        if feature.len() != self.n_features {
            return Err(BoostError::FeatureLength {
                expected: self.n_features,
                got: feature.len(),
            });
        }
        let lr = self.config.learning_rate;
        Ok(self.base_score + self.trees.iter().map(|t| lr * t.leaf_value(feature)).sum::<f64>())
    }

    /// Spam iff the margin is strictly above `threshold`.
    pub fn predict(&self, feature: &[f32], threshold: f64) -> Result<Label, BoostError> {
        Ok(if self.predict_margin(feature)? > threshold {
            Label::Spam
        } else {
            Label::Ham
        })
    }

    /// Canonical little-endian encoding of the fitted state: feature count,
    /// base score, then each tree as a preorder node list.
    pub fn trees_to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        out.extend_from_slice(&self.base_score.to_le_bytes());
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            out.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                match *n {
                    Node::Split {
                        feature,
                        threshold,
                        gain,
                        right,
                    } => {
                        out.push(0);
                        out.extend_from_slice(&feature.to_le_bytes());
                        out.extend_from_slice(&threshold.to_le_bytes());
                        out.extend_from_slice(&gain.to_le_bytes());
                        out.extend_from_slice(&right.to_le_bytes());
                    }
                    Node::Leaf { value } => {
                        out.push(1);
                        out.extend_from_slice(&value.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn trees_from_bytes(config: BoostConfig, bytes: &[u8]) -> Result<Self, BoostError> {
        let mut r = Reader { bytes, at: 0 };
        let n_features = r.u32()? as usize;
        let base_score = r.f64()?;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => Node::Split {
                        feature: r.u32()?,
                        threshold: r.f64()?,
                        gain: r.f64()?,
                        right: r.u32()?,
                    },
                    1 => Node::Leaf { value: r.f64()? },
                    t => return Err(BoostError::Decode(format!("unknown node tag {t}"))),
                });
            }
            let tree = RegressionTree { nodes };
            if !tree.is_well_formed(n_features) {
                return Err(BoostError::Decode("malformed tree".into()));
            }
            trees.push(tree);
        }
        if r.at != bytes.len() {
            return Err(BoostError::Decode("trailing bytes".into()));
        }
        Ok(BoostModel {
            config,
            n_features,
            base_score,
            trees,
        })
    }

    pub fn digest(&self) -> ByteDigest {
        let mut bytes = serde_json::to_vec(&self.config).expect("config serializes");
        bytes.extend(self.trees_to_bytes());
        ByteDigest::of(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], BoostError> {
        let end = self.at + N;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| BoostError::Decode("truncated".into()))?;
        self.at = end;
        Ok(s.try_into().expect("slice length checked"))
    }
    fn u8(&mut self) -> Result<u8, BoostError> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, BoostError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, BoostError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}
