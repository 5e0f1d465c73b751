//! Trained detectors: a preprocessing path, an optional feature extractor and
//! a classification head.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineError, LinearMarginModel};
use crate::boost::{BoostError, BoostModel};
use crate::convnet::{extract_features, NetError, NetParams};
use crate::corpus::{image_to_net_input, Label, NET_INPUT_LEN};

/// Models a scenario can train. Report rows are keyed by [`ModelId::as_str`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelId {
    /// Convolutional features with a boosted-tree head (the main detector).
    CnnBoostedTrees,
    /// Convolutional features with a linear max-margin head.
    CnnLinearMargin,
    /// Linear max-margin classifier on raw pixels; substitutes for baselines
    /// built on unpublished hand-engineered features.
    PixelMargin,
}

impl ModelId {
    pub const ALL: [ModelId; 3] = [ModelId::CnnBoostedTrees, ModelId::CnnLinearMargin, ModelId::PixelMargin];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::CnnBoostedTrees => "cnn-boosted-trees",
            ModelId::CnnLinearMargin => "cnn-linear-margin",
            ModelId::PixelMargin => "pixel-margin (substitute)",
        }
    }

    pub fn uses_cnn(self) -> bool {
        !matches!(self, ModelId::PixelMargin)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn-boosted-trees" => Ok(ModelId::CnnBoostedTrees),
            "cnn-linear-margin" => Ok(ModelId::CnnLinearMargin),
            "pixel-margin" | "pixel-margin (substitute)" => Ok(ModelId::PixelMargin),
            _ => Err(format!("unknown model id {s:?}")),
        }
    }
}

impl Serialize for ModelId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{0} requires a feature extractor")]
    MissingNet(ModelId),
    #[error("input has {got} values, expected {expected}")]
    InputLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    BoostedTrees(BoostModel),
    LinearMargin(LinearMarginModel),
    PixelMargin(LinearMarginModel),
}

impl Head {
    pub fn model_id(&self) -> ModelId {
        match self {
            Head::BoostedTrees(_) => ModelId::CnnBoostedTrees,
            Head::LinearMargin(_) => ModelId::CnnLinearMargin,
            Head::PixelMargin(_) => ModelId::PixelMargin,
        }
    }

    fn margin(&self, x: &[f32]) -> Result<f64, ModelError> {
        Ok(match self {
            Head::BoostedTrees(m) => m.predict_margin(x)?,
            Head::LinearMargin(m) | Head::PixelMargin(m) => m.margin(x)?,
        })
    }
}

/// A trained model: `spam iff margin > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    /// Present for CNN-based heads.
    pub net: Option<NetParams>,
    pub head: Head,
}

impl Detector {
    pub fn new(net: Option<NetParams>, head: Head) -> Result<Self, ModelError> {
        let id = head.model_id();
        if id.uses_cnn() && net.is_none() {
            return Err(ModelError::MissingNet(id));
        }
        let net = if id.uses_cnn() { net } else { None };
        Ok(Detector { net, head })
    }

    pub fn model_id(&self) -> ModelId {
        self.head.model_id()
    }

    /// Margins for flattened 32×32×3 network inputs.
    pub fn margins(&self, inputs: &[f32]) -> Result<Vec<f64>, ModelError> {
        if !inputs.len().is_multiple_of(NET_INPUT_LEN) {
            return Err(ModelError::InputLength {
                expected: NET_INPUT_LEN * (inputs.len() / NET_INPUT_LEN + 1),
                got: inputs.len(),
            });
        }
        match &self.net {
            Some(net) => extract_features(net, inputs)?.iter().map(|f| self.head.margin(f)).collect(),
            None => inputs.chunks_exact(NET_INPUT_LEN).map(|x| self.head.margin(x)).collect(),
        }
    }

    pub fn margin_image(&self, pixels: &RgbImage) -> Result<f64, ModelError> {
        Ok(self.margins(&image_to_net_input(pixels))?[0])
    }

    pub fn label_for(margin: f64) -> Label {
        if margin > 0.0 {
            Label::Spam
        } else {
            Label::Ham
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ModelId::ALL {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
            let j = serde_json::to_string(&id).unwrap();
            assert_eq!(serde_json::from_str::<ModelId>(&j).unwrap(), id);
        }
        assert!("svm".parse::<ModelId>().is_err());
    }

    #[test]
    fn cnn_heads_need_a_net() {
        let head = Head::LinearMargin(LinearMarginModel::zeros(4096, 1.0));
        assert!(matches!(Detector::new(None, head), Err(ModelError::MissingNet(_))));
    }

    #[test]
    fn pixel_detector_scores_raw_input() {
        let mut m = LinearMarginModel::zeros(NET_INPUT_LEN, 1.0);
        m.weights[0] = 2.0;
        m.bias = -1.0;
        let d = Detector::new(None, Head::PixelMargin(m)).unwrap();
        let mut x = vec![0.0f32; 2 * NET_INPUT_LEN];
        x[0] = 1.0;
        assert_eq!(d.margins(&x).unwrap(), vec![1.0, -1.0]);
        assert!(d.margins(&x[1..]).is_err());
        assert_eq!(Detector::label_for(0.0), Label::Ham);
    }
}
