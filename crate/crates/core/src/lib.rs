//! Image spam detection toolkit.
//!
//! The pipeline runs in stages that mirror how a mail-security team would
//! build a detector from raw attachments:
//!
//! 1. [`corpus`]: ingest labeled image files from a manifest, drop duplicates
//!    and unusable images, and split into train/test sets.
//! 2. [`augment`]: synthesize extra training samples, spam by splicing the
//!    halves of two spam images, ham by retrieving visually similar images.
//! 3. [`convnet`]: a six-layer convolutional feature extractor trained with a
//!    temporary logistic head.
//! 4. [`boost`]: a gradient-boosted tree classifier over the extracted
//!    features, tuned by random search.
//! 5. [`baselines`]: linear max-margin comparison heads.
//! 6. [`eval`]: metrics, experiment scenarios and report rendering.
//! 7. [`bundle`] / [`config`]: model persistence and run configuration.

pub mod augment;
pub mod baselines;
pub mod boost;
pub mod bundle;
pub mod config;
pub mod convnet;
pub mod corpus;
pub mod digest;
pub mod eval;
pub mod imaging;
pub mod model;
pub mod synth;

pub use augment::{AugmentConfig, OfflineProvider, SimilarImageProvider, SpliceResult};
pub use boost::{BoostConfig, BoostModel, SearchSpace};
pub use bundle::{ModelBundle, BUNDLE_FORMAT_VERSION};
pub use config::RunConfig;
pub use convnet::{NetConfig, NetParams, TrainConfig};
pub use corpus::{
    CleaningPolicy, CleaningReport, Corpus, CorpusTag, ImageSample, Label, SplitSpec,
};
pub use digest::ByteDigest;
pub use eval::{ConfusionMatrix, MetricsReport, ScenarioSpec};
pub use model::{Detector, ModelId};
