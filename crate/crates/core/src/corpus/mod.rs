//! Labeled image corpora: ingestion from manifests, cleaning, splitting and
//! conversion to network input tensors.

mod clean;
mod manifest;
mod phash;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ByteDigest;
use crate::imaging;

pub use clean::{clean, CleaningPolicy, CleaningReport, RemovalReason};
pub use manifest::{parse_manifest, write_corpus, ManifestEntry};
pub use phash::{hamming, perceptual_hash};
pub use split::{stratified_split, SplitSpec};

/// Side length of the square network input.
pub const NET_INPUT_SIDE: usize = 32;
/// Number of reals in one network input (32 x 32 x 3).
pub const NET_INPUT_LEN: usize = NET_INPUT_SIDE * NET_INPUT_SIDE * 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    ManifestIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    ManifestSyntax { line: usize, message: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("label `{label}` has {count} sample(s); a stratified split needs at least 2")]
    TooFewSamples { label: Label, count: usize },
    #[error("train fraction {0} is outside (0, 1)")]
    BadTrainFraction(f64),
    #[error("invalid cleaning policy: {0}")]
    BadPolicy(String),
    #[error("sample `{0}` is unlabeled and cannot be written to a manifest")]
    Unlabeled(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Spam,
    Ham,
    Unlabeled,
}

impl Label {
    pub fn is_spam(self) -> bool {
        self == Label::Spam
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Spam => "spam",
            Label::Ham => "ham",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spam" => Ok(Label::Spam),
            "ham" => Ok(Label::Ham),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Which source collection a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusTag {
    PersonalSpam,
    SpamarchiveSpam,
    PersonalHam,
    NormalHam,
    Synthetic,
    Augmented,
}

impl CorpusTag {
    pub const ALL: [CorpusTag; 6] = [
        CorpusTag::PersonalSpam,
        CorpusTag::SpamarchiveSpam,
        CorpusTag::PersonalHam,
        CorpusTag::NormalHam,
        CorpusTag::Synthetic,
        CorpusTag::Augmented,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusTag::PersonalSpam => "personal_spam",
            CorpusTag::SpamarchiveSpam => "spamarchive_spam",
            CorpusTag::PersonalHam => "personal_ham",
            CorpusTag::NormalHam => "normal_ham",
            CorpusTag::Synthetic => "synthetic",
            CorpusTag::Augmented => "augmented",
        }
    }
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorpusTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown corpus tag `{s}`"))
    }
}

/// One labeled image.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub id: String,
    pub pixels: RgbImage,
    pub label: Label,
    pub tag: CorpusTag,
    pub source_path: String,
    pub byte_digest: ByteDigest,
    pub phash: u64,
    /// Ids of the samples this one was derived from (augmented samples only).
    pub parents: Vec<String>,
}

impl ImageSample {
    /// Builds a sample from decoded pixels. The digest is taken over
    /// `original_bytes` when given, else over the canonical PNG encoding.
    pub fn from_pixels(
        id: impl Into<String>,
        pixels: RgbImage,
        label: Label,
        tag: CorpusTag,
        original_bytes: Option<&[u8]>,
    ) -> Self {
        let byte_digest = match original_bytes {
            Some(b) => ByteDigest::of(b),
            None => ByteDigest::of(&imaging::encode_png(&pixels)),
        };
        let phash = perceptual_hash(&pixels);
        ImageSample {
            id: id.into(),
            pixels,
            label,
            tag,
            source_path: String::new(),
            byte_digest,
            phash,
            parents: Vec::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// A manifest row whose image could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub line: usize,
    pub path: String,
    pub reason: String,
}

/// Ordered collection of samples with per-tag counts.
///
/// `counts` always equals the tally of `samples` per tag and ids are unique;
/// both are enforced by the constructors.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    samples: Vec<ImageSample>,
    counts: BTreeMap<CorpusTag, usize>,
    ids: HashSet<String>,
    /// Rows flagged during ingestion; not part of `samples`.
    pub unreadable: Vec<SkipRecord>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<ImageSample>) -> Result<Self, CorpusError> {
        let mut c = Corpus::new();
        for s in samples {
            c.push(s)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, sample: ImageSample) -> Result<(), CorpusError> {
        if !self.ids.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId(sample.id));
        }
        *self.counts.entry(sample.tag).or_default() += 1;
        self.samples.push(sample);
        Ok(())
    }

    /// Appends every sample of `other`, keeping order.
    pub fn extend(&mut self, other: Corpus) -> Result<(), CorpusError> {
        for s in other.samples {
            self.push(s)?;
        }
        self.unreadable.extend(other.unreadable);
        Ok(())
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<ImageSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Count for one tag (zero when absent).
    pub fn count(&self, tag: CorpusTag) -> usize {
        self.counts.get(&tag).copied().unwrap_or(0)
    }

    /// Counts for every tag, including zeros.
    pub fn counts(&self) -> BTreeMap<CorpusTag, usize> {
        CorpusTag::ALL.iter().map(|&t| (t, self.count(t))).collect()
    }

    pub fn label_count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Samples whose tag is in `tags`, in order.
    pub fn filter_tags(&self, tags: &[CorpusTag]) -> Corpus {
        let kept = self
            .samples
            .iter()
            .filter(|s| tags.contains(&s.tag))
            .cloned()
            .collect();
        Corpus::from_samples(kept).expect("subset of a valid corpus has unique ids")
    }

    pub fn filter_label(&self, label: Label) -> Corpus {
        let kept = self
            .samples
            .iter()
            .filter(|s| s.label == label)
            .cloned()
            .collect();
        Corpus::from_samples(kept).expect("subset of a valid corpus has unique ids")
    }
}

/// Reads a manifest and decodes every image it names.
///
/// Paths are resolved relative to the manifest's directory. Rows whose file
/// is missing or fails to decode are recorded in [`Corpus::unreadable`].
pub fn ingest(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| CorpusError::ManifestIo {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let entries = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let ids: Vec<String> = entries
        .iter()
        .map(|e| {
            let n = seen.entry(e.path.clone()).or_default();
            *n += 1;
            if *n == 1 {
                e.path.clone()
            } else {
                format!("{}#{}", e.path, n)
            }
        })
        .collect();

    let decoded: Vec<Result<ImageSample, SkipRecord>> = entries
        .par_iter()
        .zip(ids.par_iter())
        .map(|(entry, id)| {
            let full = base.join(&entry.path);
            let skip = |reason: String| SkipRecord {
                id: id.clone(),
                line: entry.line,
                path: entry.path.clone(),
                reason,
            };
            let bytes = std::fs::read(&full).map_err(|e| skip(e.to_string()))?;
            let pixels = imaging::decode_rgb(&bytes).map_err(|e| skip(e.to_string()))?;
            if pixels.width() == 0 || pixels.height() == 0 {
                return Err(skip("empty image".into()));
            }
            let mut s =
                ImageSample::from_pixels(id.clone(), pixels, entry.label, entry.tag, Some(&bytes));
            s.source_path = full.to_string_lossy().into_owned();
            Ok(s)
        })
        .collect();

    let mut corpus = Corpus::new();
    for d in decoded {
        match d {
            Ok(s) => corpus.push(s)?,
            Err(skip) => {
                log::warn!("skipping {} (line {}): {}", skip.path, skip.line, skip.reason);
                corpus.unreadable.push(skip);
            }
        }
    }
    Ok(corpus)
}

/// Resizes a sample to the 32x32x3 network input, scaled to [0, 1], HWC order.
pub fn to_net_input(sample: &ImageSample) -> Vec<f32> {
    image_to_net_input(&sample.pixels)
}

pub fn image_to_net_input(pixels: &RgbImage) -> Vec<f32> {
    let mut v = imaging::resize_bilinear(pixels, NET_INPUT_SIDE, NET_INPUT_SIDE);
    for x in &mut v {
        *x /= 255.0;
    }
    v
}
