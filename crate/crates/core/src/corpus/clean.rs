use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::phash::hamming;
use super::{Corpus, CorpusError, ImageSample};

/// Thresholds for removing unusable images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningPolicy {
    /// Images whose shorter side is below this are removed.
    pub min_side_px: u32,
    /// An image is solid-color when every channel's variance (0..255 scale)
    /// is below this.
    pub solid_variance_threshold: f64,
    /// Near-duplicate cutoff on the perceptual-hash Hamming distance.
    pub phash_hamming_threshold: u32,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            min_side_px: 32,
            solid_variance_threshold: 1.0,
            phash_hamming_threshold: 4,
        }
    }
}

impl CleaningPolicy {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.solid_variance_threshold >= 0.0) {
            return Err(CorpusError::BadPolicy(format!(
                "solid_variance_threshold must be non-negative, got {}",
                self.solid_variance_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Unreadable,
    ExactDuplicate,
    NearDuplicate,
    SolidColor,
    TooSmall,
}

impl RemovalReason {
    pub const ALL: [RemovalReason; 5] = [
        RemovalReason::Unreadable,
        RemovalReason::ExactDuplicate,
        RemovalReason::NearDuplicate,
        RemovalReason::SolidColor,
        RemovalReason::TooSmall,
    ];
}

/// Which ids were removed and why.
///
/// `kept_count + total_removed()` equals the input size, where the input
/// size counts both decoded samples and rows flagged unreadable at ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removed: BTreeMap<RemovalReason, Vec<String>>,
    pub kept_count: usize,
}

impl CleaningReport {
    pub fn total_removed(&self) -> usize {
        self.removed.values().map(Vec::len).sum()
    }

    pub fn removed_for(&self, reason: RemovalReason) -> &[String] {
        self.removed.get(&reason).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Removes unusable images in a fixed order of passes: unreadable rows,
/// exact duplicates (by byte digest), near duplicates (by perceptual hash),
/// solid-color images, then too-small images.
///
/// Within a duplicate group the first sample in corpus order survives. The
/// result depends only on the input order, and a second pass removes nothing.
pub fn clean(corpus: Corpus, policy: &CleaningPolicy) -> (Corpus, CleaningReport) {
    let mut removed: BTreeMap<RemovalReason, Vec<String>> =
        RemovalReason::ALL.iter().map(|&r| (r, Vec::new())).collect();
    let unreadable_ids: Vec<String> = corpus.unreadable.iter().map(|r| r.id.clone()).collect();
    removed.insert(RemovalReason::Unreadable, unreadable_ids);

    let mut remaining = corpus.into_samples();

    let mut seen = HashSet::new();
    remaining = partition(remaining, &mut removed, RemovalReason::ExactDuplicate, |s| {
        !seen.insert(s.byte_digest)
    });

    let mut kept_hashes: Vec<u64> = Vec::new();
    remaining = partition(remaining, &mut removed, RemovalReason::NearDuplicate, |s| {
        let dup = kept_hashes
            .iter()
            .any(|&h| hamming(h, s.phash) <= policy.phash_hamming_threshold);
        if !dup {
            kept_hashes.push(s.phash);
        }
        dup
    });

    remaining = partition(remaining, &mut removed, RemovalReason::SolidColor, |s| {
        is_solid(s, policy.solid_variance_threshold)
    });

    remaining = partition(remaining, &mut removed, RemovalReason::TooSmall, |s| {
        s.width().min(s.height()) < policy.min_side_px
    });

    let kept_count = remaining.len();
    let cleaned = Corpus::from_samples(remaining).expect("subset keeps ids unique");
    (cleaned, CleaningReport { removed, kept_count })
}

fn partition(
    samples: Vec<ImageSample>,
    removed: &mut BTreeMap<RemovalReason, Vec<String>>,
    reason: RemovalReason,
    mut remove: impl FnMut(&ImageSample) -> bool,
) -> Vec<ImageSample> {
    let mut kept = Vec::with_capacity(samples.len());
    for s in samples {
        if remove(&s) {
            removed.entry(reason).or_default().push(s.id);
        } else {
            kept.push(s);
        }
    }
    kept
}

/// Population variance of each channel.
pub(crate) fn channel_variances(s: &ImageSample) -> [f64; 3] {
    let n = (s.width() as f64) * (s.height() as f64);
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for p in s.pixels.pixels() {
        for c in 0..3 {
            let v = f64::from(p.0[c]);
            sum[c] += v;
            sq[c] += v * v;
        }
    }
    let mut var = [0.0; 3];
    for c in 0..3 {
        let mean = sum[c] / n;
        var[c] = (sq[c] / n - mean * mean).max(0.0);
    }
    var
}

fn is_solid(s: &ImageSample, threshold: f64) -> bool {
    channel_variances(s).iter().all(|&v| v < threshold)
}
