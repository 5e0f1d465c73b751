//! Class-specific data augmentation.
//!
//! Spam-like samples are built by splicing the left half of one spam image
//! onto the (resized) right half of another, so every synthetic sample keeps
//! both a picture part and a text part. Ham-like samples are retrieved from a
//! [`SimilarImageProvider`] seeded with real ham images.

mod provider;
mod splice;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{perceptual_hash, Corpus, CorpusTag, ImageSample, Label};
use crate::digest::ByteDigest;

pub use provider::{
    color_histogram, histogram_distance, offline_similarity_query, OfflineProvider, ProvidedImage,
    RankedMatch, SimilarImageProvider, HIST_BINS,
};
pub use splice::{splice_spam, SpliceResult};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("sample `{0}` is not labeled spam; splicing must preserve the class")]
    NotSpam(String),
    #[error("sample `{0}` is too narrow to split")]
    TooNarrow(String),
    #[error("need at least {needed} {label} samples, found {found}")]
    NotEnoughSeeds {
        label: Label,
        needed: usize,
        found: usize,
    },
    #[error("similar-image pool is empty")]
    EmptyPool,
    #[error("could only produce {produced} of {target} distinct spliced samples")]
    SpliceExhausted { produced: usize, target: usize },
    #[error("provider failure: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Similar images requested per ham seed (N).
    pub n_similar_per_query: usize,
    pub target_ham_like: usize,
    pub target_spam_like: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig::MIXED
    }
}

impl AugmentConfig {
    /// Targets used for the mixed 60/40 experiment.
    pub const MIXED: AugmentConfig = AugmentConfig {
        n_similar_per_query: 100,
        target_ham_like: 5214,
        target_spam_like: 4497,
        seed: 0,
    };
    /// Train on SpamArchive + normal ham, test on personal corpora.
    pub const CROSS_ARCHIVE_TO_PERSONAL: AugmentConfig = AugmentConfig {
        n_similar_per_query: 100,
        target_ham_like: 5190,
        target_spam_like: 786,
        seed: 0,
    };
    /// Train on personal corpora, test on SpamArchive + normal ham.
    pub const CROSS_PERSONAL_TO_ARCHIVE: AugmentConfig = AugmentConfig {
        n_similar_per_query: 100,
        target_ham_like: 4497,
        target_spam_like: 5214,
        seed: 0,
    };
}

/// Generates `config.target_spam_like` spliced spam samples from the spam in
/// `pool`.
///
/// Each sample draws an ordered pair of distinct spam parents uniformly at
/// random. Candidates whose digest matches a pool sample or an earlier
/// output are redrawn.
pub fn generate_spam_like(pool: &Corpus, config: &AugmentConfig) -> Result<Corpus, AugmentError> {
    let spam: Vec<&ImageSample> = pool.samples().iter().filter(|s| s.label == Label::Spam).collect();
    if spam.len() < 2 {
        return Err(AugmentError::NotEnoughSeeds {
            label: Label::Spam,
            needed: 2,
            found: spam.len(),
        });
    }
    let target = config.target_spam_like;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen: HashSet<ByteDigest> = pool.samples().iter().map(|s| s.byte_digest).collect();
    let mut out = Corpus::new();
    let max_attempts = target.saturating_mul(10).saturating_add(100);
    let mut attempts = 0;
    while out.len() < target {
        if attempts == max_attempts {
            return Err(AugmentError::SpliceExhausted {
                produced: out.len(),
                target,
            });
        }
        attempts += 1;
        let i = rng.random_range(0..spam.len());
        let mut j = rng.random_range(0..spam.len() - 1);
        if j >= i {
            j += 1;
        }
        let result = splice_spam(spam[i], spam[j], false)?;
        let sample = result.into_sample(format!("aug-spam-{:06}", out.len()));
        if seen.insert(sample.byte_digest) {
            out.push(sample).expect("generated ids are unique");
        }
    }
    Ok(out)
}

/// Ham-like samples plus how many were missing when the provider ran dry.
#[derive(Debug, Clone)]
pub struct HamLikeOutcome {
    pub corpus: Corpus,
    pub shortfall: usize,
}

/// Collects `config.target_ham_like` distinct images similar to ham seeds.
///
/// Seeds are visited in shuffled passes; every query asks the provider for
/// up to N images, and results whose digest matches a seed or an earlier
/// output are dropped. If a full pass over all seeds adds nothing, the
/// provider is treated as exhausted and a partial corpus is returned with a
/// non-zero `shortfall`.
pub fn generate_ham_like(
    seeds: &Corpus,
    provider: &dyn SimilarImageProvider,
    config: &AugmentConfig,
) -> Result<HamLikeOutcome, AugmentError> {
    let ham: Vec<&ImageSample> = seeds.samples().iter().filter(|s| s.label == Label::Ham).collect();
    if ham.is_empty() {
        return Err(AugmentError::NotEnoughSeeds {
            label: Label::Ham,
            needed: 1,
            found: 0,
        });
    }
    let target = config.target_ham_like;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut seen: HashSet<ByteDigest> = seeds.samples().iter().map(|s| s.byte_digest).collect();
    let mut out = Corpus::new();
    let mut order: Vec<usize> = (0..ham.len()).collect();
    'passes: while out.len() < target {
        order.shuffle(&mut rng);
        let before = out.len();
        for &k in &order {
            let seed = ham[k];
            for img in provider.query(seed, config.n_similar_per_query)? {
                if !seen.insert(img.byte_digest) {
                    continue;
                }
                let phash = perceptual_hash(&img.pixels);
                let sample = ImageSample {
                    id: format!("aug-ham-{:06}", out.len()),
                    pixels: img.pixels,
                    label: Label::Ham,
                    tag: CorpusTag::Augmented,
                    source_path: img.provenance,
                    byte_digest: img.byte_digest,
                    phash,
                    parents: vec![seed.id.clone()],
                };
                out.push(sample).expect("generated ids are unique");
                if out.len() == target {
                    break 'passes;
                }
            }
        }
        if out.len() == before {
            break;
        }
    }
    let shortfall = target - out.len();
    if shortfall > 0 {
        log::warn!("similar-image provider exhausted: {shortfall} of {target} ham-like samples missing");
    }
    Ok(HamLikeOutcome { corpus: out, shortfall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn img(id: &str, label: Label, salt: u32) -> ImageSample {
        let px = RgbImage::from_fn(16 + salt % 7, 12, |x, y| {
            Rgb([((x * salt) % 256) as u8, ((y * 3 + salt) % 256) as u8, (salt % 256) as u8])
        });
        ImageSample::from_pixels(id, px, label, CorpusTag::PersonalSpam, None)
    }

    fn spam_pool(n: u32) -> Corpus {
        Corpus::from_samples((0..n).map(|i| img(&format!("s{i}"), Label::Spam, i + 1)).collect()).unwrap()
    }

    #[test]
    fn spam_like_count_and_labels() {
        let cfg = AugmentConfig {
            target_spam_like: 25,
            ..Default::default()
        };
        let out = generate_spam_like(&spam_pool(6), &cfg).unwrap();
        assert_eq!(out.len(), 25);
        for s in out.samples() {
            assert_eq!(s.label, Label::Spam);
            assert_eq!(s.tag, CorpusTag::Augmented);
            assert_eq!(s.parents.len(), 2);
            assert_ne!(s.parents[0], s.parents[1]);
        }
    }

    #[test]
    fn zero_target_is_empty() {
        let cfg = AugmentConfig {
            target_spam_like: 0,
            ..Default::default()
        };
        assert!(generate_spam_like(&spam_pool(3), &cfg).unwrap().is_empty());
    }

    #[test]
    fn spam_like_needs_two_parents() {
        let cfg = AugmentConfig::default();
        assert!(matches!(
            generate_spam_like(&spam_pool(1), &cfg),
            Err(AugmentError::NotEnoughSeeds { found: 1, .. })
        ));
    }

    #[test]
    fn fixed_seed_repeats_parent_pairs() {
        let cfg = AugmentConfig {
            target_spam_like: 10,
            seed: 99,
            ..Default::default()
        };
        let pool = spam_pool(8);
        let parents = |c: Corpus| c.samples().iter().map(|s| s.parents.clone()).collect::<Vec<_>>();
        let a = parents(generate_spam_like(&pool, &cfg).unwrap());
        let b = parents(generate_spam_like(&pool, &cfg).unwrap());
        assert_eq!(a, b);
    }

    struct SameImage(ImageSample);

    impl SimilarImageProvider for SameImage {
        fn query(&self, _: &ImageSample, count: usize) -> Result<Vec<ProvidedImage>, AugmentError> {
            Ok(vec![
                ProvidedImage {
                    pixels: self.0.pixels.clone(),
                    provenance: "fixed".into(),
                    byte_digest: self.0.byte_digest,
                };
                count
            ])
        }
    }

    #[test]
    fn constant_provider_yields_one_image_and_shortfall() {
        let seeds = Corpus::from_samples(vec![img("h0", Label::Ham, 3), img("h1", Label::Ham, 4)]).unwrap();
        let provider = SameImage(img("web", Label::Ham, 50));
        let cfg = AugmentConfig {
            n_similar_per_query: 5,
            target_ham_like: 10,
            ..Default::default()
        };
        let out = generate_ham_like(&seeds, &provider, &cfg).unwrap();
        assert_eq!(out.corpus.len(), 1);
        assert_eq!(out.shortfall, 9);
        assert_eq!(out.corpus.samples()[0].label, Label::Ham);
    }

    #[test]
    fn ham_like_needs_a_ham_seed() {
        let seeds = spam_pool(3);
        let provider = SameImage(img("web", Label::Ham, 50));
        assert!(generate_ham_like(&seeds, &provider, &AugmentConfig::default()).is_err());
    }
}
