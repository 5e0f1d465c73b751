use image::RgbImage;

use super::AugmentError;
use crate::corpus::{Corpus, ImageSample};
use crate::digest::ByteDigest;

pub const HIST_BINS: usize = 8;

/// An image returned by a similarity search.
#[derive(Debug, Clone)]
pub struct ProvidedImage {
    pub pixels: RgbImage,
    pub provenance: String,
    pub byte_digest: ByteDigest,
}

/// Source of images visually similar to a query.
pub trait SimilarImageProvider {
    /// At most `count` images similar to `image`, most similar first.
    fn query(&self, image: &ImageSample, count: usize) -> Result<Vec<ProvidedImage>, AugmentError>;
}

/// Per-channel 8-bin color histogram, each channel normalized to sum to 1.
pub fn color_histogram(img: &RgbImage) -> [f64; 3 * HIST_BINS] {
    let mut h = [0.0; 3 * HIST_BINS];
    for p in img.pixels() {
        for c in 0..3 {
            h[c * HIST_BINS + usize::from(p.0[c]) / (256 / HIST_BINS)] += 1.0;
        }
    }
    let n = f64::from(img.width()) * f64::from(img.height());
    if n > 0.0 {
        for v in &mut h {
            *v /= n;
        }
    }
    h
}

pub fn histogram_distance(a: &[f64; 3 * HIST_BINS], b: &[f64; 3 * HIST_BINS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedMatch {
    pub id: String,
    pub distance: f64,
}

/// Ranks `pool` by ascending histogram L1 distance to `query` (ties by id)
/// and returns the first `count`.
pub fn offline_similarity_query(query: &ImageSample, pool: &Corpus, count: usize) -> Vec<RankedMatch> {
    OfflineProvider::new(pool).rank(query, count)
        .into_iter()
        .map(|(i, distance)| RankedMatch {
            id: pool.samples()[i].id.clone(),
            distance,
        })
        .collect()
}

/// Deterministic nearest-neighbor search over a fixed image pool.
pub struct OfflineProvider<'a> {
    pool: &'a Corpus,
    histograms: Vec<[f64; 3 * HIST_BINS]>,
}

impl<'a> OfflineProvider<'a> {
    pub fn new(pool: &'a Corpus) -> Self {
        let histograms = pool.samples().iter().map(|s| color_histogram(&s.pixels)).collect();
        OfflineProvider { pool, histograms }
    }

    /// Pool indices and distances of the `count` nearest images.
    fn rank(&self, query: &ImageSample, count: usize) -> Vec<(usize, f64)> {
        let qh = color_histogram(&query.pixels);
        let samples = self.pool.samples();
        let mut scored: Vec<(usize, f64)> = self
            .histograms
            .iter()
            .enumerate()
            .map(|(i, h)| (i, histogram_distance(&qh, h)))
            .collect();
        // Distances that agree to 1e-9 count as ties; otherwise summation
        // order alone could reorder mathematically equal histograms.
        let key = |d: f64| (d * 1e9).round() as i64;
        scored.sort_by(|a, b| {
            key(a.1)
                .cmp(&key(b.1))
                .then_with(|| samples[a.0].id.cmp(&samples[b.0].id))
        });
        scored.truncate(count);
        scored
    }
}

impl SimilarImageProvider for OfflineProvider<'_> {
    fn query(&self, image: &ImageSample, count: usize) -> Result<Vec<ProvidedImage>, AugmentError> {
        if self.pool.is_empty() {
            return Err(AugmentError::EmptyPool);
        }
        Ok(self
            .rank(image, count)
            .into_iter()
            .map(|(i, _)| {
                let s = &self.pool.samples()[i];
                ProvidedImage {
                    pixels: s.pixels.clone(),
                    provenance: format!("offline-pool:{}", s.id),
                    byte_digest: s.byte_digest,
                }
            })
            .collect())
    }
}
