//! Deterministic fixtures shared by the benchmarks.

use image::{Rgb, RgbImage};
use imgspam_core::corpus::{CorpusTag, ImageSample, Label};

/// A textured `w × h` image; `k` varies the pattern.
pub fn pattern(w: u32, h: u32, k: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let v = x.wrapping_mul(31).wrapping_add(y.wrapping_mul(17)).wrapping_add(k.wrapping_mul(101));
        Rgb([v as u8, (v >> 3) as u8 ^ (x as u8), (y as u8).wrapping_mul(7).wrapping_add(k as u8)])
    })
}

pub fn spam_sample(k: u32, w: u32, h: u32) -> ImageSample {
    ImageSample::from_pixels(format!("bench-{k}"), pattern(w, h, k), Label::Spam, CorpusTag::SpamarchiveSpam, None)
}

/// `n` rows of `d` features with a learnable label.
pub fn tabular(n: usize, d: usize) -> (Vec<Vec<f32>>, Vec<bool>) {
    let x: Vec<Vec<f32>> = (0..n)
        .map(|i| (0..d).map(|j| ((i * 7919 + j * 104_729) % 1000) as f32 / 1000.0).collect())
        .collect();
    let y = x.iter().map(|r| r[0] + 0.5 * r[1 % d] > 0.75).collect();
    (x, y)
}
