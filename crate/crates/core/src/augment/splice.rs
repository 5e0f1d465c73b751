use image::{imageops, RgbImage};

use super::AugmentError;
use crate::corpus::{CorpusTag, ImageSample, Label};
use crate::imaging;

/// A spliced spam image and its two parents.
#[derive(Debug, Clone)]
pub struct SpliceResult {
    pub pixels: RgbImage,
    pub parent_left_id: String,
    pub parent_right_id: String,
}

impl SpliceResult {
    pub fn into_sample(self, id: impl Into<String>) -> ImageSample {
        let mut s = ImageSample::from_pixels(id, self.pixels, Label::Spam, CorpusTag::Augmented, None);
        s.source_path = format!("splice:{}|{}", self.parent_left_id, self.parent_right_id);
        s.parents = vec![self.parent_left_id, self.parent_right_id];
        s
    }
}

/// Joins the left half of `a` with the right half of `b`.
///
/// The output has `a`'s dimensions. Columns `[0, W_a/2)` are copied from `a`
/// verbatim; `b`'s columns `[W_b/2, W_b)` are bilinearly resized to fill the
/// remaining `W_a - W_a/2` columns at `a`'s height (halves use floor).
/// `swap` exchanges the roles of the two parents.
pub fn splice_spam(a: &ImageSample, b: &ImageSample, swap: bool) -> Result<SpliceResult, AugmentError> {
    let (left, right) = if swap { (b, a) } else { (a, b) };
    for p in [left, right] {
        if p.label != Label::Spam {
            return Err(AugmentError::NotSpam(p.id.clone()));
        }
        if p.width() < 2 || p.height() < 1 {
            return Err(AugmentError::TooNarrow(p.id.clone()));
        }
    }
    Ok(SpliceResult {
        pixels: splice_pixels(&left.pixels, &right.pixels),
        parent_left_id: left.id.clone(),
        parent_right_id: right.id.clone(),
    })
}

pub(crate) fn splice_pixels(left: &RgbImage, right: &RgbImage) -> RgbImage {
    let (wa, ha) = left.dimensions();
    let split_a = wa / 2;
    let split_b = right.width() / 2;
    let donor = imageops::crop_imm(right, split_b, 0, right.width() - split_b, right.height()).to_image();
    let fill = imaging::resize_bilinear_u8(&donor, wa - split_a, ha);
    let mut out = left.clone();
    imageops::replace(&mut out, &fill, i64::from(split_a), 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn spam(id: &str, w: u32, h: u32, salt: u32) -> ImageSample {
        let px = RgbImage::from_fn(w, h, |x, y| {
            Rgb([((x * 5 + salt) % 256) as u8, ((y * 9) % 256) as u8, ((x ^ y ^ salt) % 256) as u8])
        });
        ImageSample::from_pixels(id, px, Label::Spam, CorpusTag::PersonalSpam, None)
    }

    /// Direct bilinear formula with pixel-center alignment.
    fn bilinear_oracle(src: &RgbImage, x0: u32, out_w: u32, out_h: u32) -> Vec<f64> {
        let in_w = (src.width() - x0) as f64;
        let in_h = src.height() as f64;
        let mut out = Vec::new();
        for y in 0..out_h {
            for x in 0..out_w {
                let sx = ((x as f64 + 0.5) * in_w / out_w as f64 - 0.5).clamp(0.0, in_w - 1.0);
                let sy = ((y as f64 + 0.5) * in_h / out_h as f64 - 0.5).clamp(0.0, in_h - 1.0);
                let (xa, ya) = (sx.floor(), sy.floor());
                let (xb, yb) = ((xa + 1.0).min(in_w - 1.0), (ya + 1.0).min(in_h - 1.0));
                let (fx, fy) = (sx - xa, sy - ya);
                for c in 0..3 {
                    let p = |xx: f64, yy: f64| src.get_pixel(x0 + xx as u32, yy as u32).0[c] as f64;
                    let v = (1.0 - fy) * ((1.0 - fx) * p(xa, ya) + fx * p(xb, ya))
                        + fy * ((1.0 - fx) * p(xa, yb) + fx * p(xb, yb));
                    out.push(v);
                }
            }
        }
        out
    }

    #[test]
    fn self_splice_is_identity() {
        let a = spam("a", 37, 21, 4);
        let r = splice_spam(&a, &a, false).unwrap();
        assert_eq!(r.pixels, a.pixels);
    }

    #[test]
    fn mixed_sizes_follow_left_parent() {
        let a = spam("a", 100, 60, 1);
        let b = spam("b", 80, 40, 2);
        let r = splice_spam(&a, &b, false).unwrap();
        assert_eq!(r.pixels.dimensions(), (100, 60));
        for y in 0..60 {
            for x in 0..50 {
                assert_eq!(r.pixels.get_pixel(x, y), a.pixels.get_pixel(x, y));
            }
        }
        let expect = bilinear_oracle(&b.pixels, 40, 50, 60);
        let mut k = 0;
        for y in 0..60 {
            for x in 50..100 {
                for c in 0..3 {
                    let got = r.pixels.get_pixel(x, y).0[c] as f64;
                    assert!((got - expect[k]).abs() <= 0.5 + 1e-9, "({x},{y},{c}) {got} vs {}", expect[k]);
                    k += 1;
                }
            }
        }
        assert_eq!((r.parent_left_id.as_str(), r.parent_right_id.as_str()), ("a", "b"));
    }

    #[test]
    fn swap_exchanges_roles() {
        let a = spam("a", 30, 20, 1);
        let b = spam("b", 50, 10, 2);
        let r = splice_spam(&a, &b, true).unwrap();
        assert_eq!(r.pixels.dimensions(), (50, 10));
        assert_eq!(r.parent_left_id, "b");
    }

    #[test]
    fn odd_three_column_width() {
        let a = spam("a", 3, 5, 1);
        let b = spam("b", 9, 7, 2);
        let r = splice_spam(&a, &b, false).unwrap();
        assert_eq!(r.pixels.dimensions(), (3, 5));
        for y in 0..5 {
            assert_eq!(r.pixels.get_pixel(0, y), a.pixels.get_pixel(0, y));
        }
    }

    #[test]
    fn ham_parent_rejected() {
        let a = spam("a", 10, 10, 1);
        let mut h = spam("h", 10, 10, 2);
        h.label = Label::Ham;
        assert!(matches!(splice_spam(&a, &h, false), Err(AugmentError::NotSpam(id)) if id == "h"));
    }

    #[test]
    fn output_sample_is_augmented_spam() {
        let a = spam("a", 10, 10, 1);
        let b = spam("b", 12, 10, 2);
        let s = splice_spam(&a, &b, false).unwrap().into_sample("x");
        assert_eq!(s.label, Label::Spam);
        assert_eq!(s.tag, CorpusTag::Augmented);
        assert_eq!(s.parents, ["a", "b"]);
    }
}
