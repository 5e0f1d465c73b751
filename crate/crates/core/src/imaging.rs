//! Pixel-level helpers: decoding into 8-bit RGB, bilinear resampling, PNG encoding.

use std::io::Cursor;

use image::{DynamicImage, ImageFormat, RgbImage};

/// Decodes any supported image format into 8-bit RGB.
///
/// Grayscale is replicated across channels; alpha is composited over white.
pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, image::ImageError> {
    let img = image::load_from_memory(bytes)?;
    Ok(flatten_to_rgb(img))
}

pub fn flatten_to_rgb(img: DynamicImage) -> RgbImage {
    if !img.color().has_alpha() {
        return img.to_rgb8();
    }
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    let mut out = RgbImage::new(w, h);
    for (src, dst) in rgba.pixels().zip(out.pixels_mut()) {
        let a = u32::from(src.0[3]);
        for c in 0..3 {
            let v = u32::from(src.0[c]) * a + 255 * (255 - a);
            dst.0[c] = ((v + 127) / 255) as u8;
        }
    }
    out
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

/// Source coordinate and interpolation weight for one output index under
/// pixel-center alignment.
#[inline]
fn source_coord(out_idx: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let s = (out_idx as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    let s = s.clamp(0.0, (in_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize returning HWC `f32` samples on the 0..=255 scale.
///
/// Pixel centers are aligned (`src = (dst + 0.5) * in / out - 0.5`) and edge
/// coordinates clamp. A same-size resize reproduces the input exactly.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> Vec<f32> {
    let (in_w, in_h) = (img.width() as usize, img.height() as usize);
    assert!(in_w > 0 && in_h > 0, "cannot resize an empty image");
    let raw = img.as_raw();
    let px = |x: usize, y: usize, c: usize| f64::from(raw[(y * in_w + x) * 3 + c]);
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, in_w, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h * 3);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, in_h, out_h);
        for &(x0, x1, fx) in &cols {
            for c in 0..3 {
                let top = (1.0 - fx) * px(x0, y0, c) + fx * px(x1, y0, c);
                let bottom = (1.0 - fx) * px(x0, y1, c) + fx * px(x1, y1, c);
                out.push(((1.0 - fy) * top + fy * bottom) as f32);
            }
        }
    }
    out
}

/// Bilinear resize back into an 8-bit image (round half up).
pub fn resize_bilinear_u8(img: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let data = resize_bilinear(img, out_w as usize, out_h as usize);
    let bytes = data
        .into_iter()
        .map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage::from_raw(out_w, out_h, bytes).expect("buffer length matches dimensions")
}
