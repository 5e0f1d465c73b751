use image::RgbImage;

const GRID: usize = 8;

/// 64-bit average hash.
///
/// The image is converted to luma (0.299 R + 0.587 G + 0.114 B) and
/// area-averaged onto an 8x8 grid; bit `row * 8 + col` is set iff that cell
/// strictly exceeds the mean of all 64 cells. Images smaller than 8 pixels on
/// a side are handled by fractional pixel coverage.
pub fn perceptual_hash(img: &RgbImage) -> u64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    assert!(w > 0 && h > 0, "cannot hash an empty image");
    let raw = img.as_raw();
    let luma: Vec<f64> = raw
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();

    let wx = coverage(w);
    let wy = coverage(h);
    let mut cells = [0.0f64; GRID * GRID];
    for (cy, rows) in wy.iter().enumerate() {
        for (cx, colw) in wx.iter().enumerate() {
            let mut acc = 0.0;
            for &(y, fy) in rows {
                let row = &luma[y * w..(y + 1) * w];
                for &(x, fx) in colw {
                    acc += fy * fx * row[x];
                }
            }
            cells[cy * GRID + cx] = acc;
        }
    }
    // Every cell has the same total coverage, so comparing sums is equivalent
    // to comparing averages.
    let mean = cells.iter().sum::<f64>() / (GRID * GRID) as f64;
    cells
        .iter()
        .enumerate()
        .fold(0u64, |h, (i, &c)| if c > mean { h | (1 << i) } else { h })
}

/// For each of the 8 grid cells along an axis of `len` pixels, the pixels it
/// overlaps and the overlap length in pixel units.
fn coverage(len: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len as f64 / GRID as f64;
    (0..GRID)
        .map(|c| {
            let (lo, hi) = (c as f64 * step, (c + 1) as f64 * step);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|p| {
                    let overlap = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
                    (overlap > 0.0).then_some((p, overlap))
                })
                .collect()
        })
        .collect()
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}
