//! Synthetic desk-scale corpus: text-over-background spam and
//! natural-texture ham in two rendering styles, plus a diverse image pool for
//! the offline similar-image provider.
//!
//! Style A stands in for the public corpora (`spamarchive_spam`,
//! `normal_ham`), style B for the personal ones (`personal_spam`,
//! `personal_ham`); B uses different layouts, palettes and textures so that
//! cross-source runs see a genuine distribution shift.

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{hamming, CleaningPolicy, Corpus, CorpusTag, ImageSample, Label};

/// Corpus proportions per source: personal spam 786 of 6,000 spam, personal
/// ham 1,503 of 2,313 ham.
const PERSONAL_SPAM_SHARE: f64 = 786.0 / 6000.0;
const PERSONAL_HAM_SHARE: f64 = 1503.0 / 2313.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub spam: usize,
    pub ham: usize,
    /// Unlabeled-source pool images (tagged `synthetic`, labeled ham).
    pub pool: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            spam: 600,
            ham: 200,
            pool: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    A,
    B,
}

/// Samples per tag: (personal spam, spamarchive spam, personal ham, normal ham).
pub fn source_sizes(spam: usize, ham: usize) -> [usize; 4] {
    let ps = (spam as f64 * PERSONAL_SPAM_SHARE).round() as usize;
    let ph = (ham as f64 * PERSONAL_HAM_SHARE).round() as usize;
    [ps, spam - ps, ph, ham - ph]
}

/// Builds the synthetic corpus. Deterministic per seed.
pub fn generate(spec: &SynthSpec) -> Corpus {
    let [ps, ss, ph, nh] = source_sizes(spec.spam, spec.ham);
    let plan = [
        (CorpusTag::PersonalSpam, Label::Spam, Style::B, ps),
        (CorpusTag::SpamarchiveSpam, Label::Spam, Style::A, ss),
        (CorpusTag::PersonalHam, Label::Ham, Style::B, ph),
        (CorpusTag::NormalHam, Label::Ham, Style::A, nh),
        (CorpusTag::Synthetic, Label::Ham, Style::A, spec.pool),
    ];
    let near = CleaningPolicy::default().phash_hamming_threshold;
    let mut hashes: Vec<u64> = Vec::new();
    let mut corpus = Corpus::new();
    for (k, (tag, label, style, n)) in plan.into_iter().enumerate() {
        // One stream per source so sizes of one source never shift another.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
        for i in 0..n {
            let id = format!("synth-{}-{i:05}", tag.as_str().replace('_', "-"));
            // Redraw candidates the cleaner would drop as near-duplicates.
            let mut attempt = 0;
            let sample = loop {
                let pixels = match (tag, label) {
                    (CorpusTag::Synthetic, _) => render_pool_image(&mut rng),
                    (_, Label::Spam) => render_spam(&mut rng, style),
                    _ => render_ham(&mut rng, style),
                };
                let s = ImageSample::from_pixels(id.clone(), pixels, label, tag, None);
                attempt += 1;
                if attempt >= 100 || hashes.iter().all(|&h| hamming(h, s.phash) > near) {
                    break s;
                }
            };
            hashes.push(sample.phash);
            corpus.push(sample).expect("synthetic ids are unique");
        }
    }
    corpus
}

// ---------------------------------------------------------------------------
// Text rendering

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

/// Rows top to bottom, bit 4 is the leftmost column.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '!' => [0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04],
        '$' => [0x04, 0x0F, 0x14, 0x0E, 0x05, 0x1E, 0x04],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        _ => [0; 7],
    }
}

const WORDS: &[&str] = &[
    "BUY", "NOW", "FREE", "CHEAP", "MEDS", "WIN", "CASH", "STOCK", "ALERT", "CLICK", "HERE", "LIMITED", "OFFER",
    "50%", "OFF", "REPLICA", "WATCHES", "LOAN", "APPROVED", "ACT", "TODAY!", "$$$", "BONUS", "CASINO", "PILLS",
    "DEAL", "SAVE", "90%", "ORDER", "ONLINE", "RX", "PROFIT", "HOT", "TIP", "RATES", "LOW", "100%", "GUARANTEED",
];

/// Draws `text` with its top-left corner at `(x, y)`, each font pixel a
/// `scale`×`scale` block. Characters falling off the image are clipped.
pub fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: u32, color: [u8; 3]) {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let advance = i64::from((GLYPH_W + 1) * scale);
    for (k, c) in text.chars().enumerate() {
        let rows = glyph(c);
        let gx = x + k as i64 * advance;
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - rx)) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = gx + i64::from(rx * scale + dx);
                        let py = y + ry as i64 * i64::from(scale) + i64::from(dy);
                        if (0..w).contains(&px) && (0..h).contains(&py) {
                            img.put_pixel(px as u32, py as u32, Rgb(color));
                        }
                    }
                }
            }
        }
    }
}

pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * (GLYPH_W + 1) * scale - scale
    }
}

fn phrase(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Backgrounds and textures

/// Light color with one saturated channel.
fn pastel(rng: &mut impl Rng) -> [u8; 3] {
    let mut c = color_in(rng, 170, 230);
    c[rng.random_range(0..3)] = rng.random_range(230..=255);
    c
}

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [0, 1, 2].map(|c| (f64::from(a[c]) * (1.0 - t) + f64::from(b[c]) * t).round() as u8)
}

fn color_in(rng: &mut impl Rng, lo: u8, hi: u8) -> [u8; 3] {
    [0; 3].map(|_| rng.random_range(lo..=hi))
}

/// Linear gradient along a direction given by angle `theta`.
fn gradient(w: u32, h: u32, a: [u8; 3], b: [u8; 3], theta: f64) -> RgbImage {
    let (dx, dy) = (theta.cos(), theta.sin());
    let span = (f64::from(w) * dx.abs() + f64::from(h) * dy.abs()).max(1.0);
    let off = f64::from(w) * dx.min(0.0) + f64::from(h) * dy.min(0.0);
    RgbImage::from_fn(w, h, |x, y| {
        let t = (f64::from(x) * dx + f64::from(y) * dy - off) / span;
        Rgb(lerp(a, b, t))
    })
}

/// Smooth value noise on a lattice with `cell`-pixel spacing, in [0, 1].
struct ValueNoise {
    cols: usize,
    grid: Vec<f64>,
    cell: f64,
}

impl ValueNoise {
    fn new(rng: &mut impl Rng, w: u32, h: u32, cell: f64) -> Self {
        let cols = (f64::from(w) / cell).ceil() as usize + 2;
        let rows = (f64::from(h) / cell).ceil() as usize + 2;
        ValueNoise {
            cols,
            grid: (0..cols * rows).map(|_| rng.random()).collect(),
            cell,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx.fract()), smooth(gy.fract()));
        let g = |i: usize, j: usize| self.grid[j * self.cols + i];
        let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
        let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

/// Multi-octave noise in [0, 1].
fn fractal(rng: &mut impl Rng, w: u32, h: u32, base_cell: f64, octaves: usize) -> Vec<f64> {
    let layers: Vec<ValueNoise> = (0..octaves)
        .map(|o| ValueNoise::new(rng, w, h, (base_cell / f64::from(1 << o)).max(1.5)))
        .collect();
    let norm: f64 = (0..octaves).map(|o| 0.5f64.powi(o as i32)).sum();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = layers
                .iter()
                .enumerate()
                .map(|(o, l)| 0.5f64.powi(o as i32) * l.at(f64::from(x), f64::from(y)))
                .sum();
            out.push(v / norm);
        }
    }
    out
}

fn add_noise(img: &mut RgbImage, rng: &mut impl Rng, amp: i16) {
    if amp == 0 {
        return;
    }
    for p in img.pixels_mut() {
        for c in &mut p.0 {
            *c = (i16::from(*c) + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
        }
    }
}

/// Landscape-like scene: sky gradient over a textured ground with a wavy
/// horizon.
fn scene(rng: &mut impl Rng, w: u32, h: u32, sky: ([u8; 3], [u8; 3]), ground: ([u8; 3], [u8; 3])) -> RgbImage {
    let tex = fractal(rng, w, h, f64::from(w.min(h)) / 3.0, 4);
    let horizon = f64::from(h) * rng.random_range(0.35..0.65);
    let wave_amp = f64::from(h) * rng.random_range(0.02..0.12);
    let wave_len = f64::from(w) * rng.random_range(0.3..1.2);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    RgbImage::from_fn(w, h, |x, y| {
        let t = tex[(y * w + x) as usize];
        let hz = horizon + wave_amp * (f64::from(x) / wave_len * std::f64::consts::TAU + phase).sin();
        let fy = f64::from(y);
        if fy < hz {
            Rgb(lerp(sky.0, sky.1, fy / hz * 0.7 + 0.3 * t))
        } else {
            Rgb(lerp(ground.0, ground.1, t))
        }
    })
}

/// Soft-edged colored blobs over a blurred backdrop, like out-of-focus
/// photos.
fn blobs(rng: &mut impl Rng, w: u32, h: u32, palette: &[[u8; 3]]) -> RgbImage {
    let tex = fractal(rng, w, h, f64::from(w.max(h)) / 2.0, 3);
    let back = (*palette.choose(rng).expect("palette"), *palette.choose(rng).expect("palette"));
    let mut img = RgbImage::from_fn(w, h, |x, y| Rgb(lerp(back.0, back.1, tex[(y * w + x) as usize])));
    for _ in 0..rng.random_range(3..9) {
        let (cx, cy) = (rng.random_range(0.0..f64::from(w)), rng.random_range(0.0..f64::from(h)));
        let r = rng.random_range(0.1..0.35) * f64::from(w.min(h));
        let col = *palette.choose(rng).expect("palette");
        for y in 0..h {
            for x in 0..w {
                let d = ((f64::from(x) - cx).powi(2) + (f64::from(y) - cy).powi(2)).sqrt() / r;
                if d < 1.0 {
                    let a = (1.0 - d * d) * 0.85;
                    let p = img.get_pixel_mut(x, y);
                    p.0 = lerp(p.0, col, a);
                }
            }
        }
    }
    img
}

// ---------------------------------------------------------------------------
// Samples

/// Text-over-background spam.
///
/// Style A: light solid or vertical-gradient fill, dark left-aligned text at
/// scale 2. Style B: pastel diagonal gradient, a banner bar, larger centered
/// text in warm ink, heavier speckle noise.
pub fn render_spam(rng: &mut impl Rng, style: Style) -> RgbImage {
    match style {
        Style::A => {
            let (w, h) = (rng.random_range(150..=260), rng.random_range(100..=200));
            let mut img = if rng.random_bool(0.4) {
                RgbImage::from_pixel(w, h, Rgb(color_in(rng, 200, 255)))
            } else {
                let theta = std::f64::consts::FRAC_PI_2 + rng.random_range(-0.2..0.2);
                gradient(w, h, color_in(rng, 190, 255), color_in(rng, 150, 230), theta)
            };
            let scale = 2;
            let line_h = (GLYPH_H + 3) * scale;
            let lines = rng.random_range(3..=((h - 10) / line_h).max(3));
            let ink = color_in(rng, 0, 90);
            for l in 0..lines {
                let text = phrase(rng);
                let y = 6 + l * line_h;
                draw_text(&mut img, &text, rng.random_range(4..12), i64::from(y), scale, ink);
            }
            add_noise(&mut img, rng, 3);
            img
        }
        Style::B => {
            let (w, h) = (rng.random_range(180..=300), rng.random_range(140..=240));
            let theta = rng.random_range(0.5..1.1);
            let (a, b) = (pastel(rng), pastel(rng));
            let mut img = gradient(w, h, a, b, theta);
            let bar_y = rng.random_range(0..h / 3);
            let bar_h = rng.random_range(14..=26);
            let bar = color_in(rng, 120, 200);
            for y in bar_y..(bar_y + bar_h).min(h) {
                for x in 0..w {
                    img.put_pixel(x, y, Rgb(bar));
                }
            }
            let scale = 3;
            let ink = [rng.random_range(110..200), rng.random_range(0..50), rng.random_range(0..90)];
            let mut y = bar_y + bar_h + 6;
            while y + GLYPH_H * scale < h {
                let text = phrase(rng);
                let tw = text_width(&text, scale);
                let x = (i64::from(w) - i64::from(tw)) / 2;
                draw_text(&mut img, &text, x, i64::from(y), scale, ink);
                y += (GLYPH_H + 4) * scale;
            }
            add_noise(&mut img, rng, 8);
            img
        }
    }
}

/// Natural-texture ham.
///
/// Style A: daylight landscapes (blue sky, green/brown ground). Style B:
/// warm indoor-photo surrogates (soft blobs in warm palettes) and dusk
/// scenes.
pub fn render_ham(rng: &mut impl Rng, style: Style) -> RgbImage {
    match style {
        Style::A => {
            let (w, h) = (rng.random_range(120..=240), rng.random_range(100..=200));
            let sky = (color_in(rng, 90, 150), [rng.random_range(170..230), rng.random_range(200..240), 255]);
            let ground = (
                [rng.random_range(20..80), rng.random_range(70..140), rng.random_range(10..60)],
                [rng.random_range(110..170), rng.random_range(90..150), rng.random_range(40..90)],
            );
            let mut img = scene(rng, w, h, sky, ground);
            add_noise(&mut img, rng, 4);
            img
        }
        Style::B => {
            let (w, h) = (rng.random_range(140..=260), rng.random_range(140..=260));
            let mut img = if rng.random_bool(0.6) {
                let palette = [
                    [rng.random_range(180..255), rng.random_range(100..160), rng.random_range(60..110)],
                    [rng.random_range(120..200), rng.random_range(60..110), rng.random_range(40..90)],
                    [rng.random_range(220..255), rng.random_range(190..230), rng.random_range(150..200)],
                    [rng.random_range(60..110), rng.random_range(40..80), rng.random_range(30..60)],
                ];
                blobs(rng, w, h, &palette)
            } else {
                let sky = (
                    [rng.random_range(200..255), rng.random_range(110..170), rng.random_range(60..120)],
                    [rng.random_range(70..130), rng.random_range(40..90), rng.random_range(90..150)],
                );
                let ground = ([15, 12, 20], [rng.random_range(60..100), rng.random_range(50..80), 60]);
                scene(rng, w, h, sky, ground)
            };
            add_noise(&mut img, rng, 8);
            img
        }
    }
}

/// Pool image standing in for web image-search results: a broad mix of both
/// ham styles plus textures neither corpus contains.
pub fn render_pool_image(rng: &mut impl Rng) -> RgbImage {
    match rng.random_range(0..4) {
        0 => render_ham(rng, Style::A),
        1 => render_ham(rng, Style::B),
        2 => {
            let (w, h) = (rng.random_range(100..=220), rng.random_range(100..=220));
            let palette: Vec<[u8; 3]> = (0..5).map(|_| color_in(rng, 0, 255)).collect();
            blobs(rng, w, h, &palette)
        }
        _ => {
            let (w, h) = (rng.random_range(100..=220), rng.random_range(100..=220));
            let sky = (color_in(rng, 0, 255), color_in(rng, 0, 255));
            let ground = (color_in(rng, 0, 255), color_in(rng, 0, 255));
            let mut img = scene(rng, w, h, sky, ground);
            add_noise(&mut img, rng, 6);
            img
        }
    }
}
