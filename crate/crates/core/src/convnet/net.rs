use rand::Rng;
use rayon::prelude::*;

use super::real::{gemm, Real};
use super::{NetError, Params, SlotKind, KERNEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Dropout disabled; a pure function of parameters and input.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// One flattened final feature map per input.
    pub features: Vec<Vec<T>>,
    /// Temporary logistic-head output per input.
    pub logits: Vec<T>,
}

#[derive(Clone, Copy)]
enum Step {
    /// Conv layer index and its input shape.
    Conv(usize, (usize, usize, usize)),
    /// Pool block index and its input shape; dropout follows.
    Pool(usize, (usize, usize, usize)),
}

fn plan<T: Real>(params: &Params<T>) -> Vec<Step> {
    let cfg = &params.config;
    let (mut h, mut w, mut c) = cfg.input_shape;
    let mut steps = Vec::new();
    let mut pool_idx = 0;
    for (i, &f) in cfg.conv_filters.iter().enumerate() {
        steps.push(Step::Conv(i, (h, w, c)));
        c = f;
        if cfg.pool_after.get(pool_idx) == Some(&(i + 1)) {
            steps.push(Step::Pool(pool_idx, (h, w, c)));
            h /= 2;
            w /= 2;
            pool_idx += 1;
        }
    }
    steps
}

#[inline]
fn leaky<T: Real>(x: T, alpha: T) -> T {
    if x >= T::zero() {
        x
    } else {
        alpha * x
    }
}

/// Same-padded 3x3 patch matrix: row `y * w + x`, column
/// `(ky * 3 + kx) * cin + ci`.
fn im2col<T: Real>(x: &[T], h: usize, w: usize, cin: usize) -> Vec<T> {
    let k = KERNEL * KERNEL * cin;
    let mut col = vec![T::zero(); h * w * k];
    for y in 0..h {
        for xx in 0..w {
            let row = &mut col[(y * w + xx) * k..(y * w + xx + 1) * k];
            for ky in 0..KERNEL {
                let iy = y as isize + ky as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = xx as isize + kx as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * cin;
                    let dst = (ky * KERNEL + kx) * cin;
                    row[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], h: usize, w: usize, cin: usize) -> Vec<T> {
    let k = KERNEL * KERNEL * cin;
    let mut x = vec![T::zero(); h * w * cin];
    for y in 0..h {
        for xx in 0..w {
            let row = &col[(y * w + xx) * k..(y * w + xx + 1) * k];
            for ky in 0..KERNEL {
                let iy = y as isize + ky as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = xx as isize + kx as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * cin;
                    let src = (ky * KERNEL + kx) * cin;
                    for c in 0..cin {
                        x[dst + c] = x[dst + c] + row[src + c];
                    }
                }
            }
        }
    }
    x
}

/// 2x2 stride-2 max pool over an HWC map. Returns the pooled map and, per
/// output, the flat input index of the (first) maximum.
fn max_pool<T: Real>(x: &[T], h: usize, w: usize, c: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_i = ((2 * oy) * w + 2 * ox) * c + ch;
                let mut best = x[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if x[i] > best {
                        best = x[i];
                        best_i = i;
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

struct Trace<T> {
    cols: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
    masks: Vec<Option<Vec<T>>>,
}

fn forward_one<T: Real, R: Rng + ?Sized>(
    params: &Params<T>,
    input: &[T],
    mode: Mode,
    rng: &mut R,
    keep: bool,
) -> (Vec<T>, T, Option<Trace<T>>) {
    let cfg = &params.config;
    let alpha = T::of(cfg.leaky_alpha);
    let mut trace = Trace {
        cols: Vec::new(),
        pre: Vec::new(),
        argmax: Vec::new(),
        masks: Vec::new(),
    };
    let mut x = input.to_vec();
    for step in plan(params) {
        match step {
            Step::Conv(i, (h, w, cin)) => {
                let cout = cfg.conv_filters[i];
                let col = im2col(&x, h, w, cin);
                let bias = params.conv_bias(i);
                let mut out: Vec<T> = (0..h * w).flat_map(|_| bias.iter().copied()).collect();
                gemm(h * w, KERNEL * KERNEL * cin, cout, &col, false, params.conv_weight(i), false, T::one(), &mut out);
                if keep {
                    trace.pre.push(out.clone());
                    trace.cols.push(col);
                }
                for v in &mut out {
                    *v = leaky(*v, alpha);
                }
                x = out;
            }
            Step::Pool(j, (h, w, c)) => {
                let (pooled, arg) = max_pool(&x, h, w, c);
                x = pooled;
                let rate = cfg.dropout_rates[j];
                let mask = if mode == Mode::Train && rate > 0.0 {
                    let keep_scale = T::of(1.0 / (1.0 - rate));
                    let m: Vec<T> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep_scale })
                        .collect();
                    for (v, &s) in x.iter_mut().zip(&m) {
                        *v = *v * s;
                    }
                    Some(m)
                } else {
                    None
                };
                if keep {
                    trace.argmax.push(arg);
                    trace.masks.push(mask);
                }
            }
        }
    }
    let logit = x
        .iter()
        .zip(params.head_weight())
        .fold(params.head_bias(), |acc, (&f, &w)| acc + f * w);
    (x, logit, keep.then_some(trace))
}

/// Accumulates `dlogit`-weighted gradients of the logit into `grad`.
fn backward_one<T: Real>(params: &Params<T>, features: &[T], trace: Trace<T>, dlogit: T, grad: &mut Params<T>) {
    let cfg = &params.config;
    let alpha = T::of(cfg.leaky_alpha);
    let n_slots = params.slots.len();
    {
        let hw = grad.slots[n_slots - 2].range();
        for (g, &f) in grad.data[hw].iter_mut().zip(features) {
            *g = *g + dlogit * f;
        }
        let hb = grad.slots[n_slots - 1].offset;
        grad.data[hb] = grad.data[hb] + dlogit;
    }
    let mut d: Vec<T> = params.head_weight().iter().map(|&w| dlogit * w).collect();
    let Trace {
        mut cols,
        mut pre,
        mut argmax,
        mut masks,
    } = trace;
    for step in plan(params).into_iter().rev() {
        match step {
            Step::Pool(_, (h, w, c)) => {
                if let Some(m) = masks.pop().expect("mask per pool") {
                    for (v, s) in d.iter_mut().zip(m) {
                        *v = *v * s;
                    }
                }
                let arg = argmax.pop().expect("argmax per pool");
                let mut din = vec![T::zero(); h * w * c];
                for (&i, &g) in arg.iter().zip(&d) {
                    din[i as usize] = din[i as usize] + g;
                }
                d = din;
            }
            Step::Conv(i, (h, w, cin)) => {
                let cout = cfg.conv_filters[i];
                let col = cols.pop().expect("col per conv");
                let pre_act = pre.pop().expect("pre-activation per conv");
                for (g, &p) in d.iter_mut().zip(&pre_act) {
                    if p < T::zero() {
                        *g = *g * alpha;
                    }
                }
                let k = KERNEL * KERNEL * cin;
                let w_range = grad.slots[2 * i].range();
                gemm(k, h * w, cout, &col, true, &d, false, T::one(), &mut grad.data[w_range]);
                let b_off = grad.slots[2 * i + 1].offset;
                for row in d.chunks_exact(cout) {
                    for (o, &g) in row.iter().enumerate() {
                        grad.data[b_off + o] = grad.data[b_off + o] + g;
                    }
                }
                if i > 0 {
                    let mut dcol = vec![T::zero(); h * w * k];
                    gemm(h * w, cout, k, &d, false, params.conv_weight(i), true, T::zero(), &mut dcol);
                    d = col2im(&dcol, h, w, cin);
                }
            }
        }
    }
}

fn check_batch<T: Real>(params: &Params<T>, batch: &[T]) -> Result<usize, NetError> {
    let n = params.config.input_len();
    if batch.is_empty() || !batch.len().is_multiple_of(n) {
        return Err(NetError::Shape(format!(
            "batch of {} values is not a positive multiple of the input size {n}",
            batch.len()
        )));
    }
    Ok(batch.len() / n)
}

/// Runs a batch (`B * input_len` values, HWC per image) through the network.
pub fn forward<T: Real, R: Rng + ?Sized>(
    params: &Params<T>,
    batch: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardOutput<T>, NetError> {
    check_batch(params, batch)?;
    let mut features = Vec::new();
    let mut logits = Vec::new();
    for x in batch.chunks_exact(params.config.input_len()) {
        let (f, z, _) = forward_one(params, x, mode, rng, false);
        features.push(f);
        logits.push(z);
    }
    Ok(ForwardOutput { features, logits })
}

/// Inference-mode features for a batch of images; the head is ignored.
pub fn extract_features(params: &Params<f32>, images: &[f32]) -> Result<Vec<Vec<f32>>, NetError> {
    check_batch(params, images)?;
    Ok(images
        .par_chunks_exact(params.config.input_len())
        .map(|x| {
            // Inference never draws from the generator.
            let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
            forward_one(params, x, Mode::Infer, &mut unused, false).0
        })
        .collect())
}

/// Numerically stable binary cross-entropy on a logit.
#[inline]
pub(crate) fn bce_with_logit(z: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of the head over the batch plus
/// `l2_coefficient * sum(W^2)` over weight tensors, and its gradient.
pub fn loss_and_gradient<T: Real, R: Rng + ?Sized>(
    params: &Params<T>,
    batch: &[T],
    labels: &[bool],
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, Params<T>), NetError> {
    let b = check_batch(params, batch)?;
    if labels.len() != b {
        return Err(NetError::Shape(format!("{} labels for {b} inputs", labels.len())));
    }
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (x, &y) in batch.chunks_exact(params.config.input_len()).zip(labels) {
        let (f, z, trace) = forward_one(params, x, mode, rng, true);
        let z = z.f64();
        loss += bce_with_logit(z, y) * inv_b;
        let dlogit = (sigmoid(z) - if y { 1.0 } else { 0.0 }) * inv_b;
        backward_one(params, &f, trace.expect("trace kept"), T::of(dlogit), &mut grad);
    }
    let l2 = params.config.l2_coefficient;
    if l2 > 0.0 {
        loss += l2 * params.weight_sq_norm();
        let two_l2 = T::of(2.0 * l2);
        for s in params.slots.iter().filter(|s| s.kind == SlotKind::Weight) {
            for i in s.range() {
                grad.data[i] = grad.data[i] + two_l2 * params.data[i];
            }
        }
    }
    Ok((loss, grad))
}
