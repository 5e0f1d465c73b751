use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{to_preorder, Draft};
use super::{BoostConfig, BoostError, BoostModel};

/// Relative margin a candidate's gain must clear to replace the current best.
/// Candidates are visited by ascending feature then threshold, so equal gains
/// resolve to the lowest feature index and then the lowest threshold.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

pub fn improves(gain: f64, best: f64) -> bool {
    gain > best + GAIN_TIE_TOLERANCE * best.abs().max(1.0)
}

/// Loss reduction from splitting a node with totals `(g, h)` into `(gl, hl)`
/// and the remainder.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        -g / (h + lambda)
    } else {
        0.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Column-major copy of the training features with per-column sort orders.
pub(crate) struct Columns {
    pub values: Vec<Vec<f32>>,
    pub order: Vec<Vec<u32>>,
}

impl Columns {
    pub fn new(rows: &[Vec<f32>], n_features: usize) -> Self {
        let n = rows.len();
        let mut values = vec![Vec::with_capacity(n); n_features];
        for r in rows {
            for (f, &v) in r.iter().enumerate() {
                values[f].push(v);
            }
        }
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { values, order }
    }
}

pub(crate) fn check_data(features: &[Vec<f32>], labels: &[bool]) -> Result<usize, BoostError> {
    if features.len() != labels.len() {
        return Err(BoostError::LabelCount {
            rows: features.len(),
            labels: labels.len(),
        });
    }
    if features.len() < 2 {
        return Err(BoostError::TooFewSamples(features.len()));
    }
    let nf = features[0].len();
    if nf == 0 {
        return Err(BoostError::FeatureLength { expected: 1, got: 0 });
    }
    for r in features {
        if r.len() != nf {
            return Err(BoostError::FeatureLength {
                expected: nf,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(BoostError::NonFinite);
        }
    }
    let spam = labels.iter().filter(|&&l| l).count();
    if spam == 0 || spam == labels.len() {
        return Err(BoostError::SingleClass);
    }
    Ok(nf)
}

/// Second-order gradient boosting on logistic loss with exact greedy splits.
pub fn fit(features: &[Vec<f32>], labels: &[bool], config: &BoostConfig) -> Result<BoostModel, BoostError> {
    config.validate()?;
    let nf = check_data(features, labels)?;
    let cols = Columns::new(features, nf);
    Ok(fit_columns(&cols, labels, nf, config))
}

pub(crate) fn fit_columns(cols: &Columns, labels: &[bool], nf: usize, config: &BoostConfig) -> BoostModel {
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let n_rows = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feats = ((config.feature_subsample * nf as f64).round() as usize).clamp(1, nf);
    let mut trees = Vec::with_capacity(config.num_trees);

    for _ in 0..config.num_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let rows: Vec<usize> = if n_rows == n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, n_rows).into_vec()
        };
        let mut feats: Vec<usize> = if n_feats == nf {
            (0..nf).collect()
        } else {
            sample(&mut rng, nf, n_feats).into_vec()
        };
        feats.sort_unstable();

        let tree = grow(cols, &grad, &hess, &rows, &feats, config);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += config.learning_rate * tree_value_col(&tree, cols, i);
        }
        trees.push(tree);
    }

    BoostModel {
        config: *config,
        n_features: nf,
        base_score,
        trees,
    }
}

fn tree_value_col(tree: &super::RegressionTree, cols: &Columns, row: usize) -> f64 {
    use super::tree::Node;
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { value } => return value,
            Node::Split {
                feature,
                threshold,
                right,
                ..
            } => {
                i = if f64::from(cols.values[feature as usize][row]) < threshold {
                    i + 1
                } else {
                    right as usize
                };
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Running {
    g: f64,
    h: f64,
    last: Option<f32>,
}

const NO_NODE: u32 = u32::MAX;

/// Grows one tree level by level over the sampled rows and features.
fn grow(
    cols: &Columns,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    feats: &[usize],
    config: &BoostConfig,
) -> super::RegressionTree {
    let lambda = config.lambda_reg;
    let mcw = config.min_child_weight;
    let n = grad.len();

    // Position of each row among the current level's active nodes.
    let mut pos = vec![NO_NODE; n];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &r in rows {
        pos[r] = 0;
        g0 += grad[r];
        h0 += hess[r];
    }
    let mut drafts = vec![Draft::Leaf(0.0)];
    // (draft index, G, H) per active node.
    let mut active = vec![(0usize, g0, h0)];

    for _depth in 0..config.max_depth {
        let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
        let mut run = vec![Running::default(); active.len()];
        for &f in feats {
            run.iter_mut().for_each(|r| *r = Running::default());
            let col = &cols.values[f];
            for &r in &cols.order[f] {
                let r = r as usize;
                let k = pos[r];
                if k == NO_NODE {
                    continue;
                }
                let k = k as usize;
                let v = col[r];
                let st = &mut run[k];
                if let Some(lv) = st.last {
                    if v > lv && st.h >= mcw {
                        let (_, g, h) = active[k];
                        if h - st.h >= mcw {
                            let gain = split_gain(st.g, st.h, g, h, lambda);
                            let cur = best[k].map_or(0.0, |c| c.gain);
                            if improves(gain, cur) {
                                best[k] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: (f64::from(lv) + f64::from(v)) / 2.0,
                                });
                            }
                        }
                    }
                }
                st.g += grad[r];
                st.h += hess[r];
                st.last = Some(v);
            }
        }

        let mut next = Vec::new();
        // New position for rows of split nodes: (left child slot, right child slot).
        let mut child_slots: Vec<Option<(u32, u32, usize, f64)>> = vec![None; active.len()];
        for (k, &(d, g, h)) in active.iter().enumerate() {
            match best[k] {
                Some(c) => {
                    let left = drafts.len();
                    drafts.push(Draft::Leaf(0.0));
                    drafts.push(Draft::Leaf(0.0));
                    drafts[d] = Draft::Split {
                        feature: c.feature as u32,
                        threshold: c.threshold,
                        gain: c.gain,
                        left,
                        right: left + 1,
                    };
                    let ls = next.len() as u32;
                    next.push((left, 0.0, 0.0));
                    next.push((left + 1, 0.0, 0.0));
                    child_slots[k] = Some((ls, ls + 1, c.feature, c.threshold));
                }
                None => drafts[d] = Draft::Leaf(leaf_weight(g, h, lambda)),
            }
        }
        for &r in rows {
            let k = pos[r];
            if k == NO_NODE {
                continue;
            }
            pos[r] = match child_slots[k as usize] {
                Some((ls, rs, f, t)) => {
                    let slot = if f64::from(cols.values[f][r]) < t { ls } else { rs };
                    next[slot as usize].1 += grad[r];
                    next[slot as usize].2 += hess[r];
                    slot
                }
                None => NO_NODE,
            };
        }
        active = next;
        if active.is_empty() {
            break;
        }
    }
    for &(d, g, h) in &active {
        drafts[d] = Draft::Leaf(leaf_weight(g, h, lambda));
    }
    to_preorder(&drafts)
}
