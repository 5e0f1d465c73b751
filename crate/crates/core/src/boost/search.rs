use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{check_data, fit_columns, Columns};
use super::{BoostConfig, BoostError};
use crate::eval::ConfusionMatrix;

/// Closed ranges sampled by [`random_search`]. A range whose bounds coincide
/// always yields that value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub num_trees: (usize, usize),
    pub max_depth: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub subsample: (f64, f64),
    pub feature_subsample: (f64, f64),
    pub min_child_weight: (f64, f64),
    pub lambda_reg: (f64, f64),
    pub num_trials: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            num_trees: (50, 500),
            max_depth: (3, 10),
            learning_rate: (0.01, 0.3),
            subsample: (0.5, 1.0),
            feature_subsample: (0.5, 1.0),
            min_child_weight: (1.0, 10.0),
            lambda_reg: (0.0, 5.0),
            num_trials: 30,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), BoostError> {
        let bad = |m: String| Err(BoostError::Config(m));
        if self.num_trials == 0 {
            return bad("num_trials must be at least 1".into());
        }
        if self.num_trees.0 == 0 || self.num_trees.0 > self.num_trees.1 {
            return bad(format!("bad num_trees range {:?}", self.num_trees));
        }
        if self.max_depth.0 == 0 || self.max_depth.0 > self.max_depth.1 {
            return bad(format!("bad max_depth range {:?}", self.max_depth));
        }
        if !(self.learning_rate.0 > 0.0 && self.learning_rate.0 <= self.learning_rate.1) {
            return bad(format!("bad learning_rate range {:?}", self.learning_rate));
        }
        for (name, (lo, hi), unit) in [
            ("subsample", self.subsample, true),
            ("feature_subsample", self.feature_subsample, true),
            ("min_child_weight", self.min_child_weight, false),
            ("lambda_reg", self.lambda_reg, false),
        ] {
            let ok = lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0 && (!unit || (lo > 0.0 && hi <= 1.0));
            if !ok {
                return bad(format!("bad {name} range ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn sample_config(space: &SearchSpace, rng: &mut impl Rng) -> BoostConfig {
    let (llo, lhi) = space.learning_rate;
    BoostConfig {
        num_trees: rng.random_range(space.num_trees.0..=space.num_trees.1),
        max_depth: rng.random_range(space.max_depth.0..=space.max_depth.1),
        learning_rate: uniform(rng, (llo.ln(), lhi.ln())).exp().clamp(llo, lhi),
        subsample: uniform(rng, space.subsample),
        feature_subsample: uniform(rng, space.feature_subsample),
        min_child_weight: uniform(rng, space.min_child_weight),
        lambda_reg: uniform(rng, space.lambda_reg),
        seed: rng.random(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: BoostConfig,
    pub valid_f1: f64,
}

/// Stratified holdout: `valid_fraction` of each class (at least one sample,
/// leaving at least one) is held out for validation.
fn holdout(labels: &[bool], valid_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), BoostError> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(BoostError::Config("validation fraction must be in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(BoostError::TooFewSamples(idx.len()));
        }
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * valid_fraction).round() as usize).clamp(1, idx.len() - 1);
        valid.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

/// Samples `num_trials` configurations, scores each by F1 on a fixed
/// stratified holdout, and returns the best (earliest on ties) with the log.
pub fn random_search(
    features: &[Vec<f32>],
    labels: &[bool],
    space: &SearchSpace,
    valid_fraction: f64,
) -> Result<(BoostConfig, Vec<Trial>), BoostError> {
    space.validate()?;
    let nf = check_data(features, labels)?;
    let (tr, va) = holdout(labels, valid_fraction, space.seed)?;
    let tr_x: Vec<Vec<f32>> = tr.iter().map(|&i| features[i].clone()).collect();
    let tr_y: Vec<bool> = tr.iter().map(|&i| labels[i]).collect();
    let va_y: Vec<bool> = va.iter().map(|&i| labels[i]).collect();
    let cols = Columns::new(&tr_x, nf);

    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(space.num_trials);
    let mut best = 0;
    for index in 0..space.num_trials {
        let config = sample_config(space, &mut rng);
        let model = fit_columns(&cols, &tr_y, nf, &config);
        let preds: Vec<bool> = va
            .iter()
            .map(|&i| model.predict_margin(&features[i]).map(|m| m > 0.0))
            .collect::<Result<_, _>>()?;
        let valid_f1 = ConfusionMatrix::tally(&preds, &va_y).f1();
        log::debug!("trial {index}: F1 {valid_f1:.4} {config:?}");
        if valid_f1 > trials.get(best).map_or(f64::NEG_INFINITY, |t| t.valid_f1) {
            best = index;
        }
        trials.push(Trial {
            index,
            config,
            valid_f1,
        });
    }
    Ok((trials[best].config, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f32>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f32>> = (0..60).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let y = x.iter().map(|r| r[0] + rng.random_range(-0.3..0.3) > 0.5).collect();
        (x, y)
    }

    fn small_space(trials: usize) -> SearchSpace {
        SearchSpace {
            num_trees: (5, 20),
            max_depth: (1, 3),
            num_trials: trials,
            seed: 4,
            ..SearchSpace::default()
        }
    }

    #[test]
    fn one_trial_returns_its_config() {
        let (x, y) = data();
        let (best, log) = random_search(&x, &y, &small_space(1), 0.2).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(best, log[0].config);
    }

    #[test]
    fn point_space_returns_the_point() {
        let (x, y) = data();
        let space = SearchSpace {
            num_trees: (7, 7),
            max_depth: (2, 2),
            learning_rate: (0.1, 0.1),
            subsample: (1.0, 1.0),
            feature_subsample: (1.0, 1.0),
            min_child_weight: (1.0, 1.0),
            lambda_reg: (0.5, 0.5),
            num_trials: 4,
            seed: 1,
        };
        let (best, _) = random_search(&x, &y, &space, 0.2).unwrap();
        assert_eq!(
            (best.num_trees, best.max_depth, best.learning_rate, best.subsample, best.feature_subsample),
            (7, 2, 0.1, 1.0, 1.0)
        );
        assert_eq!((best.min_child_weight, best.lambda_reg), (1.0, 0.5));
    }

    #[test]
    fn best_dominates_log_and_ties_go_early() {
        let (x, y) = data();
        let (best, log) = random_search(&x, &y, &small_space(5), 0.2).unwrap();
        let top = log.iter().map(|t| t.valid_f1).fold(f64::NEG_INFINITY, f64::max);
        let first = log.iter().find(|t| t.valid_f1 == top).unwrap();
        assert_eq!(best, first.config);
        let again = random_search(&x, &y, &small_space(5), 0.2).unwrap();
        assert_eq!(again.1, log);
    }

    #[test]
    fn samples_stay_in_range() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let c = sample_config(&space, &mut rng);
            assert!((50..=500).contains(&c.num_trees));
            assert!((3..=10).contains(&c.max_depth));
            assert!((0.01..=0.3).contains(&c.learning_rate));
            assert!((0.5..=1.0).contains(&c.subsample));
            assert!((1.0..=10.0).contains(&c.min_child_weight));
            assert!((0.0..=5.0).contains(&c.lambda_reg));
            assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn holdout_is_stratified() {
        let labels: Vec<bool> = (0..50).map(|i| i < 20).collect();
        let (tr, va) = holdout(&labels, 0.2, 3).unwrap();
        assert_eq!(va.iter().filter(|&&i| labels[i]).count(), 4);
        assert_eq!(va.len(), 10);
        assert_eq!(tr.len() + va.len(), 50);
    }
}
