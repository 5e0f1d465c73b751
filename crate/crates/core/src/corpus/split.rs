use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.6,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(CorpusError::BadTrainFraction(self.train_fraction))
        }
    }
}

/// Splits each label independently: `round(n * train_fraction)` samples of
/// every label go to train (clamped so both sides get at least one), the rest
/// to test. Both halves keep the input order.
pub fn stratified_split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; corpus.len()];
    for label in [Label::Spam, Label::Ham, Label::Unlabeled] {
        let mut idx: Vec<usize> = corpus
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        let n = idx.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(CorpusError::TooFewSamples { label, count: n });
        }
        idx.shuffle(&mut rng);
        let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let mut train = Corpus::new();
    let mut test = Corpus::new();
    for (s, t) in corpus.samples().iter().zip(in_train) {
        let dst = if t { &mut train } else { &mut test };
        dst.push(s.clone())?;
    }
    Ok((train, test))
}
