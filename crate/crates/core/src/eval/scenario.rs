use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{LeakageAudit, MetricsReport};
use super::{compute_metrics, EvalError};
use crate::augment::{generate_ham_like, generate_spam_like, AugmentConfig, OfflineProvider};
use crate::baselines::{fit_linear_margin, fit_pixel_margin};
use crate::bundle::corpus_digest;
use crate::boost::{fit, random_search, BoostConfig, SearchSpace};
use crate::convnet::{build, extract_features, train, EpochRecord, LabeledSet, NetConfig, TrainConfig};
use crate::corpus::{stratified_split, to_net_input, Corpus, CorpusTag, Label, SplitSpec};
use crate::digest::ByteDigest;
use crate::model::{Detector, Head, ModelId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Stratified split of every labeled source corpus.
    Mixed { split: SplitSpec },
    /// Train on some source corpora, test on disjoint others.
    CrossCorpus {
        train_tags: Vec<CorpusTag>,
        test_tags: Vec<CorpusTag>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub kind: ScenarioKind,
    pub augmentation: bool,
    /// Ham-like and spam-like sample counts generated when augmenting.
    pub augment_targets: (usize, usize),
    pub models: Vec<ModelId>,
    pub seed: u64,
}

pub const MIXED_ID: &str = "mixed";
pub const CROSS_ARCHIVE_TO_PERSONAL_ID: &str = "cross-archive-to-personal";
pub const CROSS_PERSONAL_TO_ARCHIVE_ID: &str = "cross-personal-to-archive";

impl ScenarioSpec {
    pub fn mixed(seed: u64) -> Self {
        let a = AugmentConfig::MIXED;
        ScenarioSpec {
            id: MIXED_ID.into(),
            kind: ScenarioKind::Mixed {
                split: SplitSpec::new(0.6, seed),
            },
            augmentation: true,
            augment_targets: (a.target_ham_like, a.target_spam_like),
            models: ModelId::ALL.to_vec(),
            seed,
        }
    }

    /// Train on SpamArchive spam + normal ham, test on the personal corpora.
    pub fn cross_archive_to_personal(seed: u64) -> Self {
        let a = AugmentConfig::CROSS_ARCHIVE_TO_PERSONAL;
        ScenarioSpec {
            id: CROSS_ARCHIVE_TO_PERSONAL_ID.into(),
            kind: ScenarioKind::CrossCorpus {
                train_tags: vec![CorpusTag::SpamarchiveSpam, CorpusTag::NormalHam],
                test_tags: vec![CorpusTag::PersonalSpam, CorpusTag::PersonalHam],
            },
            augmentation: true,
            augment_targets: (a.target_ham_like, a.target_spam_like),
            models: ModelId::ALL.to_vec(),
            seed,
        }
    }

    /// Train on the personal corpora, test on SpamArchive spam + normal ham.
    pub fn cross_personal_to_archive(seed: u64) -> Self {
        let a = AugmentConfig::CROSS_PERSONAL_TO_ARCHIVE;
        ScenarioSpec {
            id: CROSS_PERSONAL_TO_ARCHIVE_ID.into(),
            kind: ScenarioKind::CrossCorpus {
                train_tags: vec![CorpusTag::PersonalSpam, CorpusTag::PersonalHam],
                test_tags: vec![CorpusTag::SpamarchiveSpam, CorpusTag::NormalHam],
            },
            augmentation: true,
            augment_targets: (a.target_ham_like, a.target_spam_like),
            models: ModelId::ALL.to_vec(),
            seed,
        }
    }

    pub fn by_id(id: &str, seed: u64) -> Option<Self> {
        match id {
            MIXED_ID => Some(Self::mixed(seed)),
            CROSS_ARCHIVE_TO_PERSONAL_ID | "cross-1" => Some(Self::cross_archive_to_personal(seed)),
            CROSS_PERSONAL_TO_ARCHIVE_ID | "cross-2" => Some(Self::cross_personal_to_archive(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Spec(m));
        match &self.kind {
            ScenarioKind::Mixed { split } => split.validate().map_err(|e| EvalError::Spec(e.to_string()))?,
            ScenarioKind::CrossCorpus { train_tags, test_tags } => {
                if train_tags.is_empty() || test_tags.is_empty() {
                    return bad("cross-corpus scenarios need train and test tags".into());
                }
                if let Some(t) = train_tags.iter().find(|t| test_tags.contains(t)) {
                    return bad(format!("tag {t} is in both train and test sets"));
                }
                if let Some(t) = train_tags
                    .iter()
                    .chain(test_tags)
                    .find(|t| matches!(t, CorpusTag::Synthetic | CorpusTag::Augmented))
                {
                    return bad(format!("tag {t} cannot be a train or test source"));
                }
            }
        }
        Ok(())
    }
}

/// How the boosted-tree head picks its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoostTuning {
    Fixed { config: BoostConfig },
    Search { space: SearchSpace, valid_fraction: f64 },
}

impl Default for BoostTuning {
    fn default() -> Self {
        BoostTuning::Search {
            space: SearchSpace::default(),
            valid_fraction: 0.2,
        }
    }
}

/// Model hyperparameters shared by every scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Fraction of the original training samples held out for CNN early
    /// stopping.
    pub cnn_valid_fraction: f64,
    pub boost: BoostTuning,
    pub linear_c: f64,
    pub pixel_c: f64,
    pub n_similar_per_query: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            cnn_valid_fraction: 0.2,
            boost: BoostTuning::default(),
            linear_c: 1.0,
            pixel_c: 1.0,
            n_similar_per_query: AugmentConfig::MIXED.n_similar_per_query,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let spec = |e: String| EvalError::Spec(e);
        self.net.validate().map_err(|e| spec(e.to_string()))?;
        self.train.validate().map_err(|e| spec(e.to_string()))?;
        if !(self.cnn_valid_fraction > 0.0 && self.cnn_valid_fraction < 1.0) {
            return Err(spec("cnn_valid_fraction must be in (0, 1)".into()));
        }
        match &self.boost {
            BoostTuning::Fixed { config } => config.validate().map_err(|e| spec(e.to_string()))?,
            BoostTuning::Search { space, valid_fraction } => {
                space.validate().map_err(|e| spec(e.to_string()))?;
                if !(*valid_fraction > 0.0 && *valid_fraction < 1.0) {
                    return Err(spec("boost valid_fraction must be in (0, 1)".into()));
                }
            }
        }
        for (name, c) in [("linear_c", self.linear_c), ("pixel_c", self.pixel_c)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(spec(format!("{name} must be positive")));
            }
        }
        if self.n_similar_per_query == 0 {
            return Err(spec("n_similar_per_query must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub reports: Vec<MetricsReport>,
    pub audit: LeakageAudit,
    pub detectors: Vec<Detector>,
    pub cnn_history: Vec<EpochRecord>,
    /// Notes about the run (e.g. augmentation shortfalls).
    pub warnings: Vec<String>,
    /// Order-independent digests of the training data (augmented samples
    /// included) and of the test data.
    pub train_digest: ByteDigest,
    pub test_digest: ByteDigest,
}

fn labeled_inputs(samples: &[&crate::corpus::ImageSample]) -> LabeledSet {
    let mut set = LabeledSet::default();
    for s in samples {
        set.inputs.extend(to_net_input(s));
        set.labels.push(s.label.is_spam());
    }
    set
}

fn rows(flat: &[f32], width: usize) -> Vec<Vec<f32>> {
    flat.chunks_exact(width).map(<[f32]>::to_vec).collect()
}

/// Train and test sets for `spec`, before augmentation. Synthetic and
/// augmented samples never appear in either.
pub fn scenario_sets(corpus: &Corpus, spec: &ScenarioSpec) -> Result<(Corpus, Corpus), EvalError> {
    spec.validate()?;
    let sources: Vec<CorpusTag> = CorpusTag::ALL
        .into_iter()
        .filter(|t| !matches!(t, CorpusTag::Synthetic | CorpusTag::Augmented))
        .collect();
    let (train_set, test_set) = match &spec.kind {
        ScenarioKind::Mixed { split } => stratified_split(&corpus.filter_tags(&sources), split)?,
        ScenarioKind::CrossCorpus { train_tags, test_tags } => {
            (corpus.filter_tags(train_tags), corpus.filter_tags(test_tags))
        }
    };
    for (name, set) in [("training", &train_set), ("test", &test_set)] {
        if set.label_count(Label::Spam) == 0 || set.label_count(Label::Ham) == 0 {
            return Err(EvalError::Spec(format!("{name} set must contain both spam and ham")));
        }
    }
    Ok((train_set, test_set))
}

/// Ham-like samples retrieved from the corpus' synthetic-tagged pool plus
/// spliced spam-like samples, both seeded from `train_set` only. Returns the
/// augmented samples and any shortfall warnings.
pub fn augment_training(
    corpus: &Corpus,
    train_set: &Corpus,
    spec: &ScenarioSpec,
    n_similar_per_query: usize,
) -> Result<(Corpus, Vec<String>), EvalError> {
    let acfg = AugmentConfig {
        n_similar_per_query,
        target_ham_like: spec.augment_targets.0,
        target_spam_like: spec.augment_targets.1,
        seed: spec.seed,
    };
    let mut warnings = Vec::new();
    let mut augmented = Corpus::new();
    if acfg.target_ham_like > 0 {
        let pool = corpus.filter_tags(&[CorpusTag::Synthetic]);
        let provider = OfflineProvider::new(&pool);
        let out = generate_ham_like(train_set, &provider, &acfg)?;
        if out.shortfall > 0 {
            warnings.push(format!(
                "ham-like generation fell short by {} of {}",
                out.shortfall, acfg.target_ham_like
            ));
        }
        augmented.extend(out.corpus)?;
    }
    if acfg.target_spam_like > 0 {
        augmented.extend(generate_spam_like(train_set, &acfg)?)?;
    }
    Ok((augmented, warnings))
}

/// Assembles train/test sets per `spec`, optionally augments the training
/// portion, trains every requested model and scores it on the untouched test
/// set.
///
/// Synthetic-tagged samples in `corpus` are never trained or tested on; they
/// form the pool for the offline similar-image provider. Any byte digest
/// shared between the training data (augmented samples included) and the
/// test data aborts the run.
pub fn run_scenario(corpus: &Corpus, spec: &ScenarioSpec, cfg: &PipelineConfig) -> Result<ScenarioOutcome, EvalError> {
    spec.validate()?;
    cfg.validate()?;
    let mut warnings = Vec::new();

    let (train_set, test_set) = scenario_sets(corpus, spec)?;
    let (augmented, mut aug_warnings) = if spec.augmentation {
        augment_training(corpus, &train_set, spec, cfg.n_similar_per_query)?
    } else {
        (Corpus::new(), Vec::new())
    };
    warnings.append(&mut aug_warnings);

    // Leakage and isolation audit before anything is trained.
    let train_digests: HashSet<ByteDigest> = train_set
        .samples()
        .iter()
        .chain(augmented.samples())
        .map(|s| s.byte_digest)
        .collect();
    let overlap = test_set
        .samples()
        .iter()
        .filter(|s| train_digests.contains(&s.byte_digest))
        .count();
    let augmented_in_training = train_set
        .samples()
        .iter()
        .chain(augmented.samples())
        .filter(|s| s.tag == CorpusTag::Augmented)
        .count();
    let audit = LeakageAudit {
        scenario_id: spec.id.clone(),
        augmentation: spec.augmentation,
        train_samples: train_set.len() + augmented.len(),
        augmented_in_training,
        test_samples: test_set.len(),
        digest_overlap: overlap,
    };
    if overlap > 0 {
        return Err(EvalError::Leakage(overlap));
    }
    if !spec.augmentation && augmented_in_training > 0 {
        return Err(EvalError::AugmentationIsolation(augmented_in_training));
    }

    let all_train: Vec<&crate::corpus::ImageSample> =
        train_set.samples().iter().chain(augmented.samples()).collect();
    let train_inputs = labeled_inputs(&all_train);
    let test_refs: Vec<&crate::corpus::ImageSample> = test_set.samples().iter().collect();
    let test_inputs = labeled_inputs(&test_refs);
    let truth: Vec<Label> = test_set.samples().iter().map(|s| s.label).collect();

    // The CNN is trained once per run and shared by every CNN-based head.
    let mut cnn = None;
    let mut cnn_history = Vec::new();
    if spec.models.iter().any(|m| m.uses_cnn()) {
        let started = Instant::now();
        let (fit_part, valid_part) =
            stratified_split(&train_set, &SplitSpec::new(1.0 - cfg.cnn_valid_fraction, spec.seed ^ 0xc0ffee))?;
        let fit_refs: Vec<_> = fit_part.samples().iter().chain(augmented.samples()).collect();
        let valid_refs: Vec<_> = valid_part.samples().iter().collect();
        let tc = TrainConfig {
            seed: spec.seed,
            ..cfg.train
        };
        let params = build(&cfg.net, spec.seed)?;
        let (params, history) = train(params, &labeled_inputs(&fit_refs), &labeled_inputs(&valid_refs), &tc)?;
        cnn_history = history;
        let cnn_seconds = started.elapsed().as_secs_f64();

        let t = Instant::now();
        let train_features = extract_features(&params, &train_inputs.inputs)?;
        let extract_train = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let test_features = extract_features(&params, &test_inputs.inputs)?;
        let extract_test = t.elapsed().as_secs_f64();
        cnn = Some((params, train_features, test_features, cnn_seconds + extract_train, extract_test));
    }

    let mut reports = Vec::new();
    let mut detectors = Vec::new();
    for &model in &spec.models {
        let started = Instant::now();
        let (detector, shared_train, shared_test) = match model {
            ModelId::CnnBoostedTrees | ModelId::CnnLinearMargin => {
                let (params, trf, _, tr_s, te_s) = cnn.as_ref().expect("CNN trained when a CNN model is requested");
                let head = if model == ModelId::CnnBoostedTrees {
                    let config = match cfg.boost {
                        BoostTuning::Fixed { config } => BoostConfig {
                            seed: spec.seed,
                            ..config
                        },
                        BoostTuning::Search { space, valid_fraction } => {
                            let space = SearchSpace { seed: spec.seed, ..space };
                            random_search(trf, &train_inputs.labels, &space, valid_fraction)?.0
                        }
                    };
                    Head::BoostedTrees(fit(trf, &train_inputs.labels, &config)?)
                } else {
                    Head::LinearMargin(fit_linear_margin(trf, &train_inputs.labels, cfg.linear_c, spec.seed)?)
                };
                (Detector::new(Some(params.clone()), head)?, *tr_s, *te_s)
            }
            ModelId::PixelMargin => {
                let x = rows(&train_inputs.inputs, crate::corpus::NET_INPUT_LEN);
                let m = fit_pixel_margin(&x, &train_inputs.labels, cfg.pixel_c, spec.seed)?;
                (Detector::new(None, Head::PixelMargin(m))?, 0.0, 0.0)
            }
        };
        let train_seconds = shared_train + started.elapsed().as_secs_f64();

        let started = Instant::now();
        let margins = match (&detector.head, &cnn) {
            (Head::PixelMargin(_), _) | (_, None) => detector.margins(&test_inputs.inputs)?,
            (Head::BoostedTrees(m), Some((_, _, tef, _, _))) => {
                tef.iter().map(|f| m.predict_margin(f)).collect::<Result<_, _>>()?
            }
            (Head::LinearMargin(m), Some((_, _, tef, _, _))) => {
                tef.iter().map(|f| m.margin(f)).collect::<Result<_, _>>()?
            }
        };
        let preds: Vec<Label> = margins.iter().map(|&m| Detector::label_for(m)).collect();
        let test_seconds = shared_test + started.elapsed().as_secs_f64();

        let (confusion, metrics) = compute_metrics(&preds, &truth)?;
        let mut annotations = confusion.annotations();
        annotations.extend(warnings.iter().cloned());
        reports.push(MetricsReport {
            scenario_id: spec.id.clone(),
            model_id: model,
            augmentation: spec.augmentation,
            accuracy: metrics.accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            confusion,
            train_seconds,
            test_seconds,
            n_train: train_inputs.len(),
            n_test: truth.len(),
            annotations,
        });
        detectors.push(detector);
    }

    let mut train_all = train_set;
    train_all.extend(augmented)?;
    Ok(ScenarioOutcome {
        reports,
        audit,
        detectors,
        cnn_history,
        warnings,
        train_digest: corpus_digest(&train_all),
        test_digest: corpus_digest(&test_set),
    })
}
