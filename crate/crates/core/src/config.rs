//! Run configuration file (TOML).
//!
//! Every section is optional; a missing section takes its defaults. Relative
//! paths resolve against the directory containing the config file.
//!
//! ```toml
//! seed = 7
//! scenario = "mixed"              # or cross-archive-to-personal, cross-personal-to-archive
//! augmentation = true             # omit to run with and without augmentation
//! models = ["cnn-boosted-trees", "cnn-linear-margin", "pixel-margin"]
//!
//! [paths]
//! manifest = "data/manifest.tsv"  # omit to use the built-in synthetic corpus
//! output_dir = "out"
//!
//! [augment]                       # overrides the scenario's targets
//! ham_like = 1200
//! spam_like = 400
//!
//! [cleaning]
//! min_side_px = 32
//!
//! [synth]
//! spam = 600
//! ham = 200
//!
//! [pipeline.train]
//! epochs = 30
//!
//! [pipeline.boost]
//! mode = "fixed"
//! config = { num_trees = 100, max_depth = 4, learning_rate = 0.1, subsample = 0.8, feature_subsample = 0.5, min_child_weight = 1.0, lambda_reg = 1.0, seed = 0 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CleaningPolicy;
use crate::eval::{PipelineConfig, ScenarioSpec};
use crate::model::ModelId;
use crate::synth::SynthSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config references missing path {0}")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus manifest; `None` selects the synthetic corpus.
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            manifest: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentTargets {
    pub ham_like: usize,
    pub spam_like: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: String,
    /// `None` runs both settings.
    pub augmentation: Option<bool>,
    pub models: Vec<ModelId>,
    pub paths: Paths,
    pub augment: Option<AugmentTargets>,
    pub cleaning: CleaningPolicy,
    pub synth: SynthSpec,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scenario: crate::eval::MIXED_ID.into(),
            augmentation: None,
            models: ModelId::ALL.to_vec(),
            paths: Paths::default(),
            augment: None,
            cleaning: CleaningPolicy::default(),
            synth: SynthSpec::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.paths.manifest {
            fix(m);
        }
        fix(&mut self.paths.output_dir);
    }

    /// Checks every setting and that referenced inputs exist, before any work
    /// starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        if self.models.is_empty() {
            return Err(invalid("models must name at least one model".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(invalid("models contains duplicates".into()));
        }
        self.scenario_spec(false)?.validate().map_err(|e| invalid(e.to_string()))?;
        self.cleaning.validate().map_err(|e| invalid(e.to_string()))?;
        self.pipeline.validate().map_err(|e| invalid(e.to_string()))?;
        if self.paths.manifest.is_none() && (self.synth.spam == 0 || self.synth.ham == 0) {
            return Err(invalid("synthetic corpus needs spam and ham samples".into()));
        }
        if let Some(m) = &self.paths.manifest {
            if !m.is_file() {
                return Err(ConfigError::MissingPath(m.clone()));
            }
        }
        let out = &self.paths.output_dir;
        if out.exists() && !out.is_dir() {
            return Err(invalid(format!("output_dir {} is not a directory", out.display())));
        }
        match out.parent() {
            Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(ConfigError::MissingPath(p.to_path_buf())),
            _ => Ok(()),
        }
    }

    /// Augmentation settings to run, in report order.
    pub fn augmentation_settings(&self) -> Vec<bool> {
        match self.augmentation {
            Some(a) => vec![a],
            None => vec![false, true],
        }
    }

    pub fn scenario_spec(&self, augmentation: bool) -> Result<ScenarioSpec, ConfigError> {
        let mut spec = ScenarioSpec::by_id(&self.scenario, self.seed)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scenario {:?}", self.scenario)))?;
        spec.augmentation = augmentation;
        spec.models = self.models.clone();
        if let Some(t) = self.augment {
            spec.augment_targets = (t.ham_like, t.spam_like);
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::BoostTuning;

    #[test]
    fn empty_file_is_the_default() {
        let cfg = RunConfig::from_toml("", Path::new("/x")).unwrap();
        let mut want = RunConfig::default();
        want.paths.output_dir = PathBuf::from("/x/out");
        assert_eq!(cfg, want);
        assert_eq!(cfg.augmentation_settings(), vec![false, true]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.augmentation = Some(true);
        cfg.augment = Some(AugmentTargets {
            ham_like: 10,
            spam_like: 20,
        });
        cfg.paths.output_dir = PathBuf::from("/tmp/o");
        cfg.pipeline.boost = BoostTuning::Fixed {
            config: Default::default(),
        };
        let back = RunConfig::from_toml(&cfg.to_toml(), Path::new("/")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.scenario_spec(true).unwrap().augment_targets, (10, 20));
    }

    #[test]
    fn documented_example_parses() {
        let src = include_str!("config.rs");
        let example: String = src
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml(&example, dir.path()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipeline.train.epochs, 30);
        assert!(matches!(cfg.pipeline.boost, BoostTuning::Fixed { .. }));
        // The example manifest does not exist under the temp dir.
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath(_))));
    }

    #[test]
    fn invalid_settings_are_categorized() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "models = []",
            "scenario = \"nope\"",
            "unknown_key = 1",
            "[pipeline]\nlinear_c = -1.0",
            "[pipeline.train]\nbatch_size = 0",
            "[cleaning]\nsolid_variance_threshold = -2.0",
            "[paths]\nmanifest = \"missing.csv\"",
            "[paths]\noutput_dir = \"no/such/parent/out\"",
        ];
        for case in cases {
            let r = RunConfig::from_toml(case, dir.path()).and_then(|c| c.validate());
            assert!(r.is_err(), "accepted: {case}");
        }
        RunConfig::from_toml("", dir.path()).unwrap().validate().unwrap();
    }
}
