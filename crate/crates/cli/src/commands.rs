use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use imgspam_core::bundle::{load_bundle, save_bundle, ModelBundle, Provenance};
use imgspam_core::config::RunConfig;
use imgspam_core::corpus::{clean, ingest, write_corpus, CleaningReport, Corpus};
use imgspam_core::eval::{
    augment_training, emit_report, run_scenario, scenario_sets, LeakageAudit, MetricsReport, ReportDocument,
    ReportFormat, CROSS_ARCHIVE_TO_PERSONAL_ID, CROSS_PERSONAL_TO_ARCHIVE_ID,
};
use imgspam_core::synth::{self, SynthSpec};
use serde_json::json;

use crate::args::{Cli, Command, GlobalArgs, ReportFormatArg};
use crate::{runtime, score_bytes, CliError};

pub(crate) fn dispatch(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { manifest } => cmd_ingest(g, manifest),
        Command::Clean { manifest, out } => cmd_clean(g, manifest, out),
        Command::Augment { out } => cmd_augment(g, &out),
        Command::Train { model } => cmd_train(g, model),
        Command::Evaluate => cmd_evaluate(g, None),
        Command::CrossEval => cmd_evaluate(g, Some(cross_scenarios(g)?)),
        Command::Predict { input } => cmd_predict(g, &input),
        Command::Serve { addr, max_upload } => {
            let bundle = load_bundle(require_bundle(g)?).map_err(runtime)?;
            crate::serve::run(bundle, addr, max_upload)
        }
        Command::Selftest => crate::selftest::run_cli(),
        Command::Synth { out, spam, ham, pool } => cmd_synth(g, &out, spam, ham, pool),
    }
}

/// Config file (or defaults) with command-line overrides applied, validated.
fn load_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml("", Path::new("."))?,
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = &g.scenario {
        cfg.scenario = s.clone();
    }
    if let Some(a) = g.augmentation() {
        cfg.augmentation = Some(a);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_bundle(g: &GlobalArgs) -> Result<&Path, CliError> {
    g.bundle
        .as_deref()
        .ok_or_else(|| CliError::Usage("--bundle <path> is required".into()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

/// The corpus named by the config: an ingested manifest, or the synthetic
/// corpus; cleaned either way.
fn load_corpus(cfg: &RunConfig) -> Result<(Corpus, CleaningReport), CliError> {
    let raw = match &cfg.paths.manifest {
        Some(m) => ingest(m).map_err(runtime)?,
        None => synth::generate(&cfg.synth),
    };
    Ok(clean(raw, &cfg.cleaning))
}

/// Exclusive claim on an output path, released on drop.
pub(crate) struct LockGuard(PathBuf);

impl LockGuard {
    pub(crate) fn acquire(target: &Path) -> Result<Self, CliError> {
        let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".lock");
        let path = target.with_file_name(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::Locked(format!(
                "{} is held by another run (remove the lock file if that run is gone)",
                path.display()
            ))),
            Err(e) => Err(runtime(format!("cannot create lock {}: {e}", path.display()))),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn cmd_ingest(g: &GlobalArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let manifest = manifest
        .or(cfg.paths.manifest)
        .ok_or_else(|| CliError::Usage("--manifest <path> is required (or set paths.manifest)".into()))?;
    let corpus = ingest(&manifest).map_err(runtime)?;
    let counts: serde_json::Map<String, serde_json::Value> =
        corpus.counts().iter().map(|(t, n)| (t.to_string(), json!(n))).collect();
    for skip in &corpus.unreadable {
        eprintln!("warning: line {}: {}: {}", skip.line, skip.path, skip.reason);
    }
    print_json(&json!({
        "manifest": manifest,
        "samples": corpus.len(),
        "unreadable": corpus.unreadable.len(),
        "counts": counts,
    }));
    Ok(())
}

fn cmd_clean(g: &GlobalArgs, manifest: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    if manifest.is_some() {
        cfg.paths.manifest = manifest;
    }
    let (corpus, report) = load_corpus(&cfg)?;
    if let Some(dir) = out {
        let m = write_corpus(&corpus, &dir).map_err(runtime)?;
        eprintln!("cleaned corpus written to {}", m.display());
    }
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_synth(
    g: &GlobalArgs,
    out: &Path,
    spam: Option<usize>,
    ham: Option<usize>,
    pool: Option<usize>,
) -> Result<(), CliError> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        spam: spam.unwrap_or(d.spam),
        ham: ham.unwrap_or(d.ham),
        pool: pool.unwrap_or(d.pool),
        seed: g.seed.unwrap_or(d.seed),
    };
    let corpus = synth::generate(&spec);
    let manifest = write_corpus(&corpus, out).map_err(runtime)?;
    print_json(&json!({ "manifest": manifest, "samples": corpus.len() }));
    Ok(())
}

fn cmd_augment(g: &GlobalArgs, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let (corpus, _) = load_corpus(&cfg)?;
    let spec = cfg.scenario_spec(true)?;
    let (train, _) = scenario_sets(&corpus, &spec).map_err(runtime)?;
    let (augmented, warnings) =
        augment_training(&corpus, &train, &spec, cfg.pipeline.n_similar_per_query).map_err(runtime)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let _lock = LockGuard::acquire(out)?;
    let manifest = write_corpus(&augmented, out).map_err(runtime)?;
    print_json(&json!({
        "scenario": spec.id,
        "training_samples": train.len(),
        "augmented": augmented.len(),
        "manifest": manifest,
    }));
    Ok(())
}

fn report_format(g: &GlobalArgs) -> ReportFormat {
    match g.report_format {
        ReportFormatArg::Text => ReportFormat::TableText,
        ReportFormatArg::Structured => ReportFormat::Structured,
    }
}

fn cmd_train(g: &GlobalArgs, model: imgspam_core::model::ModelId) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let augmentation = cfg.augmentation.unwrap_or(true);
    let bundle_path = match &g.bundle {
        Some(p) => p.clone(),
        None => cfg.paths.output_dir.join(format!("{}.bundle", model.as_str().split(' ').next().unwrap_or("model"))),
    };
    if let Some(parent) = bundle_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    let _lock = LockGuard::acquire(&bundle_path)?;

    let (corpus, _) = load_corpus(&cfg)?;
    let mut spec = cfg.scenario_spec(augmentation)?;
    spec.models = vec![model];
    let outcome = run_scenario(&corpus, &spec, &cfg.pipeline).map_err(runtime)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let detector = outcome.detectors.into_iter().next().expect("one model requested");
    let provenance = Provenance {
        scenario_id: spec.id.clone(),
        augmentation,
        seed: spec.seed,
        train_digest: Some(outcome.train_digest),
        test_digest: Some(outcome.test_digest),
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    let bundle = ModelBundle::new(detector, provenance).map_err(runtime)?;
    let digest = save_bundle(&bundle, &bundle_path).map_err(runtime)?;

    let doc = ReportDocument::new(&spec.id, outcome.reports, vec![outcome.audit]);
    eprint!("{}", emit_report(&doc, ReportFormat::TableText).map_err(runtime)?);
    print_json(&json!({
        "bundle": bundle_path,
        "digest": digest.to_hex(),
        "model_id": model,
        "scenario": spec.id,
        "augmentation": augmentation,
    }));
    Ok(())
}

fn cross_scenarios(g: &GlobalArgs) -> Result<Vec<String>, CliError> {
    match g.scenario.as_deref() {
        None => Ok(vec![CROSS_ARCHIVE_TO_PERSONAL_ID.into(), CROSS_PERSONAL_TO_ARCHIVE_ID.into()]),
        Some(s) if s.starts_with("cross") => Ok(vec![s.to_string()]),
        Some(s) => Err(CliError::Usage(format!("cross-eval needs a cross-source scenario, got {s:?}"))),
    }
}

/// Runs each scenario under every requested augmentation setting, prints one
/// report per scenario and stores the structured form in the output
/// directory.
fn cmd_evaluate(g: &GlobalArgs, scenarios: Option<Vec<String>>) -> Result<(), CliError> {
    let base = load_config(g)?;
    let scenarios = scenarios.unwrap_or_else(|| vec![base.scenario.clone()]);
    fs::create_dir_all(&base.paths.output_dir).map_err(runtime)?;
    let _lock = LockGuard::acquire(&base.paths.output_dir.join("reports"))?;
    let (corpus, _) = load_corpus(&base)?;

    for (k, scenario) in scenarios.iter().enumerate() {
        let cfg = RunConfig {
            scenario: scenario.clone(),
            ..base.clone()
        };
        let mut reports: Vec<MetricsReport> = Vec::new();
        let mut audits: Vec<LeakageAudit> = Vec::new();
        let mut id = scenario.clone();
        for aug in cfg.augmentation_settings() {
            let spec = cfg.scenario_spec(aug)?;
            id = spec.id.clone();
            let outcome = run_scenario(&corpus, &spec, &cfg.pipeline).map_err(runtime)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            reports.extend(outcome.reports);
            audits.push(outcome.audit);
        }
        let doc = ReportDocument::new(&id, reports, audits);
        let structured = emit_report(&doc, ReportFormat::Structured).map_err(runtime)?;
        let path = base.paths.output_dir.join(format!("report-{id}.json"));
        fs::write(&path, &structured).map_err(runtime)?;
        if k > 0 {
            println!();
        }
        match report_format(g) {
            ReportFormat::Structured => println!("{structured}"),
            f => print!("{}", emit_report(&doc, f).map_err(runtime)?),
        }
    }
    Ok(())
}

fn cmd_predict(g: &GlobalArgs, input: &Path) -> Result<(), CliError> {
    let bundle = load_bundle(require_bundle(g)?).map_err(runtime)?;
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(input)
            .map_err(runtime)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        v.sort();
        v
    } else if input.is_file() {
        vec![input.to_path_buf()]
    } else {
        return Err(CliError::Usage(format!("input {} does not exist", input.display())));
    };
    if files.is_empty() {
        eprintln!("warning: no images found in {}", input.display());
        return Ok(());
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for path in files {
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        match score_bytes(&bundle, &bytes) {
            Ok(s) => {
                let line = json!({ "path": path, "label": s.label, "margin": s.margin });
                writeln!(out, "{line}").map_err(runtime)?;
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    Ok(())
}
