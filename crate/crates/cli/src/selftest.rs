//! Fast invariant checks on built-in fixtures (`imgspam selftest`).

use image::{Rgb, RgbImage};
use imgspam_core::augment::splice_spam;
use imgspam_core::baselines::LinearMarginModel;
use imgspam_core::boost::{fit, BoostConfig};
use imgspam_core::bundle::{ModelBundle, Provenance};
use imgspam_core::convnet::{build, gradient_check, NetConfig};
use imgspam_core::corpus::{clean, CleaningPolicy, Corpus, CorpusTag, ImageSample, Label, NET_INPUT_LEN};
use imgspam_core::eval::{f1_score, percent, ConfusionMatrix};
use imgspam_core::model::{Detector, Head};
use imgspam_core::synth::{self, SynthSpec};

use crate::CliError;

type Check = fn() -> Result<(), String>;

pub const CHECKS: &[(&str, Check)] = &[
    ("metric arithmetic", metric_arithmetic),
    ("confusion identities", confusion_identities),
    ("splice geometry", splice_geometry),
    ("cleaning idempotence", cleaning_idempotence),
    ("boosting fit", boosting_fit),
    ("gradient check", gradient_fidelity),
    ("bundle round trip", bundle_round_trip),
    ("synthetic determinism", synthetic_determinism),
];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_arithmetic() -> Result<(), String> {
    let f1 = f1_score(0.91, 0.85);
    ensure((f1 - 0.8790).abs() < 5e-5 && percent(f1) == 88, || format!("f1(0.91, 0.85) = {f1}"))
}

fn confusion_identities() -> Result<(), String> {
    let truth = [true, true, false, false, true, false, true];
    let preds = [true, false, false, true, true, false, false];
    let cm = ConfusionMatrix::tally(&preds, &truth);
    ensure(cm.tp == 2 && cm.fn_ == 2 && cm.fp == 1 && cm.tn == 2, || format!("{cm:?}"))?;
    let m = cm.metrics();
    ensure((m.accuracy - 4.0 / 7.0).abs() < 1e-12 && (m.precision - 2.0 / 3.0).abs() < 1e-12, || {
        format!("{m:?}")
    })
}

fn fixture_spam(i: u32, w: u32, h: u32) -> ImageSample {
    let px = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 + i) as u8, (y * 3) as u8, ((x ^ y) + i) as u8]));
    ImageSample::from_pixels(format!("s{i}"), px, Label::Spam, CorpusTag::PersonalSpam, None)
}

fn splice_geometry() -> Result<(), String> {
    for i in 0..20u32 {
        let a = fixture_spam(i, 20 + i, 15 + 2 * i);
        let b = fixture_spam(i + 100, 41 - i, 30 + i);
        let r = splice_spam(&a, &b, false).map_err(|e| e.to_string())?;
        ensure(r.pixels.dimensions() == a.pixels.dimensions(), || format!("pair {i}: size changed"))?;
        let half = a.width() / 2;
        for y in 0..a.height() {
            for x in 0..half {
                ensure(r.pixels.get_pixel(x, y) == a.pixels.get_pixel(x, y), || {
                    format!("pair {i}: left region differs at ({x}, {y})")
                })?;
            }
        }
    }
    Ok(())
}

fn cleaning_idempotence() -> Result<(), String> {
    let mut c = synth::generate(&SynthSpec {
        spam: 12,
        ham: 8,
        pool: 0,
        seed: 1,
    });
    let first = c.samples()[0].clone();
    let mut dup = first.clone();
    dup.id = "planted-duplicate".into();
    c.push(dup).map_err(|e| e.to_string())?;
    let n = c.len();
    let (once, report) = clean(c, &CleaningPolicy::default());
    ensure(once.len() + report.total_removed() == n, || "accounting identity broken".into())?;
    ensure(once.contains_id(&first.id) && !once.contains_id("planted-duplicate"), || {
        "first occurrence not retained".into()
    })?;
    let before: Vec<String> = once.samples().iter().map(|s| s.id.clone()).collect();
    let (twice, r2) = clean(once, &CleaningPolicy::default());
    let after: Vec<String> = twice.samples().iter().map(|s| s.id.clone()).collect();
    ensure(r2.total_removed() == 0 && before == after, || "second pass changed the corpus".into())
}

fn boosting_fit() -> Result<(), String> {
    let x: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32, ((i * 7) % 5) as f32]).collect();
    let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
    let cfg = BoostConfig {
        num_trees: 20,
        subsample: 1.0,
        feature_subsample: 1.0,
        ..BoostConfig::default()
    };
    let m = fit(&x, &y, &cfg).map_err(|e| e.to_string())?;
    let ok = x.iter().zip(&y).all(|(f, &t)| (m.predict_margin(f).unwrap_or(f64::NAN) > 0.0) == t);
    ensure(ok && m.trees.iter().all(|t| t.is_well_formed(2)), || "separable data not fit".into())
}

fn gradient_fidelity() -> Result<(), String> {
    let p = build(&NetConfig::toy(), 4).map_err(|e| e.to_string())?;
    let x: Vec<f32> = (0..16).map(|i| ((i * 37) % 17) as f32 / 17.0).collect();
    let r = gradient_check(&p, &x, true, 1e-5, p.len(), 0).map_err(|e| e.to_string())?;
    ensure(r.max_relative_error < 1e-4, || format!("max relative error {}", r.max_relative_error))
}

fn bundle_round_trip() -> Result<(), String> {
    let mut m = LinearMarginModel::zeros(NET_INPUT_LEN, 1.0);
    for (i, w) in m.weights.iter_mut().enumerate() {
        *w = ((i % 7) as f64 - 3.0) * 1e-3;
    }
    let d = Detector::new(None, Head::PixelMargin(m)).map_err(|e| e.to_string())?;
    let b = ModelBundle::new(d, Provenance::default()).map_err(|e| e.to_string())?;
    let bytes = b.to_bytes();
    let back = ModelBundle::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back.self_test_margin.to_bits() == b.self_test_margin.to_bits(), || "margin changed".into())?;
    let mut bad = bytes;
    let mid = bad.len() / 2;
    bad[mid] ^= 1;
    ensure(ModelBundle::from_bytes(&bad).is_err(), || "corrupt bundle accepted".into())
}

fn synthetic_determinism() -> Result<(), String> {
    let spec = SynthSpec {
        spam: 6,
        ham: 4,
        pool: 2,
        seed: 9,
    };
    let digests = |c: Corpus| c.samples().iter().map(|s| s.byte_digest).collect::<Vec<_>>();
    ensure(digests(synth::generate(&spec)) == digests(synth::generate(&spec)), || {
        "generator is not deterministic".into()
    })
}

/// Runs every check; returns the failures as `(name, message)`.
pub fn run_checks(mut report: impl FnMut(&str, &Result<(), String>)) -> Vec<(String, String)> {
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        let r = check();
        report(name, &r);
        if let Err(m) = r {
            failed.push((name.to_string(), m));
        }
    }
    failed
}

pub(crate) fn run_cli() -> Result<(), CliError> {
    let failed = run_checks(|name, r| match r {
        Ok(()) => println!("ok    {name}"),
        Err(m) => println!("FAIL  {name}: {m}"),
    });
    if failed.is_empty() {
        println!("selftest: {} checks passed", CHECKS.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} of {} selftest checks failed", failed.len(), CHECKS.len())))
    }
}
