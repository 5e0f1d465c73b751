//! Manifest format: one tab-separated record per line,
//! `<relative-path>\t<spam|ham>\t<corpus_tag>`. Lines starting with `#` and
//! blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Corpus, CorpusError, CorpusTag, Label};
use crate::imaging;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// 1-based line number in the manifest.
    pub line: usize,
    pub path: String,
    pub label: Label,
    pub tag: CorpusTag,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let syntax = |message: String| CorpusError::ManifestSyntax { line, message };
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(syntax(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() {
            return Err(syntax("empty path".into()));
        }
        let label = match fields[1] {
            "spam" => Label::Spam,
            "ham" => Label::Ham,
            other => return Err(syntax(format!("label must be spam or ham, got `{other}`"))),
        };
        let tag: CorpusTag = fields[2].parse().map_err(syntax)?;
        out.push(ManifestEntry {
            line,
            path: fields[0].to_string(),
            label,
            tag,
        });
    }
    Ok(out)
}

/// Writes every sample as `<dir>/images/<n>.png` plus `<dir>/manifest.tsv`.
///
/// Returns the manifest path. Parent ids are recorded as trailing comments so
/// the lineage of augmented samples stays auditable.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<std::path::PathBuf, CorpusError> {
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Write { path, source }
    };
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(write_err(&img_dir))?;
    let mut text = String::from("# path\tlabel\tcorpus_tag\n");
    for (n, s) in corpus.samples().iter().enumerate() {
        if s.label == Label::Unlabeled {
            return Err(CorpusError::Unlabeled(s.id.clone()));
        }
        let rel = format!("images/{n:06}.png");
        let path = dir.join(&rel);
        std::fs::write(&path, imaging::encode_png(&s.pixels)).map_err(write_err(&path))?;
        if !s.parents.is_empty() {
            let _ = writeln!(text, "# {} <- {}", rel, s.parents.join(","));
        }
        let _ = writeln!(text, "{}\t{}\t{}", rel, s.label, s.tag);
    }
    let manifest = dir.join("manifest.tsv");
    std::fs::write(&manifest, text).map_err(write_err(&manifest))?;
    Ok(manifest)
}
