//! Versioned, self-validating model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "IMGSPAM\0" | u32 format_version | u32 header_len | header (canonical JSON)
//! tensors: per network slot, in layer order:
//!     u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data[prod(dims)]
//! self-test input: u32 len | f32 data[len]
//! head: u64 len | head bytes
//! SHA-256 of everything above (32 bytes)
//! ```
//!
//! Loading verifies the trailer first, then the version, then re-scores the
//! stored self-test vector and requires a bit-identical margin.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::LinearMarginModel;
use crate::boost::{BoostConfig, BoostModel};
use crate::convnet::{NetConfig, NetParams};
use crate::corpus::{image_to_net_input, Corpus, NET_INPUT_LEN, NET_INPUT_SIDE};
use crate::digest::ByteDigest;
use crate::model::{Detector, Head, ModelError, ModelId};

pub const BUNDLE_MAGIC: &[u8; 8] = b"IMGSPAM\0";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const TRAILER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model bundle (bad magic or truncated file)")]
    NotABundle,
    #[error("integrity check failed: content digest does not match trailer")]
    Integrity,
    #[error(
        "bundle format version {found} cannot be loaded by this build (expects {expected}); \
         retrain or re-export the model with a matching release"
    )]
    Migration { found: u32, expected: u32 },
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error("self-test margin mismatch: stored {stored:e}, recomputed {recomputed:e}")]
    SelfTest { stored: f64, recomputed: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How raw images become network inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub resize: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub layout: String,
    pub scale: String,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            resize: "bilinear".into(),
            width: NET_INPUT_SIDE,
            height: NET_INPUT_SIDE,
            channels: 3,
            layout: "hwc".into(),
            scale: "x / 255".into(),
        }
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_id: String,
    pub augmentation: bool,
    pub seed: u64,
    /// Digest over the sorted byte digests of the training samples.
    pub train_digest: Option<ByteDigest>,
    pub test_digest: Option<ByteDigest>,
    pub tool_version: String,
}

/// Order-independent digest of a corpus' sample digests.
pub fn corpus_digest(corpus: &Corpus) -> ByteDigest {
    let mut ds: Vec<ByteDigest> = corpus.samples().iter().map(|s| s.byte_digest).collect();
    ds.sort();
    let bytes: Vec<u8> = ds.iter().flat_map(|d| d.0).collect();
    ByteDigest::of(&bytes)
}

/// Fixed image shipped with every build; its network input is the bundle
/// self-test vector.
pub fn self_test_image() -> RgbImage {
    RgbImage::from_fn(48, 40, |x, y| {
        let stripe = if (y / 5) % 2 == 0 { 40 } else { 0 };
        Rgb([
            (x * 5 + stripe) as u8,
            (y * 6) as u8,
            ((x * y) % 251) as u8,
        ])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub format_version: u32,
    pub preprocessing: Preprocessing,
    pub provenance: Provenance,
    pub detector: Detector,
    pub self_test_input: Vec<f32>,
    pub self_test_margin: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeadHeader {
    BoostedTrees { config: BoostConfig, n_features: usize, base_score: f64 },
    LinearMargin { dim: usize },
    PixelMargin { dim: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_id: ModelId,
    preprocessing: Preprocessing,
    provenance: Provenance,
    net_config: Option<NetConfig>,
    net_seed: Option<u64>,
    head: HeadHeader,
    self_test_margin: f64,
}

impl ModelBundle {
    /// Wraps a detector, computing the self-test margin from the built-in
    /// self-test image.
    pub fn new(detector: Detector, provenance: Provenance) -> Result<Self, BundleError> {
        let input = image_to_net_input(&self_test_image());
        let margin = detector.margins(&input)?[0];
        Ok(ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            preprocessing: Preprocessing::default(),
            provenance,
            detector,
            self_test_input: input,
            self_test_margin: margin,
        })
    }

    pub fn model_id(&self) -> ModelId {
        self.detector.model_id()
    }

    /// Canonical serialization; equal model state gives equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.detector;
        let (head, head_bytes) = match &d.head {
            Head::BoostedTrees(m) => (
                HeadHeader::BoostedTrees {
                    config: m.config,
                    n_features: m.n_features,
                    base_score: m.base_score,
                },
                m.trees_to_bytes(),
            ),
            Head::LinearMargin(m) => (HeadHeader::LinearMargin { dim: m.weights.len() }, m.to_le_bytes()),
            Head::PixelMargin(m) => (HeadHeader::PixelMargin { dim: m.weights.len() }, m.to_le_bytes()),
        };
        let header = Header {
            format_version: self.format_version,
            model_id: d.model_id(),
            preprocessing: self.preprocessing.clone(),
            provenance: self.provenance.clone(),
            net_config: d.net.as_ref().map(|n| n.config.clone()),
            net_seed: d.net.as_ref().map(|n| n.seed),
            head,
            self_test_margin: self.self_test_margin,
        };
        // serde_json writes struct fields in declaration order, so the header
        // text is canonical.
        let header = serde_json::to_vec(&header).expect("header serializes");

        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        if let Some(net) = &d.net {
            for slot in &net.slots {
                out.extend_from_slice(&(slot.name.len() as u16).to_le_bytes());
                out.extend_from_slice(slot.name.as_bytes());
                out.push(slot.shape.len() as u8);
                for &dim in &slot.shape {
                    out.extend_from_slice(&(dim as u32).to_le_bytes());
                }
                for v in &net.data[slot.range()] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.self_test_input.len() as u32).to_le_bytes());
        for v in &self.self_test_input {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(head_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&head_bytes);
        let trailer = ByteDigest::of(&out);
        out.extend_from_slice(&trailer.0);
        out
    }

    pub fn digest(&self) -> ByteDigest {
        ByteDigest::of(&self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        if bytes.len() < BUNDLE_MAGIC.len() + 8 + TRAILER_LEN || &bytes[..8] != BUNDLE_MAGIC {
            return Err(BundleError::NotABundle);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
        if ByteDigest::of(body).0 != trailer {
            return Err(BundleError::Integrity);
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != BUNDLE_FORMAT_VERSION {
            return Err(BundleError::Migration {
                found: version,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| BundleError::Malformed(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(BundleError::Malformed("header version disagrees with preamble".into()));
        }

        let net = match (&header.net_config, header.net_seed) {
            (Some(config), Some(seed)) => {
                let mut net = NetParams::zeros(config).map_err(|e| BundleError::Malformed(e.to_string()))?;
                net.seed = seed;
                for i in 0..net.slots.len() {
                    let name_len = r.u16()? as usize;
                    let name = std::str::from_utf8(r.take(name_len)?)
                        .map_err(|_| BundleError::Malformed("tensor name is not utf-8".into()))?;
                    let ndim = r.u8()? as usize;
                    let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
                    let slot = &net.slots[i];
                    if name != slot.name || dims != slot.shape {
                        return Err(BundleError::Malformed(format!(
                            "tensor {i}: found {name} {dims:?}, expected {} {:?}",
                            slot.name, slot.shape
                        )));
                    }
                    let range = slot.range();
                    let vals = r.f32s(range.len())?;
                    net.data[range].copy_from_slice(&vals);
                }
                Some(net)
            }
            (None, None) => None,
            _ => return Err(BundleError::Malformed("net config and seed must both be present".into())),
        };

        let st_len = r.u32()? as usize;
        if st_len != NET_INPUT_LEN {
            return Err(BundleError::Malformed(format!("self-test vector has {st_len} values")));
        }
        let self_test_input = r.f32s(st_len)?;
        let head_len = r.u64()? as usize;
        let head_bytes = r.take(head_len)?;
        if r.pos != body.len() {
            return Err(BundleError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
        }

        let linear = |dim: usize| {
            LinearMarginModel::from_le_bytes(head_bytes)
                .filter(|m| m.weights.len() == dim)
                .ok_or_else(|| BundleError::Malformed("linear head encoding".into()))
        };
        let head = match header.head {
            HeadHeader::BoostedTrees {
                config,
                n_features,
                base_score,
            } => {
                let mut m = BoostModel::trees_from_bytes(config, head_bytes)
                    .map_err(|e| BundleError::Malformed(e.to_string()))?;
                m.n_features = n_features;
                m.base_score = base_score;
                Head::BoostedTrees(m)
            }
            HeadHeader::LinearMargin { dim } => Head::LinearMargin(linear(dim)?),
            HeadHeader::PixelMargin { dim } => Head::PixelMargin(linear(dim)?),
        };
        if head.model_id() != header.model_id {
            return Err(BundleError::Malformed("model id disagrees with head kind".into()));
        }
        let detector = Detector::new(net, head)?;

        let recomputed = detector.margins(&self_test_input)?[0];
        if recomputed.to_bits() != header.self_test_margin.to_bits() {
            return Err(BundleError::SelfTest {
                stored: header.self_test_margin,
                recomputed,
            });
        }
        Ok(ModelBundle {
            format_version: version,
            preprocessing: header.preprocessing,
            provenance: header.provenance,
            detector,
            self_test_input,
            self_test_margin: recomputed,
        })
    }
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<ByteDigest, BundleError> {
    let bytes = bundle.to_bytes();
    let io = |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("bundle.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)?;
    Ok(ByteDigest::of(&bytes))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let bytes = fs::read(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ModelBundle::from_bytes(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| BundleError::Malformed("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, BundleError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, BundleError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| BundleError::Malformed("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}
