//! Per-window feature vectors: MFCC extraction and precomputed embedding files.
//!
//! Feature files ("FSEQ") are little-endian throughout:
//!
//! ```text
//! b"FSEQ" | version: u32 | rows: u32 | cols: u32 | rows*cols f32 (row-major)
//! ```

pub mod mfcc;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub use mfcc::{pool_window, MfccConfig, MfccExtractor};

pub const MFCC_DIM: usize = 40;
pub const EMBEDDING_DIM: usize = 1024;

const FSEQ_MAGIC: &[u8; 4] = b"FSEQ";
const FSEQ_VERSION: u32 = 1;
const FSEQ_HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature component {i}")));
        }
        Ok(FeatureVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSequence {
    pub vectors: Vec<FeatureVector>,
    /// Window index of each vector within its recording.
    pub window_refs: Vec<usize>,
}

impl FeatureSequence {
    pub fn new(vectors: Vec<FeatureVector>, window_refs: Vec<usize>) -> Result<Self> {
        if vectors.len() != window_refs.len() {
            return Err(Error::LengthMismatch(format!(
                "{} vectors but {} window references",
                vectors.len(),
                window_refs.len()
            )));
        }
        if let Some(first) = vectors.first() {
            let dim = first.dim();
            if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.dim(),
                });
            }
        }
        Ok(FeatureSequence {
            vectors,
            window_refs,
        })
    }

    /// Sequence covering windows `0..len` in order.
    pub fn contiguous(vectors: Vec<FeatureVector>) -> Result<Self> {
        let refs = (0..vectors.len()).collect();
        FeatureSequence::new(vectors, refs)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(FeatureVector::dim)
    }
}

pub fn encode_fseq(seq: &FeatureSequence) -> Vec<u8> {
    let cols = seq.dim().unwrap_or(0);
    let mut out = Vec::with_capacity(FSEQ_HEADER + 4 * seq.len() * cols);
    out.extend_from_slice(FSEQ_MAGIC);
    out.extend_from_slice(&FSEQ_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in &seq.vectors {
        for x in &v.values {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Parse an FSEQ payload; `expected_dim` of `None` accepts any width.
pub fn decode_fseq(bytes: &[u8], expected_dim: Option<usize>) -> Result<FeatureSequence> {
    if bytes.len() < FSEQ_HEADER {
        return Err(Error::format("feature", "truncated header"));
    }
    if &bytes[..4] != FSEQ_MAGIC {
        return Err(Error::format("feature", "bad magic"));
    }
    let version = read_u32(bytes, 4);
    if version != FSEQ_VERSION {
        return Err(Error::format("feature", format!("unsupported version {version}")));
    }
    let rows = read_u32(bytes, 8) as usize;
    let cols = read_u32(bytes, 12) as usize;
    if let Some(expected) = expected_dim {
        if cols != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: cols,
            });
        }
    }
    let payload = &bytes[FSEQ_HEADER..];
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("feature", "size overflow"))?;
    if payload.len() != want {
        return Err(Error::format(
            "feature",
            format!("expected {want} payload bytes, found {}", payload.len()),
        ));
    }
    let vectors = payload
        .chunks_exact(4 * cols.max(1))
        .take(rows)
        .enumerate()
        .map(|(r, row)| {
            let values = row
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
                .collect();
            FeatureVector::new(values).map_err(|_| Error::NonFinite(format!("row {r}")))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSequence::contiguous(vectors)
}

pub fn write_fseq(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_fseq(seq)).map_err(|e| Error::io(path, e))
}

/// Load precomputed per-window embeddings (e.g. self-supervised speech features).
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fseq(&bytes, Some(expected_dim))
}

/// Where per-window features come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSource {
    Mfcc,
    /// Directory of `<utterance_id>.fseq` files.
    Files(PathBuf),
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mfcc" {
            Ok(FeatureSource::Mfcc)
        } else if let Some(dir) = s.strip_prefix("file:") {
            Ok(FeatureSource::Files(PathBuf::from(dir)))
        } else {
            Err(Error::InvalidConfig(format!(
                "feature source must be mfcc or file:<dir>, got {s:?}"
            )))
        }
    }
}

impl std::fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSource::Mfcc => f.write_str("mfcc"),
            FeatureSource::Files(dir) => write!(f, "file:{}", dir.display()),
        }
    }
}

pub fn feature_file(dir: &Path, utterance_id: &str) -> PathBuf {
    dir.join(format!("{utterance_id}.fseq"))
}
