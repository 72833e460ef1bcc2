//! JSON-lines corpus manifests, one record per clip.
//!
//! ```text
//! {"audio_path": "a.wav", "speaker_id": "s1", "utterance_id": "u1", "text_id": "t1",
//!  "spans": [{"start_s": 0, "end_s": 30, "label": "fear"}], "split": "train"}
//! ```
//!
//! Optional fields: `stress` (recording-level ground truth) and
//! `stress_spans` (reference stress annotations used by the labelling sweep).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Span;
use crate::vad::parse_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidConfig(format!("split must be train, val or test, got {s:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start_s: f64,
    pub end_s: f64,
    /// `"v,a,d"`, an emotion name, or `"stress"`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub audio_path: PathBuf,
    pub speaker_id: String,
    pub utterance_id: String,
    pub text_id: String,
    pub spans: Vec<SpanRecord>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stress_spans: Vec<SpanRecord>,
}

fn to_spans(records: &[SpanRecord]) -> Result<Vec<Span>> {
    records
        .iter()
        .map(|s| {
            if !(s.start_s.is_finite() && s.end_s.is_finite() && s.start_s < s.end_s) {
                return Err(Error::InvalidConfig(format!("span [{}, {})", s.start_s, s.end_s)));
            }
            Ok(Span {
                start_s: s.start_s,
                end_s: s.end_s,
                label: parse_label(&s.label)?,
            })
        })
        .collect()
}

impl ManifestRecord {
    pub fn emotion_spans(&self) -> Result<Vec<Span>> {
        to_spans(&self.spans)
    }

    pub fn reference_spans(&self) -> Result<Vec<Span>> {
        to_spans(&self.stress_spans)
    }
}

/// Parse manifest text; blank lines are skipped and relative audio paths
/// are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        rec.emotion_spans()
            .and(rec.reference_spans())
            .map_err(|e| Error::Manifest {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if rec.audio_path.is_relative() {
            rec.audio_path = base.join(&rec.audio_path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

pub fn to_jsonl(records: &[ManifestRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
