//! From manifest records to windows, labels, features and training recordings.

use std::fs;
use std::ops::Range;

use serde::Serialize;

use crate::audio::{read_wav, AudioClip};
use crate::dataset::Recording;
use crate::error::{Error, Result};
use crate::evaluation::{majority_vote, SweepSequence};
use crate::features::{decode_fseq, feature_file, FeatureSource, MfccExtractor};
use crate::labelling::{relabel_sequence, theta_trace, LabellingConfig};
use crate::manifest::{ManifestRecord, Split};
use crate::segmentation::{align_labels, segment, SegmentWindow, HOP_S, WINDOW_S};
use crate::vad::{is_stress, VadCode};

pub fn load_clip(rec: &ManifestRecord) -> Result<AudioClip> {
    let samples = read_wav(&rec.audio_path)?;
    Ok(AudioClip::new(samples, &rec.speaker_id, &rec.utterance_id, &rec.text_id))
}

/// Windows of the record's clip, labelled from its emotion spans.
pub fn segment_record(rec: &ManifestRecord, clip: &AudioClip) -> Result<Vec<SegmentWindow>> {
    let windows = segment(clip, WINDOW_S, HOP_S)?;
    align_labels(&windows, &rec.emotion_spans()?)
}

/// Maximal runs of consecutive labelled windows.
pub fn labelled_runs(windows: &[SegmentWindow]) -> Vec<Range<usize>> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, w) in windows.iter().enumerate() {
        match (w.label.is_some(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(s..windows.len());
    }
    runs
}

/// Per-window stress labelling of one record; unlabelled windows stay `None`
/// and split the record into independently relabelled runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowLabel {
    pub utterance_id: String,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub emotion: Option<VadCode>,
    pub label: Option<VadCode>,
    pub theta: Option<f64>,
    pub stress: Option<bool>,
}

pub fn label_windows(windows: &[SegmentWindow], config: &LabellingConfig) -> Result<Vec<WindowLabel>> {
    let mut out: Vec<WindowLabel> = windows
        .iter()
        .map(|w| WindowLabel {
            utterance_id: w.clip_ref.clone(),
            index: w.index,
            start_s: w.start_s,
            end_s: w.end_s,
            emotion: w.label,
            label: None,
            theta: None,
            stress: None,
        })
        .collect();
    for run in labelled_runs(windows) {
        let emotions: Vec<VadCode> = windows[run.clone()].iter().map(|w| w.label.unwrap()).collect();
        let labels = relabel_sequence(&emotions, config)?;
        let thetas = theta_trace(&emotions, config);
        for ((slot, label), theta) in out[run].iter_mut().zip(labels).zip(thetas) {
            slot.label = Some(label);
            slot.theta = Some(theta);
            slot.stress = Some(is_stress(label));
        }
    }
    Ok(out)
}

/// One feature vector per window.
pub fn window_features(
    clip: &AudioClip,
    windows: &[SegmentWindow],
    source: &FeatureSource,
    extractor: &MfccExtractor,
) -> Result<Vec<Vec<f64>>> {
    match source {
        FeatureSource::Mfcc => windows
            .iter()
            .map(|w| {
                extractor
                    .extract_window(w.samples(clip))
                    .map(|v| v.values.iter().map(|&x| x as f64).collect())
            })
            .collect(),
        FeatureSource::Files(dir) => {
            let path = feature_file(dir, &clip.utterance_id);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let seq = decode_fseq(&bytes, None)?;
            if seq.len() != windows.len() {
                return Err(Error::LengthMismatch(format!(
                    "{}: {} feature rows for {} windows",
                    path.display(),
                    seq.len(),
                    windows.len()
                )));
            }
            Ok(seq
                .vectors
                .iter()
                .map(|v| v.values.iter().map(|&x| x as f64).collect())
                .collect())
        }
    }
}

/// The labelled runs of one manifest record, ready for training or scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordData {
    pub utterance_id: String,
    pub runs: Vec<Recording>,
    /// Recording-level truth: the manifest's `stress` field, or else the
    /// majority vote of the relabelled windows.
    pub stress: bool,
}

pub fn build_record(
    rec: &ManifestRecord,
    source: &FeatureSource,
    extractor: &MfccExtractor,
    config: &LabellingConfig,
) -> Result<Option<RecordData>> {
    let clip = load_clip(rec)?;
    let windows = segment_record(rec, &clip)?;
    let labels = label_windows(&windows, config)?;
    let runs = labelled_runs(&windows);
    if runs.is_empty() {
        return Ok(None);
    }
    let features = window_features(&clip, &windows, source, extractor)?;
    let runs = runs
        .into_iter()
        .enumerate()
        .map(|(k, run)| {
            let targets = labels[run.clone()].iter().map(|l| l.label.unwrap()).collect();
            Recording::new(format!("{}#{k}", rec.utterance_id), features[run].to_vec(), targets)
        })
        .collect::<Result<Vec<_>>>()?;
    let window_stress: Vec<bool> = labels.iter().filter_map(|l| l.stress).collect();
    let stress = match rec.stress {
        Some(s) => s,
        None => majority_vote(&window_stress)?,
    };
    let runs = runs.into_iter().map(|r| r.with_stress(stress)).collect();
    Ok(Some(RecordData {
        utterance_id: rec.utterance_id.clone(),
        runs,
        stress,
    }))
}

pub fn build_split(
    records: &[ManifestRecord],
    split: Split,
    source: &FeatureSource,
    extractor: &MfccExtractor,
    config: &LabellingConfig,
) -> Result<Vec<RecordData>> {
    let mut out = Vec::new();
    for rec in records.iter().filter(|r| r.split == split) {
        if let Some(d) = build_record(rec, source, extractor, config)? {
            out.push(d);
        }
    }
    Ok(out)
}

pub fn flatten_runs(data: &[RecordData]) -> Vec<Recording> {
    data.iter().flat_map(|d| d.runs.iter().cloned()).collect()
}

/// Emotion runs with reference stress labels for every window covered by a
/// `stress_spans` annotation.
pub fn sweep_sequences(rec: &ManifestRecord, clip: &AudioClip) -> Result<Vec<SweepSequence>> {
    let windows = segment_record(rec, clip)?;
    let references = align_labels(&windows, &rec.reference_spans()?)?;
    Ok(labelled_runs(&windows)
        .into_iter()
        .map(|run| SweepSequence {
            emotions: windows[run.clone()].iter().map(|w| w.label.unwrap()).collect(),
            references: references[run]
                .iter()
                .enumerate()
                .filter_map(|(i, w)| w.label.map(|c| (i, c)))
                .collect(),
        })
        .filter(|s| !s.references.is_empty())
        .collect())
}
