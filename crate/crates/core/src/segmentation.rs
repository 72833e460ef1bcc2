//! Overlapping fixed-length windows over long recordings, label alignment,
//! and concatenation augmentation for short emotion clips.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::vad::{encode_emotion, Emotion, VadCode};

pub const WINDOW_S: f64 = 10.0;
pub const HOP_S: f64 = 5.0;

/// A labelled time span `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start_s: f64,
    pub end_s: f64,
    pub label: VadCode,
}

impl Span {
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWindow {
    /// Window position `t` within its recording.
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub start_sample: usize,
    pub end_sample: usize,
    pub clip_ref: String,
    pub label: Option<VadCode>,
}

impl SegmentWindow {
    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    pub fn samples<'a>(&self, clip: &'a AudioClip) -> &'a [f32] {
        &clip.samples[self.start_sample..self.end_sample]
    }
}

/// Number of full windows in `n_samples`; trailing audio shorter than a window is dropped.
pub fn window_count(n_samples: usize, window_len: usize, hop_len: usize) -> usize {
    if n_samples < window_len || hop_len == 0 {
        0
    } else {
        (n_samples - window_len) / hop_len + 1
    }
}

fn seconds_to_samples(s: f64, rate: u32) -> usize {
    (s * rate as f64).round() as usize
}

/// Window layout for a clip of `n_samples` without touching the samples.
pub fn plan_windows(
    n_samples: usize,
    sample_rate: u32,
    clip_ref: &str,
    window_s: f64,
    hop_s: f64,
) -> Result<Vec<SegmentWindow>> {
    if !(window_s > 0.0 && hop_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "window {window_s} s and hop {hop_s} s must be positive"
        )));
    }
    let window_len = seconds_to_samples(window_s, sample_rate);
    let hop_len = seconds_to_samples(hop_s, sample_rate);
    let count = window_count(n_samples, window_len, hop_len);
    if count == 0 {
        return Err(Error::ClipTooShort {
            duration_s: n_samples as f64 / sample_rate as f64,
            window_s,
        });
    }
    let rate = sample_rate as f64;
    Ok((0..count)
        .map(|k| {
            let start_sample = k * hop_len;
            let end_sample = start_sample + window_len;
            SegmentWindow {
                index: k,
                start_s: start_sample as f64 / rate,
                end_s: end_sample as f64 / rate,
                start_sample,
                end_sample,
                clip_ref: clip_ref.to_string(),
                label: None,
            }
        })
        .collect())
}

pub fn segment(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<Vec<SegmentWindow>> {
    plan_windows(
        clip.samples.len(),
        clip.sample_rate,
        &clip.utterance_id,
        window_s,
        hop_s,
    )
}

/// Spans must be sorted by start and pairwise disjoint.
pub fn check_spans(spans: &[Span]) -> Result<()> {
    for s in spans {
        if !(s.end_s > s.start_s) {
            return Err(Error::InvalidConfig(format!(
                "empty span [{}, {})",
                s.start_s, s.end_s
            )));
        }
    }
    for pair in spans.windows(2) {
        if pair[1].start_s < pair[0].end_s {
            return Err(Error::OverlappingSpans(pair[1].start_s));
        }
    }
    Ok(())
}

/// Give each window the label of the span containing its midpoint.
pub fn align_labels(windows: &[SegmentWindow], spans: &[Span]) -> Result<Vec<SegmentWindow>> {
    check_spans(spans)?;
    Ok(windows
        .iter()
        .map(|w| {
            let mid = w.midpoint_s();
            SegmentWindow {
                label: spans.iter().find(|s| s.contains(mid)).map(|s| s.label),
                ..w.clone()
            }
        })
        .collect())
}

/// Result of concatenating same-speaker, same-text utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClip {
    pub clip: AudioClip,
    /// Code of the final emotional state.
    pub label: VadCode,
    /// One span per input clip, in input order.
    pub spans: Vec<Span>,
}

/// Concatenate utterances with optional silence of `gap_s` seconds between them.
pub fn concat_augment(clips: &[AudioClip], emotions: &[Emotion], gap_s: f64) -> Result<AugmentedClip> {
    if clips.len() < 2 {
        return Err(Error::Augmentation(format!(
            "need at least two clips, got {}",
            clips.len()
        )));
    }
    if emotions.len() != clips.len() {
        return Err(Error::Augmentation(format!(
            "{} emotions for {} clips",
            emotions.len(),
            clips.len()
        )));
    }
    if !(gap_s >= 0.0) {
        return Err(Error::InvalidConfig(format!("negative gap {gap_s}")));
    }
    let first = &clips[0];
    for c in &clips[1..] {
        if c.speaker_id != first.speaker_id {
            return Err(Error::Augmentation(format!(
                "speaker mismatch: {} vs {}",
                first.speaker_id, c.speaker_id
            )));
        }
        if c.text_id != first.text_id {
            return Err(Error::Augmentation(format!(
                "text mismatch: {} vs {}",
                first.text_id, c.text_id
            )));
        }
        if c.sample_rate != first.sample_rate {
            return Err(Error::Augmentation("sample rate mismatch".into()));
        }
    }

    let rate = first.sample_rate as f64;
    let gap = seconds_to_samples(gap_s, first.sample_rate);
    let total: usize = clips.iter().map(|c| c.samples.len()).sum::<usize>() + gap * (clips.len() - 1);
    let mut samples = Vec::with_capacity(total);
    let mut spans = Vec::with_capacity(clips.len());
    for (i, (clip, &emotion)) in clips.iter().zip(emotions).enumerate() {
        if i > 0 {
            samples.resize(samples.len() + gap, 0.0);
        }
        let start = samples.len();
        samples.extend_from_slice(&clip.samples);
        spans.push(Span {
            start_s: start as f64 / rate,
            end_s: samples.len() as f64 / rate,
            label: encode_emotion(emotion),
        });
    }

    let utterance_id = clips
        .iter()
        .map(|c| c.utterance_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(AugmentedClip {
        clip: AudioClip {
            samples,
            sample_rate: first.sample_rate,
            speaker_id: first.speaker_id.clone(),
            utterance_id,
            text_id: first.text_id.clone(),
        },
        label: encode_emotion(*emotions.last().expect("at least two emotions")),
        spans,
    })
}
