//! Browser bindings: relabelling explorer, decay curves and an MFCC heatmap
//! for synthetic signals. Every export returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use stress_core::audio::SAMPLE_RATE;
use stress_core::features::{MfccConfig, MfccExtractor};
use stress_core::labelling::{decay_weight, relabel_sequence, theta_max, theta_trace};
use stress_core::vad::{encode_emotion, is_stress};
use stress_core::{Emotion, LabellingConfig, Result};

#[derive(Debug, Serialize)]
pub struct WindowView {
    pub emotion: String,
    pub code: String,
    pub label: String,
    pub stress: bool,
    pub theta: f64,
}

#[derive(Debug, Serialize)]
pub struct RelabelView {
    pub threshold: f64,
    pub theta_max: f64,
    pub windows: Vec<WindowView>,
}

/// `emotions` is a comma or whitespace separated list of emotion names.
pub fn relabel_view(emotions: &str, n: usize, lambda: f64, tau: f64) -> Result<RelabelView> {
    let cfg = LabellingConfig::new(n, lambda, tau)?;
    let parsed = emotions
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse::<Emotion>)
        .collect::<Result<Vec<_>>>()?;
    let codes: Vec<_> = parsed.iter().map(|&e| encode_emotion(e)).collect();
    let labels = relabel_sequence(&codes, &cfg)?;
    let thetas = theta_trace(&codes, &cfg);
    let windows = parsed
        .iter()
        .zip(&codes)
        .zip(labels.iter().zip(thetas))
        .map(|((e, c), (l, theta))| WindowView {
            emotion: e.name().to_string(),
            code: c.to_string(),
            label: l.to_string(),
            stress: is_stress(*l),
            theta,
        })
        .collect();
    Ok(RelabelView {
        threshold: cfg.threshold(),
        theta_max: theta_max(n, lambda),
        windows,
    })
}

#[derive(Debug, Serialize)]
pub struct DecayCurve {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub theta_max: Vec<f64>,
}

pub fn decay_view(max_age: usize, lambdas: &[f64]) -> Result<Vec<DecayCurve>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let weights = (0..=max_age as i64).map(|k| decay_weight(lambda, k)).collect::<Result<_>>()?;
            Ok(DecayCurve {
                lambda,
                weights,
                theta_max: (0..=max_age).map(|n| theta_max(n, lambda)).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub frames: usize,
    pub coeffs: usize,
    pub min: f64,
    pub max: f64,
    /// Frame-major values.
    pub data: Vec<f64>,
    pub pooled: Vec<f32>,
}

pub fn synth_signal(kind: &str, freq: f64, seconds: f64) -> Vec<f32> {
    let rate = SAMPLE_RATE as f64;
    let len = (seconds * rate) as usize;
    let mut state = 0x2545_f491_4f6c_dd1du64;
    (0..len)
        .map(|i| {
            let t = i as f64 / rate;
            let v = match kind {
                "chirp" => (2.0 * std::f64::consts::PI * (freq * t + 300.0 * t * t)).sin(),
                "noise" => {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
                }
                _ => (2.0 * std::f64::consts::PI * freq * t).sin(),
            };
            (0.4 * v) as f32
        })
        .collect()
}

pub fn heatmap_view(kind: &str, freq: f64, seconds: f64) -> Result<Heatmap> {
    let ex = MfccExtractor::new(MfccConfig::default())?;
    let signal = synth_signal(kind, freq, seconds);
    let frames = ex.mfcc_frames(&signal)?;
    let pooled = ex.extract_window(&signal)?.values;
    let coeffs = frames.first().map_or(0, Vec::len);
    let data: Vec<f64> = frames.iter().flatten().copied().collect();
    let (min, max) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(Heatmap {
        frames: frames.len(),
        coeffs,
        min,
        max,
        data,
        pooled,
    })
}

fn to_json<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn relabel(emotions: &str, n: usize, lambda: f64, tau: f64) -> std::result::Result<String, JsValue> {
    to_json(relabel_view(emotions, n, lambda, tau))
}

#[wasm_bindgen]
pub fn decay_curves(max_age: usize, lambdas: Vec<f64>) -> std::result::Result<String, JsValue> {
    to_json(decay_view(max_age, &lambdas))
}

#[wasm_bindgen]
pub fn mfcc_heatmap(kind: &str, freq: f64, seconds: f64) -> std::result::Result<String, JsValue> {
    to_json(heatmap_view(kind, freq, seconds))
}
