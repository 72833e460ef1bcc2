//! Temporal relabelling of emotion sequences into stress-progression labels.
//!
//! For window `t` the decayed distance to the stress code is accumulated over
//! the current window and up to `n` preceding ones:
//!
//! ```text
//! theta_total = sum_{k=0..=n} exp(-lambda * k) * hamming(STRESS, E_{t-k})
//! ```
//!
//! and the window is relabelled as stress when `theta_total <= T_stress`,
//! otherwise it keeps its own emotion code. `T_stress` is expressed as a
//! fraction `tau` of the largest attainable total, [`theta_max`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vad::{hamming_distance, VadCode, STRESS};

/// Largest Hamming distance from the stress code over the emotion catalogue.
pub const MAX_CATALOGUE_DISTANCE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabellingConfig {
    /// Number of past windows considered.
    pub n: usize,
    /// Decay rate per window of age.
    pub lambda: f64,
    /// Relative threshold in [0, 1].
    pub tau: f64,
}

impl Default for LabellingConfig {
    fn default() -> Self {
        LabellingConfig {
            n: 4,
            lambda: 0.8,
            tau: 0.5,
        }
    }
}

impl LabellingConfig {
    pub fn new(n: usize, lambda: f64, tau: f64) -> Result<Self> {
        let cfg = LabellingConfig { n, lambda, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Absolute stress threshold `tau * theta_max(n, lambda)`.
    pub fn threshold(&self) -> f64 {
        self.tau * theta_max(self.n, self.lambda)
    }
}

/// One term of the decayed sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedDistance {
    pub delta: f64,
    pub distance: u32,
    pub theta: f64,
}

impl WeightedDistance {
    pub fn new(lambda: f64, age: usize, code: VadCode) -> Self {
        let delta = decay_weight_unchecked(lambda, age);
        let distance = hamming_distance(STRESS, code);
        WeightedDistance {
            delta,
            distance,
            theta: delta * distance as f64,
        }
    }
}

fn decay_weight_unchecked(lambda: f64, age: usize) -> f64 {
    (-lambda * age as f64).exp()
}

/// `exp(-lambda * age)`. Ages are whole window counts; a negative age
/// (a window from the future) is rejected.
pub fn decay_weight(lambda: f64, age: i64) -> Result<f64> {
    if age < 0 {
        return Err(Error::InvalidConfig(format!("negative window age {age}")));
    }
    Ok(decay_weight_unchecked(lambda, age as usize))
}

/// Per-window terms for a history ordered oldest to current.
pub fn weighted_distances(history: &[VadCode], lambda: f64) -> Vec<WeightedDistance> {
    let last = history.len().saturating_sub(1);
    history
        .iter()
        .enumerate()
        .map(|(i, &code)| WeightedDistance::new(lambda, last - i, code))
        .collect()
}

/// Decayed distance total over `history`, whose last element is the current window.
pub fn theta_total(history: &[VadCode], lambda: f64) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyInput("theta_total history"));
    }
    Ok(weighted_distances(history, lambda)
        .iter()
        .map(|w| w.theta)
        .sum())
}

/// Upper bound of `theta_total` over `n + 1` windows.
pub fn theta_max(n: usize, lambda: f64) -> f64 {
    MAX_CATALOGUE_DISTANCE as f64 * (0..=n).map(|k| decay_weight_unchecked(lambda, k)).sum::<f64>()
}

/// Label for the current window given up to `config.n` preceding codes
/// (oldest first). Ties at the threshold resolve to stress.
pub fn assign_label(history: &[VadCode], current: VadCode, config: &LabellingConfig) -> VadCode {
    let keep = history.len().min(config.n);
    let recent = &history[history.len() - keep..];
    let lambda = config.lambda;
    let theta: f64 = recent
        .iter()
        .enumerate()
        .map(|(i, &c)| WeightedDistance::new(lambda, keep - i, c).theta)
        .sum::<f64>()
        + WeightedDistance::new(lambda, 0, current).theta;
    if theta <= config.threshold() {
        STRESS
    } else {
        current
    }
}

/// Relabel a whole sequence; windows near the start use all available history.
pub fn relabel_sequence(emotions: &[VadCode], config: &LabellingConfig) -> Result<Vec<VadCode>> {
    if emotions.is_empty() {
        return Err(Error::EmptyInput("relabel_sequence emotions"));
    }
    config.validate()?;
    Ok(emotions
        .iter()
        .enumerate()
        .map(|(t, &current)| {
            let start = t.saturating_sub(config.n);
            assign_label(&emotions[start..t], current, config)
        })
        .collect())
}

/// Decayed totals for each window of a sequence, useful for plotting.
pub fn theta_trace(emotions: &[VadCode], config: &LabellingConfig) -> Vec<f64> {
    (0..emotions.len())
        .map(|t| {
            let start = t.saturating_sub(config.n);
            weighted_distances(&emotions[start..=t], config.lambda)
                .iter()
                .map(|w| w.theta)
                .sum()
        })
        .collect()
}
