//! Labelled window sequences and the assembly of model inputs from them.

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::model::ContextSequence;
use crate::vad::{is_stress, VadCode};

/// Consecutive labelled windows of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<VadCode>,
    /// Recording-level stress label, when known.
    pub stress: Option<bool>,
}

/// One model input: the window sequence ending at the current window,
/// the stress context aligned with it, and the current window's target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub xs: Vec<Vec<f64>>,
    pub context: ContextSequence,
    pub target: VadCode,
}

impl Recording {
    pub fn new(id: impl Into<String>, features: Vec<Vec<f64>>, targets: Vec<VadCode>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature windows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::EmptyInput("recording"));
        }
        let dim = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("recording features".into()));
        }
        Ok(Recording {
            id: id.into(),
            features,
            targets,
            stress: None,
        })
    }

    pub fn from_features(id: impl Into<String>, seq: &FeatureSequence, targets: Vec<VadCode>) -> Result<Self> {
        let features = seq
            .vectors
            .iter()
            .map(|v| v.values.iter().map(|&x| x as f64).collect())
            .collect();
        Recording::new(id, features, targets)
    }

    pub fn with_stress(mut self, stress: bool) -> Self {
        self.stress = Some(stress);
        self
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn stress_targets(&self) -> Vec<bool> {
        self.targets.iter().map(|&c| is_stress(c)).collect()
    }

    /// First window of the sequence ending at `t`.
    pub fn window_start(t: usize, seq_len: usize) -> usize {
        (t + 1).saturating_sub(seq_len)
    }

    /// Input ending at window `t`, with context taken from `labels`
    /// (ground truth or predictions, indexed like the windows).
    pub fn example_with(&self, t: usize, seq_len: usize, labels: &[VadCode]) -> Example {
        let start = Recording::window_start(t, seq_len);
        Example {
            xs: self.features[start..=t].to_vec(),
            context: ContextSequence::from_previous(&labels[start..t]),
            target: self.targets[t],
        }
    }

    /// Input ending at window `t` with ground-truth context.
    pub fn example(&self, t: usize, seq_len: usize) -> Example {
        self.example_with(t, seq_len, &self.targets)
    }
}
