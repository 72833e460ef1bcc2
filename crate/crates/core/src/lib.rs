//! Dynamic stress detection from speech.
//!
//! Emotion annotations are turned into temporally evolving stress labels by a
//! decayed-distance relabelling rule, and sequence classifiers (a recurrent
//! and a transformer variant, both fused with the stress context through
//! cross-attention) are trained over windowed speech features.

pub mod audio;
pub mod checkpoint;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labelling;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod segmentation;
pub mod training;
pub mod vad;

pub use error::{Error, Result};
pub use labelling::LabellingConfig;
pub use vad::{Emotion, VadCode, STRESS};
