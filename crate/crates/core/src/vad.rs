//! Binary valence/arousal/dominance codes and the emotion catalogue.
//!
//! Every label in the pipeline, emotion or stress, is a [`VadCode`]. The
//! canonical stress code is [`STRESS`]; note that it coincides with the
//! encoding of [`Emotion::Fear`], so the two are indistinguishable once
//! encoded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single binary digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn new(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Bit::ZERO),
            1 => Ok(Bit::ONE),
            other => Err(Error::InvalidCode(format!("digit {other} is not binary"))),
        }
    }

    pub fn is_set(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }

    pub fn as_f64(self) -> f64 {
        if self.0 {
            1.0
        } else {
            0.0
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        Bit(b)
    }
}

/// Binary VAD triple. Ordering is lexicographic over (valence, arousal, dominance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VadCode {
    pub valence: Bit,
    pub arousal: Bit,
    pub dominance: Bit,
}

/// The canonical stress encoding (0,1,0).
pub const STRESS: VadCode = VadCode {
    valence: Bit::ZERO,
    arousal: Bit::ONE,
    dominance: Bit::ZERO,
};

/// Alignment code prepended to every context sequence.
pub const DEFAULT_CONTEXT: VadCode = VadCode {
    valence: Bit::ZERO,
    arousal: Bit::ZERO,
    dominance: Bit::ZERO,
};

impl VadCode {
    pub fn new(valence: u8, arousal: u8, dominance: u8) -> Result<Self> {
        Ok(VadCode {
            valence: Bit::new(valence)?,
            arousal: Bit::new(arousal)?,
            dominance: Bit::new(dominance)?,
        })
    }

    /// Infallible constructor from booleans.
    pub const fn from_bools(valence: bool, arousal: bool, dominance: bool) -> Self {
        VadCode {
            valence: Bit(valence),
            arousal: Bit(arousal),
            dominance: Bit(dominance),
        }
    }

    /// Index in 0..8 with valence as the most significant bit.
    pub fn index(self) -> usize {
        (self.valence.as_u8() as usize) << 2
            | (self.arousal.as_u8() as usize) << 1
            | self.dominance.as_u8() as usize
    }

    pub fn from_index(i: usize) -> Self {
        VadCode::from_bools(i & 4 != 0, i & 2 != 0, i & 1 != 0)
    }

    /// All eight codes in index order.
    pub fn all() -> impl Iterator<Item = VadCode> {
        (0..8).map(VadCode::from_index)
    }

    pub fn bits(self) -> [Bit; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    pub fn as_f64(self) -> [f64; 3] {
        self.bits().map(Bit::as_f64)
    }

    /// Binarise per-dimension probabilities with a strict `> 0.5` threshold.
    pub fn from_probs(probs: [f64; 3]) -> Self {
        VadCode::from_bools(probs[0] > 0.5, probs[1] > 0.5, probs[2] > 0.5)
    }
}

impl fmt::Display for VadCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.valence.as_u8(),
            self.arousal.as_u8(),
            self.dominance.as_u8()
        )
    }
}

impl FromStr for VadCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidCode(format!("expected \"v,a,d\", got {s:?}")));
        }
        let mut digits = [0u8; 3];
        for (d, p) in digits.iter_mut().zip(&parts) {
            *d = p
                .parse()
                .map_err(|_| Error::InvalidCode(format!("non-numeric digit in {s:?}")))?;
        }
        VadCode::new(digits[0], digits[1], digits[2])
    }
}

impl Serialize for VadCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VadCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Categorical emotions found in the source corpora.
///
/// `Neutral` is not part of the published table; it maps to the all-low code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Happiness,
    Sadness,
    Anger,
    Fear,
    Disgust,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Neutral,
    ];

    /// The five emotions with a published encoding.
    pub const CATALOGUE: [Emotion; 5] = [
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // common corpus spellings are accepted as aliases
        match s.trim().to_ascii_lowercase().as_str() {
            "happiness" | "happy" | "joy" => Ok(Emotion::Happiness),
            "sadness" | "sad" => Ok(Emotion::Sadness),
            "anger" | "angry" => Ok(Emotion::Anger),
            "fear" | "fearful" | "afraid" => Ok(Emotion::Fear),
            "disgust" | "disgusted" => Ok(Emotion::Disgust),
            "neutral" | "calm" => Ok(Emotion::Neutral),
            other => Err(Error::InvalidCode(format!("unknown emotion {other:?}"))),
        }
    }
}

pub fn encode_emotion(e: Emotion) -> VadCode {
    match e {
        Emotion::Happiness => VadCode::from_bools(true, true, true),
        Emotion::Sadness => VadCode::from_bools(false, false, false),
        Emotion::Anger => VadCode::from_bools(false, true, true),
        Emotion::Fear => VadCode::from_bools(false, true, false),
        Emotion::Disgust => VadCode::from_bools(false, true, true),
        Emotion::Neutral => VadCode::from_bools(false, false, false),
    }
}

/// Parse a label that is either a "v,a,d" triple or an emotion name.
pub fn parse_label(s: &str) -> Result<VadCode> {
    if s.contains(',') {
        s.parse()
    } else if s.trim().eq_ignore_ascii_case("stress") {
        Ok(STRESS)
    } else {
        s.parse::<Emotion>().map(encode_emotion)
    }
}

/// Number of positions where the two codes differ.
pub fn hamming_distance(a: VadCode, b: VadCode) -> u32 {
    a.bits()
        .iter()
        .zip(b.bits().iter())
        .filter(|(x, y)| x != y)
        .count() as u32
}

pub fn is_stress(c: VadCode) -> bool {
    c == STRESS
}
