//! Mono 16 kHz PCM clips and WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// The only accepted input rate; other rates are rejected, never resampled.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub utterance_id: String,
    /// Lexical content identifier, used to pair utterances for augmentation.
    pub text_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        speaker_id: impl Into<String>,
        utterance_id: impl Into<String>,
        text_id: impl Into<String>,
    ) -> Self {
        AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
            speaker_id: speaker_id.into(),
            utterance_id: utterance_id.into(),
            text_id: text_id.into(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a 16-bit signed PCM, mono, 16 kHz WAV file into normalised samples.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} Hz, expected {SAMPLE_RATE} Hz",
            path.display(),
            spec.sample_rate
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} bit {:?}, expected 16 bit integer PCM",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0).map_err(Error::from))
        .collect()
}

/// Write samples as 16-bit PCM mono at [`SAMPLE_RATE`]; values are clipped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
