//! MFCC extraction: pre-emphasis, Hann-windowed framing, FFT magnitude,
//! HTK mel filterbank, log with floor, orthonormal DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::segmentation::WINDOW_S;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len_ms: f64,
    pub frame_hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    /// Append first-order deltas, doubling the coefficient count.
    pub deltas: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: SAMPLE_RATE,
            frame_len_ms: 25.0,
            frame_hop_ms: 10.0,
            n_fft: 512,
            n_mels: 64,
            n_coeffs: 40,
            pre_emphasis: 0.97,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
            deltas: false,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_len_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_hop(&self) -> usize {
        (self.frame_hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// Samples in one analysis window.
    pub fn window_samples(&self) -> usize {
        (WINDOW_S * self.sample_rate as f64).round() as usize
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        crate::segmentation::window_count(n_samples, self.frame_len(), self.frame_hop())
    }

    /// Output dimensionality per frame.
    pub fn dim(&self) -> usize {
        if self.deltas {
            2 * self.n_coeffs
        } else {
            self.n_coeffs
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::InvalidConfig(format!(
                "n_coeffs {} must be in 1..={}",
                self.n_coeffs, self.n_mels
            )));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 || self.fmin < 0.0 || self.fmin >= self.fmax {
            return Err(Error::InvalidConfig(format!(
                "frequency range [{}, {}] invalid for {} Hz",
                self.fmin, self.fmax, self.sample_rate
            )));
        }
        if self.frame_len() > self.n_fft || self.frame_hop() == 0 {
            return Err(Error::InvalidConfig(format!(
                "frame length {} exceeds n_fft {}",
                self.frame_len(),
                self.n_fft
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, one row per filter over
/// `n_fft / 2 + 1` bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Vec<Vec<f64>>,
    /// (lower, center, upper) edge frequencies in Hz per filter.
    pub edges: Vec<(f64, f64, f64)>,
}

impl MelFilterbank {
    pub fn new(config: &MfccConfig) -> Self {
        let n_bins = config.n_fft / 2 + 1;
        let bin_hz = config.sample_rate as f64 / config.n_fft as f64;
        let lo = hz_to_mel(config.fmin);
        let hi = hz_to_mel(config.fmax);
        let points: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();

        let mut weights = Vec::with_capacity(config.n_mels);
        let mut edges = Vec::with_capacity(config.n_mels);
        for m in 0..config.n_mels {
            let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
            let row = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect();
            weights.push(row);
            edges.push((left, center, right));
        }
        MelFilterbank { weights, edges }
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(spectrum).map(|(w, s)| w * s).sum())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `size x size`, row `k` is the k-th cosine.
pub fn dct_basis(size: usize) -> Vec<Vec<f64>> {
    let n = size as f64;
    (0..size)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..size)
                .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .collect()
        })
        .collect()
}

pub struct MfccExtractor {
    config: MfccConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("config", &self.config).finish()
    }
}

impl MfccExtractor {
    pub fn new(config: MfccConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        let len = config.frame_len();
        // symmetric Hann
        let window = (0..len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
            .collect();
        let dct = dct_basis(config.n_mels)
            .into_iter()
            .take(config.n_coeffs)
            .collect();
        Ok(MfccExtractor {
            filterbank: MelFilterbank::new(&config),
            config,
            fft,
            window,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn check_input(&self, samples: &[f32]) -> Result<()> {
        let expected = self.config.window_samples();
        if samples.len() != expected {
            return Err(Error::LengthMismatch(format!(
                "expected {expected} samples for one window, got {}",
                samples.len()
            )));
        }
        Ok(())
    }

    /// Mel filterbank energies per frame, before the log.
    pub fn mel_energies(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        self.check_input(samples)?;
        let alpha = self.config.pre_emphasis;
        let emphasised: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let prev = if i == 0 { 0.0 } else { samples[i - 1] as f64 };
                s as f64 - alpha * prev
            })
            .collect();

        let len = self.config.frame_len();
        let hop = self.config.frame_hop();
        let n_frames = self.config.frame_count(samples.len());
        let n_bins = self.config.n_fft / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.config.n_fft];
        let mut magnitude = vec![0.0; n_bins];

        let mut out = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let frame = &emphasised[f * hop..f * hop + len];
            for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(x * w, 0.0);
            }
            for slot in buf[len..].iter_mut() {
                *slot = Complex::new(0.0, 0.0);
            }
            self.fft.process(&mut buf);
            for (m, c) in magnitude.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            out.push(self.filterbank.apply(&magnitude));
        }
        Ok(out)
    }

    /// Per-frame cepstral coefficients for exactly one window of samples.
    pub fn mfcc_frames(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let floor = self.config.log_floor;
        let frames: Vec<Vec<f64>> = self
            .mel_energies(samples)?
            .into_iter()
            .map(|energies| {
                let logs: Vec<f64> = energies.iter().map(|&e| e.max(floor).ln()).collect();
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&logs).map(|(b, l)| b * l).sum())
                    .collect()
            })
            .collect();
        Ok(if self.config.deltas {
            append_deltas(frames)
        } else {
            frames
        })
    }

    /// One pooled vector per window.
    pub fn extract_window(&self, samples: &[f32]) -> Result<FeatureVector> {
        pool_window(&self.mfcc_frames(samples)?)
    }
}

/// Regression deltas over +-2 frames with edge replication.
fn append_deltas(frames: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    const REACH: isize = 2;
    let denom: f64 = 2.0 * (1..=REACH).map(|k| (k * k) as f64).sum::<f64>();
    let last = frames.len() as isize - 1;
    let at = |i: isize| &frames[i.clamp(0, last) as usize];
    let deltas: Vec<Vec<f64>> = (0..frames.len() as isize)
        .map(|t| {
            (0..frames[0].len())
                .map(|c| {
                    (1..=REACH)
                        .map(|k| k as f64 * (at(t + k)[c] - at(t - k)[c]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect();
    frames
        .into_iter()
        .zip(deltas)
        .map(|(mut f, d)| {
            f.extend(d);
            f
        })
        .collect()
}

/// Mean over frames, per coefficient.
pub fn pool_window(frames: &[Vec<f64>]) -> Result<FeatureVector> {
    let first = frames.first().ok_or(Error::EmptyInput("pool_window frames"))?;
    let dim = first.len();
    let mut sums = vec![0.0f64; dim];
    for f in frames {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        for (s, v) in sums.iter_mut().zip(f) {
            *s += v;
        }
    }
    let n = frames.len() as f64;
    FeatureVector::new(sums.into_iter().map(|s| (s / n) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn extractor() -> MfccExtractor {
        MfccExtractor::new(MfccConfig::default()).unwrap()
    }

    #[test]
    fn frame_count_for_one_window() {
        let cfg = MfccConfig::default();
        assert_eq!(cfg.frame_len(), 400);
        assert_eq!(cfg.frame_hop(), 160);
        assert_eq!(cfg.frame_count(160_000), (160_000 - 400) / 160 + 1);
        let frames = extractor().mfcc_frames(&vec![0.0; 160_000]).unwrap();
        assert_eq!(frames.len(), 998);
        assert_eq!(frames[0].len(), 40);
    }

    #[test]
    fn silence_gives_constant_frames() {
        let frames = extractor().mfcc_frames(&vec![0.0; 160_000]).unwrap();
        let expected_c0 = (64f64).sqrt() * 1e-10f64.ln();
        for f in &frames {
            assert_eq!(f, &frames[0]);
        }
        assert!((frames[0][0] - expected_c0).abs() < 1e-9);
        assert!(frames[0][1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn tone_peaks_in_its_mel_band() {
        let ex = extractor();
        let tone: Vec<f32> = (0..160_000)
            .map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / 16_000.0).sin() as f32)
            .collect();
        // oracle: filter whose center is nearest to 1 kHz on the mel axis
        let target = hz_to_mel(1000.0);
        let expected = ex
            .filterbank()
            .edges
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (hz_to_mel(a.1 .1) - target).abs();
                let db = (hz_to_mel(b.1 .1) - target).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
            .0;
        let (lo, _, hi) = ex.filterbank().edges[expected];
        assert!(lo < 1000.0 && 1000.0 < hi);
        for energies in ex.mel_energies(&tone).unwrap() {
            let argmax = energies
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let b = dct_basis(64);
        for i in 0..64 {
            for j in 0..64 {
                let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "({i},{j}) = {dot}");
            }
        }
    }

    #[test]
    fn filterbank_shape() {
        let fb = MelFilterbank::new(&MfccConfig::default());
        assert_eq!(fb.weights.len(), 64);
        let n_bins = fb.weights[0].len();
        for row in &fb.weights {
            assert!(row.iter().all(|&w| w >= 0.0));
            let nz: Vec<usize> = (0..n_bins).filter(|&k| row[k] > 0.0).collect();
            assert!(!nz.is_empty());
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "non-contiguous row");
        }
        for k in 0..n_bins {
            let total: f64 = fb.weights.iter().map(|r| r[k]).sum();
            assert!(total <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn scaling_moves_only_c0() {
        let ex = extractor();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f32> = (0..160_000).map(|_| rng.gen_range(-0.3f32..0.3)).collect();
        let c = 0.5f32;
        let y: Vec<f32> = x.iter().map(|v| v * c).collect();
        let fx = ex.mfcc_frames(&x).unwrap();
        let fy = ex.mfcc_frames(&y).unwrap();
        let shift = 8.0 * (c as f64).ln();
        for (a, b) in fx.iter().zip(&fy) {
            assert!((b[0] - a[0] - shift).abs() < 1e-6);
            for k in 1..40 {
                assert!((a[k] - b[k]).abs() < 1e-6, "coefficient {k}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let ex = extractor();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..160_000).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let a = ex.mfcc_frames(&x).unwrap();
        let b = ex.mfcc_frames(&x).unwrap();
        let bits = |m: &Vec<Vec<f64>>| m.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(extractor().mfcc_frames(&vec![0.0; 1000]).is_err());
    }

    #[test]
    fn deltas_double_dim() {
        let ex = MfccExtractor::new(MfccConfig {
            deltas: true,
            ..MfccConfig::default()
        })
        .unwrap();
        let v = ex.extract_window(&vec![0.0; 160_000]).unwrap();
        assert_eq!(v.dim(), 80);
        // constant frames have zero deltas
        assert!(v.values[40..].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn config_validation() {
        let bad = MfccConfig {
            n_coeffs: 65,
            ..MfccConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MfccConfig {
            fmax: 9000.0,
            ..MfccConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pooling() {
        let v: Vec<f64> = (0..40).map(|i| i as f64 * 0.25 - 3.0).collect();
        let same = pool_window(&[v.clone(), v.clone(), v.clone()]).unwrap();
        assert_eq!(same.values, v.iter().map(|&x| x as f32).collect::<Vec<_>>());

        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let zero = pool_window(&[v.clone(), neg]).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let pooled = pool_window(&m).unwrap();
        for c in 0..40 {
            let mean = (m[0][c] + m[1][c] + m[2][c]) / 3.0;
            assert!((pooled.values[c] as f64 - mean).abs() < 1e-6);
        }

        assert!(pool_window(&[]).is_err());
    }
}
