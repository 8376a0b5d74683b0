//! logMel frontend: fixed 26-band, 25 ms / 10 ms framing, 7.5 s fixed-length
//! output. Clips longer than the target are truncated, shorter ones padded
//! with silence so every pad column holds exactly `ln(log_floor)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::numeric::Tensor2;

/// Frontend parameters. The defaults match the corpora this project targets:
/// 16 kHz mono speech, 26 filter banks, 7.5 s fixed length.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub frame_ms: f64,
    pub shift_ms: f64,
    pub n_mels: usize,
    pub max_seconds: f64,
    pub sample_rate_expected: u32,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            shift_ms: 10.0,
            n_mels: 26,
            max_seconds: 7.5,
            sample_rate_expected: 16_000,
            fft_size: 512,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_ms / 1000.0 * self.sample_rate_expected as f64).round() as usize
    }

    pub fn shift_len(&self) -> usize {
        (self.shift_ms / 1000.0 * self.sample_rate_expected as f64).round() as usize
    }

    /// Number of feature columns every matrix is padded or truncated to.
    pub fn total_frames(&self) -> usize {
        frame_count(self.max_seconds, self)
    }

    pub fn pad_value(&self) -> f64 {
        self.log_floor.ln()
    }

    fn validate(&self) -> Result<(), DspError> {
        if !(self.frame_ms > self.shift_ms && self.shift_ms > 0.0) {
            return Err(DspError::InvalidConfig {
                detail: format!("frame {} ms must exceed shift {} ms > 0", self.frame_ms, self.shift_ms),
            });
        }
        if self.fft_size < self.frame_len() {
            return Err(DspError::InvalidConfig {
                detail: format!(
                    "fft size {} shorter than {}-sample frame",
                    self.fft_size,
                    self.frame_len()
                ),
            });
        }
        if self.n_mels == 0 || self.log_floor <= 0.0 || self.max_seconds <= 0.0 {
            return Err(DspError::InvalidConfig {
                detail: "n_mels, log_floor, max_seconds must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Mono audio in [-1, 1].
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Fixed-size logMel grid plus the count of columns holding real frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor2,
    pub n_frames_valid: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("unsupported wav ({detail})")]
    UnsupportedWav { detail: String },
    #[error("sample rate {got} Hz, expected {expected} Hz (resampling not supported)")]
    SampleRateMismatch { got: u32, expected: u32 },
    #[error("empty audio")]
    EmptyAudio,
    #[error("invalid frontend config ({detail})")]
    InvalidConfig { detail: String },
    #[error("bad feature cache ({detail})")]
    BadCache { detail: String },
}

/// Complete frames that fit in `duration_s` of audio: 0 if shorter than one
/// frame, else `floor((n - frame_len) / shift) + 1`. The duration is rounded
/// to whole samples first.
pub fn frame_count(duration_s: f64, cfg: &FrontendConfig) -> usize {
    let n = (duration_s * cfg.sample_rate_expected as f64).round() as usize;
    frame_count_samples(n, cfg)
}

fn frame_count_samples(n_samples: usize, cfg: &FrontendConfig) -> usize {
    let frame = cfg.frame_len();
    if n_samples < frame {
        0
    } else {
        (n_samples - frame) / cfg.shift_len() + 1
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0_f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filter bank: `n_mels x (fft_size/2 + 1)` non-negative
/// weights, peaks evenly spaced on the mel scale from 0 Hz to Nyquist.
pub fn mel_filterbank(
    sample_rate: u32,
    fft_size: usize,
    n_mels: usize,
) -> Result<Tensor2, DspError> {
    let n_bins = fft_size / 2 + 1;
    if n_mels == 0 || n_mels > n_bins.saturating_sub(1) {
        return Err(DspError::InvalidConfig {
            detail: format!("{n_mels} filters do not fit {n_bins} spectrum bins"),
        });
    }
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0);
    // n_mels + 2 edge points, quantized to FFT bins.
    let bin_of = |m: usize| -> usize {
        let mel = mel_hi * m as f64 / (n_mels + 1) as f64;
        ((fft_size + 1) as f64 * mel_to_hz(mel) / sample_rate as f64).floor() as usize
    };
    let bins: Vec<usize> = (0..n_mels + 2).map(bin_of).collect();

    let mut fb = Tensor2::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (bins[m], bins[m + 1], bins[m + 2]);
        let row = fb.row_mut(m);
        for k in lo..mid {
            row[k] = (k - lo) as f64 / (mid - lo) as f64;
        }
        for k in mid..=hi.min(n_bins - 1) {
            row[k] = if hi == mid {
                1.0
            } else {
                (hi - k) as f64 / (hi - mid) as f64
            };
        }
        // A triangle collapsed to a single bin still has to pass something.
        if row.iter().all(|&w| w == 0.0) {
            row[mid.min(n_bins - 1)] = 1.0;
        }
    }
    Ok(fb)
}

/// Reusable featurization state: filter bank, window, FFT plan. Immutable
/// after construction, so one instance can serve many threads.
pub struct Frontend {
    cfg: FrontendConfig,
    filterbank: Tensor2,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self, DspError> {
        cfg.validate()?;
        let filterbank = mel_filterbank(cfg.sample_rate_expected, cfg.fft_size, cfg.n_mels)?;
        let frame_len = cfg.frame_len();
        let window: Vec<f64> = (0..frame_len)
            .map(|n| {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1) as f64).cos()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            filterbank,
            window,
            fft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Featurize one clip into the fixed-size matrix. Frames are Hamming
    /// windowed, zero-padded to the FFT size, and reduced to a magnitude
    /// spectrum before the filter bank and the floored natural log.
    pub fn logmel(&self, clip: &AudioClip) -> Result<FeatureMatrix, DspError> {
        if clip.samples.is_empty() {
            return Err(DspError::EmptyAudio);
        }
        if clip.sample_rate != self.cfg.sample_rate_expected {
            return Err(DspError::SampleRateMismatch {
                got: clip.sample_rate,
                expected: self.cfg.sample_rate_expected,
            });
        }

        let max_samples =
            (self.cfg.max_seconds * self.cfg.sample_rate_expected as f64).round() as usize;
        let samples = &clip.samples[..clip.samples.len().min(max_samples)];

        let frame_len = self.cfg.frame_len();
        let shift = self.cfg.shift_len();
        let total = self.cfg.total_frames();
        let n_valid = frame_count_samples(samples.len(), &self.cfg).min(total);

        // Pad columns are what an all-zero frame produces: zero energies,
        // floored, logged. Filled directly rather than round-tripped through
        // the FFT so they are exact.
        let pad = self.cfg.pad_value();
        let mut values = Tensor2::from_vec(
            self.cfg.n_mels,
            total,
            vec![pad; self.cfg.n_mels * total],
        )
        .expect("pad buffer shape");

        let n_bins = self.cfg.fft_size / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mags = vec![0.0f64; n_bins];
        for f in 0..n_valid {
            let start = f * shift;
            for (b, (&s, &w)) in buf
                .iter_mut()
                .zip(samples[start..start + frame_len].iter().zip(&self.window))
            {
                *b = Complex::new(s * w, 0.0);
            }
            for b in buf.iter_mut().skip(frame_len) {
                *b = Complex::new(0.0, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, b) in mags.iter_mut().zip(&buf) {
                *m = b.norm();
            }
            for band in 0..self.cfg.n_mels {
                let energy: f64 = self
                    .filterbank
                    .row(band)
                    .iter()
                    .zip(&mags)
                    .map(|(&w, &m)| w * m)
                    .sum();
                values.set(band, f, energy.max(self.cfg.log_floor).ln());
            }
        }
        Ok(FeatureMatrix {
            values,
            n_frames_valid: n_valid,
        })
    }
}

/// One-shot convenience wrapper around [`Frontend`].
pub fn logmel(clip: &AudioClip, cfg: &FrontendConfig) -> Result<FeatureMatrix, DspError> {
    Frontend::new(cfg.clone())?.logmel(clip)
}

/// Reads a 16-bit PCM mono WAV file; anything else is rejected.
pub fn read_wav(path: &Path) -> Result<AudioClip, DspError> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(DspError::UnsupportedWav {
            detail: format!(
                "{}: need 16-bit PCM mono, got {} ch / {} bit",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            ),
        });
    }
    let sample_rate = spec.sample_rate;
    let samples: Result<Vec<f64>, _> = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect();
    Ok(AudioClip {
        samples: samples?,
        sample_rate,
    })
}

const CACHE_MAGIC: &[u8; 4] = b"ACNF";
const CACHE_VERSION: u8 = 1;

/// Writes a feature matrix as `ACNF`: magic, version byte, three little-endian
/// u32 (rows, cols, n_frames_valid), then row-major little-endian f32 values.
pub fn write_feature_cache(path: &Path, features: &FeatureMatrix) -> Result<(), DspError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    w.write_all(&(features.values.rows() as u32).to_le_bytes())?;
    w.write_all(&(features.values.cols() as u32).to_le_bytes())?;
    w.write_all(&(features.n_frames_valid as u32).to_le_bytes())?;
    for &v in features.values.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureMatrix, DspError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 17];
    r.read_exact(&mut head).map_err(|_| DspError::BadCache {
        detail: format!("{}: truncated header", path.display()),
    })?;
    if &head[0..4] != CACHE_MAGIC {
        return Err(DspError::BadCache {
            detail: format!("{}: bad magic", path.display()),
        });
    }
    if head[4] != CACHE_VERSION {
        return Err(DspError::BadCache {
            detail: format!("{}: unsupported version {}", path.display(), head[4]),
        });
    }
    let rows = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[9..13].try_into().unwrap()) as usize;
    let n_frames_valid = u32::from_le_bytes(head[13..17].try_into().unwrap()) as usize;
    if n_frames_valid > cols {
        return Err(DspError::BadCache {
            detail: format!("{}: n_frames_valid {n_frames_valid} > cols {cols}", path.display()),
        });
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(DspError::BadCache {
            detail: format!(
                "{}: expected {} value bytes, found {}",
                path.display(),
                rows * cols * 4,
                bytes.len()
            ),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let values = Tensor2::from_vec(rows, cols, data).map_err(|e| DspError::BadCache {
        detail: e.to_string(),
    })?;
    Ok(FeatureMatrix {
        values,
        n_frames_valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
        let sr = 16_000u32;
        let n = (seconds * sr as f64).round() as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip {
            samples,
            sample_rate: sr,
        }
    }

    #[test]
    fn frame_counts() {
        let cfg = FrontendConfig::default();
        assert_eq!(frame_count(7.5, &cfg), 748);
        assert_eq!(frame_count(0.025, &cfg), 1);
        assert_eq!(frame_count(0.010, &cfg), 0);
        assert_eq!(frame_count(1.0, &cfg), 98);
    }

    #[test]
    fn mel_scale_values() {
        assert!((hz_to_mel(700.0) - 781.17).abs() < 5e-3);
        assert_eq!(hz_to_mel(0.0), 0.0);
        for &f in &[50.0, 431.0, 700.0, 3999.5, 7999.0] {
            let rt = mel_to_hz(hz_to_mel(f));
            assert!((rt - f).abs() / f < 1e-9);
        }
    }

    #[test]
    fn filterbank_shape_and_weights() {
        let fb = mel_filterbank(16_000, 512, 26).unwrap();
        assert_eq!(fb.rows(), 26);
        assert_eq!(fb.cols(), 257);
        assert!(fb.as_slice().iter().all(|&w| w >= 0.0));
        for m in 0..26 {
            assert!(fb.row(m).iter().any(|&w| w > 0.0), "filter {m} is empty");
        }
    }

    #[test]
    fn filterbank_rejects_too_many_bands() {
        assert!(mel_filterbank(16_000, 512, 257).is_err());
        assert!(mel_filterbank(16_000, 512, 0).is_err());
    }

    #[test]
    fn zero_clip_is_all_pad_value() {
        let cfg = FrontendConfig::default();
        let clip = AudioClip {
            samples: vec![0.0; 120_000],
            sample_rate: 16_000,
        };
        let f = logmel(&clip, &cfg).unwrap();
        assert_eq!(f.values.rows(), 26);
        assert_eq!(f.values.cols(), 748);
        assert_eq!(f.n_frames_valid, 748);
        let pad = cfg.pad_value();
        assert!(f.values.as_slice().iter().all(|&v| v == pad));
    }

    #[test]
    fn sine_concentrates_in_its_band_and_pads_after_one_second() {
        let cfg = FrontendConfig::default();
        // Peak frequency of band 10 (0-based): edge point index 11.
        let mel_hi = hz_to_mel(8000.0);
        let target_hz = mel_to_hz(mel_hi * 11.0 / 27.0);
        let clip = sine(target_hz, 1.0, 0.5);
        let f = logmel(&clip, &cfg).unwrap();
        assert_eq!(f.n_frames_valid, 98);
        for t in 0..98 {
            let col = f.values.column(t);
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 10, "frame {t} peaked in band {argmax}");
        }
        let pad = cfg.pad_value();
        for t in 98..748 {
            for band in 0..26 {
                assert_eq!(f.values.get(band, t), pad);
            }
        }
    }

    #[test]
    fn long_clip_matches_its_prefix() {
        let cfg = FrontendConfig::default();
        let long = sine(440.0, 8.0, 0.3);
        let prefix = AudioClip {
            samples: long.samples[..120_000].to_vec(),
            sample_rate: 16_000,
        };
        let a = logmel(&long, &cfg).unwrap();
        let b = logmel(&prefix, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_sample_rate_and_empty_audio() {
        let cfg = FrontendConfig::default();
        let clip = AudioClip {
            samples: vec![0.1; 8000],
            sample_rate: 8000,
        };
        assert!(matches!(
            logmel(&clip, &cfg),
            Err(DspError::SampleRateMismatch { got: 8000, .. })
        ));
        let empty = AudioClip {
            samples: vec![],
            sample_rate: 16_000,
        };
        assert!(matches!(logmel(&empty, &cfg), Err(DspError::EmptyAudio)));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        let clip = sine(440.0, 0.5, 0.4);
        for &s in &clip.samples {
            w.write_sample((s * 32767.0).round() as i16).unwrap();
        }
        w.finalize().unwrap();

        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples.len(), clip.samples.len());
        for (&a, &b) in back.samples.iter().zip(&clip.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn wav_rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(DspError::UnsupportedWav { .. })
        ));
    }

    #[test]
    fn feature_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feat.acnf");
        let clip = sine(700.0, 0.8, 0.3);
        let f = logmel(&clip, &FrontendConfig::default()).unwrap();
        write_feature_cache(&path, &f).unwrap();
        let back = read_feature_cache(&path).unwrap();
        assert_eq!(back.n_frames_valid, f.n_frames_valid);
        assert_eq!(back.values.rows(), 26);
        assert_eq!(back.values.cols(), 748);
        for (&a, &b) in back.values.as_slice().iter().zip(f.values.as_slice()) {
            assert_eq!(a, b as f32 as f64);
        }
    }

    #[test]
    fn feature_cache_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.acnf");
        std::fs::write(&bad_magic, b"NOPE\x01aaaaaaaaaaaa").unwrap();
        assert!(matches!(
            read_feature_cache(&bad_magic),
            Err(DspError::BadCache { .. })
        ));

        let truncated = dir.path().join("trunc.acnf");
        let clip = sine(500.0, 0.2, 0.2);
        let f = logmel(&clip, &FrontendConfig::default()).unwrap();
        write_feature_cache(&truncated, &f).unwrap();
        let bytes = std::fs::read(&truncated).unwrap();
        std::fs::write(&truncated, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            read_feature_cache(&truncated),
            Err(DspError::BadCache { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn output_shape_fixed_and_finite(seconds in 0.05f64..9.0, seed in 0u64..1000) {
            let cfg = FrontendConfig::default();
            let n = (seconds * 16_000.0).round() as usize;
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let samples: Vec<f64> = (0..n).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            }).collect();
            let clip = AudioClip { samples, sample_rate: 16_000 };
            let f = logmel(&clip, &cfg).unwrap();
            prop_assert_eq!(f.values.rows(), 26);
            prop_assert_eq!(f.values.cols(), 748);
            prop_assert!(f.values.is_finite());
            prop_assert_eq!(f.n_frames_valid, frame_count(seconds, &cfg).min(748));
            let pad = cfg.pad_value();
            for t in f.n_frames_valid..748 {
                for band in 0..26 {
                    prop_assert_eq!(f.values.get(band, t), pad);
                }
            }
        }

        #[test]
        fn determinism(freq in 60.0f64..7000.0) {
            let cfg = FrontendConfig::default();
            let clip = sine(freq, 0.3, 0.5);
            let a = logmel(&clip, &cfg).unwrap();
            let b = logmel(&clip, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scaling_never_decreases_logmel(freq in 60.0f64..7000.0, scale in 1.5f64..16.0) {
            let cfg = FrontendConfig::default();
            let clip = sine(freq, 0.2, 0.05);
            let scaled = AudioClip {
                samples: clip.samples.iter().map(|&s| s * scale).collect(),
                sample_rate: 16_000,
            };
            let a = logmel(&clip, &cfg).unwrap();
            let b = logmel(&scaled, &cfg).unwrap();
            for (&x, &y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
                prop_assert!(y >= x - 1e-9);
            }
        }
    }
}
