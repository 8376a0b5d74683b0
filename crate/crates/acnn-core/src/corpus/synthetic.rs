//! Deterministic synthetic speech-like corpora. Every utterance is a quiet
//! broadband harmonic wave; class-1 utterances additionally carry a short
//! class-discriminative cue at a known position, which gives attention
//! analysis its ground truth.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{load_manifest, write_manifest, CorpusError, UtteranceRecord};

/// What distinguishes class 1 from class 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueKind {
    /// Loud mid-frequency burst: stands out by level.
    Energy,
    /// Soft high-frequency tones: stands out by spectrum, not level.
    Pitch,
}

/// Background voice quality. All three are broadband (a full harmonic
/// series), so a model trained on one timbre always sees some energy in every
/// band of another; they differ in harmonic structure and rolloff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timbre {
    /// Every harmonic, 1/k rolloff: bright and buzzy.
    Saw,
    /// Odd harmonics, 1/k rolloff: bright and hollow.
    Square,
    /// Odd harmonics, 1/k^2 rolloff: dark and muted.
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub language: String,
    pub n_utterances: usize,
    pub n_speakers: usize,
    pub sample_rate: u32,
    pub duration_s_min: f64,
    pub duration_s_max: f64,
    pub cue_kind: CueKind,
    pub cue_position_s: f64,
    pub cue_duration_s: f64,
    pub timbre: Timbre,
    /// Fraction of utterances carrying the cue (class 1).
    pub class_balance: f64,
    /// Amplitude of additive uniform noise; 0 gives a clean corpus.
    pub noise_level: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            language: "synth".into(),
            n_utterances: 200,
            n_speakers: 10,
            sample_rate: 16_000,
            duration_s_min: 1.5,
            duration_s_max: 3.0,
            cue_kind: CueKind::Energy,
            // With 10 ms frames, width-10 kernels and pool 30/30, a cue in
            // [0.72 s, 0.87 s) is seen by pooled step 2 and no other.
            cue_position_s: 0.72,
            cue_duration_s: 0.15,
            timbre: Timbre::Saw,
            class_balance: 0.5,
            noise_level: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |detail: String| Err(CorpusError::InvalidSpec { detail });
        if self.n_utterances == 0 {
            return err("n_utterances must be at least 1".into());
        }
        if self.n_speakers == 0 || self.n_speakers > self.n_utterances {
            return err(format!(
                "n_speakers {} must be in 1..={}",
                self.n_speakers, self.n_utterances
            ));
        }
        if self.sample_rate == 0 {
            return err("sample_rate must be positive".into());
        }
        if !(self.duration_s_min > 0.0 && self.duration_s_min <= self.duration_s_max) {
            return err(format!(
                "duration range [{}, {}] invalid",
                self.duration_s_min, self.duration_s_max
            ));
        }
        if self.cue_position_s < 0.0 || self.cue_duration_s <= 0.0 {
            return err(format!(
                "cue_position_s {} / cue_duration_s {} invalid",
                self.cue_position_s, self.cue_duration_s
            ));
        }
        if self.cue_position_s + self.cue_duration_s > self.duration_s_min {
            return err(format!(
                "cue_position_s {} + cue_duration_s {} exceeds duration_s_min {}",
                self.cue_position_s, self.cue_duration_s, self.duration_s_min
            ));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return err(format!("class_balance {} outside [0, 1]", self.class_balance));
        }
        if self.noise_level < 0.0 {
            return err(format!("noise_level {} negative", self.noise_level));
        }
        Ok(())
    }
}

/// Ground-truth cue metadata for one utterance; class 0 has no cue.
#[derive(Debug, Clone, PartialEq)]
pub struct CueRecord {
    pub id: String,
    pub label: usize,
    pub cue_start_s: Option<f64>,
    pub cue_end_s: Option<f64>,
}

fn cue_wave(kind: CueKind, t: f64) -> f64 {
    match kind {
        CueKind::Energy => {
            0.42 * ((TAU * 420.0 * t).sin()
                + 0.7 * (TAU * 700.0 * t).sin()
                + 0.4 * (TAU * 1100.0 * t).sin())
        }
        CueKind::Pitch => {
            0.10 * ((TAU * 3400.0 * t).sin() + 0.8 * (TAU * 4600.0 * t).sin())
        }
    }
}

/// Unit-amplitude voiced wave at phase `phi` (in cycles).
fn voice_wave(timbre: Timbre, phi: f64) -> f64 {
    let frac = phi - phi.floor();
    match timbre {
        Timbre::Saw => 2.0 * frac - 1.0,
        Timbre::Square => {
            if frac < 0.5 {
                1.0
            } else {
                -1.0
            }
        }
        Timbre::Triangle => 1.0 - 4.0 * (frac - 0.5).abs(),
    }
}

fn synth_samples(
    spec: &SyntheticSpec,
    label: usize,
    duration_s: f64,
    f0: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = (duration_s * spec.sample_rate as f64).round() as usize;
    let dt = 1.0 / spec.sample_rate as f64;
    let cue_end = spec.cue_position_s + spec.cue_duration_s;
    (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let mut s = 0.04 * voice_wave(spec.timbre, f0 * t);
            if spec.noise_level > 0.0 {
                s += spec.noise_level * (rng.random::<f64>() * 2.0 - 1.0);
            }
            if label == 1 && t >= spec.cue_position_s && t < cue_end {
                s += cue_wave(spec.cue_kind, t);
            }
            s.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Writes WAVs, `manifest.csv` and `cues.csv` under `out_dir` and returns the
/// loaded-back records. Speakers rotate round-robin over utterances; classes
/// interleave within each speaker so speaker identity never predicts class.
/// Raw labels are written on the [-1, 1] scale (class 0 -> -0.5, class 1 ->
/// 0.5) for both dimensions.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    out_dir: &Path,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<UtteranceRecord>, CorpusError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir.join("wav"))?;

    let wav_spec = hound::WavSpec {
        channels: 1,
        sample_rate: spec.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };

    // Per-speaker class interleaving with exact long-run balance.
    let mut balance_acc = vec![0.0f64; spec.n_speakers];

    let mut manifest_rows: Vec<[String; 10]> = Vec::with_capacity(spec.n_utterances);
    let mut cue_rows = Vec::with_capacity(spec.n_utterances);
    for i in 0..spec.n_utterances {
        let speaker = i % spec.n_speakers;
        let acc = &mut balance_acc[speaker];
        *acc += spec.class_balance;
        let label = if *acc >= 1.0 - 1e-9 {
            *acc -= 1.0;
            1
        } else {
            0
        };

        let duration_s =
            spec.duration_s_min + rng.random::<f64>() * (spec.duration_s_max - spec.duration_s_min);
        let f0 = 120.0 + rng.random::<f64>() * 90.0;
        let samples = synth_samples(spec, label, duration_s, f0, rng);

        let id = format!("{}_{i:04}", spec.language);
        let rel_path = format!("wav/{id}.wav");
        let mut writer = hound::WavWriter::create(out_dir.join(&rel_path), wav_spec)?;
        for &s in &samples {
            writer.write_sample((s * 32767.0).round() as i16)?;
        }
        writer.finalize()?;

        let raw = if label == 1 { "0.5" } else { "-0.5" };
        manifest_rows.push([
            id.clone(),
            rel_path,
            spec.language.clone(),
            format!("spk{speaker:02}"),
            format!("ses{speaker:02}"),
            if speaker % 2 == 0 { "f" } else { "m" }.to_string(),
            raw.to_string(),
            raw.to_string(),
            String::new(),
            String::new(),
        ]);
        cue_rows.push(CueRecord {
            id,
            label,
            cue_start_s: (label == 1).then_some(spec.cue_position_s),
            cue_end_s: (label == 1).then_some(spec.cue_position_s + spec.cue_duration_s),
        });
    }

    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &manifest_rows)?;
    write_cues(&out_dir.join("cues.csv"), &cue_rows)?;
    load_manifest(&manifest_path)
}

pub fn write_cues(path: &Path, cues: &[CueRecord]) -> Result<(), CorpusError> {
    let mut out = String::from("id,label,cue_start_s,cue_end_s\n");
    for c in cues {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.id,
            c.label,
            fmt(c.cue_start_s),
            fmt(c.cue_end_s)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cues(path: &Path) -> Result<Vec<CueRecord>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut cues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("id,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |detail: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            detail,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", fields.len())));
        }
        let opt = |s: &str| -> Result<Option<f64>, CorpusError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| parse_err(format!("bad cue time {s:?}")))
            }
        };
        cues.push(CueRecord {
            id: fields[0].to_string(),
            label: fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad label {:?}", fields[1])))?,
            cue_start_s: opt(fields[2])?,
            cue_end_s: opt(fields[3])?,
        });
    }
    Ok(cues)
}
