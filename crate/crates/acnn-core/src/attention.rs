//! Attention-weight analysis: per-sample weight extraction from a trained
//! model, argmax-position histograms, max-vs-second-max dominance statistics,
//! and cue-localization scoring against planted cue positions.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CueRecord;
use crate::model::{predict, HyperParams, ModelError, ModelParams};
use crate::numeric::Tensor2;

#[derive(Debug, thiserror::Error)]
pub enum AttentionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no records to analyze")]
    EmptyInput,
    #[error("inconsistent records ({detail})")]
    InconsistentRecords { detail: String },
    #[error("no cue metadata for utterance {id}")]
    MissingCueMetadata { id: String },
    #[error("invalid segment map ({detail})")]
    InvalidSegmentMap { detail: String },
}

/// One utterance to run through the model in inference mode.
#[derive(Debug, Clone)]
pub struct AttentionInput {
    pub id: String,
    pub features: Arc<Tensor2>,
}

/// Attention weights of one utterance under a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub id: String,
    pub alpha: Vec<f64>,
    /// Position of the largest weight; ties take the lowest index.
    pub argmax: usize,
    pub max: f64,
    /// 0 when there is only one attention step.
    pub second_max: f64,
}

/// Argmax distribution and dominance statistics over a record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    /// `histogram[i]` is the fraction of records whose argmax is position i.
    pub histogram: Vec<f64>,
    /// Fraction of records with `max - second_max > threshold` (strict).
    pub dominance_rate: f64,
    pub threshold: f64,
    pub n_samples: usize,
}

fn top_two(alpha: &[f64]) -> (usize, f64, f64) {
    let mut argmax = 0usize;
    let mut max = alpha[0];
    for (i, &a) in alpha.iter().enumerate().skip(1) {
        if a > max {
            argmax = i;
            max = a;
        }
    }
    let second = alpha
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, &a)| a)
        .fold(f64::NEG_INFINITY, f64::max);
    let second = if second.is_finite() { second } else { 0.0 };
    (argmax, max, second)
}

/// Runs every input through the model without dropout and collects its
/// attention weights. One record per input, in input order.
pub fn extract_attention(
    params: &ModelParams,
    hp: &HyperParams,
    inputs: &[AttentionInput],
) -> Result<Vec<AttentionRecord>, AttentionError> {
    inputs
        .par_iter()
        .map(|input| {
            let pred = predict(&input.features, params, hp)?;
            let (argmax, max, second_max) = top_two(&pred.alpha);
            Ok(AttentionRecord {
                id: input.id.clone(),
                alpha: pred.alpha,
                argmax,
                max,
                second_max,
            })
        })
        .collect()
}

/// Histogram of argmax positions and the dominance rate at `threshold`.
pub fn summarize(
    records: &[AttentionRecord],
    threshold: f64,
) -> Result<AttentionSummary, AttentionError> {
    if records.is_empty() {
        return Err(AttentionError::EmptyInput);
    }
    let t_pool = records[0].alpha.len();
    let mut counts = vec![0usize; t_pool];
    let mut dominant = 0usize;
    for r in records {
        if r.alpha.len() != t_pool {
            return Err(AttentionError::InconsistentRecords {
                detail: format!(
                    "record {} has {} attention steps, expected {t_pool}",
                    r.id,
                    r.alpha.len()
                ),
            });
        }
        counts[r.argmax] += 1;
        if r.max - r.second_max > threshold {
            dominant += 1;
        }
    }
    let n = records.len();
    Ok(AttentionSummary {
        histogram: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        dominance_rate: dominant as f64 / n as f64,
        threshold,
        n_samples: n,
    })
}

/// Maps an attention position to its time interval: the clip duration divided
/// into equal segments, so the intervals tile `[0, total_seconds]` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMap {
    pub n_segments: usize,
    pub total_seconds: f64,
}

impl SegmentMap {
    pub fn new(n_segments: usize, total_seconds: f64) -> Result<Self, AttentionError> {
        if n_segments == 0 || !(total_seconds > 0.0) {
            return Err(AttentionError::InvalidSegmentMap {
                detail: format!("{n_segments} segments over {total_seconds} s"),
            });
        }
        Ok(SegmentMap {
            n_segments,
            total_seconds,
        })
    }

    /// Half-open interval `[start, end)` of segment `j`; the last segment
    /// closes at `total_seconds`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let width = self.total_seconds / self.n_segments as f64;
        (j as f64 * width, (j + 1) as f64 * width)
    }

    /// Whether time `t` falls inside segment `j` (the last segment includes
    /// its upper endpoint).
    pub fn contains(&self, j: usize, t: f64) -> bool {
        let (start, end) = self.interval(j);
        t >= start && (t < end || (j + 1 == self.n_segments && t <= self.total_seconds))
    }

    /// Segment index containing time `t`, clamped to the last segment.
    pub fn segment_of(&self, t: f64) -> usize {
        let width = self.total_seconds / self.n_segments as f64;
        ((t / width) as usize).min(self.n_segments - 1)
    }
}

/// Fraction of class-1 records whose argmax segment contains the planted cue
/// position (its start time). Every record needs a cue-metadata row; class-1
/// rows must carry a cue interval.
pub fn localization_score(
    records: &[AttentionRecord],
    cues: &[CueRecord],
    map: &SegmentMap,
) -> Result<f64, AttentionError> {
    let by_id: HashMap<&str, &CueRecord> = cues.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut class1 = 0usize;
    let mut localized = 0usize;
    for r in records {
        let cue = by_id
            .get(r.id.as_str())
            .ok_or_else(|| AttentionError::MissingCueMetadata { id: r.id.clone() })?;
        if cue.label != 1 {
            continue;
        }
        let position = cue
            .cue_start_s
            .ok_or_else(|| AttentionError::MissingCueMetadata { id: r.id.clone() })?;
        class1 += 1;
        if map.contains(r.argmax, position) {
            localized += 1;
        }
    }
    if class1 == 0 {
        return Err(AttentionError::EmptyInput);
    }
    Ok(localized as f64 / class1 as f64)
}

fn csv_io(e: csv::Error) -> AttentionError {
    AttentionError::Io(std::io::Error::other(e.to_string()))
}

/// One row per record: id, alpha_0..alpha_{Tp-1}, argmax, max, second_max.
/// Full precision; rounding is left to human-readable reports.
pub fn write_records_csv(path: &Path, records: &[AttentionRecord]) -> Result<(), AttentionError> {
    if records.is_empty() {
        return Err(AttentionError::EmptyInput);
    }
    let t_pool = records[0].alpha.len();
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..t_pool).map(|i| format!("alpha_{i}")));
    header.extend(["argmax".to_string(), "max".to_string(), "second_max".to_string()]);
    w.write_record(&header).map_err(csv_io)?;
    for r in records {
        if r.alpha.len() != t_pool {
            return Err(AttentionError::InconsistentRecords {
                detail: format!("record {} has {} attention steps", r.id, r.alpha.len()),
            });
        }
        let mut row = vec![r.id.clone()];
        row.extend(r.alpha.iter().map(|a| format!("{a}")));
        row.push(r.argmax.to_string());
        row.push(format!("{}", r.max));
        row.push(format!("{}", r.second_max));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per position: position, fraction.
pub fn write_summary_csv(path: &Path, summary: &AttentionSummary) -> Result<(), AttentionError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["position", "fraction"]).map_err(csv_io)?;
    for (i, f) in summary.histogram.iter().enumerate() {
        w.write_record([i.to_string(), format!("{f}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
