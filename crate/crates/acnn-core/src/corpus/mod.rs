//! Corpus handling: manifest loading, raw-annotation to binary label mapping,
//! continuous-trace aggregation, and deterministic synthetic corpora with
//! planted cues for end-to-end verification without licensed data.

mod synthetic;

pub use synthetic::{
    generate_synthetic, read_cues, write_cues, CueKind, CueRecord, SyntheticSpec, Timbre,
};

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

/// Classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Arousal => write!(f, "arousal"),
            Dimension::Valence => write!(f, "valence"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "female" => Some(Sex::Female),
            "m" | "male" => Some(Sex::Male),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sex::Female => write!(f, "f"),
            Sex::Male => write!(f, "m"),
        }
    }
}

/// Where one dimension's annotation comes from: a pre-combined scalar or
/// per-annotator continuous trace files.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelSource {
    Scalar(f64),
    Traces(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio_path: PathBuf,
    pub language: String,
    pub speaker_id: String,
    pub session_id: String,
    pub sex: Sex,
    pub arousal: LabelSource,
    pub valence: LabelSource,
}

impl UtteranceRecord {
    pub fn label_source(&self, dim: Dimension) -> &LabelSource {
        match dim {
            Dimension::Arousal => &self.arousal,
            Dimension::Valence => &self.valence,
        }
    }
}

/// Binary mapping for a corpus-native annotation range: low class is
/// `[min, threshold]`, high class `(threshold, max]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelMapping {
    pub min: f64,
    pub threshold: f64,
    pub max: f64,
}

impl LabelMapping {
    /// 5-point self-assessment scale: low [1, 2.5], high (2.5, 5].
    pub fn iemocap() -> Self {
        Self {
            min: 1.0,
            threshold: 2.5,
            max: 5.0,
        }
    }

    /// Continuous [-1, 1] traces: negative [-1, 0], positive (0, 1].
    pub fn recola() -> Self {
        Self {
            min: -1.0,
            threshold: 0.0,
            max: 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: u64,
        detail: String,
    },
    #[error("{path}:{line}: duplicate utterance id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: u64,
        id: String,
    },
    #[error("{path}:{line}: missing field {field:?}")]
    MissingField {
        path: PathBuf,
        line: u64,
        field: &'static str,
    },
    #[error("raw label {raw} outside corpus range [{min}, {max}]")]
    OutOfRange { raw: f64, min: f64, max: f64 },
    #[error("annotator {annotator} has no trace points inside the turn")]
    EmptyTurn { annotator: usize },
    #[error("no annotator traces supplied")]
    NoAnnotators,
    #[error("invalid synthetic spec ({detail})")]
    InvalidSpec { detail: String },
}

/// Maps a raw annotation to its binary class. Boundary values follow the
/// bracket notation: the threshold itself is low, everything above it high.
pub fn map_label(raw: f64, mapping: &LabelMapping) -> Result<usize, CorpusError> {
    if !raw.is_finite() || raw < mapping.min || raw > mapping.max {
        return Err(CorpusError::OutOfRange {
            raw,
            min: mapping.min,
            max: mapping.max,
        });
    }
    Ok(if raw <= mapping.threshold { 0 } else { 1 })
}

/// Averages continuous annotations over a turn: per annotator, the mean of
/// values with timestamps in `[t_start, t_end]`; then the unweighted mean of
/// those annotator means.
pub fn aggregate_trace(
    traces: &[Vec<(f64, f64)>],
    t_start: f64,
    t_end: f64,
) -> Result<f64, CorpusError> {
    if traces.is_empty() {
        return Err(CorpusError::NoAnnotators);
    }
    let mut sum = 0.0;
    for (i, trace) in traces.iter().enumerate() {
        let in_turn: Vec<f64> = trace
            .iter()
            .filter(|(t, _)| *t >= t_start && *t <= t_end)
            .map(|(_, v)| *v)
            .collect();
        if in_turn.is_empty() {
            return Err(CorpusError::EmptyTurn { annotator: i });
        }
        sum += in_turn.iter().sum::<f64>() / in_turn.len() as f64;
    }
    Ok(sum / traces.len() as f64)
}

/// Parses a trace file of `time_s,value` lines (an optional header line is
/// tolerated).
pub fn read_trace(path: &Path) -> Result<Vec<(f64, f64)>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("time_s,value")) {
            continue;
        }
        let parse = || -> Option<(f64, f64)> {
            let (t, v) = line.split_once(',')?;
            Some((t.trim().parse().ok()?, v.trim().parse().ok()?))
        };
        let (t, v) = parse().ok_or_else(|| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            detail: format!("expected `time_s,value`, got {line:?}"),
        })?;
        points.push((t, v));
    }
    Ok(points)
}

/// Resolves one dimension's raw annotation: scalars pass through, traces are
/// aggregated over their full extent (an utterance in a manifest is one turn).
pub fn resolve_raw_label(record: &UtteranceRecord, dim: Dimension) -> Result<f64, CorpusError> {
    match record.label_source(dim) {
        LabelSource::Scalar(v) => Ok(*v),
        LabelSource::Traces(paths) => {
            let traces = paths
                .iter()
                .map(|p| read_trace(p))
                .collect::<Result<Vec<_>, _>>()?;
            aggregate_trace(&traces, f64::NEG_INFINITY, f64::INFINITY)
        }
    }
}

/// Mapped class counts `[low, high]` for one dimension across a corpus.
pub fn class_counts(
    records: &[UtteranceRecord],
    mapping: &LabelMapping,
    dim: Dimension,
) -> Result<[usize; 2], CorpusError> {
    let mut counts = [0usize; 2];
    for r in records {
        counts[map_label(resolve_raw_label(r, dim)?, mapping)?] += 1;
    }
    Ok(counts)
}

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "id",
    "path",
    "language",
    "speaker",
    "session",
    "sex",
    "arousal_raw",
    "valence_raw",
    "trace_path_arousal",
    "trace_path_valence",
];

/// Loads and validates a manifest CSV. Relative audio and trace paths are
/// resolved against the manifest's directory. Each dimension must be given
/// either a raw scalar or trace paths, never both.
pub fn load_manifest(path: &Path) -> Result<Vec<UtteranceRecord>, CorpusError> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let col = |name: &'static str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(CorpusError::MissingField {
                path: path.to_path_buf(),
                line: 1,
                field: name,
            })
    };
    let idx: Vec<usize> = MANIFEST_COLUMNS
        .iter()
        .map(|&c| col(c))
        .collect::<Result<_, _>>()?;

    let resolve = |cell: &str| -> PathBuf {
        let p = Path::new(cell);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(idx[i]).unwrap_or("");

        let parse_err = |detail: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        };
        let required = |i: usize, field: &'static str| -> Result<String, CorpusError> {
            let v = cell(i);
            if v.is_empty() {
                Err(CorpusError::MissingField {
                    path: path.to_path_buf(),
                    line,
                    field,
                })
            } else {
                Ok(v.to_string())
            }
        };

        let id = required(0, "id")?;
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line,
                id,
            });
        }
        let audio_path = resolve(&required(1, "path")?);
        let language = required(2, "language")?;
        let speaker_id = required(3, "speaker")?;
        let session_id = required(4, "session")?;
        let sex = Sex::parse(&required(5, "sex")?)
            .ok_or_else(|| parse_err(format!("unknown sex {:?}", cell(5))))?;

        // One source per dimension: scalar column or trace paths.
        let label_source = |raw_i: usize,
                                trace_i: usize,
                                dim: &str|
         -> Result<LabelSource, CorpusError> {
            let raw = cell(raw_i);
            let traces = cell(trace_i);
            match (raw.is_empty(), traces.is_empty()) {
                (false, true) => {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| parse_err(format!("bad {dim} value {raw:?}")))?;
                    Ok(LabelSource::Scalar(v))
                }
                (true, false) => Ok(LabelSource::Traces(
                    traces.split(';').map(|p| resolve(p.trim())).collect(),
                )),
                (true, true) => Err(parse_err(format!("{dim}: no scalar and no traces"))),
                (false, false) => Err(parse_err(format!("{dim}: both scalar and traces given"))),
            }
        };
        let arousal = label_source(6, 8, "arousal")?;
        let valence = label_source(7, 9, "valence")?;

        records.push(UtteranceRecord {
            id,
            audio_path,
            language,
            speaker_id,
            session_id,
            sex,
            arousal,
            valence,
        });
    }
    if records.is_empty() {
        log::warn!("manifest {} contains no records", path.display());
    }
    Ok(records)
}

/// Writes records back out as a manifest CSV with paths as given.
pub fn write_manifest(
    path: &Path,
    rows: &[[String; 10]],
) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_COLUMNS)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
