//! Experiment orchestration: speaker-independent cross-validation folds, the
//! four training protocols (mono, multi, cross, cross with fine-tuning),
//! seeded repetitions, and UAR reporting.

mod runner;

pub use runner::{
    prepare_corpus, run_plan, run_plan_full, CellResult, CorpusMean, EvalReport, PreparedCorpus,
    RepetitionMean, RunOutput, TrainedModel,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Dimension, LabelMapping, Sex, UtteranceRecord};
use crate::dsp::DspError;
use crate::model::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Mono,
    Multi,
    Cross,
    CrossFt,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Mono => write!(f, "mono"),
            Protocol::Multi => write!(f, "multi"),
            Protocol::Cross => write!(f, "cross"),
            Protocol::CrossFt => write!(f, "cross_ft"),
        }
    }
}

/// How a corpus is split into speaker-independent folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Five sessions of two speakers each; a fold tests a whole session.
    Session,
    /// Arbitrary speakers, split into five sex-balanced groups.
    Speaker,
}

/// Label mapping in a plan file: a well-known name or explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MappingSpec {
    Named(String),
    Explicit(LabelMapping),
}

impl MappingSpec {
    pub fn resolve(&self) -> Result<LabelMapping, ExperimentError> {
        match self {
            MappingSpec::Explicit(m) => Ok(*m),
            MappingSpec::Named(name) => match name.as_str() {
                "iemocap" => Ok(LabelMapping::iemocap()),
                "recola" => Ok(LabelMapping::recola()),
                other => Err(ExperimentError::PlanInvalid {
                    detail: format!("unknown label mapping {other:?}"),
                }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub id: String,
    pub manifest: PathBuf,
    pub mapping: MappingSpec,
    pub fold_scheme: FoldScheme,
}

fn default_repetitions() -> usize {
    5
}

fn default_ft_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub protocol: Protocol,
    pub dimension: Dimension,
    pub corpora: Vec<CorpusSpec>,
    /// Corpus ids used for training; defaults depend on the protocol.
    #[serde(default)]
    pub sources: Option<Vec<String>>,
    /// Test corpus for mono/cross/cross_ft; multi tests every source.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_ft_samples")]
    pub ft_samples_per_fold: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// When set, features are read from `<feature_dir>/<id>.acnf` instead of
    /// being computed from the audio.
    #[serde(default)]
    pub feature_dir: Option<PathBuf>,
    /// When set, replaces the hyperparameters passed to the runner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<crate::model::HyperParams>,
}

impl ExperimentPlan {
    /// Parses a plan file; relative manifest and feature paths are resolved
    /// against the plan file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let mut plan: ExperimentPlan = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            for c in &mut plan.corpora {
                if c.manifest.is_relative() {
                    c.manifest = base.join(&c.manifest);
                }
            }
            if let Some(fd) = &plan.feature_dir {
                if fd.is_relative() {
                    plan.feature_dir = Some(base.join(fd));
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn target(&self) -> Result<&str, ExperimentError> {
        self.target
            .as_deref()
            .or_else(|| (self.corpora.len() == 1).then(|| self.corpora[0].id.as_str()))
            .ok_or_else(|| ExperimentError::PlanInvalid {
                detail: "no target corpus given".into(),
            })
    }

    /// Training corpora: explicit list, or every corpus (multi), every other
    /// corpus (cross, cross_ft), or the target itself (mono).
    pub fn resolved_sources(&self) -> Result<Vec<String>, ExperimentError> {
        if let Some(s) = &self.sources {
            return Ok(s.clone());
        }
        let all = || self.corpora.iter().map(|c| c.id.clone());
        Ok(match self.protocol {
            Protocol::Mono => vec![self.target()?.to_string()],
            Protocol::Multi => all().collect(),
            Protocol::Cross | Protocol::CrossFt => {
                let target = self.target()?.to_string();
                all().filter(|id| *id != target).collect()
            }
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |detail: String| Err(ExperimentError::PlanInvalid { detail });
        if self.repetitions < 1 {
            return invalid("repetitions must be at least 1".into());
        }
        if self.corpora.is_empty() {
            return invalid("no corpora listed".into());
        }
        let mut ids = std::collections::HashSet::new();
        for c in &self.corpora {
            if !ids.insert(c.id.as_str()) {
                return invalid(format!("duplicate corpus id {:?}", c.id));
            }
            c.mapping.resolve()?;
        }
        let known = |id: &str| self.corpora.iter().any(|c| c.id == id);
        if let Some(sources) = &self.sources {
            for s in sources {
                if !known(s) {
                    return invalid(format!("unknown source corpus {s:?}"));
                }
            }
        }
        if let Some(t) = &self.target {
            if !known(t) {
                return invalid(format!("unknown target corpus {t:?}"));
            }
        }
        match self.protocol {
            Protocol::Mono => {
                self.target()?;
            }
            Protocol::Multi => {}
            Protocol::Cross | Protocol::CrossFt => {
                let target = self.target()?.to_string();
                let sources = self.resolved_sources()?;
                if sources.is_empty() {
                    return invalid("cross protocols need at least one source corpus".into());
                }
                if sources.iter().any(|s| *s == target) {
                    return invalid(format!(
                        "cross protocols need a target distinct from the sources (got {target:?})"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One cross-validation fold, as disjoint speaker sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_id: usize,
    pub train_speakers: Vec<String>,
    pub dev_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
}

impl FoldSpec {
    /// No speaker may appear in two roles.
    pub fn validate_disjoint(&self) -> Result<(), ExperimentError> {
        let mut seen = std::collections::HashSet::new();
        for s in self
            .train_speakers
            .iter()
            .chain(&self.dev_speakers)
            .chain(&self.test_speakers)
        {
            if !seen.insert(s.as_str()) {
                return Err(ExperimentError::PlanInvalid {
                    detail: format!("speaker {s:?} appears in two roles of fold {}", self.fold_id),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad session structure ({detail})")]
    BadSessionStructure { detail: String },
    #[error("need at least 5 speakers for speaker folds, found {found}")]
    InsufficientSpeakers { found: usize },
    #[error("true class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("fine-tuning pool has {pool} samples, need {need}")]
    PoolTooSmall { pool: usize, need: usize },
    #[error("invalid plan ({detail})")]
    PlanInvalid { detail: String },
    #[error("missing features for utterance {id} ({detail})")]
    MissingFeatures { id: String, detail: String },
}

/// Unweighted average recall of a 2x2 confusion matrix whose rows are true
/// classes: `(recall_0 + recall_1) / 2`.
pub fn uar(confusion: &[[usize; 2]; 2]) -> Result<f64, ExperimentError> {
    let mut sum = 0.0;
    for class in 0..2 {
        let total = confusion[class][0] + confusion[class][1];
        if total == 0 {
            return Err(ExperimentError::EmptyClass { class });
        }
        sum += confusion[class][class] as f64 / total as f64;
    }
    Ok(sum / 2.0)
}

/// Independently reproducible seed for (repetition, fold) cells: SplitMix64
/// finalizer over the mixed inputs.
pub fn derive_seed(master_seed: u64, repetition: u64, fold: u64) -> u64 {
    let mut z = master_seed
        ^ repetition.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ fold.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold sentinel for per-repetition work that is not tied to any fold (the
/// base model of the cross protocols).
pub const NO_FOLD: u64 = u64::MAX;

/// Session-structured folds: five sessions of exactly two speakers; fold i
/// tests session i whole, one of the remaining four rotates in as dev, the
/// other three train.
pub fn make_iemocap_folds(records: &[UtteranceRecord]) -> Result<Vec<FoldSpec>, ExperimentError> {
    let mut sessions: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        sessions
            .entry(r.session_id.as_str())
            .or_default()
            .insert(r.speaker_id.as_str());
    }
    if sessions.len() != 5 {
        return Err(ExperimentError::BadSessionStructure {
            detail: format!("expected 5 sessions, found {}", sessions.len()),
        });
    }
    for (sid, speakers) in &sessions {
        if speakers.len() != 2 {
            return Err(ExperimentError::BadSessionStructure {
                detail: format!("session {sid:?} has {} speakers, expected 2", speakers.len()),
            });
        }
    }
    let session_speakers: Vec<Vec<String>> = sessions
        .values()
        .map(|s| s.iter().map(|x| x.to_string()).collect())
        .collect();

    let mut folds = Vec::with_capacity(5);
    for i in 0..5 {
        let remaining: Vec<usize> = (0..5).filter(|&j| j != i).collect();
        let dev_session = remaining[i % 4];
        let mut train = Vec::new();
        for &j in remaining.iter().filter(|&&j| j != dev_session) {
            train.extend(session_speakers[j].iter().cloned());
        }
        let fold = FoldSpec {
            fold_id: i,
            train_speakers: train,
            dev_speakers: session_speakers[dev_session].clone(),
            test_speakers: session_speakers[i].clone(),
        };
        fold.validate_disjoint()?;
        folds.push(fold);
    }
    Ok(folds)
}

/// Speaker folds for corpora without session structure: speakers are split
/// into five groups, sex-balanced where parity permits (group sizes differ by
/// at most one, per-sex counts too). Fold i tests group i, group i+1 is dev,
/// the rest train.
pub fn make_recola_folds(records: &[UtteranceRecord]) -> Result<Vec<FoldSpec>, ExperimentError> {
    let mut speakers: BTreeMap<&str, Sex> = BTreeMap::new();
    for r in records {
        speakers.insert(r.speaker_id.as_str(), r.sex);
    }
    if speakers.len() < 5 {
        return Err(ExperimentError::InsufficientSpeakers {
            found: speakers.len(),
        });
    }

    // Round-robin each sex group in turn, continuing the rotation across
    // groups so total sizes stay within one of each other.
    let mut splits: Vec<Vec<String>> = vec![Vec::new(); 5];
    let mut next = 0usize;
    for sex in [Sex::Female, Sex::Male] {
        for (speaker, _) in speakers.iter().filter(|(_, &s)| s == sex) {
            splits[next % 5].push(speaker.to_string());
            next += 1;
        }
    }

    let mut folds = Vec::with_capacity(5);
    for i in 0..5 {
        let dev = (i + 1) % 5;
        let mut train = Vec::new();
        for (j, split) in splits.iter().enumerate() {
            if j != i && j != dev {
                train.extend(split.iter().cloned());
            }
        }
        let fold = FoldSpec {
            fold_id: i,
            train_speakers: train,
            dev_speakers: splits[dev].clone(),
            test_speakers: splits[i].clone(),
        };
        fold.validate_disjoint()?;
        folds.push(fold);
    }
    Ok(folds)
}

pub fn make_folds(
    scheme: FoldScheme,
    records: &[UtteranceRecord],
) -> Result<Vec<FoldSpec>, ExperimentError> {
    match scheme {
        FoldScheme::Session => make_iemocap_folds(records),
        FoldScheme::Speaker => make_recola_folds(records),
    }
}

/// Uniform sample of `n` indices from `pool` without replacement.
pub fn select_ft_samples<R: Rng>(
    pool: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ExperimentError> {
    if pool.len() < n {
        return Err(ExperimentError::PoolTooSmall {
            pool: pool.len(),
            need: n,
        });
    }
    Ok(rand::seq::index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(speaker: &str, session: &str, sex: Sex) -> UtteranceRecord {
        UtteranceRecord {
            id: format!("{speaker}_{session}_{}", rand::random::<u32>()),
            audio_path: PathBuf::from("none.wav"),
            language: "xx".into(),
            speaker_id: speaker.into(),
            session_id: session.into(),
            sex,
            arousal: LabelSource::Scalar(0.5),
            valence: LabelSource::Scalar(0.5),
        }
    }

    #[test]
    fn uar_hand_values() {
        assert_eq!(uar(&[[50, 0], [0, 50]]).unwrap(), 1.0);
        let v = uar(&[[30, 10], [20, 40]]).unwrap();
        assert!((v - (0.75 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((v - 0.7083333333333333).abs() < 1e-12);
        // Constant predictor: one recall is 1, the other 0.
        assert_eq!(uar(&[[25, 0], [35, 0]]).unwrap(), 0.5);
        assert!(matches!(
            uar(&[[0, 0], [1, 9]]),
            Err(ExperimentError::EmptyClass { class: 0 })
        ));
    }

    #[test]
    fn uar_matches_brute_force_recalls() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let c = [
                [rng.random_range(1usize..100), rng.random_range(0usize..100)],
                [rng.random_range(0usize..100), rng.random_range(1usize..100)],
            ];
            let direct = uar(&c).unwrap();
            let r0 = c[0][0] as f64 / (c[0][0] + c[0][1]) as f64;
            let r1 = c[1][1] as f64 / (c[1][0] + c[1][1]) as f64;
            assert!((direct - (r0 + r1) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_predictor_uar_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sum = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let mut c = [[0usize; 2]; 2];
            for true_class in 0..2 {
                for _ in 0..100 {
                    let pred = rng.random_range(0usize..2);
                    c[true_class][pred] += 1;
                }
            }
            sum += uar(&c).unwrap();
        }
        let mean = sum / trials as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean UAR {mean}");
    }

    #[test]
    fn session_folds_partition_and_rotate_dev() {
        let mut records = Vec::new();
        for s in 0..5 {
            for p in 0..2 {
                let sex = if p == 0 { Sex::Female } else { Sex::Male };
                for _ in 0..3 {
                    records.push(record(&format!("s{s}p{p}"), &format!("ses{s}"), sex));
                }
            }
        }
        let folds = make_iemocap_folds(&records).unwrap();
        assert_eq!(folds.len(), 5);

        let mut all_test = Vec::new();
        for (i, f) in folds.iter().enumerate() {
            assert_eq!(f.test_speakers.len(), 2);
            assert_eq!(f.dev_speakers.len(), 2);
            assert_eq!(f.train_speakers.len(), 6);
            f.validate_disjoint().unwrap();
            // Test set is one whole session (speaker names are s<session>p<n>).
            let session: std::collections::HashSet<&str> =
                f.test_speakers.iter().map(|s| &s[1..2]).collect();
            assert_eq!(session.len(), 1, "fold {i} test spans sessions");
            all_test.extend(f.test_speakers.clone());
        }
        all_test.sort();
        all_test.dedup();
        assert_eq!(all_test.len(), 10, "test sets must partition all speakers");

        // Dev sessions rotate rather than always picking the same one.
        let devs: std::collections::HashSet<String> =
            folds.iter().map(|f| f.dev_speakers[0].clone()).collect();
        assert!(devs.len() >= 4);
    }

    #[test]
    fn session_folds_reject_bad_structure() {
        let four: Vec<UtteranceRecord> = (0..4)
            .flat_map(|s| {
                vec![
                    record(&format!("a{s}"), &format!("ses{s}"), Sex::Female),
                    record(&format!("b{s}"), &format!("ses{s}"), Sex::Male),
                ]
            })
            .collect();
        assert!(matches!(
            make_iemocap_folds(&four),
            Err(ExperimentError::BadSessionStructure { .. })
        ));

        let mut lopsided: Vec<UtteranceRecord> = (0..5)
            .flat_map(|s| {
                vec![
                    record(&format!("a{s}"), &format!("ses{s}"), Sex::Female),
                    record(&format!("b{s}"), &format!("ses{s}"), Sex::Male),
                ]
            })
            .collect();
        lopsided.push(record("extra", "ses0", Sex::Male));
        assert!(matches!(
            make_iemocap_folds(&lopsided),
            Err(ExperimentError::BadSessionStructure { .. })
        ));
    }

    #[test]
    fn speaker_folds_balance_counts_and_sex() {
        // 23 speakers, 12 female / 11 male.
        let mut records = Vec::new();
        for i in 0..23 {
            let sex = if i < 12 { Sex::Female } else { Sex::Male };
            records.push(record(&format!("spk{i:02}"), &format!("ses{i:02}"), sex));
        }
        let folds = make_recola_folds(&records).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.test_speakers.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![4, 4, 5, 5, 5]);

        for f in &folds {
            f.validate_disjoint().unwrap();
            let females = f
                .test_speakers
                .iter()
                .filter(|s| s[3..].parse::<usize>().unwrap() < 12)
                .count();
            let males = f.test_speakers.len() - females;
            assert!(females.abs_diff(males) <= 1 || females.min(males) >= 2);
        }

        // Exact parity: 10 speakers, 5F/5M -> 2 per split, 1F/1M.
        let mut even = Vec::new();
        for i in 0..10 {
            let sex = if i < 5 { Sex::Female } else { Sex::Male };
            even.push(record(&format!("p{i}"), &format!("s{i}"), sex));
        }
        let folds = make_recola_folds(&even).unwrap();
        for f in &folds {
            assert_eq!(f.test_speakers.len(), 2);
            let females = f
                .test_speakers
                .iter()
                .filter(|s| s[1..].parse::<usize>().unwrap() < 5)
                .count();
            assert_eq!(females, 1, "fold {} not sex-balanced", f.fold_id);
        }

        let few: Vec<UtteranceRecord> = (0..4)
            .map(|i| record(&format!("x{i}"), "s", Sex::Female))
            .collect();
        assert!(matches!(
            make_recola_folds(&few),
            Err(ExperimentError::InsufficientSpeakers { found: 4 })
        ));
    }

    #[test]
    fn speaker_fold_test_sets_partition_speakers() {
        let mut records = Vec::new();
        for i in 0..13 {
            let sex = if i % 2 == 0 { Sex::Female } else { Sex::Male };
            // Several utterances per speaker.
            for _ in 0..3 {
                records.push(record(&format!("spk{i:02}"), &format!("ses{i:02}"), sex));
            }
        }
        let folds = make_recola_folds(&records).unwrap();
        let mut all: Vec<String> = folds.iter().flat_map(|f| f.test_speakers.clone()).collect();
        all.sort();
        let n = all.len();
        all.dedup();
        assert_eq!(all.len(), n);
        assert_eq!(all.len(), 13);
    }

    #[test]
    fn derived_seeds_are_stable_and_collision_free() {
        assert_eq!(derive_seed(42, 1, 2), derive_seed(42, 1, 2));
        let mut seen = std::collections::HashSet::new();
        for master in [0u64, 42, u64::MAX] {
            for r in 0..10u64 {
                for f in [0u64, 1, 2, 3, 4, NO_FOLD] {
                    assert!(seen.insert(derive_seed(master, r, f)), "collision at {master}/{r}/{f}");
                }
            }
        }
    }

    #[test]
    fn ft_sample_selection() {
        let pool: Vec<usize> = (100..160).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let picked = select_ft_samples(&pool, 25, &mut rng).unwrap();
        assert_eq!(picked.len(), 25);
        let unique: std::collections::HashSet<_> = picked.iter().collect();
        assert_eq!(unique.len(), 25);
        assert!(picked.iter().all(|i| pool.contains(i)));

        let again = select_ft_samples(&pool, 25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(picked, again);

        let whole = select_ft_samples(&pool, 60, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut sorted = whole.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, pool);

        assert!(matches!(
            select_ft_samples(&pool, 61, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(ExperimentError::PoolTooSmall { pool: 60, need: 61 })
        ));
    }

    #[test]
    fn plan_validation() {
        let corpus = |id: &str| CorpusSpec {
            id: id.into(),
            manifest: PathBuf::from(format!("{id}.csv")),
            mapping: MappingSpec::Named("recola".into()),
            fold_scheme: FoldScheme::Speaker,
        };
        let base = ExperimentPlan {
            protocol: Protocol::Cross,
            dimension: Dimension::Arousal,
            corpora: vec![corpus("a"), corpus("b")],
            sources: Some(vec!["a".into()]),
            target: Some("b".into()),
            repetitions: 2,
            ft_samples_per_fold: 10,
            master_seed: 1,
            feature_dir: None,
            hyperparams: None,
        };
        base.validate().unwrap();

        let self_cross = ExperimentPlan {
            sources: Some(vec!["b".into()]),
            ..base.clone()
        };
        assert!(matches!(
            self_cross.validate(),
            Err(ExperimentError::PlanInvalid { .. })
        ));

        let no_reps = ExperimentPlan {
            repetitions: 0,
            ..base.clone()
        };
        assert!(no_reps.validate().is_err());

        let unknown_mapping = ExperimentPlan {
            corpora: vec![CorpusSpec {
                mapping: MappingSpec::Named("nope".into()),
                ..corpus("a")
            }],
            sources: None,
            target: Some("a".into()),
            protocol: Protocol::Mono,
            ..base.clone()
        };
        assert!(unknown_mapping.validate().is_err());

        // Defaults: cross sources are everything but the target.
        let defaulted = ExperimentPlan {
            sources: None,
            ..base
        };
        assert_eq!(defaulted.resolved_sources().unwrap(), vec!["a".to_string()]);
    }
}
