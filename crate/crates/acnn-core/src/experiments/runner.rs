//! Plan execution: corpus preparation, the four protocols, and the report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, make_folds, select_ft_samples, uar, CorpusSpec, ExperimentError, ExperimentPlan,
    FoldSpec, Protocol, NO_FOLD,
};
use crate::corpus::{map_label, resolve_raw_label, Dimension, UtteranceRecord};
use crate::dsp::{read_feature_cache, read_wav, Frontend, FrontendConfig};
use crate::model::{fine_tune, fit, init_params, predict, HyperParams, ModelParams, Sample};
use crate::numeric::Tensor2;

/// A corpus with labels mapped, features loaded, and folds built. Corpora
/// without records get no folds and are skipped by the multi protocol.
#[derive(Debug)]
pub struct PreparedCorpus {
    pub id: String,
    pub records: Vec<UtteranceRecord>,
    pub labels: Vec<usize>,
    pub features: Vec<Arc<Tensor2>>,
    pub folds: Vec<FoldSpec>,
}

impl PreparedCorpus {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices whose speaker is in `speakers`.
    pub fn indices_for(&self, speakers: &[String]) -> Vec<usize> {
        let set: HashSet<&str> = speakers.iter().map(|s| s.as_str()).collect();
        (0..self.records.len())
            .filter(|&i| set.contains(self.records[i].speaker_id.as_str()))
            .collect()
    }

    pub fn samples_for(&self, speakers: &[String]) -> Vec<Sample> {
        self.indices_for(speakers)
            .into_iter()
            .map(|i| self.sample(i))
            .collect()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            features: self.features[i].clone(),
            label: self.labels[i],
        }
    }

    pub fn all_samples(&self) -> Vec<Sample> {
        (0..self.records.len()).map(|i| self.sample(i)).collect()
    }
}

/// Loads a manifest, maps its labels for `dimension`, and attaches features:
/// read from `<feature_dir>/<id>.acnf` when a feature dir is given, computed
/// from the audio otherwise.
pub fn prepare_corpus(
    spec: &CorpusSpec,
    dimension: Dimension,
    frontend: &Frontend,
    feature_dir: Option<&Path>,
) -> Result<PreparedCorpus, ExperimentError> {
    let records = crate::corpus::load_manifest(&spec.manifest)?;
    let mapping = spec.mapping.resolve()?;

    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        let raw = resolve_raw_label(r, dimension)?;
        labels.push(map_label(raw, &mapping)?);
    }

    let cfg = frontend.config();
    let features: Vec<Arc<Tensor2>> = records
        .par_iter()
        .map(|r| -> Result<Arc<Tensor2>, ExperimentError> {
            let missing = |detail: String| ExperimentError::MissingFeatures {
                id: r.id.clone(),
                detail,
            };
            let matrix = match feature_dir {
                Some(dir) => {
                    let path = dir.join(format!("{}.acnf", r.id));
                    read_feature_cache(&path)
                        .map_err(|e| missing(format!("{}: {e}", path.display())))?
                }
                None => {
                    let clip = read_wav(&r.audio_path)
                        .map_err(|e| missing(format!("{}: {e}", r.audio_path.display())))?;
                    frontend.logmel(&clip)?
                }
            };
            if matrix.values.rows() != cfg.n_mels || matrix.values.cols() != cfg.total_frames() {
                return Err(missing(format!(
                    "feature shape {}x{} does not match the configured {}x{}",
                    matrix.values.rows(),
                    matrix.values.cols(),
                    cfg.n_mels,
                    cfg.total_frames()
                )));
            }
            Ok(Arc::new(matrix.values))
        })
        .collect::<Result<_, _>>()?;

    let folds = if records.is_empty() {
        Vec::new()
    } else {
        make_folds(spec.fold_scheme, &records)?
    };

    Ok(PreparedCorpus {
        id: spec.id.clone(),
        records,
        labels,
        features,
        folds,
    })
}

/// One (corpus, fold, repetition) evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub corpus: String,
    pub fold: usize,
    pub repetition: usize,
    /// Rows are true classes, columns predicted classes.
    pub confusion: [[usize; 2]; 2],
    pub uar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMean {
    pub corpus: String,
    pub repetition: usize,
    pub uar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMean {
    pub corpus: String,
    pub uar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub dimension: Dimension,
    pub plan: ExperimentPlan,
    pub hyperparams: HyperParams,
    pub frontend: FrontendConfig,
    pub cells: Vec<CellResult>,
    /// Mean UAR over folds, per corpus and repetition.
    pub repetition_means: Vec<RepetitionMean>,
    /// Mean of the repetition means, per corpus.
    pub grand_means: Vec<CorpusMean>,
}

impl EvalReport {
    fn assemble(
        plan: &ExperimentPlan,
        hp: &HyperParams,
        frontend: &FrontendConfig,
        cells: Vec<CellResult>,
    ) -> Self {
        let mut by_corpus_rep: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for c in &cells {
            by_corpus_rep
                .entry((c.corpus.clone(), c.repetition))
                .or_default()
                .push(c.uar);
        }
        let repetition_means: Vec<RepetitionMean> = by_corpus_rep
            .into_iter()
            .map(|((corpus, repetition), uars)| RepetitionMean {
                corpus,
                repetition,
                uar: uars.iter().sum::<f64>() / uars.len() as f64,
            })
            .collect();

        let mut by_corpus: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for m in &repetition_means {
            by_corpus.entry(m.corpus.clone()).or_default().push(m.uar);
        }
        let grand_means = by_corpus
            .into_iter()
            .map(|(corpus, uars)| CorpusMean {
                corpus,
                uar: uars.iter().sum::<f64>() / uars.len() as f64,
            })
            .collect();

        EvalReport {
            protocol: plan.protocol,
            dimension: plan.dimension,
            plan: plan.clone(),
            hyperparams: hp.clone(),
            frontend: frontend.clone(),
            cells,
            repetition_means,
            grand_means,
        }
    }

    pub fn grand_mean(&self, corpus: &str) -> Option<f64> {
        self.grand_means
            .iter()
            .find(|m| m.corpus == corpus)
            .map(|m| m.uar)
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat rows: protocol,corpus,dimension,fold,repetition,uar.
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["protocol", "corpus", "dimension", "fold", "repetition", "uar"])
            .map_err(csv_io)?;
        for c in &self.cells {
            w.write_record([
                self.protocol.to_string(),
                c.corpus.clone(),
                self.dimension.to_string(),
                c.fold.to_string(),
                c.repetition.to_string(),
                format!("{:.6}", c.uar),
            ])
            .map_err(csv_io)?;
        }
        let bytes = w.into_inner().map_err(|e| {
            ExperimentError::Io(std::io::Error::other(e.to_string()))
        })?;
        String::from_utf8(bytes).map_err(|e| ExperimentError::Io(std::io::Error::other(e)))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        Ok(())
    }

    /// Grand-mean UAR table: one row for the protocol, one column per
    /// corpus and dimension.
    pub fn summary_table(&self) -> String {
        let mut header = format!("{:<10}", "protocol");
        let mut row = format!("{:<10}", self.protocol.to_string());
        for m in &self.grand_means {
            let col = format!("{}/{}", m.corpus, self.dimension);
            header.push_str(&format!(" {col:>20}"));
            row.push_str(&format!(" {:>20.4}", m.uar));
        }
        format!("{header}\n{row}\n")
    }
}

fn csv_io(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e.to_string()))
}

/// Test-set confusion matrix of a trained model. Rows are true classes.
fn evaluate(
    params: &ModelParams,
    hp: &HyperParams,
    test: &[Sample],
) -> Result<[[usize; 2]; 2], ExperimentError> {
    let preds: Vec<(usize, usize)> = test
        .par_iter()
        .map(|s| predict(&s.features, params, hp).map(|p| (s.label, p.class)))
        .collect::<Result<_, _>>()?;
    let mut confusion = [[0usize; 2]; 2];
    for (label, pred) in preds {
        confusion[label][pred] += 1;
    }
    Ok(confusion)
}

struct Context<'a> {
    plan: &'a ExperimentPlan,
    hp: &'a HyperParams,
    input_t: usize,
}

impl Context<'_> {
    fn cell(&self, corpus: &str, fold: usize, repetition: usize, confusion: [[usize; 2]; 2])
        -> Result<CellResult, ExperimentError> {
        Ok(CellResult {
            corpus: corpus.to_string(),
            fold,
            repetition,
            confusion,
            uar: uar(&confusion)?,
        })
    }

    fn rng(&self, repetition: usize, fold: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.plan.master_seed, repetition as u64, fold))
    }

    /// Seeds, initializes and fits one model.
    fn train(
        &self,
        train: &[Sample],
        dev: &[Sample],
        rng: &mut ChaCha8Rng,
    ) -> Result<ModelParams, ExperimentError> {
        let init = init_params(self.hp, self.input_t, rng)?;
        Ok(fit(train, dev, init, self.hp, rng)?.params)
    }
}

fn require_nonempty(pc: &PreparedCorpus, role: &str) -> Result<(), ExperimentError> {
    if pc.is_empty() {
        return Err(ExperimentError::PlanInvalid {
            detail: format!("{role} corpus {:?} has no records", pc.id),
        });
    }
    Ok(())
}

/// A model trained while executing a plan, for optional checkpointing.
#[derive(Debug)]
pub struct TrainedModel {
    /// Stable name encoding corpus/role, fold and repetition.
    pub name: String,
    pub params: ModelParams,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: EvalReport,
    /// Empty unless models were requested.
    pub models: Vec<TrainedModel>,
}

/// Runs every repetition and fold of the plan's protocol and returns the
/// report. Identical plans, hyperparameters and frontend settings produce
/// identical reports.
pub fn run_plan(
    plan: &ExperimentPlan,
    hp: &HyperParams,
    frontend_cfg: &FrontendConfig,
) -> Result<EvalReport, ExperimentError> {
    run_plan_full(plan, hp, frontend_cfg, false).map(|o| o.report)
}

/// [`run_plan`], optionally keeping every trained model.
pub fn run_plan_full(
    plan: &ExperimentPlan,
    hp: &HyperParams,
    frontend_cfg: &FrontendConfig,
    keep_models: bool,
) -> Result<RunOutput, ExperimentError> {
    plan.validate()?;
    // A plan-embedded hyperparameter section wins over the passed defaults.
    let hp = plan.hyperparams.as_ref().unwrap_or(hp);
    hp.validate()?;
    let frontend = Frontend::new(frontend_cfg.clone())?;

    let prepared: Vec<PreparedCorpus> = plan
        .corpora
        .iter()
        .map(|c| prepare_corpus(c, plan.dimension, &frontend, plan.feature_dir.as_deref()))
        .collect::<Result<_, _>>()?;
    let by_id: HashMap<&str, &PreparedCorpus> =
        prepared.iter().map(|p| (p.id.as_str(), p)).collect();
    let sources = plan.resolved_sources()?;

    let ctx = Context {
        plan,
        hp,
        input_t: frontend_cfg.total_frames(),
    };
    let mut cells = Vec::new();
    let mut models: Vec<TrainedModel> = Vec::new();
    let keep = |models: &mut Vec<TrainedModel>, name: String, params: &ModelParams| {
        if keep_models {
            models.push(TrainedModel {
                name,
                params: params.clone(),
            });
        }
    };

    match plan.protocol {
        Protocol::Mono => {
            let target = by_id[plan.target()?];
            require_nonempty(target, "target")?;
            for rep in 0..plan.repetitions {
                for fold in &target.folds {
                    fold.validate_disjoint()?;
                    let mut rng = ctx.rng(rep, fold.fold_id as u64);
                    let train = target.samples_for(&fold.train_speakers);
                    let dev = target.samples_for(&fold.dev_speakers);
                    let test = target.samples_for(&fold.test_speakers);
                    let params = ctx.train(&train, &dev, &mut rng)?;
                    keep(
                        &mut models,
                        format!("{}_f{}_r{}", target.id, fold.fold_id, rep),
                        &params,
                    );
                    let confusion = evaluate(&params, hp, &test)?;
                    cells.push(ctx.cell(&target.id, fold.fold_id, rep, confusion)?);
                }
            }
        }
        Protocol::Multi => {
            let active: Vec<&PreparedCorpus> = sources
                .iter()
                .map(|id| by_id[id.as_str()])
                .filter(|pc| {
                    if pc.is_empty() {
                        log::warn!("corpus {:?} is empty and is skipped", pc.id);
                    }
                    !pc.is_empty()
                })
                .collect();
            if active.is_empty() {
                return Err(ExperimentError::PlanInvalid {
                    detail: "every source corpus is empty".into(),
                });
            }
            let n_folds = active[0].folds.len();
            for rep in 0..plan.repetitions {
                for f in 0..n_folds {
                    let mut rng = ctx.rng(rep, f as u64);
                    let mut train = Vec::new();
                    let mut dev = Vec::new();
                    for pc in &active {
                        let fold = &pc.folds[f];
                        fold.validate_disjoint()?;
                        train.extend(pc.samples_for(&fold.train_speakers));
                        dev.extend(pc.samples_for(&fold.dev_speakers));
                    }
                    let params = ctx.train(&train, &dev, &mut rng)?;
                    keep(&mut models, format!("multi_f{f}_r{rep}"), &params);
                    for pc in &active {
                        let test = pc.samples_for(&pc.folds[f].test_speakers);
                        let confusion = evaluate(&params, hp, &test)?;
                        cells.push(ctx.cell(&pc.id, f, rep, confusion)?);
                    }
                }
            }
        }
        Protocol::Cross | Protocol::CrossFt => {
            let target = by_id[plan.target()?];
            require_nonempty(target, "target")?;
            let mut train_all = Vec::new();
            for id in &sources {
                train_all.extend(by_id[id.as_str()].all_samples());
            }
            if train_all.is_empty() {
                return Err(ExperimentError::PlanInvalid {
                    detail: "source corpora have no records".into(),
                });
            }
            for rep in 0..plan.repetitions {
                // Fixed number of epochs on all source data, no dev selection.
                let mut rng = ctx.rng(rep, NO_FOLD);
                let base = ctx.train(&train_all, &[], &mut rng)?;
                keep(&mut models, format!("base_r{rep}"), &base);
                match plan.protocol {
                    Protocol::Cross => {
                        let confusion = evaluate(&base, hp, &target.all_samples())?;
                        cells.push(ctx.cell(&target.id, 0, rep, confusion)?);
                    }
                    Protocol::CrossFt => {
                        for fold in &target.folds {
                            fold.validate_disjoint()?;
                            let mut frng = ctx.rng(rep, fold.fold_id as u64);
                            let pool = target.indices_for(&fold.train_speakers);
                            let chosen =
                                select_ft_samples(&pool, plan.ft_samples_per_fold, &mut frng)?;
                            let test_set: HashSet<&str> = fold
                                .test_speakers
                                .iter()
                                .map(|s| s.as_str())
                                .collect();
                            for &i in &chosen {
                                let spk = target.records[i].speaker_id.as_str();
                                if test_set.contains(spk) {
                                    return Err(ExperimentError::PlanInvalid {
                                        detail: format!(
                                            "fine-tuning sample {} leaks test speaker {spk:?}",
                                            target.records[i].id
                                        ),
                                    });
                                }
                            }
                            let ft_set: Vec<Sample> =
                                chosen.iter().map(|&i| target.sample(i)).collect();
                            let (tuned, _) = fine_tune(base.clone(), &ft_set, hp, &mut frng)?;
                            keep(
                                &mut models,
                                format!("ft_f{}_r{}", fold.fold_id, rep),
                                &tuned,
                            );
                            let test = target.samples_for(&fold.test_speakers);
                            let confusion = evaluate(&tuned, hp, &test)?;
                            cells.push(ctx.cell(&target.id, fold.fold_id, rep, confusion)?);
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    Ok(RunOutput {
        report: EvalReport::assemble(plan, hp, frontend_cfg, cells),
        models,
    })
}
