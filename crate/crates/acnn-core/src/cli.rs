//! Command-line interface: featurization, synthetic-corpus generation,
//! experiment plans, attention analysis and checkpoint inspection.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, unreadable or
//! invalid config/plan/spec files), 1 for runtime failures. Commands that
//! write into an output directory echo their fully resolved configuration to
//! `resolved_config.json` there before doing any work.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    extract_attention, localization_score, summarize, write_records_csv, write_summary_csv,
    AttentionInput, SegmentMap,
};
use crate::corpus::{generate_synthetic, load_manifest, read_cues, SyntheticSpec};
use crate::dsp::{read_feature_cache, read_wav, Frontend, FrontendConfig};
use crate::experiments::{run_plan_full, ExperimentError, ExperimentPlan};
use crate::model::{load_checkpoint, read_meta, save_checkpoint, write_meta, HyperParams};

#[derive(Parser)]
#[command(
    name = "acnn",
    version,
    about = "Attentive convolutional network for binary arousal/valence \
             speech emotion classification",
    after_help = "Set ACNN_LOG (e.g. ACNN_LOG=info) to control log verbosity."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Stride-30 pooling: 24 attention steps on 7.5 s input.
    PaperDefault,
    /// Stride-92 pooling: exactly 8 attention steps on 7.5 s input.
    PaperFigures,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::PaperDefault => "paper-default",
            Preset::PaperFigures => "paper-figures",
        }
    }
}

#[derive(Args)]
struct GlobalOpts {
    /// JSON config file: {"frontend": {...}, "hyperparams": {...}}. A present
    /// section replaces the preset's values; flags override single keys last.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed override: generation seed for synth, master seed for run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: logical core count).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Baseline settings applied before the config file and flags.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    #[command(flatten)]
    overrides: OverrideOpts,
}

#[derive(Args)]
struct OverrideOpts {
    /// Number of convolution kernels.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    n_kernels: Option<usize>,
    /// Convolution kernel width in frames.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    kernel_width: Option<usize>,
    /// Max-pool window length.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    pool_size: Option<usize>,
    /// Max-pool stride.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    pool_stride: Option<usize>,
    /// Mini-batch size.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    batch_size: Option<usize>,
    /// Dropout keep probability (1.0 disables dropout).
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    dropout_keep: Option<f64>,
    /// Training epochs.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    epochs: Option<usize>,
    /// Fine-tuning epochs for the cross_ft protocol.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    ft_epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long, global = true, help_heading = "Hyperparameter overrides")]
    learning_rate: Option<f64>,

    /// Analysis frame length in milliseconds.
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    frame_ms: Option<f64>,
    /// Frame shift in milliseconds.
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    shift_ms: Option<f64>,
    /// Number of mel bands.
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    n_mels: Option<usize>,
    /// Fixed input length in seconds (longer audio is truncated).
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    max_seconds: Option<f64>,
    /// Expected WAV sample rate in Hz.
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    sample_rate: Option<u32>,
    /// FFT size in samples.
    #[arg(long, global = true, help_heading = "Frontend overrides")]
    fft_size: Option<usize>,
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl OverrideOpts {
    fn apply_hp(&self, hp: &mut HyperParams) {
        set!(hp.n_kernels, self.n_kernels);
        set!(hp.kernel_width, self.kernel_width);
        set!(hp.pool_size, self.pool_size);
        set!(hp.pool_stride, self.pool_stride);
        set!(hp.batch_size, self.batch_size);
        set!(hp.dropout_keep, self.dropout_keep);
        set!(hp.epochs, self.epochs);
        set!(hp.ft_epochs, self.ft_epochs);
        set!(hp.adam.learning_rate, self.learning_rate);
    }

    fn apply_frontend(&self, frontend: &mut FrontendConfig) {
        set!(frontend.frame_ms, self.frame_ms);
        set!(frontend.shift_ms, self.shift_ms);
        set!(frontend.n_mels, self.n_mels);
        set!(frontend.max_seconds, self.max_seconds);
        set!(frontend.sample_rate_expected, self.sample_rate);
        set!(frontend.fft_size, self.fft_size);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute logMel feature caches for every utterance in a manifest.
    Featurize {
        /// Corpus manifest CSV.
        manifest: PathBuf,
    },
    /// Generate a synthetic corpus (WAVs, manifest, cue metadata) from a spec.
    Synth {
        /// Synthetic-corpus spec JSON.
        spec: PathBuf,
    },
    /// Execute an experiment plan and write UAR reports.
    Run {
        /// Experiment plan JSON.
        plan: PathBuf,
        /// Also save every trained model under <out>/checkpoints/.
        #[arg(long)]
        save_checkpoints: bool,
    },
    /// Extract attention weights of a trained model over a dataset.
    AnalyzeAttention {
        /// Model checkpoint (.acnp).
        checkpoint: PathBuf,
        /// Corpus manifest CSV.
        manifest: PathBuf,
        /// Read features from <DIR>/<id>.acnf instead of the audio files.
        #[arg(long, value_name = "DIR")]
        features: Option<PathBuf>,
        /// Cue metadata CSV; also reports a cue-localization score.
        #[arg(long, value_name = "FILE")]
        cues: Option<PathBuf>,
        /// Dominance threshold on (max - second max).
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Print the hyperparameters and tensor shapes of a checkpoint.
    InspectCheckpoint {
        /// Model checkpoint (.acnp).
        checkpoint: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    /// Bad invocation or invalid input configuration: exit 2.
    Usage(String),
    /// Runtime failure: exit 1.
    Failure(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// Settings after merging preset, config file and flag overrides.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub frontend: FrontendConfig,
    pub hyperparams: HyperParams,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub preset: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    frontend: Option<FrontendConfig>,
    hyperparams: Option<HyperParams>,
}

fn resolve_config(opts: &GlobalOpts) -> Result<RunConfig, CliError> {
    let mut hp = match opts.preset {
        Some(Preset::PaperFigures) => HyperParams::figures(),
        _ => HyperParams::default(),
    };
    let mut frontend = FrontendConfig::default();

    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: FileConfig = serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        if let Some(f) = file.frontend {
            frontend = f;
        }
        if let Some(h) = file.hyperparams {
            hp = h;
        }
    }

    opts.overrides.apply_hp(&mut hp);
    if let Some(seed) = opts.seed {
        hp.seed = seed;
    }
    opts.overrides.apply_frontend(&mut frontend);

    hp.validate().map_err(usage)?;
    Ok(RunConfig {
        frontend,
        hyperparams: hp,
        seed: opts.seed,
        jobs: opts.jobs,
        preset: opts.preset.map(|p| p.name().to_string()),
    })
}

/// Written to `<out>/resolved_config.json` before a command does any work.
#[derive(Serialize)]
struct ResolvedEcho<'a> {
    command: &'static str,
    inputs: BTreeMap<&'static str, String>,
    out: String,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<&'a ExperimentPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synth_spec: Option<&'a SyntheticSpec>,
}

fn echo_config(out: &Path, echo: &ResolvedEcho) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| failure(format!("cannot create {}: {e}", out.display())))?;
    let mut text = serde_json::to_string_pretty(echo).map_err(failure)?;
    text.push('\n');
    std::fs::write(out.join("resolved_config.json"), text).map_err(failure)?;
    Ok(())
}

fn require_out(opts: &GlobalOpts) -> Result<PathBuf, CliError> {
    opts.out
        .clone()
        .ok_or_else(|| CliError::Usage("--out <DIR> is required for this command".into()))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("ACNN_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

fn init_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Parses arguments, runs the selected command and returns the process exit
/// code.
pub fn main() -> ExitCode {
    // Die quietly on a closed pipe (e.g. `acnn ... | head`) instead of
    // panicking mid-print; Rust ignores SIGPIPE by default.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    init_logging();
    init_jobs(cli.opts.jobs);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.opts)?;
    match &cli.command {
        Command::Featurize { manifest } => cmd_featurize(manifest, &cli.opts, &cfg),
        Command::Synth { spec } => cmd_synth(spec, &cli.opts, &cfg),
        Command::Run {
            plan,
            save_checkpoints,
        } => cmd_run(plan, *save_checkpoints, &cli.opts, &cfg),
        Command::AnalyzeAttention {
            checkpoint,
            manifest,
            features,
            cues,
            threshold,
        } => cmd_analyze_attention(
            checkpoint,
            manifest,
            features.as_deref(),
            cues.as_deref(),
            *threshold,
            &cli.opts,
            &cfg,
        ),
        Command::InspectCheckpoint { checkpoint } => cmd_inspect_checkpoint(checkpoint),
    }
}

/// An existing cache is reused when it is at least as new as its WAV and its
/// shape matches the current frontend settings.
fn cache_up_to_date(cache: &Path, wav: &Path, cfg: &FrontendConfig) -> bool {
    let newer = match (std::fs::metadata(cache), std::fs::metadata(wav)) {
        (Ok(c), Ok(w)) => match (c.modified(), w.modified()) {
            (Ok(c), Ok(w)) => c >= w,
            _ => false,
        },
        _ => false,
    };
    if !newer {
        return false;
    }
    match read_feature_cache(cache) {
        Ok(m) => m.values.rows() == cfg.n_mels && m.values.cols() == cfg.total_frames(),
        Err(_) => false,
    }
}

fn cmd_featurize(manifest: &Path, opts: &GlobalOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let out = require_out(opts)?;
    let frontend = Frontend::new(cfg.frontend.clone()).map_err(usage)?;
    echo_config(
        &out,
        &ResolvedEcho {
            command: "featurize",
            inputs: BTreeMap::from([("manifest", manifest.display().to_string())]),
            out: out.display().to_string(),
            config: cfg,
            plan: None,
            synth_spec: None,
        },
    )?;

    let records = load_manifest(manifest).map_err(failure)?;
    let results: Vec<(String, PathBuf, Result<bool, String>)> = records
        .par_iter()
        .map(|r| {
            let cache = out.join(format!("{}.acnf", r.id));
            if cache_up_to_date(&cache, &r.audio_path, frontend.config()) {
                return (r.id.clone(), cache, Ok(false));
            }
            let status = read_wav(&r.audio_path)
                .and_then(|clip| frontend.logmel(&clip))
                .and_then(|features| crate::dsp::write_feature_cache(&cache, &features))
                .map(|()| true)
                .map_err(|e| e.to_string());
            (r.id.clone(), cache, status)
        })
        .collect();

    let mut index = csv::Writer::from_path(out.join("features_index.csv"))
        .map_err(|e| failure(format!("cannot write index: {e}")))?;
    index.write_record(["id", "path"]).map_err(failure)?;
    let mut written = 0usize;
    let mut skipped = 0usize;
    let mut errors = 0usize;
    for (id, cache, status) in &results {
        match status {
            Ok(fresh) => {
                index
                    .write_record([id.as_str(), &cache.display().to_string()])
                    .map_err(failure)?;
                if *fresh {
                    written += 1;
                } else {
                    skipped += 1;
                }
            }
            Err(e) => {
                eprintln!("error: utterance {id}: {e}");
                errors += 1;
            }
        }
    }
    index.flush().map_err(failure)?;

    println!(
        "cached {written} features ({skipped} up to date) -> {}",
        out.display()
    );
    if errors > 0 {
        return Err(failure(format!(
            "{errors} of {} utterances failed",
            results.len()
        )));
    }
    Ok(())
}

fn cmd_synth(spec_path: &Path, opts: &GlobalOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let out = require_out(opts)?;
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| usage(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid spec {}: {e}", spec_path.display())))?;
    spec.validate().map_err(usage)?;

    let seed = cfg.seed.unwrap_or(0);
    echo_config(
        &out,
        &ResolvedEcho {
            command: "synth",
            inputs: BTreeMap::from([
                ("spec", spec_path.display().to_string()),
                ("seed", seed.to_string()),
            ]),
            out: out.display().to_string(),
            config: cfg,
            plan: None,
            synth_spec: Some(&spec),
        },
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = generate_synthetic(&spec, &out, &mut rng).map_err(failure)?;
    println!(
        "wrote {} utterances, manifest.csv and cues.csv -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn mark_failed(out: &Path, msg: &str) {
    let _ = std::fs::write(out.join("FAILED"), format!("{msg}\n"));
}

fn cmd_run(
    plan_path: &Path,
    save_checkpoints: bool,
    opts: &GlobalOpts,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let out = require_out(opts)?;
    let mut plan = ExperimentPlan::load(plan_path)
        .map_err(|e| usage(format!("plan {}: {e}", plan_path.display())))?;
    if let Some(seed) = cfg.seed {
        plan.master_seed = seed;
    }
    // Flags still override a plan-embedded hyperparameter section.
    if let Some(plan_hp) = plan.hyperparams.as_mut() {
        opts.overrides.apply_hp(plan_hp);
        plan_hp.validate().map_err(usage)?;
    }
    let effective_hp = plan
        .hyperparams
        .clone()
        .unwrap_or_else(|| cfg.hyperparams.clone());

    let mut effective = cfg.clone();
    effective.hyperparams = effective_hp.clone();
    echo_config(
        &out,
        &ResolvedEcho {
            command: "run",
            inputs: BTreeMap::from([("plan", plan_path.display().to_string())]),
            out: out.display().to_string(),
            config: &effective,
            plan: Some(&plan),
            synth_spec: None,
        },
    )?;

    let run = |out: &Path| -> Result<String, ExperimentError> {
        let output = run_plan_full(&plan, &cfg.hyperparams, &cfg.frontend, save_checkpoints)?;
        if save_checkpoints {
            let dir = out.join("checkpoints");
            std::fs::create_dir_all(&dir)?;
            for model in &output.models {
                let path = dir.join(format!("{}.acnp", model.name));
                save_checkpoint(&path, &model.params, &effective_hp)?;
                let meta = BTreeMap::from([
                    ("model".to_string(), model.name.clone()),
                    ("protocol".to_string(), plan.protocol.to_string()),
                    ("dimension".to_string(), plan.dimension.to_string()),
                    ("master_seed".to_string(), plan.master_seed.to_string()),
                ]);
                write_meta(&dir.join(format!("{}.acnp.meta", model.name)), &meta)?;
            }
        }
        output.report.write(out)?;
        Ok(output.report.summary_table())
    };
    match run(&out) {
        Ok(table) => {
            print!("{table}");
            println!("report.json and report.csv -> {}", out.display());
            Ok(())
        }
        Err(e) => {
            mark_failed(&out, &e.to_string());
            Err(failure(e))
        }
    }
}

fn cmd_analyze_attention(
    checkpoint: &Path,
    manifest: &Path,
    features_dir: Option<&Path>,
    cues: Option<&Path>,
    threshold: f64,
    opts: &GlobalOpts,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let out = require_out(opts)?;
    let (params, hp) = load_checkpoint(checkpoint)
        .map_err(|e| failure(format!("checkpoint {}: {e}", checkpoint.display())))?;

    // The checkpoint's hyperparameters govern the model; echo those.
    let mut effective = cfg.clone();
    effective.hyperparams = hp.clone();
    let mut inputs = BTreeMap::from([
        ("checkpoint", checkpoint.display().to_string()),
        ("manifest", manifest.display().to_string()),
    ]);
    if let Some(dir) = features_dir {
        inputs.insert("features", dir.display().to_string());
    }
    if let Some(path) = cues {
        inputs.insert("cues", path.display().to_string());
    }
    echo_config(
        &out,
        &ResolvedEcho {
            command: "analyze-attention",
            inputs,
            out: out.display().to_string(),
            config: &effective,
            plan: None,
            synth_spec: None,
        },
    )?;

    let frontend = Frontend::new(cfg.frontend.clone()).map_err(usage)?;
    let records = load_manifest(manifest).map_err(failure)?;
    let attention_inputs: Vec<AttentionInput> = records
        .par_iter()
        .map(|r| -> Result<AttentionInput, String> {
            let features = match features_dir {
                Some(dir) => read_feature_cache(&dir.join(format!("{}.acnf", r.id)))
                    .map_err(|e| format!("utterance {}: {e}", r.id))?,
                None => read_wav(&r.audio_path)
                    .and_then(|clip| frontend.logmel(&clip))
                    .map_err(|e| format!("utterance {}: {e}", r.id))?,
            };
            Ok(AttentionInput {
                id: r.id.clone(),
                features: Arc::new(features.values),
            })
        })
        .collect::<Result<_, _>>()
        .map_err(failure)?;

    let records = extract_attention(&params, &hp, &attention_inputs).map_err(failure)?;
    let summary = summarize(&records, threshold).map_err(failure)?;
    write_records_csv(&out.join("attention_records.csv"), &records).map_err(failure)?;
    write_summary_csv(&out.join("attention_summary.csv"), &summary).map_err(failure)?;

    println!("samples: {}", summary.n_samples);
    println!(
        "dominance rate at threshold {:.3}: {:.3}",
        summary.threshold, summary.dominance_rate
    );
    let mut positions: Vec<(usize, f64)> = summary
        .histogram
        .iter()
        .copied()
        .enumerate()
        .collect();
    positions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top: Vec<String> = positions
        .iter()
        .take(3)
        .map(|(i, f)| format!("{i}: {f:.3}"))
        .collect();
    println!("top argmax positions: {}", top.join(", "));

    if let Some(path) = cues {
        let cue_records = read_cues(path).map_err(failure)?;
        let map = SegmentMap::new(records[0].alpha.len(), cfg.frontend.max_seconds)
            .map_err(failure)?;
        let score = localization_score(&records, &cue_records, &map).map_err(failure)?;
        println!("cue localization score: {score:.3}");
    }
    println!(
        "attention_records.csv and attention_summary.csv -> {}",
        out.display()
    );
    Ok(())
}

fn cmd_inspect_checkpoint(checkpoint: &Path) -> Result<(), CliError> {
    let (params, hp) = load_checkpoint(checkpoint)
        .map_err(|e| failure(format!("checkpoint {}: {e}", checkpoint.display())))?;
    println!("checkpoint: {}", checkpoint.display());
    println!("hyperparameters:");
    println!("  n_kernels = {}", hp.n_kernels);
    println!("  kernel_width = {}", hp.kernel_width);
    println!("  pool_size = {}", hp.pool_size);
    println!("  pool_stride = {}", hp.pool_stride);
    println!("  batch_size = {}", hp.batch_size);
    println!("  dropout_keep = {}", hp.dropout_keep);
    println!("  epochs = {}", hp.epochs);
    println!("  ft_epochs = {}", hp.ft_epochs);
    println!("  seed = {}", hp.seed);
    println!("  learning_rate = {}", hp.adam.learning_rate);
    println!("  beta1 = {}", hp.adam.beta1);
    println!("  beta2 = {}", hp.adam.beta2);
    println!("  epsilon = {}", hp.adam.epsilon);
    println!("tensors:");
    let k = params.n_kernels();
    if let Some(first) = params.kernels.first() {
        println!("  kernels: {k} x {}x{}", first.rows(), first.cols());
    }
    println!("  conv_biases: {}", params.conv_biases.len());
    println!("  attention_w: {}", params.attention_w.len());
    println!(
        "  dense_w: {}x{}",
        params.dense_w.rows(),
        params.dense_w.cols()
    );
    println!("  dense_b: 2");
    println!("total parameters: {}", params.dim());

    let meta_path = PathBuf::from(format!("{}.meta", checkpoint.display()));
    if meta_path.exists() {
        let meta = read_meta(&meta_path).map_err(failure)?;
        println!("meta:");
        for (key, value) in meta {
            println!("  {key} = {value}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn preset_file_and_flags_stack_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(
            &cfg_path,
            r#"{"hyperparams": {"epochs": 7}, "frontend": {"n_mels": 20}}"#,
        )
        .unwrap();

        let cli = parse(&[
            "acnn",
            "run",
            "plan.json",
            "--preset",
            "paper-figures",
            "--config",
            cfg_path.to_str().unwrap(),
            "--epochs",
            "3",
            "--seed",
            "99",
        ]);
        let cfg = resolve_config(&cli.opts).unwrap();
        // The file section replaced the figures preset wholesale...
        assert_eq!(cfg.hyperparams.pool_stride, 30);
        // ...then the flag overrode the file's epochs.
        assert_eq!(cfg.hyperparams.epochs, 3);
        assert_eq!(cfg.hyperparams.seed, 99);
        assert_eq!(cfg.frontend.n_mels, 20);
        assert_eq!(cfg.seed, Some(99));
        assert_eq!(cfg.preset.as_deref(), Some("paper-figures"));
    }

    #[test]
    fn figures_preset_changes_pool_stride() {
        let cli = parse(&["acnn", "run", "plan.json", "--preset", "paper-figures"]);
        let cfg = resolve_config(&cli.opts).unwrap();
        assert_eq!(cfg.hyperparams.pool_stride, 92);

        let cli = parse(&["acnn", "run", "plan.json"]);
        let cfg = resolve_config(&cli.opts).unwrap();
        assert_eq!(cfg.hyperparams.pool_stride, 30);
        assert_eq!(cfg.hyperparams.n_kernels, 200);
    }

    #[test]
    fn invalid_override_is_a_usage_error() {
        let cli = parse(&["acnn", "run", "plan.json", "--dropout-keep", "0"]);
        assert!(matches!(resolve_config(&cli.opts), Err(CliError::Usage(_))));
    }

    #[test]
    fn out_is_required_for_writing_commands() {
        let cli = parse(&["acnn", "featurize", "m.csv"]);
        assert!(matches!(require_out(&cli.opts), Err(CliError::Usage(_))));
        let cli = parse(&["acnn", "featurize", "m.csv", "--out", "x"]);
        assert_eq!(require_out(&cli.opts).unwrap(), PathBuf::from("x"));
    }
}
