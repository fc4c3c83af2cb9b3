//! Command-line driver for the stresslab pipeline: synthetic corpora, export
//! conversion, feature extraction, model evaluation and score comparison.
//!
//! Every flag can also be given in a JSON config file (`--config`); flags on
//! the command line win over the file, and the file wins over defaults.

pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use manifest::{digest_file, RunManifest};
use stresslab::features::{extract_dataset, read_feature_csv, write_feature_csv, ExtractionConfig, FEATURE_SET_VERSION};
use stresslab::ingest::{self, convert_export, write_canonical, Device, ExportKind, SyntheticConfig};
use stresslab::learners::{Family, LearnerOptions, SvmKernel};
use stresslab::protocol::{
    check_unique, read_scores_csv, run_user_dependent, run_user_independent, write_scores_csv, BAScore, Evaluation,
    EvaluationConfig, Protocol, DEFAULT_TEST_FRAC,
};
use stresslab::stats::{histogram_csv, qq_csv, qq_points, run_hypothesis1, run_hypothesis2, HypothesisConfig, HypothesisReport};
use stresslab::{dsp, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ANALYSIS: i32 = 4;

pub const DEFAULT_OUT_DIR: &str = "stresslab-out";
pub const DEFAULT_ALPHA1: f64 = 0.001;
pub const DEFAULT_ALPHA2: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] stresslab::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Analysis => EXIT_ANALYSIS,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "stresslab", version, about = "EDA stress detection: synth, extract, evaluate, compare")]
pub struct Cli {
    /// Master seed for generation, splits and model fitting [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to one per core)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory [default: stresslab-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    pub force: bool,
    /// JSON file with default values for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus in canonical format
    Synth(SynthArgs),
    /// Convert CSV exports of public datasets into canonical format
    Convert(ConvertArgs),
    /// Filter, decompose, window and featurize a canonical corpus
    Extract(ExtractArgs),
    /// Grid-search and score every model family per subject
    Evaluate(EvaluateArgs),
    /// Rank-sum comparison of score tables with normality diagnostics
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Seven subjects at 5 Hz with a strong stress contrast
    Default,
    /// Ten 4 Hz subjects who differ strongly from one another
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolChoice {
    Ud,
    Ui,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportChoice {
    /// `eda,label` with protocol codes (2 stress; 1, 3, 4 non-stress)
    Wesad,
    /// `eda,stress` with a continuous rating in [0,1]
    AffectiveRoad,
    /// `eda,label` with 0/1 labels
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceChoice {
    Chest,
    Wrist,
    Finger,
    Synthetic,
}

impl From<DeviceChoice> for Device {
    fn from(d: DeviceChoice) -> Device {
        match d {
            DeviceChoice::Chest => Device::Chest,
            DeviceChoice::Wrist => Device::Wrist,
            DeviceChoice::Finger => Device::Finger,
            DeviceChoice::Synthetic => Device::Synthetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Number of subjects [default: 7]
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Sampling rate in Hz [default: 5]
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub kind: Option<ExportChoice>,
    #[arg(long, value_enum)]
    pub device: Option<DeviceChoice>,
    /// Sampling rate of the exports in Hz
    #[arg(long)]
    pub fs: Option<f64>,
    /// Stress cut for continuous ratings [default: 0.4]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Export files; the subject id is the file stem up to the first '_'
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// Directory of canonical `<subject>_<device>.csv` files
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub shift_s: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Feature CSV written by `extract`
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolChoice>,
    /// `all` or a comma list such as `lr,svm`
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Dataset name written into the score table [default: dataset]
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub svm_kernel: Option<KernelChoice>,
    /// Balanced class weights in the MLP loss
    #[arg(long)]
    pub mlp_class_weight: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// 1: user-dependent against user-independent; 2: chest against wrist
    #[arg(long)]
    pub hypothesis: Option<u8>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Score tables. Hypothesis 2 takes the chest table first.
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
}

/// Every flag, all optional; used both for the config file and for merging.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub force: Option<bool>,
    pub preset: Option<Preset>,
    pub subjects: Option<usize>,
    pub fs: Option<f64>,
    /// Full generator settings; `subjects`, `fs` and `seed` still apply on top.
    pub synthetic: Option<SyntheticConfig>,
    pub kind: Option<ExportChoice>,
    pub device: Option<DeviceChoice>,
    pub threshold: Option<f64>,
    pub inputs: Option<Vec<PathBuf>>,
    pub input: Option<PathBuf>,
    pub window_s: Option<f64>,
    pub shift_s: Option<f64>,
    pub features: Option<PathBuf>,
    pub protocol: Option<ProtocolChoice>,
    pub families: Option<String>,
    pub test_frac: Option<f64>,
    pub dataset: Option<String>,
    pub svm_kernel: Option<KernelChoice>,
    pub mlp_class_weight: Option<bool>,
    pub hypothesis: Option<u8>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub scores: Option<Vec<PathBuf>>,
}

fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

impl Settings {
    fn from_cli(cli: &Cli) -> Settings {
        let mut s = Settings {
            seed: cli.seed,
            threads: cli.threads,
            out: cli.out.clone(),
            force: cli.force.then_some(true),
            ..Settings::default()
        };
        match &cli.command {
            Command::Synth(a) => {
                s.preset = a.preset;
                s.subjects = a.subjects;
                s.fs = a.fs;
            }
            Command::Convert(a) => {
                s.kind = a.kind;
                s.device = a.device;
                s.fs = a.fs;
                s.threshold = a.threshold;
                s.inputs = non_empty(a.inputs.clone());
            }
            Command::Extract(a) => {
                s.input = a.input.clone();
                s.window_s = a.window_s;
                s.shift_s = a.shift_s;
            }
            Command::Evaluate(a) => {
                s.features = a.features.clone();
                s.protocol = a.protocol;
                s.families = a.families.clone();
                s.test_frac = a.test_frac;
                s.dataset = a.dataset.clone();
                s.svm_kernel = a.svm_kernel;
                s.mlp_class_weight = a.mlp_class_weight.then_some(true);
            }
            Command::Compare(a) => {
                s.hypothesis = a.hypothesis;
                s.alpha1 = a.alpha1;
                s.alpha2 = a.alpha2;
                s.scores = non_empty(a.scores.clone());
            }
        }
        s
    }

    /// Fields set in `self` win; the rest come from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        Settings {
            seed: self.seed.or(fallback.seed),
            threads: self.threads.or(fallback.threads),
            out: self.out.or(fallback.out),
            force: self.force.or(fallback.force),
            preset: self.preset.or(fallback.preset),
            subjects: self.subjects.or(fallback.subjects),
            fs: self.fs.or(fallback.fs),
            synthetic: self.synthetic.or(fallback.synthetic),
            kind: self.kind.or(fallback.kind),
            device: self.device.or(fallback.device),
            threshold: self.threshold.or(fallback.threshold),
            inputs: self.inputs.or(fallback.inputs),
            input: self.input.or(fallback.input),
            window_s: self.window_s.or(fallback.window_s),
            shift_s: self.shift_s.or(fallback.shift_s),
            features: self.features.or(fallback.features),
            protocol: self.protocol.or(fallback.protocol),
            families: self.families.or(fallback.families),
            test_frac: self.test_frac.or(fallback.test_frac),
            dataset: self.dataset.or(fallback.dataset),
            svm_kernel: self.svm_kernel.or(fallback.svm_kernel),
            mlp_class_weight: self.mlp_class_weight.or(fallback.mlp_class_weight),
            hypothesis: self.hypothesis.or(fallback.hypothesis),
            alpha1: self.alpha1.or(fallback.alpha1),
            alpha2: self.alpha2.or(fallback.alpha2),
            scores: self.scores.or(fallback.scores),
        }
    }

    pub fn load(path: &Path) -> CliResult<Settings> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn force(&self) -> bool {
        self.force.unwrap_or(false)
    }
}

/// Parses `all` or a comma list of family names.
pub fn parse_families(spec: &str) -> CliResult<Vec<Family>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Family::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let f = Family::parse(part).map_err(|e| CliError::Usage(e.to_string()))?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no model family selected".into()));
    }
    Ok(out)
}

/// What a finished command produced, for console summaries and tests.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub summary: String,
}

/// Parses arguments, applies `--config` and `--threads`, runs the command.
pub fn run(cli: Cli) -> CliResult<Outcome> {
    let from_flags = Settings::from_cli(&cli);
    let settings = match &cli.config {
        Some(path) => from_flags.or(Settings::load(path)?),
        None => from_flags,
    };
    if let Some(n) = settings.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match cli.command {
        Command::Synth(_) => cmd_synth(&settings),
        Command::Convert(_) => cmd_convert(&settings),
        Command::Extract(_) => cmd_extract(&settings),
        Command::Evaluate(_) => cmd_evaluate(&settings),
        Command::Compare(_) => cmd_compare(&settings),
    }
}

fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn refuse_existing(paths: &[&Path], force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Usage(format!("{} exists; pass --force to overwrite", p.display()))),
        None => Ok(()),
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("settings serialize")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(stresslab::Error::from)? + "\n";
    fs::write(path, text)?;
    Ok(())
}

pub fn synthetic_config(settings: &Settings) -> SyntheticConfig {
    let mut cfg = match (&settings.synthetic, settings.preset) {
        (Some(c), _) => c.clone(),
        (None, Some(Preset::Heterogeneous)) => SyntheticConfig::heterogeneous(),
        (None, _) => SyntheticConfig::default(),
    };
    if let Some(n) = settings.subjects {
        cfg.n_subjects = n;
    }
    if let Some(fs) = settings.fs {
        cfg.sampling_rate_hz = fs;
    }
    cfg.rng_seed = settings.seed();
    cfg
}

pub fn cmd_synth(settings: &Settings) -> CliResult<Outcome> {
    let cfg = synthetic_config(settings);
    cfg.validate()?;
    let out = settings.out_dir();
    if out.exists() && fs::read_dir(&out)?.next().is_some() && !settings.force() {
        return Err(CliError::Usage(format!(
            "output directory {} is not empty; pass --force to write into it",
            out.display()
        )));
    }
    prepare_out_dir(&out)?;
    let manifest = RunManifest::new("synth", to_value(&cfg), vec![cfg.rng_seed], Vec::new());
    let records = ingest::generate_synthetic(&cfg)?;
    let mut written = Vec::new();
    for r in &records {
        let csv = write_canonical(r, &out)?;
        written.push(ingest::sidecar_path(&csv));
        written.push(csv);
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let manifest = manifest.finish(&out, &refs)?;
    Ok(Outcome {
        summary: format!(
            "wrote {} subjects at {} Hz to {} (manifest {})",
            records.len(),
            cfg.sampling_rate_hz,
            out.display(),
            &manifest.manifest_hash[..12]
        ),
        manifest,
    })
}

fn subject_from_stem(path: &Path) -> CliResult<String> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Usage(format!("cannot derive a subject id from {}", path.display())))?;
    Ok(stem.split('_').next().unwrap_or(&stem).to_string())
}

pub fn cmd_convert(settings: &Settings) -> CliResult<Outcome> {
    let kind = match settings.kind.ok_or_else(|| CliError::Usage("convert needs --kind".into()))? {
        ExportChoice::Wesad => ExportKind::Wesad,
        ExportChoice::Binary => ExportKind::Binary,
        ExportChoice::AffectiveRoad => ExportKind::AffectiveRoad {
            threshold: settings.threshold.unwrap_or(ingest::DEFAULT_STRESS_THRESHOLD),
        },
    };
    let device: Device = settings
        .device
        .ok_or_else(|| CliError::Usage("convert needs --device".into()))?
        .into();
    let fs_hz = settings.fs.ok_or_else(|| CliError::Usage("convert needs --fs".into()))?;
    let inputs = settings.inputs.clone().unwrap_or_default();
    if inputs.is_empty() {
        return Err(CliError::Usage("convert needs at least one export file".into()));
    }
    let out = settings.out_dir();
    prepare_out_dir(&out)?;
    let digests = inputs.iter().map(|p| digest_file(p)).collect::<std::io::Result<Vec<_>>>()?;
    let config = serde_json::json!({
        "kind": settings.kind,
        "device": device,
        "fs": fs_hz,
        "threshold": settings.threshold,
    });
    let manifest = RunManifest::new("convert", config, Vec::new(), digests);
    let mut written = Vec::new();
    for path in &inputs {
        let subject = subject_from_stem(path)?;
        let record = convert_export(path, &subject, device, fs_hz, kind)?;
        let target = out.join(format!("{}.csv", record.file_stem()));
        refuse_existing(&[&target], settings.force())?;
        let csv = write_canonical(&record, &out)?;
        log::info!("{}: {} samples", csv.display(), record.len());
        written.push(ingest::sidecar_path(&csv));
        written.push(csv);
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let manifest = manifest.finish(&out, &refs)?;
    Ok(Outcome {
        summary: format!("converted {} exports into {}", inputs.len(), out.display()),
        manifest,
    })
}

#[derive(Serialize)]
struct ExtractionLog<'a> {
    manifest_hash: &'a str,
    records: &'a [stresslab::features::RecordExtraction],
}

/// Canonical CSV files of a directory with their sidecars, sorted by name.
fn canonical_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && ingest::sidecar_path(p).exists())
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_extract(settings: &Settings) -> CliResult<Outcome> {
    let input = settings
        .input
        .clone()
        .ok_or_else(|| CliError::Usage("extract needs --input".into()))?;
    let config = ExtractionConfig {
        window_s: settings.window_s.unwrap_or(dsp::DEFAULT_WINDOW_S),
        shift_s: settings.shift_s.unwrap_or(dsp::DEFAULT_SHIFT_S),
        ..ExtractionConfig::default()
    };
    let out = settings.out_dir();
    prepare_out_dir(&out)?;
    let features_path = out.join("features.csv");
    let log_path = out.join("extraction_log.json");
    refuse_existing(&[&features_path, &log_path], settings.force())?;

    let files = canonical_files(&input)?;
    if files.is_empty() {
        return Err(stresslab::Error::Data(format!("no canonical signal files in {}", input.display())).into());
    }
    let mut digests = Vec::new();
    for f in &files {
        digests.push(digest_file(f)?);
        digests.push(digest_file(&ingest::sidecar_path(f))?);
    }
    let records = files
        .iter()
        .map(|f| ingest::load_canonical(f))
        .collect::<stresslab::Result<Vec<_>>>()?;
    let manifest = RunManifest::new("extract", to_value(&config), Vec::new(), digests);
    let (rows, logs) = extract_dataset(&records, &config)?;
    for (r, l) in records.iter().zip(&logs) {
        log::info!(
            "{} at {} Hz: low-pass filter {}; {} rows",
            r.file_stem(),
            r.sampling_rate_hz,
            if l.filtered { "applied" } else { "not applied" },
            l.rows
        );
    }
    write_feature_csv(&rows, &features_path)?;
    write_json(
        &log_path,
        &ExtractionLog {
            manifest_hash: &manifest.manifest_hash,
            records: &logs,
        },
    )?;
    let manifest = manifest.finish(&out, &[&features_path, &log_path])?;
    Ok(Outcome {
        summary: format!(
            "extracted {} windows from {} records into {}",
            rows.len(),
            records.len(),
            features_path.display()
        ),
        manifest,
    })
}

#[derive(Serialize)]
struct SkipLog<'a> {
    manifest_hash: &'a str,
    skips: &'a [stresslab::protocol::SkipEntry],
}

/// A feature file produced under another feature-set version is rejected.
fn check_feature_version(features: &Path) -> CliResult<()> {
    let Some(dir) = features.parent() else {
        return Ok(());
    };
    let path = dir.join("manifest_extract.json");
    if !path.exists() {
        return Ok(());
    }
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(&path)?).map_err(stresslab::Error::from)?;
    if m.feature_set_version != FEATURE_SET_VERSION {
        return Err(stresslab::Error::Data(format!(
            "{} was extracted with feature set {}, this build uses {}",
            features.display(),
            m.feature_set_version,
            FEATURE_SET_VERSION
        ))
        .into());
    }
    Ok(())
}

pub fn evaluation_config(settings: &Settings) -> CliResult<EvaluationConfig> {
    let families = parse_families(settings.families.as_deref().unwrap_or("all"))?;
    Ok(EvaluationConfig {
        dataset: settings.dataset.clone().unwrap_or_else(|| "dataset".into()),
        families,
        options: LearnerOptions {
            svm_kernel: match settings.svm_kernel.unwrap_or(KernelChoice::Linear) {
                KernelChoice::Linear => SvmKernel::Linear,
                KernelChoice::Rbf => SvmKernel::Rbf,
            },
            mlp_class_weight: settings.mlp_class_weight.unwrap_or(false),
        },
        test_frac: settings.test_frac.unwrap_or(DEFAULT_TEST_FRAC),
        seed: settings.seed(),
    })
}

pub fn cmd_evaluate(settings: &Settings) -> CliResult<Outcome> {
    let features = settings
        .features
        .clone()
        .ok_or_else(|| CliError::Usage("evaluate needs --features".into()))?;
    let config = evaluation_config(settings)?;
    let protocol = settings.protocol.unwrap_or(ProtocolChoice::Both);
    let out = settings.out_dir();
    prepare_out_dir(&out)?;
    let scores_path = out.join("scores.csv");
    let skips_path = out.join("skips.json");
    refuse_existing(&[&scores_path, &skips_path], settings.force())?;

    check_feature_version(&features)?;
    let rows = read_feature_csv(&features)?;
    let snapshot = serde_json::json!({ "evaluation": config, "protocol": protocol });
    let manifest = RunManifest::new("evaluate", snapshot, vec![config.seed], vec![digest_file(&features)?]);
    let mut eval = Evaluation::default();
    if matches!(protocol, ProtocolChoice::Ud | ProtocolChoice::Both) {
        eval.extend(run_user_dependent(&rows, &config)?);
    }
    if matches!(protocol, ProtocolChoice::Ui | ProtocolChoice::Both) {
        eval.extend(run_user_independent(&rows, &config)?);
    }
    eval.sort();
    for s in &eval.skips {
        log::warn!(
            "skipped {} {} {}: {}",
            s.subject_id,
            s.family.map_or("all families", |f| f.as_str()),
            s.protocol,
            s.reason
        );
    }
    write_scores_csv(&eval.scores, &scores_path)?;
    write_json(
        &skips_path,
        &SkipLog {
            manifest_hash: &manifest.manifest_hash,
            skips: &eval.skips,
        },
    )?;
    let manifest = manifest.finish(&out, &[&scores_path, &skips_path])?;
    Ok(Outcome {
        summary: format!(
            "{} scores and {} skips written to {}",
            eval.scores.len(),
            eval.skips.len(),
            scores_path.display()
        ),
        manifest,
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    manifest_hash: &'a str,
    report: &'a HypothesisReport,
}

fn read_tables(paths: &[PathBuf]) -> CliResult<Vec<Vec<BAScore>>> {
    paths
        .iter()
        .map(|p| {
            let t = read_scores_csv(p)?;
            check_unique(&t)?;
            Ok(t)
        })
        .collect()
}

pub fn cmd_compare(settings: &Settings) -> CliResult<Outcome> {
    let hypothesis = settings.hypothesis.unwrap_or(1);
    let paths = settings.scores.clone().unwrap_or_default();
    if paths.is_empty() {
        return Err(CliError::Usage("compare needs --scores".into()));
    }
    let tables = read_tables(&paths)?;
    let (report, alpha) = match hypothesis {
        1 => {
            let mut config = HypothesisConfig::user_dependence();
            config.alpha = settings.alpha1.unwrap_or(DEFAULT_ALPHA1);
            let all: Vec<BAScore> = tables.into_iter().flatten().collect();
            check_unique(&all)?;
            let (ud, ui): (Vec<BAScore>, Vec<BAScore>) =
                all.into_iter().partition(|s| s.protocol == Protocol::UserDependent);
            if ud.is_empty() || ui.is_empty() {
                return Err(stresslab::Error::Data(
                    "hypothesis 1 needs both user-dependent and user-independent scores".into(),
                )
                .into());
            }
            (run_hypothesis1(&ud, &ui, &config)?, config.alpha)
        }
        2 => {
            if tables.len() != 2 {
                return Err(CliError::Usage(
                    "hypothesis 2 takes exactly two score tables: chest, then wrist".into(),
                ));
            }
            let mut config = HypothesisConfig::sensor_placement();
            config.alpha = settings.alpha2.unwrap_or(DEFAULT_ALPHA2);
            (run_hypothesis2(&tables[0], &tables[1], &config)?, config.alpha)
        }
        other => return Err(CliError::Usage(format!("unknown hypothesis {other}; use 1 or 2"))),
    };
    let out = settings.out_dir();
    prepare_out_dir(&out)?;
    let tag = format!("h{hypothesis}");
    let report_path = out.join(format!("report_{tag}.json"));
    let qq1 = out.join(format!("qq_{tag}_{}.csv", report.group1.label));
    let qq2 = out.join(format!("qq_{tag}_{}.csv", report.group2.label));
    let qqd = out.join(format!("qq_{tag}_differences.csv"));
    let hist = out.join(format!("histogram_{tag}_differences.csv"));
    refuse_existing(&[&report_path, &qq1, &qq2, &qqd, &hist], settings.force())?;

    let digests = paths.iter().map(|p| digest_file(p)).collect::<std::io::Result<Vec<_>>>()?;
    let snapshot = serde_json::json!({ "hypothesis": hypothesis, "alpha": alpha });
    let manifest = RunManifest::new(&format!("compare_{tag}"), snapshot, Vec::new(), digests);
    write_json(
        &report_path,
        &ReportFile {
            manifest_hash: &manifest.manifest_hash,
            report: &report,
        },
    )?;
    fs::write(&qq1, qq_csv(&report.group1.qq))?;
    fs::write(&qq2, qq_csv(&report.group2.qq))?;
    fs::write(&qqd, qq_csv(&qq_points(&report.paired_differences)))?;
    fs::write(&hist, histogram_csv(&report.difference_histogram))?;
    let manifest = manifest.finish(&out, &[&report_path, &qq1, &qq2, &qqd, &hist])?;
    let t = &report.test;
    Ok(Outcome {
        summary: format!(
            "hypothesis {hypothesis}: U = {}, p = {:.4e}, estimate {:.4}, interval [{:.4}, {:.4}]: {}",
            t.statistic, t.p_value, t.point_estimate, t.ci_low, t.ci_high, report.decision
        ),
        manifest,
    })
}
