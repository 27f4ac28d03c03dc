use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use convfeat::dsp::FrontendConfig;
use convfeat::harness::{
    cmd_evaluate, cmd_extract, cmd_init_random, cmd_report, cmd_train_source, CvKind, ExperimentConfig, ExtractArgs, Strategies, TaskKind,
    TrainSourceConfig,
};

/// Exit status when some clips failed to decode but the rest were written.
const PARTIAL_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "convfeat", version, about = "Multi-layer convnet features for audio classification and regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the tagging convnet on a multi-tag manifest.
    TrainSource(TrainSourceCmd),
    /// Write a He-normal initialized model file.
    InitRandom(InitRandomCmd),
    /// Write per-clip convnet and MFCC features to CSV.
    Extract(ExtractCmd),
    /// Cross-validate every strategy and baseline.
    Evaluate(EvaluateCmd),
    /// Audit a results CSV and draw the bar chart.
    Report(ReportCmd),
}

#[derive(Args)]
struct FrontendArgs {
    /// JSON file with frontend fields to override.
    #[arg(long)]
    frontend: Option<PathBuf>,
    #[arg(long)]
    n_mels: Option<usize>,
    #[arg(long)]
    n_frames: Option<usize>,
    #[arg(long)]
    clip_seconds: Option<f64>,
}

impl FrontendArgs {
    fn apply(&self, mut base: FrontendConfig) -> Result<FrontendConfig> {
        if let Some(p) = &self.frontend {
            base = read_json(p)?;
        }
        if let Some(v) = self.n_mels {
            base.n_mels = v;
        }
        if let Some(v) = self.n_frames {
            base.n_frames = v;
        }
        if let Some(v) = self.clip_seconds {
            base.clip_seconds = v;
        }
        Ok(base)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Args)]
struct TrainSourceCmd {
    /// JSON training config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[command(flatten)]
    frontend: FrontendArgs,
}

#[derive(Args)]
struct InitRandomCmd {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "tagger5")]
    preset: String,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractCmd {
    #[arg(long)]
    manifest: PathBuf,
    /// CNF1 model file; repeat for a trained and a random model.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Also extract from a He-normal model built with this seed.
    #[arg(long)]
    random_seed: Option<u64>,
    #[arg(long, default_value = "tagger5")]
    preset: String,
    /// `all31` or comma-separated combos such as `1,135,12345`.
    #[arg(long, default_value = "all31")]
    strategies: String,
    #[arg(long)]
    no_mfcc: bool,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    frontend: FrontendArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum CvArg {
    Auto,
    Stratified,
    Grouped,
    Kfold,
    Predefined,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Auto,
    Classify,
    Regress,
}

#[derive(Args)]
struct EvaluateCmd {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Feature CSV from `extract` instead of extracting again.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    trained_model: Option<PathBuf>,
    #[arg(long)]
    random_model: Option<PathBuf>,
    #[arg(long)]
    random_seed: Option<u64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    no_mfcc: bool,
    #[arg(long)]
    no_combo_mfcc: bool,
    #[arg(long, value_enum)]
    cv: Option<CvArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    frontend: FrontendArgs,
}

#[derive(Args)]
struct ReportCmd {
    #[arg(long)]
    results: PathBuf,
    /// Defaults to the directory holding the results file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn train_source(a: TrainSourceCmd) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => TrainSourceConfig::load(p)?,
        None => TrainSourceConfig::default(),
    };
    cfg.manifest = a.manifest.or(cfg.manifest);
    if let Some(v) = a.preset {
        cfg.preset = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.adam.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.init_seed {
        cfg.init_seed = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    cfg.loss_csv = a.loss_csv.or(cfg.loss_csv);
    cfg.frontend = a.frontend.apply(cfg.frontend)?;
    let out = cmd_train_source(&cfg)?;
    println!("tags: {}", out.tags.join(", "));
    println!("epoch 0 loss {:.6}", out.report.initial_loss);
    for (e, l) in out.report.epoch_losses.iter().enumerate() {
        println!("epoch {} loss {l:.6}", e + 1);
    }
    println!("wrote {}", out.output.display());
    Ok(ExitCode::SUCCESS)
}

fn extract(a: ExtractCmd) -> Result<ExitCode> {
    let args = ExtractArgs {
        manifest: a.manifest,
        models: a.models,
        random_seed: a.random_seed,
        preset: a.preset,
        strategies: Strategies::parse(&a.strategies),
        mfcc: !a.no_mfcc,
        frontend: a.frontend.apply(FrontendConfig::default())?,
        output: a.output,
    };
    let out = cmd_extract(&args)?;
    println!("wrote {} rows for {} clips to {}", out.rows, out.clips, args.output.display());
    if out.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for (clip, err) in &out.failures {
        eprintln!("failed {clip}: {err}");
    }
    eprintln!("{} clip(s) failed", out.failures.len());
    Ok(ExitCode::from(PARTIAL_FAILURE))
}

fn evaluate(a: EvaluateCmd) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.manifest = a.manifest.or(cfg.manifest);
    cfg.features = a.features.or(cfg.features);
    cfg.trained_model = a.trained_model.or(cfg.trained_model);
    cfg.random_model = a.random_model.or(cfg.random_model);
    cfg.random_seed = a.random_seed.or(cfg.random_seed);
    if let Some(v) = a.preset {
        cfg.preset = v;
    }
    if let Some(v) = a.strategies {
        cfg.strategies = Strategies::parse(&v);
    }
    cfg.baselines.mfcc &= !a.no_mfcc;
    cfg.baselines.combo_mfcc &= !a.no_combo_mfcc;
    if let Some(v) = a.cv {
        cfg.cv.kind = match v {
            CvArg::Auto => CvKind::Auto,
            CvArg::Stratified => CvKind::Stratified,
            CvArg::Grouped => CvKind::Grouped,
            CvArg::Kfold => CvKind::Kfold,
            CvArg::Predefined => CvKind::Predefined,
        };
    }
    if let Some(v) = a.k {
        cfg.cv.k = v;
    }
    if let Some(v) = a.inner_folds {
        cfg.cv.inner_folds = v;
    }
    if let Some(v) = a.task {
        cfg.task = match v {
            TaskArg::Auto => TaskKind::Auto,
            TaskArg::Classify => TaskKind::Classify,
            TaskArg::Regress => TaskKind::Regress,
        };
    }
    cfg.standardize &= !a.no_standardize;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    cfg.frontend = a.frontend.apply(cfg.frontend)?;
    let out = cmd_evaluate(&cfg)?;
    let mut best: Vec<_> = out.report.aggregates.iter().collect();
    best.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    println!("{} clips, {} results", out.n_clips, out.results.len());
    for a in best.iter().take(5) {
        println!("{:>12} {:<10} {:<12} {:.4}", a.strategy, a.source, a.metric, a.mean);
    }
    for (clip, why) in &out.skipped {
        eprintln!("skipped {clip}: {why}");
    }
    println!("wrote {}", out.results_csv.display());
    Ok(if out.skipped.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(PARTIAL_FAILURE) })
}

fn report(a: ReportCmd) -> Result<ExitCode> {
    let dir = a.out_dir.unwrap_or_else(|| a.results.parent().map(Path::to_path_buf).unwrap_or_default());
    let out = cmd_report(&a.results, &dir)?;
    for (metric, bars) in &out.bars {
        println!("{metric}: {bars} bars");
    }
    println!("wrote {} and {}", out.svg.display(), out.markdown.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::TrainSource(a) => train_source(a),
        Command::InitRandom(a) => {
            cmd_init_random(&a.preset, a.seed, &a.output)?;
            println!("wrote {}", a.output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract(a) => extract(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
