//! Experiment runner behind the `convfeat` command line.
//!
//! Each `cmd_*` function is one subcommand. Outputs are written through a
//! single thread in a fixed order, so one seed fixes every output byte.

mod config;
mod evaluate;
mod extract;
mod report;
pub mod synth;
mod train;

pub use config::{Baselines, CvConfig, CvKind, ExperimentConfig, Strategies, TaskKind, TrainSourceConfig};
pub use evaluate::{cmd_evaluate, EvaluateOutcome, StrategyResult};
pub use extract::{
    cmd_extract, extract_manifest, feature_rows, load_model_file, random_model, read_feature_csv, write_feature_csv, ExtractArgs,
    ExtractOutcome, Extraction, FeatureRow, LoadedModel, SOURCE_MFCC,
};
pub use report::{audit_means, cmd_report, read_results_csv, render_markdown, render_svg, Aggregate, ReportOutcome, ResultRow};
pub use train::{cmd_init_random, cmd_train_source, parse_tags, TrainSourceOutcome};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Weights(#[from] crate::weights::WeightsError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Svm(#[from] crate::svm::SvmError),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed results: {0}")]
    Results(String),
    #[error("mean audit failed: {0}")]
    Audit(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}
