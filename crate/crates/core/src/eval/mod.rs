//! Fold plans, standardization, metrics and the cross-validation runner.

mod cv;
mod dataset;
mod folds;
mod metrics;
mod standardize;

pub use cv::{cross_validate, CvResult, FoldOutput, FoldScore, Metric, Pipeline, Predictions, SvmPipeline, TargetData};
pub use dataset::{encode_labels, parse_manifest, read_manifest, DatasetTargets, LabeledDataset, Manifest, ManifestRow};
pub use folds::{grouped_kfold, kfold, predefined_split, stratified_kfold, FoldPlan, OuterFold, PlanKind, SPLIT_NAMES};
pub use metrics::{accuracy, auc_roc, macro_auc_roc, per_class_accuracy, r_squared};
pub use standardize::{standardize_apply, standardize_fit, Standardizer};

use thiserror::Error;

use crate::svm::SvmError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no samples")]
    Empty,
    #[error("truth values are constant")]
    ConstantTruth,
    #[error("truth contains a single class")]
    SingleClass,
    #[error("non-finite score")]
    NonFinite,
    #[error("invalid fold count {k} for {n} samples")]
    InvalidK { k: usize, n: usize },
    #[error("{groups} distinct groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("row {row}: split '{value}' is not one of {accepted}")]
    InvalidSplit { row: usize, value: String, accepted: String },
    #[error("predefined split needs nonempty train and test portions")]
    MissingSplit,
    #[error("leakage guard: {0}")]
    Leakage(String),
    #[error("prediction and target kinds differ")]
    TargetKind,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
