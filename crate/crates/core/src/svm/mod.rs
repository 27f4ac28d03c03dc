//! Support-vector classification and regression trained by SMO.

mod grid;
mod io;
mod kernel;
mod solver;
mod svc;
mod svr;

pub use grid::{grid_search, GridResult, GridSpec, SelectionSplit, SvmConfig, SvmParams, Targets, TrainedSvm};
pub use io::{svm_from_container, svm_to_container, SVM_FORMAT};
pub use kernel::{kernel_eval, GramMatrix, KernelSource, KernelSpec, Pairwise, Subset, VectorKernel};
pub use solver::{kkt_violation, solve, RowCache, Solution, SolverParams};
pub use svc::{svc_train, svc_train_binary, BinaryMachine, SvcModel};
pub use svr::{svr_train, SvrModel, DEFAULT_EPSILON};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature or target value")]
    NonFinite,
    #[error("SMO did not converge within {iterations} iterations")]
    NotConverged { iterations: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("degenerate selection plan: {0}")]
    DegeneratePlan(String),
    #[error(transparent)]
    Weights(#[from] crate::weights::WeightsError),
}

pub type Result<T> = std::result::Result<T, SvmError>;

/// At least two rows of equal, nonzero width, all finite, one per target.
pub(crate) fn check_matrix(x: &[Vec<f64>], n_targets: usize) -> Result<()> {
    if x.len() < 2 {
        return Err(SvmError::TooFewSamples(x.len()));
    }
    if x.len() != n_targets {
        return Err(SvmError::DimensionMismatch { expected: x.len(), got: n_targets });
    }
    let d = x[0].len();
    if d == 0 {
        return Err(SvmError::InvalidParameter("zero-width features".into()));
    }
    for row in x {
        if row.len() != d {
            return Err(SvmError::DimensionMismatch { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite);
        }
    }
    Ok(())
}
