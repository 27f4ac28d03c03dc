//! Dense-tensor engine for the tagging convnet.
//!
//! Each layer is a same-padded 3x3 convolution, batch normalisation, ELU and
//! a non-overlapping max-pool. The final map is average pooled into a dense
//! sigmoid head that is used only for source-task training. Convolutions are
//! cross-correlations (no kernel flip). Reductions (batch-norm statistics,
//! average pooling, loss) accumulate in `f64`.

mod adam;
mod backprop;
pub(crate) mod layers;
mod model;
mod spec;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use backprop::{backward, bce_with_logits, maxpool_trace, train_loss, BackwardOutput, Gradients, LayerGrads};
pub use layers::{batchnorm, conv2d_same, elu, global_average_pool, maxpool, BatchStats};
pub use model::{forward_all, he_normal_init, input_from_mel, ForwardOutput, LayerParams, Mode, ModelState};
pub use spec::{pooled_extent, ArchitectureSpec};
pub use tensor::{Scalar, Tensor};
pub use train::{train_source, TrainConfig, TrainExample, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("train-mode batch norm needs at least 2 samples per batch, got {0}")]
    BatchTooSmall(usize),
    #[error("gradients requested from a model in inference mode")]
    NotTraining,
    #[error("target {0} is not binary")]
    InvalidTarget(f32),
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite parameter after training")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, NnError>;
