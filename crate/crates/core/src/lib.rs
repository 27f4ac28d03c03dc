//! Multi-layer convnet features for audio transfer learning.
//!
//! The crate covers the whole pipeline:
//!
//! - [`dsp`]: WAV ingestion, STFT, mel filterbank, decibel log-mel
//!   spectrograms and the 120-dimensional MFCC baseline vector.
//! - [`nn`]: a small dense-tensor engine for the 5-layer tagging convnet
//!   (conv 3x3 / batch norm / ELU / max-pool), with backprop, ADAM and a
//!   source-task training loop.
//! - [`weights`]: the `CNF1` named-tensor container used for model files.
//! - [`features`]: per-layer average-pooled activations and the 31
//!   layer-combination strategies.
//! - [`svm`]: SMO-trained support vector classifiers and regressors plus the
//!   kernel/gamma/C grid search.
//! - [`eval`]: fold plans, standardization, metrics and cross-validation.
//! - [`harness`]: the experiment runner behind the `convfeat` CLI.

pub mod dsp;
pub mod eval;
pub mod features;
pub mod harness;
pub mod nn;
pub mod svm;
pub mod weights;

mod par;
