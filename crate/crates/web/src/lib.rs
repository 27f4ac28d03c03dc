//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The `demo` module holds plain Rust versions of each operation so they can
//! be tested natively; the exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod demo;

pub use demo::{MEL_BANDS, MEL_FRAMES};

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

/// Mel spectrogram in dB of a generated signal, row-major
/// `MEL_BANDS x MEL_FRAMES`.
#[wasm_bindgen]
pub fn mel_image(kind: &str, freq: f64) -> Result<Vec<f32>, JsError> {
    demo::mel_image(kind, freq).map_err(js_err)
}

/// Per-layer averaged activations of a He-initialized tagging convnet: 32
/// values for each of the 5 layers.
#[wasm_bindgen]
pub fn layer_features(kind: &str, freq: f64, seed: u64) -> Result<Vec<f32>, JsError> {
    demo::layer_features(kind, freq, seed).map_err(js_err)
}

/// Fits an RBF classifier to labelled points in the unit square and returns
/// its decision values on a `res x res` grid, row-major from the top-left.
#[wasm_bindgen]
pub fn svm_field(xs: Vec<f64>, ys: Vec<f64>, labels: Vec<u32>, gamma: f64, c: f64, res: usize) -> Result<Vec<f64>, JsError> {
    demo::svm_field(&xs, &ys, &labels, gamma, c, res).map_err(js_err)
}

#[wasm_bindgen]
pub fn mel_bands() -> usize {
    MEL_BANDS
}

#[wasm_bindgen]
pub fn mel_frames() -> usize {
    MEL_FRAMES
}
