//! Per-layer average-pooled activations and the layer-combination strategies.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dsp::{MelSpectrogram, MfccFeature};
use crate::nn::{forward_all, global_average_pool, input_from_mel, ModelState, NnError, Tensor};
use crate::weights::ModelSource;

/// Highest layer index a strategy name can refer to.
pub const MAX_LAYERS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty layer combination")]
    Empty,
    #[error("invalid character '{0}' in strategy name (digits 1-{MAX_LAYERS} only)")]
    InvalidChar(char),
    #[error("layers in '{0}' must be strictly increasing")]
    NotIncreasing(String),
    #[error("layer {0} is outside 1..={1}")]
    LayerOutOfRange(usize, usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl From<NnError> for FeatureError {
    fn from(e: NnError) -> Self {
        FeatureError::Shape(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// A nonempty set of layers, stored as a bitmask (bit `k - 1` for layer `k`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerCombo(u8);

impl LayerCombo {
    pub fn new(layers: &[usize]) -> Result<Self> {
        if layers.is_empty() {
            return Err(FeatureError::Empty);
        }
        let mut mask = 0u8;
        for w in layers.windows(2) {
            if w[1] <= w[0] {
                return Err(FeatureError::NotIncreasing(layers.iter().map(|l| l.to_string()).collect()));
            }
        }
        for &l in layers {
            if l == 0 || l > MAX_LAYERS {
                return Err(FeatureError::LayerOutOfRange(l, MAX_LAYERS));
            }
            mask |= 1 << (l - 1);
        }
        Ok(Self(mask))
    }

    /// Every layer `1..=n`.
    pub fn all_layers(n: usize) -> Result<Self> {
        Self::new(&(1..=n).collect::<Vec<_>>())
    }

    /// Layer numbers, ascending.
    pub fn layers(&self) -> Vec<usize> {
        (1..=MAX_LAYERS).filter(|l| self.0 & (1 << (l - 1)) != 0).collect()
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn contains(&self, layer: usize) -> bool {
        (1..=MAX_LAYERS).contains(&layer) && self.0 & (1 << (layer - 1)) != 0
    }

    pub fn max_layer(&self) -> usize {
        8 - self.0.leading_zeros() as usize
    }
}

impl fmt::Display for LayerCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.layers() {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for LayerCombo {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        parse_combo(s)
    }
}

pub fn combo_name(c: &LayerCombo) -> String {
    c.to_string()
}

pub fn parse_combo(name: &str) -> Result<LayerCombo> {
    let mut layers = Vec::with_capacity(name.len());
    for ch in name.chars() {
        match ch.to_digit(10) {
            Some(d) if (1..=MAX_LAYERS as u32).contains(&d) => layers.push(d as usize),
            _ => return Err(FeatureError::InvalidChar(ch)),
        }
    }
    LayerCombo::new(&layers)
}

/// All nonempty subsets of `1..=n`, by size then lexicographically.
pub fn combos_up_to(n: usize) -> Vec<LayerCombo> {
    let n = n.min(MAX_LAYERS);
    let mut out: Vec<LayerCombo> = (1u8..(1 << n)).map(LayerCombo).collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.layers().cmp(&b.layers())));
    out
}

/// The 31 strategies over five layers.
pub fn all_combos() -> Vec<LayerCombo> {
    combos_up_to(MAX_LAYERS)
}

/// One average-pooled vector per layer for a single clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    pub per_layer: Vec<Vec<f32>>,
}

impl LayerFeatures {
    pub fn layer(&self, k: usize) -> Option<&[f32]> {
        k.checked_sub(1).and_then(|i| self.per_layer.get(i)).map(|v| v.as_slice())
    }
}

/// Inference-mode features of each clip in a `B x 1 x F x T` batch.
pub fn extract_batch(model: &ModelState<f32>, input: &Tensor<f32>) -> Result<Vec<LayerFeatures>> {
    let out = forward_all(model, input)?;
    let batch = input.shape()[0];
    let mut per_clip = vec![LayerFeatures { per_layer: Vec::with_capacity(out.maps.len()) }; batch];
    for map in &out.maps {
        for (clip, v) in per_clip.iter_mut().zip(global_average_pool(map)?) {
            clip.per_layer.push(v);
        }
    }
    Ok(per_clip)
}

/// Global average pool of every layer's post-pool map. The model is run in
/// inference mode whatever its stored mode.
pub fn extract_layer_features(model: &ModelState<f32>, mel: &MelSpectrogram) -> Result<LayerFeatures> {
    let (_, f, t) = model.spec.input_shape;
    if mel.n_mels() != f || mel.n_frames() != t {
        return Err(FeatureError::Shape(format!("mel is {}x{}, model expects {f}x{t}", mel.n_mels(), mel.n_frames())));
    }
    let mut infer;
    let model = if model.mode == crate::nn::Mode::Inference {
        model
    } else {
        infer = model.clone();
        infer.mode = crate::nn::Mode::Inference;
        &infer
    };
    Ok(extract_batch(model, &input_from_mel(mel))?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvnetFeature {
    pub values: Vec<f32>,
    pub combo: LayerCombo,
    pub source: ModelSource,
    pub model_id: String,
}

/// Concatenates the selected layers in ascending order.
pub fn combine(features: &LayerFeatures, combo: LayerCombo, source: ModelSource, model_id: &str) -> Result<ConvnetFeature> {
    let mut values = Vec::new();
    for k in combo.layers() {
        let v = features.layer(k).ok_or(FeatureError::LayerOutOfRange(k, features.per_layer.len()))?;
        values.extend_from_slice(v);
    }
    Ok(ConvnetFeature { values, combo, source, model_id: model_id.to_string() })
}

/// `[convnet values, MFCC values]`.
pub fn concat_mfcc(f: &ConvnetFeature, m: &MfccFeature) -> Vec<f32> {
    let mut out = Vec::with_capacity(f.values.len() + m.values.len());
    out.extend_from_slice(&f.values);
    out.extend_from_slice(&m.values);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Matrix;
    use crate::nn::{he_normal_init, ArchitectureSpec};

    fn lf(n: usize, c: usize) -> LayerFeatures {
        LayerFeatures { per_layer: (0..n).map(|l| (0..c).map(|i| (l * 100 + i) as f32).collect()).collect() }
    }

    #[test]
    fn combo_counts_and_order() {
        let all = all_combos();
        assert_eq!(all.len(), 31);
        assert_eq!(all[0].to_string(), "1");
        assert_eq!(all[30].to_string(), "12345");
        for k in 1..=5 {
            let binom = [0, 5, 10, 10, 5, 1][k];
            assert_eq!(all.iter().filter(|c| c.len() == k).count(), binom);
        }
        let names: Vec<String> = all.iter().map(|c| c.to_string()).collect();
        assert_eq!(&names[5..9], &["12", "13", "14", "15"]);
        assert_eq!(combos_up_to(2).iter().map(|c| c.to_string()).collect::<Vec<_>>(), ["1", "2", "12"]);
    }

    #[test]
    fn names_roundtrip_and_errors() {
        for c in all_combos() {
            assert_eq!(parse_combo(&combo_name(&c)).unwrap(), c);
        }
        assert_eq!(LayerCombo::new(&[1, 3, 5]).unwrap().to_string(), "135");
        assert!(matches!(parse_combo("531"), Err(FeatureError::NotIncreasing(_))));
        assert!(matches!(parse_combo("113"), Err(FeatureError::NotIncreasing(_))));
        assert_eq!(parse_combo(""), Err(FeatureError::Empty));
        assert_eq!(parse_combo("16"), Err(FeatureError::InvalidChar('6')));
        assert_eq!(parse_combo("1a"), Err(FeatureError::InvalidChar('a')));
        assert_eq!(parse_combo("135").unwrap().max_layer(), 5);
    }

    #[test]
    fn combine_lengths_and_prefix() {
        let f = lf(5, 32);
        let c135 = combine(&f, parse_combo("135").unwrap(), ModelSource::Random, "m").unwrap();
        assert_eq!(c135.values.len(), 96);
        assert_eq!(&c135.values[32..64], f.layer(3).unwrap());
        let c5 = combine(&f, parse_combo("5").unwrap(), ModelSource::Random, "m").unwrap();
        assert_eq!(c5.values, f.per_layer[4]);
        let all = combine(&f, parse_combo("12345").unwrap(), ModelSource::Trained, "m").unwrap();
        assert_eq!(all.values.len(), 160);
        let m = MfccFeature { values: vec![-1.0; 120] };
        let joined = concat_mfcc(&all, &m);
        assert_eq!(joined.len(), 280);
        assert_eq!(&joined[..160], all.values.as_slice());
        let one = combine(&f, parse_combo("1").unwrap(), ModelSource::Trained, "m").unwrap();
        assert_eq!(concat_mfcc(&one, &m).len(), 152);
        assert!(combine(&lf(2, 4), parse_combo("3").unwrap(), ModelSource::Random, "m").is_err());
    }

    fn toy_mel(offset: f32) -> MelSpectrogram {
        let data = (0..96).map(|i| ((i * 7 % 13) as f32) * -3.0 + offset).collect();
        MelSpectrogram { db_values: Matrix::from_vec(8, 12, data), floor_db: -80.0 }
    }

    #[test]
    fn batch_context_does_not_matter() {
        let m = he_normal_init(&ArchitectureSpec::toy(), 4).unwrap();
        let a = extract_layer_features(&m, &toy_mel(0.0)).unwrap();
        let b = extract_layer_features(&m, &toy_mel(5.0)).unwrap();
        let xs = [input_from_mel(&toy_mel(0.0)), input_from_mel(&toy_mel(7.0)), input_from_mel(&toy_mel(5.0))];
        let batch = Tensor::stack_batch(&xs.iter().collect::<Vec<_>>()).unwrap();
        let together = extract_batch(&m, &batch).unwrap();
        assert_eq!(together[0], a);
        assert_eq!(together[2], b);
        assert_eq!(a.per_layer.len(), 2);
        assert!(a.per_layer.iter().all(|v| v.len() == 4));
    }

    #[test]
    fn zero_model_features_are_constant() {
        let spec = ArchitectureSpec::toy();
        let m = ModelState::<f32>::zeros(&spec).unwrap();
        let a = extract_layer_features(&m, &toy_mel(0.0)).unwrap();
        let b = extract_layer_features(&m, &toy_mel(-20.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_mel_shape_rejected() {
        let m = he_normal_init(&ArchitectureSpec::toy(), 4).unwrap();
        let mel = MelSpectrogram { db_values: Matrix::zeros(8, 13), floor_db: -80.0 };
        assert!(matches!(extract_layer_features(&m, &mel), Err(FeatureError::Shape(_))));
    }
}
