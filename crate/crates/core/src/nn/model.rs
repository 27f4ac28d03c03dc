use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{bn_inference, conv_forward, elu, global_average_pool, maxpool};
use super::{ArchitectureSpec, NnError, Result, Scalar, Tensor};
use crate::dsp::MelSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    #[default]
    Inference,
}

/// Parameters of one conv / batch-norm block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    /// out_ch x in_ch x kh x kw
    pub conv_w: Tensor<T>,
    pub conv_b: Vec<T>,
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
    pub bn_running_mean: Vec<T>,
    pub bn_running_var: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(in_ch: usize, out_ch: usize, kernel: (usize, usize)) -> Self {
        Self {
            conv_w: Tensor::zeros(&[out_ch, in_ch, kernel.0, kernel.1]),
            conv_b: vec![T::ZERO; out_ch],
            bn_gamma: vec![T::ONE; out_ch],
            bn_beta: vec![T::ZERO; out_ch],
            bn_running_mean: vec![T::ZERO; out_ch],
            bn_running_var: vec![T::ONE; out_ch],
        }
    }

    fn cast<U: Scalar>(&self) -> LayerParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        LayerParams {
            conv_w: self.conv_w.cast(),
            conv_b: c(&self.conv_b),
            bn_gamma: c(&self.bn_gamma),
            bn_beta: c(&self.bn_beta),
            bn_running_mean: c(&self.bn_running_mean),
            bn_running_var: c(&self.bn_running_var),
        }
    }
}

/// All convnet parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T = f32> {
    pub spec: ArchitectureSpec,
    pub layers: Vec<LayerParams<T>>,
    /// n_outputs x channels
    pub head_w: Tensor<T>,
    pub head_b: Vec<T>,
    pub mode: Mode,
}

/// Output of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T = f32> {
    /// Post-pool activation map of every layer.
    pub maps: Vec<Tensor<T>>,
    /// batch x n_outputs
    pub logits: Vec<Vec<T>>,
}

impl<T: Scalar> ModelState<T> {
    /// Every weight and bias zero, gamma 1, running statistics (0, 1).
    pub fn zeros(spec: &ArchitectureSpec) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.n_layers)
            .map(|l| LayerParams::zeros(spec.layer_in_channels(l), spec.channels, spec.kernel))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
            head_w: Tensor::zeros(&[spec.n_outputs, spec.channels]),
            head_b: vec![T::ZERO; spec.n_outputs],
            mode: Mode::Inference,
        })
    }

    pub fn cast<U: Scalar>(&self) -> ModelState<U> {
        ModelState {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(LayerParams::cast).collect(),
            head_w: self.head_w.cast(),
            head_b: self.head_b.iter().map(|x| U::from_f64(x.to_f64())).collect(),
            mode: self.mode,
        }
    }

    /// Trainable parameters in canonical order: per layer conv W, conv b,
    /// gamma, beta; then head W, head b.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(self.layers.len() * 4 + 2);
        for l in &mut self.layers {
            out.push(l.conv_w.data_mut());
            out.push(&mut l.conv_b);
            out.push(&mut l.bn_gamma);
            out.push(&mut l.bn_beta);
        }
        out.push(self.head_w.data_mut());
        out.push(&mut self.head_b);
        out
    }

    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(self.layers.len() * 4 + 2);
        for l in &self.layers {
            out.push(l.conv_w.data());
            out.push(&l.conv_b);
            out.push(&l.bn_gamma);
            out.push(&l.bn_beta);
        }
        out.push(self.head_w.data());
        out.push(&self.head_b);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.trainable().iter().all(|s| s.iter().all(|v| v.is_finite()))
            && self.layers.iter().all(|l| l.bn_running_mean.iter().chain(&l.bn_running_var).all(|v| v.is_finite()))
    }

    pub(crate) fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let (b, c, h, w) = input.dims4()?;
        if (c, h, w) != self.spec.input_shape {
            return Err(NnError::Shape(format!(
                "input (c, f, t) = {:?}, model expects {:?}",
                (c, h, w),
                self.spec.input_shape
            )));
        }
        Ok(b)
    }

    /// Dense head applied to the global-average-pooled final map.
    pub(crate) fn head(&self, pooled: &[Vec<T>]) -> Vec<Vec<T>> {
        let c = self.spec.channels;
        pooled
            .iter()
            .map(|g| {
                (0..self.spec.n_outputs)
                    .map(|k| {
                        let row = &self.head_w.data()[k * c..(k + 1) * c];
                        let mut z = self.head_b[k];
                        for (&wv, &gv) in row.iter().zip(g) {
                            z += wv * gv;
                        }
                        z
                    })
                    .collect()
            })
            .collect()
    }
}

/// Inference-mode forward pass retaining every post-pool map.
pub fn forward_all<T: Scalar>(model: &ModelState<T>, input: &Tensor<T>) -> Result<ForwardOutput<T>> {
    model.check_input(input)?;
    let eps = model.spec.bn_eps;
    let mut maps = Vec::with_capacity(model.layers.len());
    let mut x = input.clone();
    for (layer, &pool) in model.layers.iter().zip(&model.spec.pool_schedule) {
        let conv = conv_forward(&x, &layer.conv_w, &layer.conv_b)?;
        let bn = bn_inference(&conv, layer, eps)?;
        x = maxpool(&elu(&bn), pool)?;
        maps.push(x.clone());
    }
    let pooled = global_average_pool(&x)?;
    let logits = model.head(&pooled);
    Ok(ForwardOutput { maps, logits })
}

/// He-normal initialisation: conv weights ~ N(0, 2 / fan_in) with
/// fan_in = in_ch * kh * kw, head weights ~ N(0, 2 / channels), biases 0,
/// gamma 1, beta 0, running statistics (0, 1). Deterministic in `seed`.
pub fn he_normal_init(spec: &ArchitectureSpec, seed: u64) -> Result<ModelState<f32>> {
    let mut model = ModelState::<f32>::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        let fan_in = spec.layer_in_channels(l) * spec.kernel.0 * spec.kernel.1;
        let dist = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        for w in layer.conv_w.data_mut() {
            *w = dist.sample(&mut rng) as f32;
        }
    }
    let dist = Normal::new(0.0f64, (2.0 / spec.channels as f64).sqrt()).expect("positive std");
    for w in model.head_w.data_mut() {
        *w = dist.sample(&mut rng) as f32;
    }
    Ok(model)
}

/// Standardises a log-mel spectrogram to zero mean and unit variance over all
/// entries and shapes it as a `1 x 1 x n_mels x n_frames` network input. A
/// constant spectrogram maps to zeros.
pub fn input_from_mel(mel: &MelSpectrogram) -> Tensor<f32> {
    let v = mel.db_values.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    let data = v.iter().map(|&x| ((x as f64 - mean) * scale) as f32).collect();
    Tensor::from_vec(&[1, 1, mel.n_mels(), mel.n_frames()], data).expect("mel shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Matrix;

    #[test]
    fn zero_model_gives_zero_logits() {
        let spec = ArchitectureSpec::toy();
        let m = ModelState::<f32>::zeros(&spec).unwrap();
        let x = Tensor::from_vec(&[2, 1, 8, 12], (0..192).map(|v| v as f32 / 50.0).collect()).unwrap();
        let out = forward_all(&m, &x).unwrap();
        for row in &out.logits {
            for &z in row {
                assert_eq!(z, 0.0);
                assert_eq!(1.0 / (1.0 + (-z).exp()), 0.5);
            }
        }
    }

    #[test]
    fn forward_shape_mismatch() {
        let m = ModelState::<f32>::zeros(&ArchitectureSpec::toy()).unwrap();
        assert!(matches!(forward_all(&m, &Tensor::zeros(&[1, 1, 8, 13])), Err(NnError::Shape(_))));
    }

    #[test]
    fn forward_equals_manual_composition() {
        let spec = ArchitectureSpec::toy();
        let m = he_normal_init(&spec, 3).unwrap();
        let x = Tensor::from_vec(&[1, 1, 8, 12], (0..96).map(|v| ((v * 7 % 13) as f32 - 6.0) / 3.0).collect()).unwrap();
        let out = forward_all(&m, &x).unwrap();
        let mut cur = x.clone();
        for (l, layer) in m.layers.iter().enumerate() {
            let c = crate::nn::conv2d_same(&cur, layer).unwrap();
            let mut lp = layer.clone();
            let b = crate::nn::batchnorm(&c, &mut lp, Mode::Inference, spec.bn_eps, spec.bn_momentum).unwrap();
            cur = crate::nn::maxpool(&crate::nn::elu(&b), spec.pool_schedule[l]).unwrap();
            assert_eq!(cur, out.maps[l]);
        }
        let g = global_average_pool(&cur).unwrap();
        assert_eq!(m.head(&g), out.logits);
        // Pure: a repeat call is bit-identical.
        assert_eq!(forward_all(&m, &x).unwrap(), out);
    }

    #[test]
    fn he_init_is_deterministic() {
        let spec = ArchitectureSpec::toy();
        assert_eq!(he_normal_init(&spec, 11).unwrap(), he_normal_init(&spec, 11).unwrap());
        assert_ne!(he_normal_init(&spec, 11).unwrap(), he_normal_init(&spec, 12).unwrap());
    }

    #[test]
    fn he_init_statistics() {
        // 32 x 32 x 3 x 3 = 9216 samples with variance 2 / 288.
        let spec = ArchitectureSpec::tagger5();
        let m = he_normal_init(&spec, 2024).unwrap();
        let w = m.layers[1].conv_w.data();
        assert_eq!(w.len(), 9216);
        let n = w.len() as f64;
        let mean = w.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 288.0;
        assert!((var - target).abs() < 0.15 * target, "variance {var}");
        assert!(mean.abs() < 3.0 * target.sqrt() / n.sqrt(), "mean {mean}");
        assert!(m.layers.iter().all(|l| l.conv_b.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn input_standardization() {
        let mel = MelSpectrogram { db_values: Matrix::from_vec(2, 3, vec![0.0, -10.0, -20.0, -30.0, -40.0, -50.0]), floor_db: -80.0 };
        let t = input_from_mel(&mel);
        assert_eq!(t.shape(), &[1, 1, 2, 3]);
        let mean: f64 = t.data().iter().map(|&v| v as f64).sum::<f64>() / 6.0;
        let var: f64 = t.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-5);
        let flat = MelSpectrogram { db_values: Matrix::zeros(2, 3), floor_db: -80.0 };
        assert!(input_from_mel(&flat).data().iter().all(|&v| v == 0.0));
    }
}
