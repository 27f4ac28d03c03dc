//! Train-mode forward pass, binary cross-entropy and reverse-mode gradients.

use super::layers::{bn_backward, bn_train_forward, conv_backward, conv_forward, elu, elu_backward, global_average_pool, maxpool_backward, maxpool_with_argmax, BatchStats, BnCache};
use super::{Mode, ModelState, NnError, Result, Scalar, Tensor};

/// Mean over outputs of `log(1 + exp(-z (2y - 1)))`, evaluated as a stable softplus.
pub fn bce_with_logits<T: Scalar>(logits: &[T], targets: &[f32]) -> Result<f64> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(NnError::Shape(format!("{} logits vs {} targets", logits.len(), targets.len())));
    }
    let mut sum = 0.0f64;
    for (&z, &y) in logits.iter().zip(targets) {
        if y != 0.0 && y != 1.0 {
            return Err(NnError::InvalidTarget(y));
        }
        let a = -z.to_f64() * (2.0 * y as f64 - 1.0);
        sum += a.max(0.0) + (-a.abs()).exp().ln_1p();
    }
    Ok(sum / logits.len() as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradients of one conv / batch-norm block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T = f32> {
    pub conv_w: Vec<T>,
    pub conv_b: Vec<T>,
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
}

/// Gradients for every trainable parameter, mirroring [`ModelState::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<LayerGrads<T>>,
    pub head_w: Vec<T>,
    pub head_b: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(self.layers.len() * 4 + 2);
        for l in &self.layers {
            out.push(&l.conv_w);
            out.push(&l.conv_b);
            out.push(&l.bn_gamma);
            out.push(&l.bn_beta);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardOutput<T = f32> {
    /// Batch-mean binary cross-entropy.
    pub loss: f64,
    pub grads: Gradients<T>,
    /// Batch statistics of every batch-norm layer, for the running averages.
    pub batch_stats: Vec<BatchStats>,
}

struct LayerCache<T> {
    input: Tensor<T>,
    bn: BnCache<T>,
    pre_act: Tensor<T>,
    post_act: Tensor<T>,
    argmax: Vec<usize>,
}

struct TrainForward<T> {
    caches: Vec<LayerCache<T>>,
    last_map: Tensor<T>,
    pooled: Vec<Vec<T>>,
    logits: Vec<Vec<T>>,
}

fn train_forward<T: Scalar>(model: &ModelState<T>, input: &Tensor<T>) -> Result<TrainForward<T>> {
    model.check_input(input)?;
    let mut caches = Vec::with_capacity(model.layers.len());
    let mut x = input.clone();
    for (layer, &pool) in model.layers.iter().zip(&model.spec.pool_schedule) {
        let conv = conv_forward(&x, &layer.conv_w, &layer.conv_b)?;
        let (pre_act, bn) = bn_train_forward(&conv, layer, model.spec.bn_eps)?;
        let post_act = elu(&pre_act);
        let (pooled, argmax) = maxpool_with_argmax(&post_act, pool)?;
        caches.push(LayerCache { input: x, bn, pre_act, post_act, argmax });
        x = pooled;
    }
    let pooled = global_average_pool(&x)?;
    let logits = model.head(&pooled);
    Ok(TrainForward { caches, last_map: x, pooled, logits })
}

fn batch_loss<T: Scalar>(logits: &[Vec<T>], targets: &[Vec<f32>]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(NnError::Shape(format!("{} samples vs {} target rows", logits.len(), targets.len())));
    }
    let mut sum = 0.0;
    for (z, y) in logits.iter().zip(targets) {
        sum += bce_with_logits(z, y)?;
    }
    Ok(sum / logits.len() as f64)
}

/// Batch-mean BCE of a train-mode forward pass (batch statistics in every
/// batch-norm layer). Does not touch the running statistics.
pub fn train_loss<T: Scalar>(model: &ModelState<T>, input: &Tensor<T>, targets: &[Vec<f32>]) -> Result<f64> {
    let fwd = train_forward(model, input)?;
    batch_loss(&fwd.logits, targets)
}

/// Max-pool argmax indices of every layer in a train-mode forward pass. Two
/// parameter settings with equal traces lie in the same smooth piece of the
/// loss, which is what a finite-difference check needs.
pub fn maxpool_trace<T: Scalar>(model: &ModelState<T>, input: &Tensor<T>) -> Result<Vec<Vec<usize>>> {
    Ok(train_forward(model, input)?.caches.into_iter().map(|c| c.argmax).collect())
}

/// Reverse-mode gradients of the batch-mean BCE through the head, pooling,
/// ELU, train-mode batch norm and convolutions. The model must be in train mode.
pub fn backward<T: Scalar>(model: &ModelState<T>, input: &Tensor<T>, targets: &[Vec<f32>]) -> Result<BackwardOutput<T>> {
    if model.mode != Mode::Train {
        return Err(NnError::NotTraining);
    }
    let fwd = train_forward(model, input)?;
    let loss = batch_loss(&fwd.logits, targets)?;
    let spec = &model.spec;
    let (b, c, h, w) = fwd.last_map.dims4()?;
    let scale = 1.0 / (b * spec.n_outputs) as f64;

    // Head.
    let mut head_w = vec![T::ZERO; spec.n_outputs * c];
    let mut head_b = vec![T::ZERO; spec.n_outputs];
    let mut d_pooled = vec![vec![T::ZERO; c]; b];
    for bi in 0..b {
        for k in 0..spec.n_outputs {
            let z = fwd.logits[bi][k].to_f64();
            let dz = T::from_f64((sigmoid(z) - targets[bi][k] as f64) * scale);
            head_b[k] += dz;
            for ch in 0..c {
                head_w[k * c + ch] += dz * fwd.pooled[bi][ch];
                d_pooled[bi][ch] += dz * model.head_w.data()[k * c + ch];
            }
        }
    }

    // Global average pool.
    let plane = h * w;
    let inv_plane = T::from_f64(1.0 / plane as f64);
    let mut d_map = Tensor::zeros(fwd.last_map.shape());
    for bi in 0..b {
        for ch in 0..c {
            let g = d_pooled[bi][ch] * inv_plane;
            d_map.data_mut()[(bi * c + ch) * plane..(bi * c + ch + 1) * plane].iter_mut().for_each(|v| *v = g);
        }
    }

    let mut layers = Vec::with_capacity(model.layers.len());
    let mut batch_stats = Vec::with_capacity(model.layers.len());
    for (idx, (layer, cache)) in model.layers.iter().zip(&fwd.caches).enumerate().rev() {
        let d_act = maxpool_backward(cache.post_act.shape(), &cache.argmax, &d_map);
        let d_pre = elu_backward(&cache.pre_act, &cache.post_act, &d_act);
        let (d_conv, d_gamma, d_beta) = bn_backward(&cache.bn, &layer.bn_gamma, &d_pre)?;
        let (d_in, d_w, d_b) = conv_backward(&cache.input, &layer.conv_w, &d_conv, idx > 0)?;
        layers.push(LayerGrads { conv_w: d_w.into_data(), conv_b: d_b, bn_gamma: d_gamma, bn_beta: d_beta });
        batch_stats.push(cache.bn.stats.clone());
        if let Some(d) = d_in {
            d_map = d;
        }
    }
    layers.reverse();
    batch_stats.reverse();
    Ok(BackwardOutput { loss, grads: Gradients { layers, head_w, head_b }, batch_stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{he_normal_init, ArchitectureSpec};

    #[test]
    fn bce_confident_and_neutral() {
        assert!(bce_with_logits(&[50.0f64], &[1.0]).unwrap() < 1e-20);
        let l = bce_with_logits(&[0.0f64, 0.0, 0.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_matches_naive_formula() {
        let zs: Vec<f64> = (0..41).map(|i| -10.0 + i as f64 * 0.5).collect();
        for (i, &z) in zs.iter().enumerate() {
            let y = (i % 2) as f32;
            let s = 1.0 / (1.0 + (-z).exp());
            let naive = -(y as f64 * s.ln() + (1.0 - y as f64) * (1.0 - s).ln());
            assert!((bce_with_logits(&[z], &[y]).unwrap() - naive).abs() < 1e-6, "z = {z}");
        }
    }

    #[test]
    fn bce_errors() {
        assert!(matches!(bce_with_logits(&[0.0f64, 1.0], &[1.0]), Err(NnError::Shape(_))));
        assert!(matches!(bce_with_logits(&[0.0f64], &[0.5]), Err(NnError::InvalidTarget(_))));
    }

    #[test]
    fn backward_requires_train_mode() {
        let m = he_normal_init(&ArchitectureSpec::toy(), 1).unwrap();
        let x = Tensor::zeros(&[2, 1, 8, 12]);
        let r = backward(&m, &x, &[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(r, Err(NnError::NotTraining)));
    }

    #[test]
    fn conv_bias_gradient_vanishes_under_batch_norm() {
        // Train-mode batch norm removes any per-channel shift.
        let mut m = he_normal_init(&ArchitectureSpec::toy(), 5).unwrap().cast::<f64>();
        m.mode = Mode::Train;
        let x = Tensor::from_vec(&[3, 1, 8, 12], (0..288).map(|v| ((v * 31 % 47) as f64 - 23.0) / 12.0).collect()).unwrap();
        let out = backward(&m, &x, &[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        for l in &out.grads.layers {
            assert!(l.conv_b.iter().all(|g| g.abs() < 1e-12));
        }
    }
}
