use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::update_running_stats;
use super::{backward, train_loss, AdamConfig, AdamState, Mode, ModelState, NnError, Result, Tensor};

/// One source-task example: a `1 x C x F x T` input and its multi-hot tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub input: Tensor<f32>,
    pub targets: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, batch_size: 16, adam: AdamConfig::default(), seed: 0, shuffle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean train-mode BCE over the dataset before any update.
    pub initial_loss: f64,
    /// Sample-weighted mean loss of the mini-batches of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

fn epoch_order(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        let seed = cfg.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
}

/// Consecutive batches of `batch_size`; a trailing singleton joins the
/// previous batch because train-mode batch norm needs two samples.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn stack(data: &[TrainExample], idx: &[usize]) -> Result<(Tensor<f32>, Vec<Vec<f32>>)> {
    let inputs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &data[i].input).collect();
    let targets = idx.iter().map(|&i| data[i].targets.clone()).collect();
    Ok((Tensor::stack_batch(&inputs)?, targets))
}

/// Mini-batch training with ADAM on the batch-mean BCE. Shuffling depends
/// only on `(seed, epoch)`, so identical inputs give bit-identical models.
pub fn train_source(model: ModelState<f32>, data: &[TrainExample], cfg: &TrainConfig) -> Result<(ModelState<f32>, TrainReport)> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if data.len() < 2 || cfg.batch_size < 2 {
        return Err(NnError::BatchTooSmall(data.len().min(cfg.batch_size)));
    }
    for ex in data {
        if ex.targets.len() != model.spec.n_outputs {
            return Err(NnError::Shape(format!("{} targets for a {}-output head", ex.targets.len(), model.spec.n_outputs)));
        }
    }
    let mut model = model;
    model.mode = Mode::Train;

    let initial_loss = {
        let order = epoch_order(data.len(), cfg, 0);
        let mut sum = 0.0;
        for b in batches(&order, cfg.batch_size) {
            let (x, y) = stack(data, b)?;
            sum += train_loss(&model, &x, &y)? * b.len() as f64;
        }
        sum / data.len() as f64
    };

    let mut adam = AdamState::new(&model.trainable(), cfg.adam);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg, epoch);
        let mut sum = 0.0;
        for b in batches(&order, cfg.batch_size) {
            let (x, y) = stack(data, b)?;
            let out = backward(&model, &x, &y)?;
            sum += out.loss * b.len() as f64;
            adam.step(&mut model.trainable_mut(), &out.grads.slices())?;
            let momentum = model.spec.bn_momentum;
            for (layer, stats) in model.layers.iter_mut().zip(&out.batch_stats) {
                update_running_stats(layer, stats, momentum);
            }
        }
        let mean = sum / data.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    if !model.all_finite() {
        return Err(NnError::NonFinite);
    }
    model.mode = Mode::Inference;
    Ok((model, TrainReport { initial_loss, epoch_losses, steps: adam.step_count }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{he_normal_init, ArchitectureSpec};

    #[test]
    fn trailing_singleton_is_merged() {
        let order: Vec<usize> = (0..7).collect();
        let b = batches(&order, 3);
        assert_eq!(b, vec![&[0, 1, 2][..], &[3, 4, 5, 6][..]]);
        assert_eq!(batches(&order[..6], 3).len(), 2);
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let spec = ArchitectureSpec::toy();
        let m = he_normal_init(&spec, 9).unwrap();
        let data: Vec<TrainExample> = (0..4)
            .map(|i| TrainExample { input: Tensor::from_vec(&[1, 1, 8, 12], vec![i as f32 * 0.1; 96]).unwrap(), targets: vec![0.0, 1.0] })
            .collect();
        let cfg = TrainConfig { epochs: 0, batch_size: 2, ..Default::default() };
        let (trained, report) = train_source(m.clone(), &data, &cfg).unwrap();
        assert_eq!(trained, m);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn empty_dataset_rejected() {
        let m = he_normal_init(&ArchitectureSpec::toy(), 9).unwrap();
        assert!(matches!(train_source(m, &[], &TrainConfig::default()), Err(NnError::EmptyDataset)));
    }
}
