//! Mini-batch Adam regression shared by the three auxiliary models.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_len, Error, Result};
use crate::nn::{AdamState, DenseNet};
use crate::rng::rng_from_seed;

/// A model trained by minimizing a per-sample squared error.
pub trait Regressor {
    /// `(input width, target width)`.
    fn dims(&self) -> (usize, usize);
    /// Sample loss; its parameter gradient is accumulated into `grad`.
    fn loss_grad(&self, input: &[f64], target: &[f64], grad: &mut [f64]) -> f64;
    fn loss(&self, input: &[f64], target: &[f64]) -> f64;
    fn net(&self) -> &DenseNet;
    fn net_mut(&mut self) -> &mut DenseNet;
}

/// Flat `(input, target)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub target_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(input_dim: usize, target_dim: usize) -> Self {
        Self {
            input_dim,
            target_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.inputs.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        debug_assert_eq!(input.len(), self.input_dim);
        debug_assert_eq!(target.len(), self.target_dim);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without held-out improvement and restore
    /// the best parameters. Ignored without a held-out set.
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitReport {
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub holdout_losses: Vec<f64>,
    pub steps: usize,
    pub best_epoch: Option<usize>,
}

pub fn mean_loss<R: Regressor>(model: &R, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    (0..data.len())
        .map(|i| model.loss(data.input(i), data.target(i)))
        .sum::<f64>()
        / data.len() as f64
}

/// Runs `cfg.epochs` shuffled passes of mini-batch Adam over `train`.
pub fn fit<R: Regressor>(
    model: &mut R,
    train: &Dataset,
    holdout: Option<&Dataset>,
    cfg: &FitConfig,
    adam: &mut AdamState,
    seed: u64,
) -> Result<FitReport> {
    let (di, dt) = model.dims();
    check_len("dataset input width", di, train.input_dim)?;
    check_len("dataset target width", dt, train.target_dim)?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut report = FitReport::default();
    if cfg.epochs == 0 {
        return Ok(report);
    }
    if train.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    let holdout = holdout.filter(|h| !h.is_empty());
    let n_params = model.net().params().len();
    check_len("optimizer state", n_params, adam.m.len())?;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let mut loss = 0.0;
            for &i in batch {
                loss += model.loss_grad(train.input(i), train.target(i), &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            model.net_mut().update_params(|p| adam.update(p, &grad))?;
            total += loss * inv;
            batches += 1;
            report.steps += 1;
        }
        let epoch_loss = total / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        report.epoch_losses.push(epoch_loss);
        if let Some(h) = holdout {
            let hl = mean_loss(model, h);
            report.holdout_losses.push(hl);
            if best.as_ref().map_or(true, |(b, _)| hl < *b) {
                best = Some((hl, model.net().params().as_slice().to_vec()));
                report.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        if cfg.patience.is_some() {
            model.net_mut().update_params(|p| p.copy_from_slice(&params));
        }
    }
    Ok(report)
}
