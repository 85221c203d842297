//! Mini-batch NLL training with Adam and decoupled weight decay.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EnsembleModel, TransitionDataset};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Joint L2 clip over all of a member's parameters; `0` disables it.
    pub grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            batch_size: 512,
            weight_decay: 1e-5,
            grad_norm: 2.0,
        }
    }
}

/// Mean training loss per member (outer) per epoch (inner).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<Vec<f64>>,
}

impl TrainingReport {
    /// Last-epoch loss of each member.
    pub fn final_losses(&self) -> Vec<f64> {
        self.epoch_losses.iter().filter_map(|l| l.last().copied()).collect()
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *p -= lr * weight_decay * *p;
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
        }
    }
}

fn clip_grad(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-12);
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

impl EnsembleModel {
    /// Refit the input normalizer on `data`, then train every member for
    /// `epochs` passes over its own shuffled mini-batches. The final batch of
    /// an epoch may be short.
    pub fn fit(&mut self, data: &TransitionDataset, epochs: usize, config: &TrainConfig, seed: u64) -> Result<TrainingReport> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit on an empty dataset"));
        }
        if config.batch_size == 0 || !(config.lr > 0.0) || config.weight_decay < 0.0 {
            return Err(Error::invalid("training config needs batch_size > 0, lr > 0, weight_decay >= 0"));
        }
        self.check_data(data)?;
        self.fit_normalizer(data);

        let n = data.len();
        let mut report = TrainingReport::default();
        for k in 0..self.ensemble_size() {
            let n_params = self.members()[k].params().len();
            let mut adam = AdamState::new(n_params);
            let mut grad = vec![0.0; n_params];
            let mut order: Vec<usize> = (0..n).collect();
            let mut losses = Vec::with_capacity(epochs);
            for epoch in 0..epochs {
                order.shuffle(&mut rng_for(seed, &[k as u64, epoch as u64]));
                let mut epoch_loss = 0.0;
                for batch in order.chunks(config.batch_size) {
                    let loss = self.nll_loss_and_grad(k, data, batch, &mut grad)?;
                    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                        return Err(Error::numeric(format!(
                            "non-finite loss while training member {k} in epoch {}",
                            epoch + 1
                        )));
                    }
                    if config.grad_norm > 0.0 {
                        clip_grad(&mut grad, config.grad_norm);
                    }
                    adam.step(self.member_mut(k).params_mut(), &grad, config.lr, config.weight_decay);
                    epoch_loss += loss * batch.len() as f64;
                }
                losses.push(epoch_loss / n as f64);
            }
            report.epoch_losses.push(losses);
        }
        Ok(report)
    }
}
