//! Probabilistic ensemble dynamics model.
//!
//! Each member is an MLP mapping a normalized `(state, action)` pair to a
//! diagonal Gaussian over the state delta: `x' ~ N(x + mean_delta, exp(log_var))`.
//! The raw log-variance head is softly bounded by `max_logvar` and then
//! `min_logvar`; since the lower bound is applied last, the result can exceed
//! `max_logvar` by at most `softplus(min_logvar - max_logvar)`.

mod checkpoint;
mod dataset;
mod mlp;
pub(crate) mod propagate;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use dataset::TransitionDataset;
pub use mlp::{ForwardCache, Mlp};
pub use propagate::{propagate, DynamicsModel, ParticleBundle, PropagationMode};
pub use train::{TrainConfig, TrainingReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor applied to normalizer standard deviations.
pub const NORMALIZER_STD_FLOOR: f64 = 1e-8;

/// One member's predictive Gaussian over the next-state delta.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean_delta: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianParams {
    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow for large x
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Apply the upper then the lower softplus bound to a raw log-variance.
#[inline]
pub fn bound_log_var(raw: f64, min_logvar: f64, max_logvar: f64) -> f64 {
    let upper = max_logvar - softplus(max_logvar - raw);
    min_logvar + softplus(upper - min_logvar)
}

/// Raw head value whose bounded log-variance equals `target`, for targets
/// strictly inside `(min_logvar, max_logvar)`.
pub fn unbound_log_var(target: f64, min_logvar: f64, max_logvar: f64) -> f64 {
    let inv_softplus = |y: f64| y + (-(-y).exp()).ln_1p();
    let upper = min_logvar + inv_softplus(target - min_logvar);
    max_logvar - inv_softplus(max_logvar - upper)
}

/// Negative log-density of `target` under `N(mean, exp(log_var))`, summed
/// over dimensions.
pub fn gaussian_nll(target: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    target
        .iter()
        .zip(mean)
        .zip(log_var)
        .map(|((&y, &mu), &lv)| 0.5 * ((y - mu) * (y - mu) * (-lv).exp() + lv + LN_2PI))
        .sum()
}

/// Derivative of [`bound_log_var`] with respect to `raw`.
#[inline]
fn bound_log_var_grad(raw: f64, min_logvar: f64, max_logvar: f64) -> f64 {
    let upper = max_logvar - softplus(max_logvar - raw);
    sigmoid(max_logvar - raw) * sigmoid(upper - min_logvar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub ensemble_size: usize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub min_logvar: f64,
    pub max_logvar: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            num_layers: 6,
            hidden_size: 400,
            min_logvar: -10.0,
            max_logvar: 4.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::invalid("ensemble_size must be at least 1"));
        }
        if self.num_layers == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("network needs at least one hidden layer of nonzero width"));
        }
        if !(self.min_logvar < self.max_logvar) {
            return Err(Error::invalid("min_logvar must be below max_logvar"));
        }
        Ok(())
    }
}

/// Per-feature input standardization fitted on full-dataset moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation of each column of `rows`.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = rows.len() / dim;
        if n == 0 {
            return Self::identity(dim);
        }
        let mut mean = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, &x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| (v / n as f64).sqrt().max(NORMALIZER_STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn apply_into(&self, row: &[f64], out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

/// Ensemble of probabilistic MLPs sharing one architecture and normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    config: ModelConfig,
    state_dim: usize,
    action_dim: usize,
    normalizer: Normalizer,
    members: Vec<Mlp>,
}

impl EnsembleModel {
    pub fn new(state_dim: usize, action_dim: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::invalid("state and action dimensions must be positive"));
        }
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend(std::iter::repeat_n(config.hidden_size, config.num_layers));
        sizes.push(2 * state_dim);
        let members = (0..config.ensemble_size)
            .map(|k| Mlp::new(&sizes, &mut rng_for(seed, &[k as u64])))
            .collect();
        Ok(Self {
            config: config.clone(),
            state_dim,
            action_dim,
            normalizer: Normalizer::identity(state_dim + action_dim),
            members,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        state_dim: usize,
        action_dim: usize,
        normalizer: Normalizer,
        members: Vec<Mlp>,
    ) -> Self {
        Self {
            config,
            state_dim,
            action_dim,
            normalizer,
            members,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn member_mut(&mut self, k: usize) -> &mut Mlp {
        &mut self.members[k]
    }

    /// Refit the input normalizer on every `(state, action)` row of `data`.
    pub fn fit_normalizer(&mut self, data: &TransitionDataset) {
        self.normalizer = Normalizer::fit(&data.inputs(), self.state_dim + self.action_dim);
    }

    fn check_member(&self, member: usize) -> Result<()> {
        if member >= self.members.len() {
            return Err(Error::invalid(format!(
                "member {member} out of range for ensemble of {}",
                self.members.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn normalized_inputs(&self, states: &[f64], actions: &[f64], rows: usize) -> Vec<f64> {
        let (d, m) = (self.state_dim, self.action_dim);
        let mut x = vec![0.0; rows * (d + m)];
        let mut raw = vec![0.0; d + m];
        for r in 0..rows {
            raw[..d].copy_from_slice(&states[r * d..(r + 1) * d]);
            raw[d..].copy_from_slice(&actions[r * m..(r + 1) * m]);
            self.normalizer.apply_into(&raw, &mut x[r * (d + m)..(r + 1) * (d + m)]);
        }
        x
    }

    /// Mean delta and unbounded log-variance head for one input.
    pub fn forward_raw(&self, member: usize, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_member(member)?;
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::invalid(format!(
                "expected state/action dims {}/{}, got {}/{}",
                self.state_dim,
                self.action_dim,
                state.len(),
                action.len()
            )));
        }
        let x = self.normalized_inputs(state, action, 1);
        let out = self.members[member].forward(&x, 1);
        let (mean, raw) = out.split_at(self.state_dim);
        Ok((mean.to_vec(), raw.to_vec()))
    }

    pub fn forward(&self, member: usize, state: &[f64], action: &[f64]) -> Result<GaussianParams> {
        let (mean_delta, raw) = self.forward_raw(member, state, action)?;
        let log_var: Vec<f64> = raw
            .iter()
            .map(|&r| bound_log_var(r, self.config.min_logvar, self.config.max_logvar))
            .collect();
        if mean_delta.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("member {member} produced a non-finite output")));
        }
        Ok(GaussianParams { mean_delta, log_var })
    }

    /// Predicted next-state mean `state + mean_delta`.
    pub fn predict_mean(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let g = self.forward(member, state, action)?;
        Ok(state.iter().zip(&g.mean_delta).map(|(x, dx)| x + dx).collect())
    }

    /// Batched prediction: writes mean deltas and bounded log-variances for
    /// `rows` inputs into the output slices.
    pub fn predict_batch(
        &self,
        member: usize,
        states: &[f64],
        actions: &[f64],
        mean_delta: &mut [f64],
        log_var: &mut [f64],
    ) -> Result<()> {
        self.check_member(member)?;
        let d = self.state_dim;
        let rows = states.len() / d;
        if states.len() != rows * d || actions.len() != rows * self.action_dim {
            return Err(Error::invalid("batched state/action shapes do not match the model"));
        }
        let x = self.normalized_inputs(states, actions, rows);
        let out = self.members[member].forward(&x, rows);
        let (lo, hi) = (self.config.min_logvar, self.config.max_logvar);
        for r in 0..rows {
            let o = &out[r * 2 * d..(r + 1) * 2 * d];
            mean_delta[r * d..(r + 1) * d].copy_from_slice(&o[..d]);
            for (lv, &raw) in log_var[r * d..(r + 1) * d].iter_mut().zip(&o[d..]) {
                *lv = bound_log_var(raw, lo, hi);
            }
        }
        Ok(())
    }

    /// Mean over `rows` of the summed per-dimension Gaussian negative
    /// log-likelihood of the observed next state.
    pub fn nll_loss(&self, member: usize, data: &TransitionDataset) -> Result<f64> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.nll_loss_rows(member, data, &rows)
    }

    pub fn nll_loss_rows(&self, member: usize, data: &TransitionDataset, rows: &[usize]) -> Result<f64> {
        self.check_member(member)?;
        self.check_data(data)?;
        if rows.is_empty() {
            return Err(Error::invalid("nll_loss needs a nonempty batch"));
        }
        let (states, actions, targets) = data.gather(rows);
        let x = self.normalized_inputs(&states, &actions, rows.len());
        let out = self.members[member].forward(&x, rows.len());
        let loss = self.nll_from_output(&out, &targets, rows.len(), None);
        if !loss.is_finite() {
            return Err(Error::numeric(format!("member {member}: non-finite loss")));
        }
        Ok(loss)
    }

    /// Loss and its gradient w.r.t. the member's flat parameter vector.
    pub fn nll_loss_and_grad(
        &self,
        member: usize,
        data: &TransitionDataset,
        rows: &[usize],
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_member(member)?;
        self.check_data(data)?;
        if rows.is_empty() {
            return Err(Error::invalid("nll_loss needs a nonempty batch"));
        }
        let net = &self.members[member];
        let (states, actions, targets) = data.gather(rows);
        let x = self.normalized_inputs(&states, &actions, rows.len());
        let mut cache = ForwardCache::default();
        net.forward_cached(&x, rows.len(), &mut cache);
        let mut d_out = vec![0.0; cache.output().len()];
        let loss = self.nll_from_output(cache.output(), &targets, rows.len(), Some(&mut d_out));
        grad.iter_mut().for_each(|g| *g = 0.0);
        net.backward(&cache, &d_out, grad);
        Ok(loss)
    }

    fn check_data(&self, data: &TransitionDataset) -> Result<()> {
        if data.state_dim() != self.state_dim || data.action_dim() != self.action_dim {
            return Err(Error::invalid("dataset dimensions do not match the model"));
        }
        Ok(())
    }

    fn nll_from_output(&self, out: &[f64], target_delta: &[f64], rows: usize, mut d_out: Option<&mut [f64]>) -> f64 {
        let d = self.state_dim;
        let (lo, hi) = (self.config.min_logvar, self.config.max_logvar);
        let scale = 1.0 / rows as f64;
        let mut total = 0.0;
        for r in 0..rows {
            let o = &out[r * 2 * d..(r + 1) * 2 * d];
            for j in 0..d {
                let mu = o[j];
                let raw = o[d + j];
                let lv = bound_log_var(raw, lo, hi);
                let inv_var = (-lv).exp();
                let resid = target_delta[r * d + j] - mu;
                total += 0.5 * (resid * resid * inv_var + lv + LN_2PI);
                if let Some(g) = d_out.as_deref_mut() {
                    g[r * 2 * d + j] = -resid * inv_var * scale;
                    g[r * 2 * d + d + j] =
                        0.5 * (1.0 - resid * resid * inv_var) * bound_log_var_grad(raw, lo, hi) * scale;
                }
            }
        }
        total * scale
    }
}
