//! Cart with a height degree of freedom and velocity-gated action noise.
//!
//! State is `[position, velocity, height]`, action is `[thrust, lift]`.
//! Reward is the forward velocity. Above the velocity gate, Gaussian noise
//! is added to the action. Heights at or above the ceiling count as
//! constraint violations but never end the episode.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Environment, NoisySimulator, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::safety::BoxConstraint;

pub const DT: f64 = 0.1;
/// Height the body settles at under zero lift.
pub const REST_HEIGHT: f64 = 0.15;
pub const HEIGHT_STIFFNESS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub velocity_gate: f64,
    pub noise_mean: [f64; 2],
    pub noise_var: [f64; 2],
    pub ceiling: f64,
    pub episode_length: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            velocity_gate: 0.6,
            noise_mean: [0.0, 0.0],
            noise_var: [0.2, 0.2],
            ceiling: 0.3,
            episode_length: 80,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_var.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("noise_var entries must be finite and nonnegative".into()));
        }
        if self.noise_mean.iter().chain([&self.velocity_gate, &self.ceiling]).any(|v| !v.is_finite()) {
            return Err(Error::Config("noise_mean, velocity_gate and ceiling must be finite".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be at least 1".into()));
        }
        Ok(())
    }

    /// Violation set `height >= ceiling`.
    pub fn ceiling_box(&self) -> BoxConstraint {
        BoxConstraint::new(vec![None, None, Some((self.ceiling, f64::INFINITY))]).expect("finite ceiling")
    }
}

/// Update under an already-perturbed action.
pub fn integrator_dynamics(state: &[f64], a: [f64; 2], out: &mut [f64]) {
    let (p, v, h) = (state[0], state[1], state[2]);
    out[0] = p + DT * v;
    out[1] = v + DT * (a[0] - v);
    out[2] = (h + DT * (a[1] - HEIGHT_STIFFNESS * (h - REST_HEIGHT))).max(0.0);
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSim {
    pub config: IntegratorConfig,
}

impl IntegratorSim {
    fn gated(&self, state: &[f64]) -> bool {
        state[1] > self.config.velocity_gate
    }
}

fn clip(action: &[f64]) -> [f64; 2] {
    [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)]
}

impl NoisySimulator for IntegratorSim {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn moments(&self, state: &[f64], action: &[f64], mean: &mut [f64], var: &mut [f64]) {
        let mut a = clip(action);
        var.fill(0.0);
        if self.gated(state) {
            a[0] += self.config.noise_mean[0];
            a[1] += self.config.noise_mean[1];
            var[1] = DT * DT * self.config.noise_var[0];
            var[2] = DT * DT * self.config.noise_var[1];
        }
        integrator_dynamics(state, a, mean);
    }

    fn sample(&self, state: &[f64], action: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        let mut a = clip(action);
        if self.gated(state) {
            for (j, aj) in a.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *aj += self.config.noise_mean[j] + self.config.noise_var[j].sqrt() * z;
            }
        }
        integrator_dynamics(state, a, out);
    }
}

#[derive(Debug, Clone)]
pub struct NoisyIntegrator {
    sim: IntegratorSim,
    state: Vec<f64>,
}

impl NoisyIntegrator {
    pub fn new(config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sim: IntegratorSim { config },
            state: vec![0.0, 0.0, REST_HEIGHT],
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.sim.config
    }

    pub fn simulator(&self) -> &IntegratorSim {
        &self.sim
    }

    pub fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(state);
    }
}

impl Environment for NoisyIntegrator {
    fn name(&self) -> &'static str {
        "noisy_integrator"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.sim.config.episode_length
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = vec![0.0, 0.0, REST_HEIGHT];
        self.state.clone()
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Transition {
        let mut next = vec![0.0; 3];
        self.sim.sample(&self.state, action, rng, &mut next);
        self.state.copy_from_slice(&next);
        Transition {
            reward: next[1],
            violation: next[2] >= self.sim.config.ceiling,
            next_state: next,
            done: false,
            success: false,
        }
    }

    fn reward(&self, _state: &[f64], _action: &[f64], next_state: &[f64]) -> f64 {
        next_state[1]
    }

    fn safety_box(&self) -> Option<BoxConstraint> {
        Some(self.sim.config.ceiling_box())
    }
}
