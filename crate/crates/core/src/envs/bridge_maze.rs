//! Planar bridge maze: a damped point mass must cross lava from the start
//! platform to the goal platform over one of three bridges.
//!
//! State is `[x0, x1, v0, v1]`, action is a force `[u0, u1]` in `[-1, 1]^2`.
//! A wind force along `x1` blows over the middle of the maze and is redrawn
//! every few steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, NoisySimulator, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const DT: f64 = 0.1;
pub const DAMPING: f64 = 2.0;
pub const GOAL_X0: f64 = 12.0;
pub const START: [f64; 4] = [-11.0, 0.0, 0.0, 0.0];

/// Axis-aligned walkable rectangle `[x0_lo, x0_hi] x [x1_lo, x1_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: (f64, f64),
    pub x1: (f64, f64),
}

impl Rect {
    pub fn contains(&self, x0: f64, x1: f64) -> bool {
        self.x0.0 <= x0 && x0 <= self.x0.1 && self.x1.0 <= x1 && x1 <= self.x1.1
    }
}

pub const START_PLATFORM: Rect = Rect {
    x0: (-14.0, -8.0),
    x1: (-8.0, 11.0),
};
pub const GOAL_PLATFORM: Rect = Rect {
    x0: (8.0, 16.0),
    x1: (-8.0, 11.0),
};
/// Straight and wide, but exactly covering the wind zone.
pub const MIDDLE_BRIDGE: Rect = Rect {
    x0: (-8.0, 8.0),
    x1: (-3.6, 3.6),
};
/// No walls, out of the wind.
pub const LOWER_BRIDGE: Rect = Rect {
    x0: (-8.0, 8.0),
    x1: (-6.5, -4.5),
};
/// Walled on both sides; the longest detour.
pub const UPPER_BRIDGE: Rect = Rect {
    x0: (-8.0, 8.0),
    x1: (8.0, 10.0),
};
pub const WIND_ZONE: Rect = Rect {
    x0: (-8.0, 8.0),
    x1: (-3.6, 3.6),
};

pub fn on_surface(x0: f64, x1: f64) -> bool {
    [START_PLATFORM, GOAL_PLATFORM, MIDDLE_BRIDGE, LOWER_BRIDGE, UPPER_BRIDGE]
        .iter()
        .any(|r| r.contains(x0, x1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeMazeConfig {
    /// Largest wind force magnitude.
    pub wind_max: f64,
    /// Steps between wind redraws.
    pub wind_period: usize,
    /// Force per unit action.
    pub actuator_gain: f64,
    pub episode_length: usize,
}

/// Wind strength at which a straight run `u = [1, 0]` over the middle bridge
/// survives about 35% of the time. Gusts can exceed the actuator, so
/// feedback alone cannot guarantee a crossing.
pub const CALIBRATED_WIND_MAX: f64 = 18.0;

impl Default for BridgeMazeConfig {
    fn default() -> Self {
        Self {
            wind_max: CALIBRATED_WIND_MAX,
            wind_period: 5,
            actuator_gain: 10.0,
            episode_length: 80,
        }
    }
}

impl BridgeMazeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wind_max >= 0.0 && self.wind_max.is_finite()) {
            return Err(Error::Config("wind_max must be a finite nonnegative number".into()));
        }
        if self.wind_period == 0 || self.episode_length == 0 {
            return Err(Error::Config("wind_period and episode_length must be at least 1".into()));
        }
        if !(self.actuator_gain > 0.0 && self.actuator_gain.is_finite()) {
            return Err(Error::Config("actuator_gain must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic part of the update given the wind force acting this step.
pub fn bridge_dynamics(state: &[f64], action: &[f64], wind: f64, gain: f64, out: &mut [f64]) {
    let (x0, x1, v0, v1) = (state[0], state[1], state[2], state[3]);
    let u0 = action[0].clamp(-1.0, 1.0);
    let u1 = action[1].clamp(-1.0, 1.0);
    let f = if WIND_ZONE.contains(x0, x1) { wind } else { 0.0 };
    let nx0 = x0 + v0 * DT;
    let mut nx1 = x1 + v1 * DT;
    let nv0 = v0 + gain * u0 * DT - DAMPING * v0 * DT;
    let mut nv1 = v1 + (gain * u1 + f) * DT - DAMPING * v1 * DT;
    // walls of the upper bridge
    if UPPER_BRIDGE.contains(x0, x1) && UPPER_BRIDGE.x0.0 < nx0 && nx0 < UPPER_BRIDGE.x0.1 {
        let (lo, hi) = UPPER_BRIDGE.x1;
        if nx1 < lo || nx1 > hi {
            nx1 = nx1.clamp(lo, hi);
            nv1 = 0.0;
        }
    }
    out.copy_from_slice(&[nx0, nx1, nv0, nv1]);
}

/// Progress toward the goal line; `-1` for falling into the lava.
/// Crossing the goal line pays the remaining distance, so overshooting
/// is never worse than stopping just short.
pub fn bridge_reward(state: &[f64], next: &[f64]) -> f64 {
    if next[0] >= GOAL_X0 {
        (GOAL_X0 - state[0]).max(0.0)
    } else if !on_surface(next[0], next[1]) {
        -1.0
    } else {
        (state[0] - GOAL_X0).abs() - (next[0] - GOAL_X0).abs()
    }
}

fn draw_wind(wind_max: f64, rng: &mut SimRng) -> f64 {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    sign * rng.random_range(0.0..=wind_max)
}

/// Bridge maze dynamics with a fresh wind draw on every step.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMazeSim {
    pub config: BridgeMazeConfig,
}

impl NoisySimulator for BridgeMazeSim {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn moments(&self, state: &[f64], action: &[f64], mean: &mut [f64], var: &mut [f64]) {
        bridge_dynamics(state, action, 0.0, self.config.actuator_gain, mean);
        var.fill(0.0);
        if WIND_ZONE.contains(state[0], state[1]) {
            // uniform magnitude with a random sign: mean 0, variance max^2 / 3
            var[3] = DT * DT * self.config.wind_max * self.config.wind_max / 3.0;
        }
    }

    fn sample(&self, state: &[f64], action: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        let wind = draw_wind(self.config.wind_max, rng);
        bridge_dynamics(state, action, wind, self.config.actuator_gain, out);
    }
}

/// The maze as an episodic environment, with wind held for `wind_period` steps.
#[derive(Debug, Clone)]
pub struct BridgeMaze {
    sim: BridgeMazeSim,
    state: Vec<f64>,
    steps: usize,
    wind: f64,
}

impl BridgeMaze {
    pub fn new(config: BridgeMazeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sim: BridgeMazeSim { config },
            state: START.to_vec(),
            steps: 0,
            wind: 0.0,
        })
    }

    pub fn config(&self) -> &BridgeMazeConfig {
        &self.sim.config
    }

    pub fn simulator(&self) -> &BridgeMazeSim {
        &self.sim
    }

    pub fn current_wind(&self) -> f64 {
        self.wind
    }

    pub fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(state);
    }
}

impl Environment for BridgeMaze {
    fn name(&self) -> &'static str {
        "bridge_maze"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.sim.config.episode_length
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = START.to_vec();
        self.steps = 0;
        self.wind = 0.0;
        self.state.clone()
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Transition {
        if self.steps % self.sim.config.wind_period == 0 {
            self.wind = draw_wind(self.sim.config.wind_max, rng);
        }
        let mut next = vec![0.0; 4];
        bridge_dynamics(&self.state, action, self.wind, self.sim.config.actuator_gain, &mut next);
        let reward = bridge_reward(&self.state, &next);
        let success = next[0] >= GOAL_X0;
        let fell = !success && !on_surface(next[0], next[1]);
        self.state.copy_from_slice(&next);
        self.steps += 1;
        Transition {
            next_state: next,
            reward,
            done: success || fell,
            success,
            violation: fell,
        }
    }

    fn reward(&self, state: &[f64], _action: &[f64], next_state: &[f64]) -> f64 {
        bridge_reward(state, next_state)
    }
}
