//! Analytic environments and a ground-truth model adapter.

mod bridge_maze;
mod coverage;
mod ground_truth;
mod integrator;

pub use bridge_maze::{
    bridge_dynamics, bridge_reward, on_surface, BridgeMaze, BridgeMazeConfig, BridgeMazeSim, Rect, CALIBRATED_WIND_MAX, GOAL_PLATFORM, GOAL_X0,
    LOWER_BRIDGE, MIDDLE_BRIDGE, START, START_PLATFORM, UPPER_BRIDGE, WIND_ZONE,
};
pub use coverage::{coverage, CoverageGrid, COVERAGE_BINS, COVERAGE_X0, COVERAGE_X1};
pub use ground_truth::{GroundTruthEnsemble, GROUND_TRUTH_VAR_FLOOR};
pub use integrator::{integrator_dynamics, IntegratorConfig, IntegratorSim, NoisyIntegrator, REST_HEIGHT};

use serde::{Deserialize, Serialize};

use crate::ensemble::DynamicsModel;
use crate::error::Result;
use crate::rng::SimRng;
use crate::safety::BoxConstraint;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// Fell off the maze, or crossed the ceiling.
    pub violation: bool,
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; self.action_dim()], vec![1.0; self.action_dim()])
    }

    fn reset(&mut self) -> Vec<f64>;
    fn state(&self) -> &[f64];
    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Transition;

    /// Reward of a transition as a pure function; planning cost is its negation.
    fn reward(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64;

    /// State-space region the environment asks planners to stay out of.
    fn safety_box(&self) -> Option<BoxConstraint> {
        None
    }
}

/// Simulator exposing both exact next-state moments and noisy samples.
pub trait NoisySimulator {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Next-state mean and per-dimension variance.
    fn moments(&self, state: &[f64], action: &[f64], mean: &mut [f64], var: &mut [f64]);
    fn sample(&self, state: &[f64], action: &[f64], rng: &mut SimRng, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    BridgeMaze(BridgeMazeConfig),
    NoisyIntegrator(IntegratorConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::BridgeMaze(BridgeMazeConfig::default())
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::BridgeMaze(c) => c.validate(),
            EnvConfig::NoisyIntegrator(c) => c.validate(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::BridgeMaze(c) => Box::new(BridgeMaze::new(c.clone())?),
            EnvConfig::NoisyIntegrator(c) => Box::new(NoisyIntegrator::new(c.clone())?),
        })
    }

    /// `members` noisy copies of the environment's own dynamics.
    pub fn ground_truth(&self, members: usize) -> Result<Box<dyn DynamicsModel>> {
        self.validate()?;
        Ok(match self {
            EnvConfig::BridgeMaze(c) => Box::new(GroundTruthEnsemble::new(BridgeMazeSim { config: c.clone() }, members)?),
            EnvConfig::NoisyIntegrator(c) => Box::new(GroundTruthEnsemble::new(IntegratorSim { config: c.clone() }, members)?),
        })
    }
}
