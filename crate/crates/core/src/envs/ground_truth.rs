//! Ensemble of noisy simulator copies behind the dynamics-model interface.

use super::NoisySimulator;
use crate::ensemble::DynamicsModel;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Variance floor before taking logs; deterministic dimensions get
/// `ln(1e-12)`.
pub const GROUND_TRUTH_VAR_FLOOR: f64 = 1e-12;

/// `K` copies of one simulator. All copies share dynamics, so their mean
/// predictions agree exactly; they differ only through the noise each
/// particle draws.
#[derive(Debug, Clone)]
pub struct GroundTruthEnsemble<S> {
    sim: S,
    members: usize,
}

impl<S: NoisySimulator> GroundTruthEnsemble<S> {
    pub fn new(sim: S, members: usize) -> Result<Self> {
        if members == 0 {
            return Err(Error::invalid("ground-truth ensemble needs at least one member"));
        }
        Ok(Self { sim, members })
    }

    pub fn simulator(&self) -> &S {
        &self.sim
    }
}

impl<S: NoisySimulator> DynamicsModel for GroundTruthEnsemble<S> {
    fn state_dim(&self) -> usize {
        self.sim.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.sim.action_dim()
    }

    fn ensemble_size(&self) -> usize {
        self.members
    }

    fn predict(&self, member: usize, states: &[f64], actions: &[f64], mean_delta: &mut [f64], log_var: &mut [f64]) -> Result<()> {
        let (d, m) = (self.sim.state_dim(), self.sim.action_dim());
        if member >= self.members {
            return Err(Error::invalid(format!("member {member} out of range")));
        }
        if states.len() % d != 0 || actions.len() != states.len() / d * m || mean_delta.len() != states.len() || log_var.len() != states.len() {
            return Err(Error::invalid("batch shapes do not match the simulator dimensions"));
        }
        let mut var = vec![0.0; d];
        for r in 0..states.len() / d {
            let s = &states[r * d..(r + 1) * d];
            let mu = &mut mean_delta[r * d..(r + 1) * d];
            self.sim.moments(s, &actions[r * m..(r + 1) * m], mu, &mut var);
            for j in 0..d {
                mu[j] -= s[j];
                log_var[r * d + j] = var[j].max(GROUND_TRUTH_VAR_FLOOR).ln();
            }
        }
        Ok(())
    }

    fn sample_next(&self, state: &[f64], action: &[f64], _mean_delta: &[f64], _log_var: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        self.sim.sample(state, action, rng, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{propagate, PropagationMode};
    use crate::envs::{BridgeMazeConfig, BridgeMazeSim, IntegratorConfig, IntegratorSim};
    use crate::rng::rng_from_seed;
    use crate::uncertainty::{aleatoric_variance, epistemic_disagreement};
    use ndarray::Array2;

    #[test]
    fn identical_members_never_disagree() {
        let sim = IntegratorSim {
            config: IntegratorConfig {
                noise_var: [0.0, 0.0],
                ..Default::default()
            },
        };
        let gt = GroundTruthEnsemble::new(sim, 5).unwrap();
        let actions = Array2::from_elem((12, 2), 1.0);
        let bundle = propagate(&gt, &[0.0, 0.8, 0.1], &actions, 20, &mut rng_from_seed(0), PropagationMode::Sample).unwrap();
        assert!(epistemic_disagreement(&bundle).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wind_zone_shows_up_as_aleatoric_variance() {
        let cfg = BridgeMazeConfig::default();
        let wind_var = (0.1 * cfg.wind_max).powi(2) / 3.0;
        let gt = GroundTruthEnsemble::new(BridgeMazeSim { config: cfg }, 5).unwrap();
        let actions = Array2::from_elem((3, 2), 0.0);
        let inside = propagate(&gt, &[0.0, 0.0, 0.0, 0.0], &actions, 10, &mut rng_from_seed(1), PropagationMode::Sample).unwrap();
        let outside = propagate(&gt, &[0.0, -6.0, 0.0, 0.0], &actions, 10, &mut rng_from_seed(1), PropagationMode::Sample).unwrap();
        let a_in = aleatoric_variance(&inside);
        let a_out = aleatoric_variance(&outside);
        assert!((a_in[[0, 3]] - wind_var).abs() < 1e-12);
        assert!(a_out.iter().all(|&v| v <= GROUND_TRUTH_VAR_FLOOR * 1.0001));
    }

    #[test]
    fn rejects_bad_shapes() {
        let gt = GroundTruthEnsemble::new(IntegratorSim { config: IntegratorConfig::default() }, 2).unwrap();
        let mut mu = [0.0; 3];
        let mut lv = [0.0; 3];
        assert!(gt.predict(0, &[0.0; 3], &[0.0; 3], &mut mu, &mut lv).is_err());
        assert!(gt.predict(2, &[0.0; 3], &[0.0; 2], &mut mu, &mut lv).is_err());
        assert!(GroundTruthEnsemble::new(IntegratorSim { config: IntegratorConfig::default() }, 0).is_err());
    }
}
