//! Particle propagation with per-step ensemble mixing, plus one mean path per
//! ensemble member.
//!
//! Particles carry samples of the trajectory distribution; at every step they
//! are re-dealt to members by a uniform random permutation (each member gets
//! exactly `B / K` of them). Mean paths feed each member's mean prediction
//! back into the same member and are what epistemic disagreement is measured
//! on.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::EnsembleModel;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Anything that can act as an ensemble of one-step Gaussian predictors.
pub trait DynamicsModel {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn ensemble_size(&self) -> usize;

    /// Predict mean deltas and log-variances for a batch of rows through
    /// `member`. Output slices have the same length as `states`.
    fn predict(&self, member: usize, states: &[f64], actions: &[f64], mean_delta: &mut [f64], log_var: &mut [f64]) -> Result<()>;

    /// Draw a next state given the member's prediction for `(state, action)`.
    fn sample_next(
        &self,
        state: &[f64],
        _action: &[f64],
        mean_delta: &[f64],
        log_var: &[f64],
        rng: &mut SimRng,
        out: &mut [f64],
    ) {
        for (((o, &x), &mu), &lv) in out.iter_mut().zip(state).zip(mean_delta).zip(log_var) {
            let z: f64 = StandardNormal.sample(rng);
            *o = x + mu + (0.5 * lv).exp() * z;
        }
    }
}

impl DynamicsModel for EnsembleModel {
    fn state_dim(&self) -> usize {
        EnsembleModel::state_dim(self)
    }

    fn action_dim(&self) -> usize {
        EnsembleModel::action_dim(self)
    }

    fn ensemble_size(&self) -> usize {
        EnsembleModel::ensemble_size(self)
    }

    fn predict(&self, member: usize, states: &[f64], actions: &[f64], mean_delta: &mut [f64], log_var: &mut [f64]) -> Result<()> {
        self.predict_batch(member, states, actions, mean_delta, log_var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    /// Particles are drawn from their member's Gaussian.
    #[default]
    Sample,
    /// Particles follow their member's mean prediction.
    Mean,
}

/// Sampled particles and per-member mean paths for one action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBundle {
    /// `(H + 1, B, d)`; slice 0 is the initial state.
    pub particles: Array3<f64>,
    /// `(H + 1, K, d)`.
    pub mean_paths: Array3<f64>,
    /// `(H, B)`: the member each particle was dealt to at each step.
    pub assignment: Array2<usize>,
    /// `(H, B, d)` prediction that generated each particle step.
    pub particle_mean_delta: Array3<f64>,
    pub particle_log_var: Array3<f64>,
    /// `(H, K, d)` prediction of each member on its own mean path.
    pub mean_path_mean_delta: Array3<f64>,
    pub mean_path_log_var: Array3<f64>,
}

impl ParticleBundle {
    pub fn horizon(&self) -> usize {
        self.particles.shape()[0] - 1
    }

    pub fn num_particles(&self) -> usize {
        self.particles.shape()[1]
    }

    pub fn ensemble_size(&self) -> usize {
        self.mean_paths.shape()[1]
    }

    pub fn state_dim(&self) -> usize {
        self.particles.shape()[2]
    }
}

/// Propagate `num_particles` particles and `K` mean paths through `model`
/// along `actions` (`H` rows of `action_dim` entries).
pub fn propagate<M: DynamicsModel + ?Sized>(
    model: &M,
    initial: &[f64],
    actions: &Array2<f64>,
    num_particles: usize,
    rng: &mut SimRng,
    mode: PropagationMode,
) -> Result<ParticleBundle> {
    let d = model.state_dim();
    let m = model.action_dim();
    let k = model.ensemble_size();
    let h = actions.nrows();
    let b = num_particles;
    if h == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if initial.len() != d || actions.ncols() != m {
        return Err(Error::invalid("initial state or action sequence has the wrong dimension"));
    }
    if k == 0 || b < k || b % k != 0 {
        return Err(Error::invalid(format!(
            "particle count {b} must be a positive multiple of the ensemble size {k}"
        )));
    }

    let mut particles = Array3::zeros((h + 1, b, d));
    let mut mean_paths = Array3::zeros((h + 1, k, d));
    for p in 0..b {
        particles.slice_mut(ndarray::s![0, p, ..]).assign(&ndarray::aview1(initial));
    }
    for j in 0..k {
        mean_paths.slice_mut(ndarray::s![0, j, ..]).assign(&ndarray::aview1(initial));
    }
    let mut assignment = Array2::zeros((h, b));
    let mut p_mu = Array3::zeros((h, b, d));
    let mut p_lv = Array3::zeros((h, b, d));
    let mut m_mu = Array3::zeros((h, k, d));
    let mut m_lv = Array3::zeros((h, k, d));

    let per_member = b / k;
    let mut perm: Vec<usize> = (0..b).collect();
    let rows = per_member + 1;
    let mut in_s = vec![0.0; rows * d];
    let mut in_a = vec![0.0; rows * m];
    let mut out_mu = vec![0.0; rows * d];
    let mut out_lv = vec![0.0; rows * d];
    let mut next = vec![0.0; d];

    for t in 0..h {
        let u = actions.row(t);
        let u = u.as_slice().expect("action rows are contiguous");
        perm.shuffle(rng);
        for (slot, &p) in perm.iter().enumerate() {
            assignment[[t, p]] = slot / per_member;
        }
        for j in 0..k {
            // rows 0..per_member are this member's particles, the last row its mean path
            let owned = &perm[j * per_member..(j + 1) * per_member];
            for (r, &p) in owned.iter().enumerate() {
                for i in 0..d {
                    in_s[r * d + i] = particles[[t, p, i]];
                }
                in_a[r * m..(r + 1) * m].copy_from_slice(u);
            }
            for i in 0..d {
                in_s[per_member * d + i] = mean_paths[[t, j, i]];
            }
            in_a[per_member * m..].copy_from_slice(u);
            model.predict(j, &in_s, &in_a, &mut out_mu, &mut out_lv)?;
            for (r, &p) in owned.iter().enumerate() {
                for i in 0..d {
                    p_mu[[t, p, i]] = out_mu[r * d + i];
                    p_lv[[t, p, i]] = out_lv[r * d + i];
                }
            }
            for i in 0..d {
                let mu = out_mu[per_member * d + i];
                m_mu[[t, j, i]] = mu;
                m_lv[[t, j, i]] = out_lv[per_member * d + i];
                mean_paths[[t + 1, j, i]] = mean_paths[[t, j, i]] + mu;
            }
        }
        // sample in particle order so draws do not depend on the dealing
        let mut cur = vec![0.0; d];
        let mut mu = vec![0.0; d];
        let mut lv = vec![0.0; d];
        for p in 0..b {
            for i in 0..d {
                cur[i] = particles[[t, p, i]];
                mu[i] = p_mu[[t, p, i]];
                lv[i] = p_lv[[t, p, i]];
            }
            match mode {
                PropagationMode::Sample => model.sample_next(&cur, u, &mu, &lv, rng, &mut next),
                PropagationMode::Mean => {
                    for i in 0..d {
                        next[i] = cur[i] + mu[i];
                    }
                }
            }
            for i in 0..d {
                particles[[t + 1, p, i]] = next[i];
            }
        }
        let finite = particles.slice(ndarray::s![t + 1, .., ..]).iter().all(|v| v.is_finite())
            && mean_paths.slice(ndarray::s![t + 1, .., ..]).iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::numeric(format!("non-finite propagated state at step {}", t + 1)));
        }
    }

    Ok(ParticleBundle {
        particles,
        mean_paths,
        assignment,
        particle_mean_delta: p_mu,
        particle_log_var: p_lv,
        mean_path_mean_delta: m_mu,
        mean_path_log_var: m_lv,
    })
}
