//! Aleatoric and epistemic uncertainty of a propagated action sequence.
//!
//! Aleatoric uncertainty is read off the variances the model predicts for the
//! sampled particles; epistemic uncertainty is the spread of the members'
//! Gaussian outputs along their own mean paths.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleBundle;
use crate::error::{Error, Result};

/// Variances below this are floored before taking logarithms.
pub const ENTROPY_VAR_FLOOR: f64 = 1e-12;

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    /// `(H, d)` mean predicted particle variance per step.
    pub aleatoric_var: Array2<f64>,
    /// `(H,)` mean differential entropy of the particle Gaussians per step.
    pub aleatoric_entropy: Array1<f64>,
    /// `(H, d)` ensemble disagreement per step.
    pub epistemic_var: Array2<f64>,
}

impl UncertaintyReport {
    pub fn from_bundle(bundle: &ParticleBundle) -> Self {
        Self {
            aleatoric_var: aleatoric_variance(bundle),
            aleatoric_entropy: aleatoric_entropy(bundle),
            epistemic_var: epistemic_disagreement(bundle),
        }
    }

    pub fn horizon(&self) -> usize {
        self.aleatoric_var.nrows()
    }
}

/// Which aleatoric measure the penalty is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleatoricMeasure {
    #[default]
    Variance,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_aleatoric: f64,
    pub w_epistemic: f64,
    /// Either 0 (safety off) or the configured `c_max`.
    pub w_safety: f64,
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_aleatoric < 0.0 || self.w_epistemic < 0.0 || self.w_safety < 0.0 {
            return Err(Error::invalid("cost weights must be nonnegative"));
        }
        if !(self.w_aleatoric.is_finite() && self.w_epistemic.is_finite() && self.w_safety.is_finite()) {
            return Err(Error::invalid("cost weights must be finite"));
        }
        Ok(())
    }
}

pub fn aleatoric_variance(bundle: &ParticleBundle) -> Array2<f64> {
    bundle
        .particle_log_var
        .mapv(f64::exp)
        .mean_axis(Axis(1))
        .expect("bundle has at least one particle")
}

pub fn aleatoric_entropy(bundle: &ParticleBundle) -> Array1<f64> {
    let per_particle = bundle
        .particle_log_var
        .mapv(|lv| 0.5 * (LN_2PI_E + lv.exp().max(ENTROPY_VAR_FLOOR).ln()))
        .sum_axis(Axis(2));
    per_particle.mean_axis(Axis(1)).expect("bundle has at least one particle")
}

/// Population variance over members of the predicted next-state means plus
/// population variance over members of the predicted variances. Zero for a
/// single-member ensemble.
pub fn epistemic_disagreement(bundle: &ParticleBundle) -> Array2<f64> {
    let h = bundle.horizon();
    let k = bundle.ensemble_size();
    let d = bundle.state_dim();
    let mut out = Array2::zeros((h, d));
    if k < 2 {
        return out;
    }
    let mut means = vec![0.0; k];
    let mut vars = vec![0.0; k];
    for t in 0..h {
        for i in 0..d {
            for j in 0..k {
                means[j] = bundle.mean_paths[[t, j, i]] + bundle.mean_path_mean_delta[[t, j, i]];
                vars[j] = bundle.mean_path_log_var[[t, j, i]].exp();
            }
            out[[t, i]] = population_variance(&means) + population_variance(&vars);
        }
    }
    out
}

fn population_variance(xs: &[f64]) -> f64 {
    // exact zero for identical values, which the mean below can miss by an ulp
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `(aleatoric_penalty, epistemic_bonus)`: per-dimension standard deviations
/// summed over dimensions and time, weighted; the bonus is nonpositive.
pub fn uncertainty_costs(report: &UncertaintyReport, weights: &CostWeights) -> Result<(f64, f64)> {
    weights.validate()?;
    if report.horizon() == 0 {
        return Err(Error::invalid("uncertainty report has an empty horizon"));
    }
    let penalty = weights.w_aleatoric * report.aleatoric_var.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>();
    let bonus = -weights.w_epistemic * report.epistemic_var.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>();
    Ok((penalty, bonus))
}

/// Entropy-form aleatoric penalty: `w_aleatoric` times the summed per-step
/// expected entropy.
pub fn aleatoric_entropy_penalty(report: &UncertaintyReport, weights: &CostWeights) -> Result<f64> {
    weights.validate()?;
    Ok(weights.w_aleatoric * report.aleatoric_entropy.sum())
}
