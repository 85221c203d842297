//! Chance constraints on axis-aligned boxes.
//!
//! Each predicted time slice is moment-matched by a diagonal Gaussian, and the
//! probability of being inside the box is the product of per-dimension interval
//! masses. Products are accumulated in log space so that tiny but nonzero
//! probabilities still compare correctly against `delta = 0`.

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleBundle;
use crate::error::{Error, Result};

/// Lower bound on moment-matched standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Violation set: the inside of a box over some of the state dimensions.
/// Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    intervals: Vec<Option<(f64, f64)>>,
}

impl BoxConstraint {
    pub fn new(intervals: Vec<Option<(f64, f64)>>) -> Result<Self> {
        if intervals.iter().all(Option::is_none) {
            return Err(Error::invalid("box constraint needs at least one constrained dimension"));
        }
        for (i, iv) in intervals.iter().enumerate() {
            if let Some((a, b)) = iv {
                if a.is_nan() || b.is_nan() || !(a < b) {
                    return Err(Error::invalid(format!("dimension {i}: need a < b, got [{a}, {b}]")));
                }
            }
        }
        Ok(Self { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Option<(f64, f64)>] {
        &self.intervals
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(state)
            .all(|(iv, &x)| iv.is_none_or(|(a, b)| a <= x && x <= b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    pub enabled: bool,
    pub delta: f64,
    pub c_max: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            delta: 0.0,
            c_max: 1e6,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid("delta must lie in [0, 1]"));
        }
        if !(self.c_max > 0.0 && self.c_max.is_finite()) {
            return Err(Error::invalid("c_max must be positive and finite"));
        }
        Ok(())
    }

    /// Weight of the safety term: `c_max` when enabled, else 0.
    pub fn weight(&self) -> f64 {
        if self.enabled {
            self.c_max
        } else {
            0.0
        }
    }
}

/// Diagonal Gaussian fitted to one time slice of particles.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Sample mean and Bessel-corrected standard deviation of each particle slice
/// `t = 1..=H`, per dimension.
pub fn moment_match(bundle: &ParticleBundle) -> Result<Vec<SliceGaussian>> {
    let b = bundle.num_particles();
    if b < 2 {
        return Err(Error::invalid("moment matching needs at least two particles"));
    }
    let d = bundle.state_dim();
    let slices = (1..=bundle.horizon())
        .map(|t| {
            let mut mu = vec![0.0; d];
            let mut sigma = vec![0.0; d];
            for i in 0..d {
                let xs = bundle.particles.slice(ndarray::s![t, .., i]);
                let mean = xs.sum() / b as f64;
                let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
                mu[i] = mean;
                sigma[i] = (ss / (b - 1) as f64).sqrt().max(SIGMA_FLOOR);
            }
            SliceGaussian { mu, sigma }
        })
        .collect();
    Ok(slices)
}

/// Upper-tail probability `P(Z > z)` of a standard normal.
#[inline]
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    upper_tail(-z)
}

/// `P(a <= X <= b)` for `X ~ N(mu, sigma^2)`, evaluated on the side of the
/// distribution that avoids cancellation.
pub fn interval_mass(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let za = (a - mu) / sigma;
    let zb = (b - mu) / sigma;
    let m = if za >= 0.0 {
        upper_tail(za) - upper_tail(zb)
    } else if zb <= 0.0 {
        upper_tail(-zb) - upper_tail(-za)
    } else {
        1.0 - upper_tail(-za) - upper_tail(zb)
    };
    m.clamp(0.0, 1.0)
}

/// Natural log of the violation probability; `-inf` when some dimension's
/// mass underflows to zero.
pub fn violation_log_probability(g: &SliceGaussian, bx: &BoxConstraint) -> f64 {
    bx.intervals
        .iter()
        .enumerate()
        .filter_map(|(i, iv)| iv.map(|(a, b)| interval_mass(a, b, g.mu[i], g.sigma[i].max(SIGMA_FLOOR))))
        .map(f64::ln)
        .sum()
}

pub fn violation_probability(g: &SliceGaussian, bx: &BoxConstraint) -> f64 {
    violation_log_probability(g, bx).exp().clamp(0.0, 1.0)
}

/// Number of slices whose violation probability strictly exceeds `delta`.
pub fn violating_slices(slices: &[SliceGaussian], bx: &BoxConstraint, delta: f64) -> usize {
    let log_delta = delta.ln();
    slices
        .iter()
        .filter(|g| {
            let lp = violation_log_probability(g, bx);
            // compare in log space; p > 1 is impossible, so delta = 1 never triggers
            lp > log_delta && delta < 1.0
        })
        .count()
}

/// `w_safety` times the number of violating slices.
pub fn safety_cost(bundle: &ParticleBundle, bx: &BoxConstraint, cfg: &SafetyConfig) -> Result<f64> {
    cfg.validate()?;
    if bx.dim() != bundle.state_dim() {
        return Err(Error::invalid("box dimension does not match the state dimension"));
    }
    if !cfg.enabled {
        return Ok(0.0);
    }
    let slices = moment_match(bundle)?;
    Ok(cfg.weight() * violating_slices(&slices, bx, cfg.delta) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    fn particle_bundle(particles: Array3<f64>) -> ParticleBundle {
        let (hp1, b, d) = particles.dim();
        let h = hp1 - 1;
        ParticleBundle {
            particles,
            mean_paths: Array3::zeros((hp1, 1, d)),
            assignment: Array2::zeros((h, b)),
            particle_mean_delta: Array3::zeros((h, b, d)),
            particle_log_var: Array3::zeros((h, b, d)),
            mean_path_mean_delta: Array3::zeros((h, 1, d)),
            mean_path_log_var: Array3::zeros((h, 1, d)),
        }
    }

    fn g1(mu: f64, sigma: f64) -> SliceGaussian {
        SliceGaussian {
            mu: vec![mu],
            sigma: vec![sigma],
        }
    }

    #[test]
    fn degenerate_slice_floors_sigma() {
        let b = particle_bundle(Array3::from_elem((2, 4, 1), 3.5));
        let s = moment_match(&b).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mu, vec![3.5]);
        assert_eq!(s[0].sigma, vec![SIGMA_FLOOR]);
    }

    #[test]
    fn bessel_corrected_two_particles() {
        let mut p = Array3::zeros((2, 2, 2));
        p[[1, 0, 0]] = 0.0;
        p[[1, 1, 0]] = 2.0;
        p[[1, 0, 1]] = 5.0;
        p[[1, 1, 1]] = 7.0;
        let s = moment_match(&particle_bundle(p)).unwrap();
        assert!((s[0].mu[0] - 1.0).abs() < 1e-15);
        assert!((s[0].sigma[0] - 2f64.sqrt()).abs() < 1e-15);
        // dims matched independently
        assert!((s[0].mu[1] - 6.0).abs() < 1e-15);
        assert!((s[0].sigma[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn moment_match_needs_two_particles() {
        let b = particle_bundle(Array3::zeros((2, 1, 1)));
        assert!(matches!(moment_match(&b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn closed_form_probabilities() {
        let bx = BoxConstraint::new(vec![Some((-1.0, 1.0))]).unwrap();
        let p = violation_probability(&g1(1.0, 1.0), &bx);
        let expect = 0.5 - 0.022_750_131_948_179_2;
        assert!((p - expect).abs() < 1e-6, "{p}");
        assert!((p - 0.47725).abs() < 1e-5);
        let center = violation_probability(&g1(0.0, SIGMA_FLOOR), &bx);
        assert!(center >= 1.0 - 1e-9);
        let bx2 = BoxConstraint::new(vec![Some((0.0, f64::INFINITY)), Some((f64::NEG_INFINITY, 2.0))]).unwrap();
        let g = SliceGaussian {
            mu: vec![0.0, 2.0],
            sigma: vec![1.0, 3.0],
        };
        assert!((violation_probability(&g, &bx2) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn box_validation() {
        assert!(BoxConstraint::new(vec![None, None]).is_err());
        assert!(BoxConstraint::new(vec![Some((1.0, 1.0))]).is_err());
        assert!(BoxConstraint::new(vec![Some((2.0, 1.0))]).is_err());
        assert!(BoxConstraint::new(vec![None, Some((0.3, f64::INFINITY))]).is_ok());
    }

    #[test]
    fn tiny_probabilities_still_exceed_zero_delta() {
        // two dims each with mass ~1e-200: the product underflows but its log does not
        let sigma = 1.0;
        let z = 30.0;
        let bx = BoxConstraint::new(vec![Some((z, f64::INFINITY)), Some((z, f64::INFINITY))]).unwrap();
        let g = SliceGaussian {
            mu: vec![0.0, 0.0],
            sigma: vec![sigma, sigma],
        };
        assert_eq!(violation_probability(&g, &bx), 0.0);
        assert!(violation_log_probability(&g, &bx).is_finite());
        assert_eq!(violating_slices(&[g.clone()], &bx, 0.0), 1);
        assert_eq!(violating_slices(&[g], &bx, 1e-300), 0);
    }

    fn safety_setup(probs_above: &[bool]) -> (ParticleBundle, BoxConstraint) {
        // slices at x = +-0.5 straddle a box [0, inf) with mass 1/2; slices at
        // x = -100 have negligible mass
        let h = probs_above.len();
        let mut p = Array3::zeros((h + 1, 2, 1));
        for (t, &above) in probs_above.iter().enumerate() {
            if above {
                p[[t + 1, 0, 0]] = -0.5;
                p[[t + 1, 1, 0]] = 0.5;
            } else {
                p[[t + 1, 0, 0]] = -100.0;
                p[[t + 1, 1, 0]] = -100.0;
            }
        }
        (particle_bundle(p), BoxConstraint::new(vec![Some((0.0, f64::INFINITY))]).unwrap())
    }

    #[test]
    fn safety_cost_counts_violating_slices() {
        let (b, bx) = safety_setup(&[false, true, false, true, false]);
        let cfg = SafetyConfig {
            enabled: true,
            delta: 0.1,
            c_max: 1e6,
        };
        assert_eq!(safety_cost(&b, &bx, &cfg).unwrap(), 2e6);
        let off = SafetyConfig { enabled: false, ..cfg };
        assert_eq!(safety_cost(&b, &bx, &off).unwrap(), 0.0);
        let all_ok = SafetyConfig { delta: 0.6, ..cfg };
        assert_eq!(safety_cost(&b, &bx, &all_ok).unwrap(), 0.0);
        let one = SafetyConfig { delta: 1.0, ..cfg };
        let (b1, _) = safety_setup(&[true, true]);
        assert_eq!(safety_cost(&b1, &bx, &one).unwrap(), 0.0);
    }

    #[test]
    fn safety_config_validation() {
        let bad = SafetyConfig {
            enabled: true,
            delta: 1.5,
            c_max: 1.0,
        };
        assert!(bad.validate().is_err());
        let bad = SafetyConfig {
            enabled: true,
            delta: 0.5,
            c_max: 0.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn widening_sigma_at_center_decreases_probability() {
        let bx = BoxConstraint::new(vec![Some((-1.0, 1.0))]).unwrap();
        let mut prev = violation_probability(&g1(0.0, 1.0), &bx);
        for k in 1..20 {
            let p = violation_probability(&g1(0.0, 1.0 + 0.25 * k as f64), &bx);
            assert!(p < prev);
            prev = p;
        }
    }

    proptest! {
        #[test]
        fn probability_in_unit_interval_and_monotone_in_box(
            mu in -5.0f64..5.0,
            sigma in 1e-3f64..5.0,
            a in -5.0f64..5.0,
            w in 0.01f64..5.0,
            grow_a in 0.0f64..3.0,
            grow_b in 0.0f64..3.0,
        ) {
            let small = BoxConstraint::new(vec![Some((a, a + w))]).unwrap();
            let big = BoxConstraint::new(vec![Some((a - grow_a, a + w + grow_b))]).unwrap();
            let g = g1(mu, sigma);
            let p = violation_probability(&g, &small);
            let q = violation_probability(&g, &big);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(q >= p - 1e-15);
        }

        #[test]
        fn larger_delta_never_increases_cost(
            xs in proptest::collection::vec(-2.0f64..2.0, 12),
            d1 in 0.0f64..1.0,
            d2 in 0.0f64..1.0,
        ) {
            let p = Array3::from_shape_vec((4, 3, 1), xs).unwrap();
            let b = particle_bundle(p);
            let bx = BoxConstraint::new(vec![Some((0.0, 1.0))]).unwrap();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let c = |delta| safety_cost(&b, &bx, &SafetyConfig { enabled: true, delta, c_max: 10.0 }).unwrap();
            prop_assert!(c(hi) <= c(lo));
        }
    }
}
