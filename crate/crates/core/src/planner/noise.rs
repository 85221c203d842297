//! Power-law ("colored") noise sequences synthesized in the frequency domain.

use std::sync::Arc;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Reusable generator of length-`len` sequences with PSD proportional to
/// `f^-beta` and unit marginal variance.
///
/// The zero-frequency bin is kept and scaled like the lowest nonzero
/// frequency, so a sequence can carry a constant offset. Dropping it would
/// force every sample to average to zero over time, and the sampling mean
/// could then never pick up a sustained push in one direction.
pub struct ColoredNoise {
    beta: f64,
    len: usize,
    ifft: Option<Arc<dyn Fft<f64>>>,
    scales: Vec<f64>,
}

impl std::fmt::Debug for ColoredNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ColoredNoise")
            .field("beta", &self.beta)
            .field("len", &self.len)
            .finish()
    }
}

impl ColoredNoise {
    /// A length-1 sequence has no spectrum; it is only allowed for white
    /// noise, where it yields a raw standard-normal draw.
    pub fn new(beta: f64, len: usize) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("noise exponent must be >= 0, got {beta}")));
        }
        if len == 0 || (len < 2 && beta > 0.0) {
            return Err(Error::invalid("colored noise needs a sequence length of at least 2"));
        }
        if len == 1 {
            return Ok(Self {
                beta,
                len,
                ifft: None,
                scales: Vec::new(),
            });
        }
        let ifft = FftPlanner::new().plan_fft_inverse(len);
        // rfft bin k has frequency k / len; bin 0 borrows the scale of bin 1
        let mut scales: Vec<f64> = (0..=len / 2).map(|k| (k.max(1) as f64 / len as f64).powf(-beta / 2.0)).collect();
        // DC and (even-length) Nyquist bins are real, the others complex
        let mut var = scales[0] * scales[0];
        for (k, s) in scales.iter().enumerate().skip(1) {
            var += if 2 * k == len { s * s } else { 4.0 * s * s };
        }
        let norm = len as f64 * var.sqrt().recip();
        scales.iter_mut().for_each(|s| *s *= norm);
        Ok(Self {
            beta,
            len,
            ifft: Some(ifft),
            scales,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// One sequence.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let Some(ifft) = &self.ifft else {
            return vec![StandardNormal.sample(rng)];
        };
        let n = self.len;
        let mut spec = vec![Complex::new(0.0, 0.0); n];
        let dc: f64 = StandardNormal.sample(rng);
        spec[0] = Complex::new(dc * self.scales[0], 0.0);
        for (k, &s) in self.scales.iter().enumerate().skip(1) {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            // the Nyquist bin of an even-length real signal is real
            let c = if 2 * k == n { Complex::new(re * s, 0.0) } else { Complex::new(re * s, im * s) };
            spec[k] = c;
            if 2 * k != n {
                spec[n - k] = c.conj();
            }
        }
        ifft.process(&mut spec);
        spec.iter().map(|c| c.re / n as f64).collect()
    }

    /// `(len, dims)` array with an independent sequence per column.
    pub fn sample_matrix(&self, dims: usize, rng: &mut SimRng) -> Array2<f64> {
        let mut out = Array2::zeros((self.len, dims));
        for j in 0..dims {
            let seq = self.sample(rng);
            for (t, v) in seq.into_iter().enumerate() {
                out[[t, j]] = v;
            }
        }
        out
    }
}

/// `(horizon, dims)` colored noise with exponent `beta`.
pub fn colored_noise(beta: f64, horizon: usize, dims: usize, rng: &mut SimRng) -> Result<Array2<f64>> {
    Ok(ColoredNoise::new(beta, horizon)?.sample_matrix(dims, rng))
}

/// Least-squares slope of the log-log periodogram of `x`, over all nonzero
/// frequencies below Nyquist.
pub fn psd_log_slope(x: &[f64]) -> f64 {
    let n = x.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let pts: Vec<(f64, f64)> = (1..n / 2)
        .map(|k| ((k as f64 / n as f64).ln(), buf[k].norm_sqr().ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn unit_marginal_variance() {
        let mut rng = rng_from_seed(3);
        for &beta in &[0.0, 0.25, 2.0, 3.0] {
            let gen = ColoredNoise::new(beta, 30).unwrap();
            let n = 20_000;
            let mut sq = vec![0.0; 30];
            for _ in 0..n {
                for (acc, v) in sq.iter_mut().zip(gen.sample(&mut rng)) {
                    *acc += v * v;
                }
            }
            // E[y^2] = 1 with sampling sd sqrt(2 / n) for a Gaussian
            let tol = 4.0 * (2.0 / n as f64).sqrt();
            for (t, acc) in sq.iter().enumerate() {
                assert!((acc / n as f64 - 1.0).abs() < tol, "beta {beta} t {t}: {}", acc / n as f64);
            }
        }
    }

    #[test]
    fn sequences_can_carry_an_offset() {
        let gen = ColoredNoise::new(2.0, 30).unwrap();
        let mut rng = rng_from_seed(6);
        let means: Vec<f64> = (0..200).map(|_| gen.sample(&mut rng).iter().sum::<f64>() / 30.0).collect();
        let spread = means.iter().map(|m| m * m).sum::<f64>() / 200.0;
        assert!(spread > 0.1, "{spread}");
    }

    #[test]
    fn white_noise_has_no_lag_one_correlation() {
        let mut rng = rng_from_seed(9);
        let gen = ColoredNoise::new(0.0, 1000).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..100 {
            let x = gen.sample(&mut rng);
            assert_eq!(x.len(), 1000);
            num += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
            den += x.iter().map(|v| v * v).sum::<f64>();
        }
        assert!((num / den).abs() < 0.05, "{}", num / den);
    }

    #[test]
    fn spectral_slope_tracks_beta() {
        let mut rng = rng_from_seed(1);
        for &beta in &[1.0, 2.0] {
            let x = ColoredNoise::new(beta, 1 << 14).unwrap().sample(&mut rng);
            let slope = psd_log_slope(&x);
            assert!((slope + beta).abs() < 0.3, "beta {beta}: slope {slope}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ColoredNoise::new(-0.5, 10).is_err());
        assert!(ColoredNoise::new(2.0, 1).is_err());
        assert!(ColoredNoise::new(0.0, 0).is_err());
        assert_eq!(ColoredNoise::new(0.0, 1).unwrap().sample(&mut rng_from_seed(0)).len(), 1);
    }

    #[test]
    fn reproducible_given_seed() {
        let a = colored_noise(2.0, 16, 2, &mut rng_from_seed(4)).unwrap();
        let b = colored_noise(2.0, 16, 2, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
    }
}
