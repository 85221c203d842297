//! Dense feed-forward network with SiLU hidden activations and a linear
//! output layer, stored as one flat parameter vector.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs. Its weights are
//! stored input-major (`w[i * out + j]`) followed by `out` biases, so a batch
//! of rows goes through each layer as one row-major matrix product.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
pub(crate) fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations cached by [`Mlp::forward_cached`] for backpropagation.
#[derive(Debug, Default)]
pub struct ForwardCache {
    rows: usize,
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Mlp {
    /// Truncated-normal weights (two standard deviations, std `1/sqrt(fan_in)`)
    /// and zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs at least an input and output size");
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        break z;
                    }
                };
                params.push(std * z);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == Self::param_count(&sizes))
            .then_some(Self { sizes, params })
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .take(layer)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    /// Zero the weights and biases of the final layer.
    pub fn zero_output_layer(&mut self) {
        let last = self.num_layers() - 1;
        let off = self.layer_offset(last);
        self.params[off..].iter_mut().for_each(|p| *p = 0.0);
    }

    fn affine(&self, layer: usize, input: &[f64], rows: usize, out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        out.clear();
        out.reserve(rows * n_out);
        for _ in 0..rows {
            out.extend_from_slice(b);
        }
        let x = ArrayView2::from_shape((rows, n_in), input).expect("input matches layer width");
        let w = ArrayView2::from_shape((n_in, n_out), w).expect("weights match layer shape");
        let mut o = ArrayViewMut2::from_shape((rows, n_out), &mut out[..]).expect("output matches layer width");
        general_mat_mul(1.0, &x, &w, 1.0, &mut o);
    }

    /// Batched forward pass over `rows` input rows laid out row-major.
    pub fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), rows * self.input_dim());
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.num_layers() - 1;
        for layer in 0..=last {
            self.affine(layer, &cur, rows, &mut next);
            if layer < last {
                next.iter_mut().for_each(|z| *z = silu(*z));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_cached(&self, input: &[f64], rows: usize, cache: &mut ForwardCache) {
        let last = self.num_layers() - 1;
        cache.rows = rows;
        cache.inputs.clear();
        cache.pre.clear();
        cache.inputs.push(input.to_vec());
        for layer in 0..=last {
            let mut z = Vec::new();
            self.affine(layer, &cache.inputs[layer], rows, &mut z);
            if layer < last {
                let a = z.iter().map(|&v| silu(v)).collect();
                cache.pre.push(z);
                cache.inputs.push(a);
            } else {
                cache.output = z;
            }
        }
    }

    /// Accumulate parameter gradients into `grad` given `d_out`, the loss
    /// gradient w.r.t. the cached outputs.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let rows = cache.rows;
        let last = self.num_layers() - 1;
        let mut delta = d_out.to_vec();
        for layer in (0..=last).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let off = self.layer_offset(layer);
            let x = &cache.inputs[layer];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for r in 0..rows {
                    let d = &delta[r * n_out..(r + 1) * n_out];
                    for (gbj, &dj) in gb.iter_mut().zip(d) {
                        *gbj += dj;
                    }
                    let xr = &x[r * n_in..(r + 1) * n_in];
                    for (i, &xi) in xr.iter().enumerate() {
                        let g = &mut gw[i * n_out..(i + 1) * n_out];
                        for (gij, &dj) in g.iter_mut().zip(d) {
                            *gij += xi * dj;
                        }
                    }
                }
            }
            if layer == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let pre = &cache.pre[layer - 1];
            let mut prev = vec![0.0; rows * n_in];
            for r in 0..rows {
                let d = &delta[r * n_out..(r + 1) * n_out];
                for i in 0..n_in {
                    let wi = &w[i * n_out..(i + 1) * n_out];
                    let s: f64 = wi.iter().zip(d).map(|(a, b)| a * b).sum();
                    prev[r * n_in + i] = s * silu_grad(pre[r * n_in + i]);
                }
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn init_is_truncated_with_zero_biases() {
        let mut rng = rng_from_seed(1);
        let net = Mlp::new(&[4, 16, 3], &mut rng);
        assert_eq!(net.params().len(), 4 * 16 + 16 + 16 * 3 + 3);
        let w0 = &net.params()[..64];
        assert!(w0.iter().all(|w| w.abs() <= 2.0 / 2.0 + 1e-12));
        assert!(net.params()[64..80].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batched_forward_matches_row_by_row() {
        let mut rng = rng_from_seed(2);
        let net = Mlp::new(&[3, 8, 8, 2], &mut rng);
        let x = [0.1, -0.4, 2.0, 1.5, 0.0, -1.0];
        let both = net.forward(&x, 2);
        let a = net.forward(&x[..3], 1);
        let b = net.forward(&x[3..], 1);
        assert_eq!(&both[..2], &a[..]);
        assert_eq!(&both[2..], &b[..]);
    }

    #[test]
    fn silu_gradient_matches_difference_quotient() {
        for &z in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (silu(z + h) - silu(z - h)) / (2.0 * h);
            assert!((fd - silu_grad(z)).abs() < 1e-8);
        }
    }
}
