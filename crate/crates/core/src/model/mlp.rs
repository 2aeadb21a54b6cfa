use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected network with a linear output layer.
///
/// All parameters live in one flat vector; layer `l` stores its
/// `out × in` weight matrix row-major followed by its `out` biases. The first
/// layer may be built without biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "yes")]
    pub first_layer_bias: bool,
    pub seed: u64,
    /// Empty means "not yet initialized" in hand-written descriptions.
    #[serde(default)]
    pub params: Vec<f64>,
}

fn yes() -> bool {
    true
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("at least the input")
    }
}

impl Mlp {
    /// Glorot-normal weights (He-normal for ReLU), zero biases.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Self {
        Self::build(widths, activation, seed, true)
    }

    pub fn without_first_layer_bias(widths: &[usize], activation: Activation, seed: u64) -> Self {
        Self::build(widths, activation, seed, false)
    }

    fn build(widths: &[usize], activation: Activation, seed: u64, first_layer_bias: bool) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let mut m = Self { widths: widths.to_vec(), activation, first_layer_bias, seed, params: Vec::new() };
        m.params = vec![0.0; m.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..m.widths.len() - 1 {
            let (n_in, n_out) = (m.widths[l], m.widths[l + 1]);
            let std = match activation {
                Activation::Relu if l + 2 < m.widths.len() => (2.0 / n_in as f64).sqrt(),
                _ => (2.0 / (n_in + n_out) as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            let off = m.layer_offset(l);
            for w in &mut m.params[off..off + n_in * n_out] {
                *w = normal.sample(&mut rng);
            }
        }
        m
    }

    /// All weights and biases zero.
    pub fn zeros(widths: &[usize], activation: Activation) -> Self {
        let mut m = Self::new(widths, activation, 0);
        m.params.iter_mut().for_each(|p| *p = 0.0);
        m
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn has_bias(&self, l: usize) -> bool {
        l > 0 || self.first_layer_bias
    }

    fn layer_size(&self, l: usize) -> usize {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        n_in * n_out + if self.has_bias(l) { n_out } else { 0 }
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_size(k)).sum()
    }

    pub fn num_params(&self) -> usize {
        (0..self.num_layers()).map(|l| self.layer_size(l)).sum()
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("nonempty widths")
    }

    /// Bias vector of the output layer.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let l = self.num_layers() - 1;
        let off = self.layer_offset(l) + self.widths[l] * self.widths[l + 1];
        let n = self.widths[l + 1];
        &mut self.params[off..off + n]
    }

    /// Weight matrix of the output layer, row-major `out × in`.
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let l = self.num_layers() - 1;
        let off = self.layer_offset(l);
        let n = self.widths[l] * self.widths[l + 1];
        &mut self.params[off..off + n]
    }

    fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let off = self.layer_offset(l);
        ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out]).expect("layer shape")
    }

    fn bias(&self, l: usize) -> Option<&[f64]> {
        if !self.has_bias(l) {
            return None;
        }
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let off = self.layer_offset(l) + n_in * n_out;
        Some(&self.params[off..off + n_out])
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_owned());
        for l in 0..self.num_layers() {
            let mut z = acts[l].dot(&self.weights(l).t());
            if let Some(b) = self.bias(l) {
                for mut row in z.axis_iter_mut(Axis(0)) {
                    for (v, bj) in row.iter_mut().zip(b) {
                        *v += bj;
                    }
                }
            }
            if l + 1 < self.num_layers() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        ForwardCache { acts }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_cached(x).acts.pop().expect("output layer")
    }

    /// Backpropagate `d_out` (gradient of the loss with respect to the
    /// network output). Parameter gradients are accumulated into `grad`; the
    /// gradient with respect to the input is returned.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>, grad: &mut [f64]) -> Array2<f64> {
        let mut delta = d_out.to_owned();
        for l in (0..self.num_layers()).rev() {
            if l + 1 < self.num_layers() {
                let act = self.activation;
                delta.zip_mut_with(&cache.acts[l + 1], |d, &a| *d *= act.derivative(a));
            }
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.layer_offset(l);
            let dw = delta.t().dot(&cache.acts[l]);
            for (g, v) in grad[off..off + n_in * n_out].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            if self.has_bias(l) {
                let db = delta.sum_axis(Axis(0));
                for (g, v) in grad[off + n_in * n_out..off + n_in * n_out + n_out].iter_mut().zip(db.iter()) {
                    *g += v;
                }
            }
            delta = delta.dot(&self.weights(l));
        }
        delta
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch { expected: self.input_width(), found: x.len() });
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.forward(view).into_raw_vec_and_offset().0)
    }

    /// Jacobian of the outputs with respect to the inputs at `x`, as
    /// `out × in`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch { expected: self.input_width(), found: x.len() });
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let cache = self.forward_cached(view);
        let mut scratch = vec![0.0; self.num_params()];
        let rows = (0..self.output_width())
            .map(|o| {
                let mut d = Array2::zeros((1, self.output_width()));
                d[[0, o]] = 1.0;
                self.backward(&cache, d.view(), &mut scratch).row(0).to_vec()
            })
            .collect();
        Ok(rows)
    }
}

/// Forward pass of a network on one input.
pub fn mlp_predict(m: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    m.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 5, 2], Activation::Sigmoid);
        assert_eq!(m.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_identity_layer() {
        let mut m = Mlp::zeros(&[2, 2], Activation::Tanh);
        m.params[0] = 1.0;
        m.params[3] = 1.0;
        assert_eq!(m.predict(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn width_mismatch() {
        let m = Mlp::new(&[2, 4, 1], Activation::Tanh, 1);
        assert!(matches!(m.predict(&[1.0]), Err(Error::WidthMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn parameter_count_and_bias_toggle() {
        let a = Mlp::new(&[3, 4, 2], Activation::Tanh, 0);
        assert_eq!(a.num_params(), 3 * 4 + 4 + 4 * 2 + 2);
        let b = Mlp::without_first_layer_bias(&[3, 4, 2], Activation::Tanh, 0);
        assert_eq!(b.num_params(), 3 * 4 + 4 * 2 + 2);
    }

    #[test]
    fn input_jacobian_matches_central_differences() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            let m = Mlp::new(&[3, 7, 7, 2], act, 9);
            let x = [0.2, -0.4, 0.9];
            let jac = m.input_jacobian(&x).unwrap();
            let h = 1e-5;
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let yp = m.predict(&xp).unwrap();
                let ym = m.predict(&xm).unwrap();
                for o in 0..2 {
                    let fd = (yp[o] - ym[o]) / (2.0 * h);
                    let rel = (fd - jac[o][i]).abs() / (fd.abs() + jac[o][i].abs()).max(1e-12);
                    assert!(rel < 1e-4, "{act:?} o={o} i={i}: {fd} vs {}", jac[o][i]);
                }
            }
        }
    }

    #[test]
    fn deterministic_init() {
        assert_eq!(Mlp::new(&[2, 3, 1], Activation::Tanh, 4), Mlp::new(&[2, 3, 1], Activation::Tanh, 4));
        assert_ne!(Mlp::new(&[2, 3, 1], Activation::Tanh, 4), Mlp::new(&[2, 3, 1], Activation::Tanh, 5));
    }
}
