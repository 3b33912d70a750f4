use serde::{Deserialize, Serialize};

use super::array::Array;
use super::linalg::{add_col_sums, gemm, matvec, Trans};
use super::ops::GaussianParams;
use super::params::{join, uniform_init, ParamSet};
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array,
    pub bias: Array,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut RngStream) -> Self {
        Linear {
            weight: uniform_init(&[output, input], input, rng),
            bias: Array::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array::zeros(&[output, input]),
            bias: Array::zeros(&[output]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut l = Linear::zeros(n, n);
        for i in 0..n {
            l.weight.data_mut()[i * n + i] = 1.0;
        }
        l
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "linear layer expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut y = matvec(self.weight.data(), self.output_dim(), self.input_dim(), x);
        for (v, b) in y.iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        Ok(y)
    }

    /// Row-batched forward: `x` is `n x in`, result is `n x out`.
    pub fn forward_batch(&self, x: &Array) -> Array {
        let n = x.rows();
        let (i, o) = (self.input_dim(), self.output_dim());
        debug_assert_eq!(x.cols(), i);
        let mut y = Vec::with_capacity(n * o);
        for _ in 0..n {
            y.extend_from_slice(self.bias.data());
        }
        gemm(n, i, o, 1.0, x.data(), Trans::No, self.weight.data(), Trans::Yes, 1.0, &mut y);
        Array::matrix(n, o, y)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward_batch(&self, x: &Array, dy: &Array, grad: &mut Linear) -> Array {
        let n = x.rows();
        let (i, o) = (self.input_dim(), self.output_dim());
        gemm(o, n, i, 1.0, dy.data(), Trans::Yes, x.data(), Trans::No, 1.0, grad.weight.data_mut());
        add_col_sums(dy.data(), n, o, grad.bias.data_mut());
        let mut dx = vec![0.0; n * i];
        gemm(n, o, i, 1.0, dy.data(), Trans::No, self.weight.data(), Trans::No, 0.0, &mut dx);
        Array::matrix(n, i, dx)
    }

    /// Like `backward_batch` without computing `dL/dx`.
    pub fn backward_params(&self, x: &Array, dy: &Array, grad: &mut Linear) {
        let n = x.rows();
        let (i, o) = (self.input_dim(), self.output_dim());
        gemm(o, n, i, 1.0, dy.data(), Trans::Yes, x.data(), Trans::No, 1.0, grad.weight.data_mut());
        add_col_sums(dy.data(), n, o, grad.bias.data_mut());
    }
}

impl ParamSet for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Stack of affine layers with `activation` applied between (not after) them.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Per-layer inputs recorded by a batched forward pass.
#[derive(Debug)]
pub struct FeedForwardTrace {
    inputs: Vec<Array>,
}

impl FeedForward {
    /// `dims = [in, hidden.., out]`.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut RngStream) -> Self {
        assert!(dims.len() >= 2, "feedforward needs at least one layer");
        FeedForward {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            activation,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::output_dim).unwrap_or(0)
    }

    fn activate(&self, v: &mut [f64]) {
        if self.activation == Activation::Relu {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                self.activate(&mut h);
            }
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: Array) -> (Array, FeedForwardTrace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward_batch(&h);
            if i + 1 < self.layers.len() {
                self.activate(next.data_mut());
            }
            inputs.push(h);
            h = next;
        }
        (h, FeedForwardTrace { inputs })
    }

    pub fn backward_batch(&self, trace: &FeedForwardTrace, dout: Array, grad: &mut FeedForward) -> Array {
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let x = &trace.inputs[i];
            let mut dx = self.layers[i].backward_batch(x, &d, &mut grad.layers[i]);
            if i > 0 && self.activation == Activation::Relu {
                // x is the post-ReLU output of the previous layer.
                for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if *v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            d = dx;
        }
        d
    }
}

impl ParamSet for FeedForward {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// Runs `params` on a single input vector.
pub fn feedforward(input: &[f64], params: &FeedForward) -> Result<Array> {
    params.forward(input).map(Array::vector)
}

/// Runs `params` and splits the `2d` output into a diagonal Gaussian.
pub fn feedforward_gaussian(input: &[f64], params: &FeedForward) -> Result<GaussianParams> {
    GaussianParams::from_head(&params.forward(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{finite_difference, relative_error};

    #[test]
    fn zero_final_layer_gives_standard_gaussian() {
        let mut rng = RngStream::new(1, 0);
        let mut ff = FeedForward::new(&[5, 7, 6], Activation::Relu, &mut rng);
        *ff.layers.last_mut().unwrap() = Linear::zeros(7, 6);
        let g = feedforward_gaussian(&[0.3, -1.0, 2.0, 0.1, 0.0], &ff).unwrap();
        assert_eq!(g, GaussianParams::standard(3));
    }

    #[test]
    fn identity_layer_without_activation_is_identity() {
        let ff = FeedForward {
            layers: vec![Linear::identity(4)],
            activation: Activation::None,
        };
        let x = [0.5, -2.0, 3.25, 0.0];
        assert_eq!(feedforward(&x, &ff).unwrap().data(), &x);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = RngStream::new(1, 0);
        let ff = FeedForward::new(&[3, 2], Activation::Relu, &mut rng);
        assert!(ff.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = RngStream::new(2, 0);
        let ff = FeedForward::new(&[4, 6, 3], Activation::Relu, &mut rng);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| rng.normals(4)).collect();
        let x = Array::matrix(3, 4, rows.concat());
        let (y, _) = ff.forward_batch(x);
        for (r, row) in rows.iter().enumerate() {
            let single = ff.forward(row).unwrap();
            for (a, b) in y.row(r).iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(3, 0);
        let ff = FeedForward::new(&[4, 5, 3], Activation::Relu, &mut rng);
        let x: Vec<f64> = rng.normals(8);
        let w: Vec<f64> = rng.normals(6);
        // Loss: weighted sum of outputs over a batch of two rows.
        let loss = |net: &FeedForward, x: &[f64]| -> f64 {
            let (y, _) = net.forward_batch(Array::matrix(2, 4, x.to_vec()));
            y.data().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, trace) = ff.forward_batch(Array::matrix(2, 4, x.clone()));
        let mut grad = ff.zeros_like();
        let dx = ff.backward_batch(&trace, Array::matrix(2, 3, w.clone()), &mut grad);

        let fd = finite_difference(&ff, |p| loss(p, &x));
        for ((name, a), (_, f)) in grad.arrays().iter().zip(fd.arrays()) {
            let err = relative_error(a.data(), f.data());
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
        let mut xs = Array::vector(x.clone());
        let fdx = finite_difference(&xs, |v| loss(&ff, v.data()));
        xs = dx;
        assert!(relative_error(xs.data(), fdx.data()) < 1e-4);
    }
}
