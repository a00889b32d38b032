//! Small dense networks with exact reverse-mode gradients and Adam.
//!
//! Parameters of a network live in one flat vector. Layer `k` stores its
//! weights row-major (`out x in`) followed by its bias, so gradients and
//! optimizer moments are plain vectors of the same length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Dot product with eight independent accumulators so the loop vectorizes;
/// the summation order is fixed, so results stay reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Gradient buffer shaped exactly like a network's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients(vec![0.0; net.num_params()])
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum()
    }
}

fn num_params_for(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl DenseNet {
    /// Zero-initialised network. `activations[k]` follows layer `k`.
    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 || dims.contains(&0) {
            return Err(Error::InvalidParams(format!(
                "layer dims {dims:?} with {} activations",
                activations.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; num_params_for(dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, activations)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Builds a network from explicit parameters, checking the length.
    pub fn from_params(dims: &[usize], activations: &[Activation], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims, activations)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight slice (`out x in`, row-major) and bias slice of layer `k`.
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let offset = num_params_for(&self.dims[..=k]);
        let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (w, b)
    }

    pub fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let offset = num_params_for(&self.dims[..=k]);
        let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
        let (w, rest) = self.params[offset..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let layers = self.activations.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut x = input.to_vec();
        for (k, &act) in self.activations.iter().enumerate() {
            let (w, b) = self.layer(k);
            let n_in = self.dims[k];
            let z: Vec<f64> = b
                .iter()
                .zip(w.chunks_exact(n_in))
                .map(|(&bias, row)| bias + dot(row, &x))
                .collect();
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut x, y));
            pre.push(z);
        }
        Ok(ForwardCache { inputs, pre, output: x })
    }

    /// Accumulates parameter gradients of `grad_out . output` into `grads`
    /// and returns the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut Gradients) -> Vec<f64> {
        debug_assert_eq!(grads.0.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), self.output_dim());
        let mut delta_out = grad_out.to_vec();
        let mut offsets: Vec<usize> = self
            .dims
            .windows(2)
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();
        for k in (0..self.activations.len()).rev() {
            let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
            let act = self.activations[k];
            let z = &cache.pre[k];
            let y = if k + 1 < self.activations.len() {
                &cache.inputs[k + 1]
            } else {
                &cache.output
            };
            let delta: Vec<f64> = (0..n_out).map(|o| delta_out[o] * act.derivative(z[o], y[o])).collect();
            let offset = offsets.pop().unwrap();
            let x = &cache.inputs[k];
            let (gw, gb) = grads.0[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let (w, _) = self.layer(k);
            let mut delta_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row_g = &mut gw[o * n_in..(o + 1) * n_in];
                let row_w = &w[o * n_in..(o + 1) * n_in];
                for ((g, di), (&xi, &wi)) in row_g.iter_mut().zip(delta_in.iter_mut()).zip(x.iter().zip(row_w)) {
                    *g += d * xi;
                    *di += d * wi;
                }
            }
            delta_out = delta_in;
        }
        delta_out
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// First-order adaptive optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `params` along `-grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
