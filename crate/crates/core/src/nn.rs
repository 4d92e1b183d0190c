//! Fully connected ReLU networks with hand-written reverse mode, and Adam.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{check_len, Error, Result};

/// Affine layer `y = W x + b`, with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// ReLU on every hidden layer, linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Intermediates retained by [`DenseNet::forward_batch`]. Columns are samples.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
}

impl DenseNet {
    /// He-style uniform fan-in initialization with zero biases.
    /// `sizes` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                Dense {
                    weight: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Single linear layer computing the identity map.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![Dense {
                weight: DMatrix::identity(dim, dim),
                bias: DVector::zeros(dim),
            }],
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(Dense::input_dim).collect();
        if let Some(last) = self.layers.last() {
            sizes.push(last.output_dim());
        }
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), x.len())?;
        let mut h = DVector::from_column_slice(x);
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = &layer.weight * h + &layer.bias;
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(h.as_slice().to_vec())
    }

    /// Forward pass over a `input_dim × batch` matrix.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        check_len("network input", self.input_dim(), x.nrows())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = &layer.weight * &h;
            for mut col in pre.column_iter_mut() {
                col += &layer.bias;
            }
            inputs.push(h);
            h = pre.clone();
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
            pre_activations.push(pre);
        }
        Ok((
            h,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Reverse pass. Returns parameter gradients shaped like `self` (summed
    /// over the batch) and the gradient with respect to the input batch.
    /// The ReLU subgradient at zero is zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &DMatrix<f64>,
    ) -> Result<(DenseNet, DMatrix<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        for (layer, (input, pre)) in self
            .layers
            .iter()
            .zip(cache.inputs.iter().zip(&cache.pre_activations))
        {
            if input.nrows() != layer.input_dim() || pre.nrows() != layer.output_dim() {
                return Err(Error::StaleCache);
            }
        }
        let batch = cache.inputs.first().map_or(0, DMatrix::ncols);
        if grad_out.nrows() != self.output_dim() || grad_out.ncols() != batch {
            return Err(Error::StaleCache);
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                delta.zip_apply(&cache.pre_activations[i], |d, p| {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let weight = &delta * cache.inputs[i].transpose();
            let bias = delta.column_sum();
            grads.push(Dense { weight, bias });
            delta = self.layers[i].weight.transpose() * &delta;
        }
        grads.reverse();
        Ok((DenseNet { layers: grads }, delta))
    }
}

/// Flat view of trainable parameters, in a fixed order.
pub trait Parameters {
    fn param_len(&self) -> usize;
    fn write_params(&self, out: &mut Vec<f64>);
    /// Reads `param_len()` values from the front of `src`, returns the rest.
    fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64];

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        self.write_params(&mut out);
        out
    }
}

impl Parameters for DMatrix<f64> {
    fn param_len(&self) -> usize {
        self.len()
    }
    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.as_slice());
    }
    fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (head, rest) = src.split_at(self.len());
        self.as_mut_slice().copy_from_slice(head);
        rest
    }
}

impl Parameters for DVector<f64> {
    fn param_len(&self) -> usize {
        self.len()
    }
    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.as_slice());
    }
    fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (head, rest) = src.split_at(self.len());
        self.as_mut_slice().copy_from_slice(head);
        rest
    }
}

impl Parameters for DenseNet {
    fn param_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
    fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            layer.weight.write_params(out);
            layer.bias.write_params(out);
        }
    }
    fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        for layer in &mut self.layers {
            src = layer.weight.read_params(src);
            src = layer.bias.read_params(src);
        }
        src
    }
}

/// Adam with bias correction. `weight_decay` adds an L2 term to the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("optimizer parameters", self.m.len(), params.len())?;
        check_len("optimizer gradients", self.m.len(), grads.len())?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
