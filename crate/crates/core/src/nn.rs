//! Dense feed-forward networks with hand-written reverse mode, the Adam
//! optimizer and a step-decay learning-rate schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::error::{bail, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden width of both the discriminator and the statistic network.
pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    /// Leaky ReLU with slope 0.01 below zero.
    LeakyRelu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative written in terms of the pre-activation `x` and the
    /// activation value `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network. Parameters live in one flat buffer, layer by
/// layer: the row-major `out x in` weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(into = "record::DenseNetRecord", try_from = "record::DenseNetRecord")
)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    hidden: Activation,
    output: Activation,
}

impl DenseNet {
    /// All-zero network with the given shape.
    pub fn zeros(layer_dims: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            bail!(Shape, "layer dims {layer_dims:?} need >= 2 non-zero entries");
        }
        let n = layer_dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self {
            layer_dims,
            params: vec![0.0; n],
            hidden,
            output,
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random<R: Rng + ?Sized>(
        layer_dims: Vec<usize>,
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, hidden, output)?;
        let mut offset = 0;
        for k in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.layer_dims[k], net.layer_dims[k + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_out * fan_in + fan_out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += fan_out * fan_in + fan_out;
        }
        Ok(net)
    }

    /// `input_dim -> 64 -> 64 -> 1`, leaky ReLU hidden, sigmoid output.
    pub fn discriminator<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Result<Self> {
        Self::random(
            vec![input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 1],
            Activation::LeakyRelu,
            Activation::Sigmoid,
            rng,
        )
    }

    /// `input_dim -> 64 -> 64 -> 1`, leaky ReLU hidden, identity output.
    pub fn statistic_network<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Result<Self> {
        Self::random(
            vec![input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 1],
            Activation::LeakyRelu,
            Activation::Identity,
            rng,
        )
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, k: usize) -> usize {
        self.layer_dims[..=k]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Row-major weight matrix of layer `k` (`dims[k+1] x dims[k]`).
    pub fn weights(&self, k: usize) -> &[f64] {
        let off = self.layer_offset(k);
        &self.params[off..off + self.layer_dims[k + 1] * self.layer_dims[k]]
    }

    pub fn weights_mut(&mut self, k: usize) -> &mut [f64] {
        let off = self.layer_offset(k);
        let len = self.layer_dims[k + 1] * self.layer_dims[k];
        &mut self.params[off..off + len]
    }

    pub fn bias(&self, k: usize) -> &[f64] {
        let off = self.layer_offset(k) + self.layer_dims[k + 1] * self.layer_dims[k];
        &self.params[off..off + self.layer_dims[k + 1]]
    }

    pub fn bias_mut(&mut self, k: usize) -> &mut [f64] {
        let off = self.layer_offset(k) + self.layer_dims[k + 1] * self.layer_dims[k];
        let len = self.layer_dims[k + 1];
        &mut self.params[off..off + len]
    }

    fn activation(&self, k: usize) -> Activation {
        if k + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            bail!(Shape, "input has {} entries, network expects {}", input.len(), self.input_dim());
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.output().to_vec())
    }

    /// Forward pass keeping every pre-activation and activation.
    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layer_dims.len());
        let mut pre = Vec::with_capacity(self.num_layers());
        activations.push(input.to_vec());
        let mut offset = 0;
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            let w = &self.params[offset..offset + n_out * n_in];
            let b = &self.params[offset + n_out * n_in..offset + n_out * n_in + n_out];
            let x = &activations[k];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let act = self.activation(k);
            activations.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
            offset += n_out * n_in + n_out;
        }
        Ok(Trace { pre, activations })
    }

    /// Reverse pass over a recorded trace. Parameter gradients are added into
    /// `param_grads` (so a batch can accumulate); the input gradient is
    /// returned.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            bail!(Shape, "output gradient has {} entries, expected {}", output_grad.len(), self.output_dim());
        }
        if param_grads.len() != self.params.len() {
            bail!(Shape, "gradient buffer has {} entries, expected {}", param_grads.len(), self.params.len());
        }
        let mut delta = output_grad.to_vec();
        let mut offset = self.params.len();
        for k in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            offset -= n_out * n_in + n_out;
            let act = self.activation(k);
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= act.derivative(trace.pre[k][o], trace.activations[k + 1][o]);
            }
            let x = &trace.activations[k];
            let (gw, gb) = param_grads[offset..offset + n_out * n_in + n_out].split_at_mut(n_out * n_in);
            for o in 0..n_out {
                gb[o] += delta[o];
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += delta[o] * xi;
                }
            }
            let w = &self.params[offset..offset + n_out * n_in];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                for (nx, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *nx += delta[o] * wi;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Gradients of `output_grad . net(input)` with respect to the
    /// parameters and the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        let trace = self.trace(input)?;
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_trace(&trace, output_grad, &mut params)?;
        Ok(Gradients { params, input })
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`DenseNet::params`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One descent step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    /// Callers maximizing an objective pass the negated gradient.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            bail!(
                Shape,
                "adam state for {} params got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            );
        }
        if !(lr > 0.0) {
            bail!(Domain, "learning rate must be positive, got {lr}");
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(params, grads, lr)
}

/// `lr(epoch) = base_lr * gamma^floor(epoch / step_size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSchedule {
    pub base_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
}

impl StepSchedule {
    pub fn new(base_lr: f64, step_size: usize, gamma: f64) -> Result<Self> {
        if !(base_lr > 0.0) || step_size == 0 || !(gamma > 0.0 && gamma <= 1.0) {
            bail!(
                Config,
                "invalid schedule: base_lr {base_lr} must be > 0, step_size {step_size} > 0, gamma {gamma} in (0, 1]"
            );
        }
        Ok(Self {
            base_lr,
            step_size,
            gamma,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.step_size) as i32;
        self.base_lr * self.gamma.powi(decays)
    }
}

pub fn lr_at(schedule: &StepSchedule, epoch: usize) -> f64 {
    schedule.lr_at(epoch)
}

#[cfg(feature = "serde")]
mod record {
    use super::*;

    /// Checkpoint layout: explicit per-layer weight matrices and biases.
    #[derive(serde::Serialize, serde::Deserialize)]
    pub struct DenseNetRecord {
        layer_dims: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
        weights: Vec<Vec<Vec<f64>>>,
        biases: Vec<Vec<f64>>,
    }

    impl From<DenseNet> for DenseNetRecord {
        fn from(net: DenseNet) -> Self {
            let weights = (0..net.num_layers())
                .map(|k| {
                    net.weights(k)
                        .chunks(net.layer_dims[k])
                        .map(|row| row.to_vec())
                        .collect()
                })
                .collect();
            let biases = (0..net.num_layers()).map(|k| net.bias(k).to_vec()).collect();
            Self {
                layer_dims: net.layer_dims,
                hidden_activation: net.hidden,
                output_activation: net.output,
                weights,
                biases,
            }
        }
    }

    impl TryFrom<DenseNetRecord> for DenseNet {
        type Error = Error;

        fn try_from(rec: DenseNetRecord) -> Result<Self> {
            let mut net = DenseNet::zeros(rec.layer_dims, rec.hidden_activation, rec.output_activation)?;
            if rec.weights.len() != net.num_layers() || rec.biases.len() != net.num_layers() {
                bail!(Shape, "checkpoint has {} weight and {} bias layers", rec.weights.len(), rec.biases.len());
            }
            for k in 0..net.num_layers() {
                let (n_in, n_out) = (net.layer_dims[k], net.layer_dims[k + 1]);
                let w = &rec.weights[k];
                if w.len() != n_out || w.iter().any(|row| row.len() != n_in) {
                    bail!(Shape, "layer {k} weights are not {n_out}x{n_in}");
                }
                if rec.biases[k].len() != n_out {
                    bail!(Shape, "layer {k} bias is not length {n_out}");
                }
                for (dst, src) in net.weights_mut(k).chunks_mut(n_in).zip(w) {
                    dst.copy_from_slice(src);
                }
                net.bias_mut(k).copy_from_slice(&rec.biases[k]);
            }
            if net.params.iter().any(|p| !p.is_finite()) {
                bail!(Domain, "checkpoint contains non-finite weights");
            }
            Ok(net)
        }
    }
}
