//! Neural mutual-information estimation with the Donsker-Varadhan bound
//!
//! `I(C; X) >= E_joint[T] - log E_marginal[e^T]`
//!
//! for any statistic network `T(c, x)`. Joint pairs are `(c_i, x_i)`;
//! marginal pairs reuse the same outputs with the codes shuffled,
//! `(c_perm(i), x_i)`, which samples the product of the marginals.
//!
//! The statistic network is trained with the moving-average correction of the
//! marginal term: the denominator of its gradient is an exponential moving
//! average of `mean(e^T)` rather than the batch value, which removes most of
//! the small-batch bias. Reported estimates always use the plain bound.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{bail, Error, Result};
use crate::nn::{AdamState, DenseNet};

/// Paired codes and outputs plus the shuffle that builds the marginal side.
#[derive(Debug, Clone, PartialEq)]
pub struct MineBatch {
    codes: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    permutation: Vec<usize>,
}

impl MineBatch {
    /// Builds a batch from explicit joint pairs and a permutation of their
    /// indices: marginal pair `i` is `(codes[permutation[i]], outputs[i])`.
    pub fn with_permutation(
        codes: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        permutation: Vec<usize>,
    ) -> Result<Self> {
        let n = codes.len();
        if n < 2 {
            bail!(Size, "MI batch needs at least 2 pairs, got {n}");
        }
        if outputs.len() != n || permutation.len() != n {
            bail!(
                Size,
                "{n} codes, {} outputs and a permutation of length {}",
                outputs.len(),
                permutation.len()
            );
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || core::mem::replace(&mut seen[p], true) {
                bail!(Index, "{permutation:?} is not a permutation of 0..{n}");
            }
        }
        Ok(Self {
            codes,
            outputs,
            permutation,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[Vec<f64>] {
        &self.codes
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn joint(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.codes
            .iter()
            .zip(&self.outputs)
            .map(|(c, x)| (c.as_slice(), x.as_slice()))
    }

    pub fn marginal(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.permutation
            .iter()
            .zip(&self.outputs)
            .map(|(&p, x)| (self.codes[p].as_slice(), x.as_slice()))
    }
}

/// Pairs `(codes[i], outputs[i])` with a uniformly random shuffle of the
/// codes for the marginal side. Fixed points are allowed.
pub fn shuffle_marginal<R: Rng + ?Sized>(
    codes: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    rng: &mut R,
) -> Result<MineBatch> {
    let mut permutation: Vec<usize> = (0..codes.len()).collect();
    permutation.shuffle(rng);
    MineBatch::with_permutation(codes, outputs, permutation)
}

fn concat(code: &[f64], output: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(code.len() + output.len());
    v.extend_from_slice(code);
    v.extend_from_slice(output);
    v
}

/// Pairwise summation, so the result depends on the multiset of terms only
/// up to rounding on the order of `eps * log2(n)`.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `log(mean(exp(xs)))` with the maximum shifted out.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + (pairwise_sum(&shifted) / xs.len() as f64).ln()
}

fn scalar_outputs<'a>(
    net: &DenseNet,
    pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<Vec<f64>> {
    pairs.map(|(c, x)| Ok(net.forward(&concat(c, x))?[0])).collect()
}

fn check_net(net: &DenseNet, batch: &MineBatch) -> Result<()> {
    let want = batch.codes[0].len() + batch.outputs[0].len();
    if net.input_dim() != want || net.output_dim() != 1 {
        bail!(
            Shape,
            "statistic network maps {} -> {}, batch needs {want} -> 1",
            net.input_dim(),
            net.output_dim()
        );
    }
    Ok(())
}

/// The plain Donsker-Varadhan estimate on one batch, in nats.
pub fn dv_estimate(net: &DenseNet, batch: &MineBatch) -> Result<f64> {
    check_net(net, batch)?;
    let joint = scalar_outputs(net, batch.joint())?;
    let marginal = scalar_outputs(net, batch.marginal())?;
    Ok(pairwise_sum(&joint) / joint.len() as f64 - log_mean_exp(&marginal))
}

/// Moving average of `mean(e^T)` over marginal batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaState {
    ema: f64,
    decay: f64,
    initialized: bool,
}

impl Default for EmaState {
    fn default() -> Self {
        Self {
            ema: 0.0,
            decay: 0.99,
            initialized: false,
        }
    }
}

impl EmaState {
    pub fn new(decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            bail!(Domain, "EMA decay must lie in (0, 1), got {decay}");
        }
        Ok(Self {
            decay,
            ..Self::default()
        })
    }

    pub fn value(&self) -> f64 {
        self.ema
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Folds in a new batch mean; the first observation seeds the average.
    pub fn update(&mut self, batch_mean: f64) -> f64 {
        self.ema = if self.initialized {
            self.decay * self.ema + (1.0 - self.decay) * batch_mean
        } else {
            batch_mean
        };
        self.initialized = true;
        self.ema
    }
}

/// Ascent directions produced by [`mine_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct MineGradients {
    /// Gradient of the bias-corrected objective with respect to the
    /// statistic-network parameters.
    pub params: Vec<f64>,
    /// Gradient of the plain estimate with respect to each output `x_i`,
    /// through both its joint and its marginal pair.
    pub outputs: Vec<Vec<f64>>,
    /// Plain estimate on this batch.
    pub estimate: f64,
}

/// Gradients for both sides of the MI game. Updates `ema` with this batch's
/// `mean(e^T)` before using it.
pub fn mine_gradients(net: &DenseNet, batch: &MineBatch, ema: &mut EmaState) -> Result<MineGradients> {
    check_net(net, batch)?;
    let n = batch.len();
    let nf = n as f64;
    let code_dim = batch.codes[0].len();

    let joint: Vec<_> = batch
        .joint()
        .map(|(c, x)| net.trace(&concat(c, x)))
        .collect::<Result<_>>()?;
    let marginal: Vec<_> = batch
        .marginal()
        .map(|(c, x)| net.trace(&concat(c, x)))
        .collect::<Result<_>>()?;
    let t_joint: Vec<f64> = joint.iter().map(|t| t.output()[0]).collect();
    let t_marg: Vec<f64> = marginal.iter().map(|t| t.output()[0]).collect();

    let shift = t_marg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = t_marg.iter().map(|t| (t - shift).exp()).collect();
    let scaled_sum = pairwise_sum(&scaled);
    let batch_mean_exp = shift.exp() * scaled_sum / nf;
    if !batch_mean_exp.is_finite() || !(batch_mean_exp > 0.0) {
        return Err(Error::NonFinite(format!(
            "mean of e^T over the marginal batch is {batch_mean_exp} (max T {shift})"
        )));
    }
    let estimate = pairwise_sum(&t_joint) / nf - (shift + (scaled_sum / nf).ln());
    let denom = ema.update(batch_mean_exp);

    let mut params = vec![0.0; net.num_params()];
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        let gin = net.backward_trace(&joint[i], &[1.0 / nf], &mut params)?;
        outputs.push(gin[code_dim..].to_vec());
    }
    let mut marg_params = vec![0.0; net.num_params()];
    for i in 0..n {
        // Corrected weight for the network; softmax weight for the outputs.
        let corrected = scaled[i] * shift.exp() / (nf * denom);
        let softmax = scaled[i] / scaled_sum;
        let mut scratch = vec![0.0; net.num_params()];
        let gin = net.backward_trace(&marginal[i], &[1.0], &mut scratch)?;
        for (acc, g) in marg_params.iter_mut().zip(&scratch) {
            *acc += corrected * g;
        }
        for (o, g) in outputs[i].iter_mut().zip(&gin[code_dim..]) {
            *o -= softmax * g;
        }
    }
    for (p, m) in params.iter_mut().zip(&marg_params) {
        *p -= m;
    }
    if params.iter().chain(outputs.iter().flatten()).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("MI gradient".into()));
    }
    Ok(MineGradients {
        params,
        outputs,
        estimate,
    })
}

/// Statistic network with its optimizer and moving average.
#[derive(Debug, Clone)]
pub struct MineEstimator {
    pub net: DenseNet,
    pub adam: AdamState,
    pub ema: EmaState,
}

impl MineEstimator {
    pub fn new(net: DenseNet, ema_decay: f64) -> Result<Self> {
        let adam = AdamState::new(net.num_params());
        Ok(Self {
            net,
            adam,
            ema: EmaState::new(ema_decay)?,
        })
    }

    /// One Adam ascent step on `batch`; returns the plain estimate measured
    /// before the update.
    pub fn step(&mut self, batch: &MineBatch, lr: f64) -> Result<f64> {
        let grads = mine_gradients(&self.net, batch, &mut self.ema)?;
        let descent: Vec<f64> = grads.params.iter().map(|g| -g).collect();
        self.adam.step(self.net.params_mut(), &descent, lr)?;
        Ok(grads.estimate)
    }
}
