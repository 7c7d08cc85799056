//! Adversarial training of the circuit generator against a dense
//! discriminator, optionally with a mutual-information reward on the codes.
//!
//! One epoch draws a real subset and, for each minibatch of it, runs one
//! discriminator step, one MI-estimator step (InfoQGAN only) and one
//! generator step on a fresh fake batch, in that order.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Error, Result};
use crate::generator::{GeneratorSpec, LatentSample, Readout};
use crate::mine::{mine_gradients, EmaState, MineBatch, MineEstimator};
use crate::nn::{AdamState, DenseNet, StepSchedule};
use crate::seed::{stream, Stream};

/// Floor applied to log arguments in the adversarial losses.
pub const LOG_FLOOR: f64 = 1e-12;

/// Default decay of the MI estimator's moving average.
pub const MINE_EMA_DECAY: f64 = 0.99;

/// Epochs between checkpoints.
pub const CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    Qgan,
    Infoqgan,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub mode: Mode,
    pub readout: Readout,
    pub layers: usize,
    pub noise_dim: usize,
    pub code_dim: usize,
    pub epochs: usize,
    /// Share of the dataset drawn (without replacement) each epoch.
    pub batch_fraction: f64,
    /// Split the epoch's subset into chunks of this size, one optimizer step
    /// per model per chunk. `None` takes a single step on the whole subset.
    pub minibatch_size: Option<usize>,
    /// Weight of the MI reward in the generator loss.
    pub beta: f64,
    pub generator_schedule: StepSchedule,
    pub discriminator_schedule: StepSchedule,
    pub mine_schedule: StepSchedule,
    /// Generator parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn qubits(&self) -> usize {
        self.noise_dim + self.code_dim
    }

    /// Code entries the MI term sees; zero for the baseline.
    pub fn effective_code_dim(&self) -> usize {
        match self.mode {
            Mode::Qgan => 0,
            Mode::Infoqgan => self.code_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            bail!(Config, "batch_fraction must be in (0, 1], got {}", self.batch_fraction);
        }
        if self.minibatch_size.is_some_and(|m| m < 2) {
            bail!(Config, "minibatch_size must be at least 2");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            bail!(Config, "beta must be finite and >= 0, got {}", self.beta);
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            bail!(Config, "init_scale must be finite and >= 0, got {}", self.init_scale);
        }
        if self.mode == Mode::Infoqgan && self.code_dim == 0 {
            bail!(Config, "infoqgan needs at least one code entry");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochMetrics {
    pub epoch: usize,
    pub generator_loss: f64,
    pub discriminator_loss: f64,
    /// MI estimate from the estimator step; 0 for the baseline.
    pub mine_estimate: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_m: f64,
}

fn scores(d: &DenseNet, batch: &[Vec<f64>]) -> Result<Vec<f64>> {
    batch.iter().map(|x| Ok(d.forward(x)?[0])).collect()
}

fn check_batches(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<()> {
    if real.is_empty() || fake.is_empty() {
        bail!(Size, "empty batch ({} real, {} fake)", real.len(), fake.len());
    }
    Ok(())
}

/// `-mean log D(real) - mean log(1 - D(fake))`.
pub fn discriminator_loss(d: &DenseNet, real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<f64> {
    check_batches(real, fake)?;
    let r = scores(d, real)?;
    let f = scores(d, fake)?;
    let real_term = r.iter().map(|s| s.max(LOG_FLOOR).ln()).sum::<f64>() / r.len() as f64;
    let fake_term = f.iter().map(|s| (1.0 - s).max(LOG_FLOOR).ln()).sum::<f64>() / f.len() as f64;
    Ok(-real_term - fake_term)
}

/// `-mean log D(fake) - beta * mine_term`.
pub fn generator_loss(d: &DenseNet, fake: &[Vec<f64>], mine_term: f64, beta: f64) -> Result<f64> {
    if fake.is_empty() {
        bail!(Size, "empty fake batch");
    }
    let f = scores(d, fake)?;
    let adv = -f.iter().map(|s| s.max(LOG_FLOOR).ln()).sum::<f64>() / f.len() as f64;
    Ok(if beta == 0.0 { adv } else { adv - beta * mine_term })
}

/// Parameter gradient of [`discriminator_loss`].
fn discriminator_gradient(d: &DenseNet, real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut grads = vec![0.0; d.num_params()];
    let nr = real.len() as f64;
    for x in real {
        let trace = d.trace(x)?;
        let s = trace.output()[0];
        let g = if s > LOG_FLOOR { -1.0 / (nr * s) } else { 0.0 };
        d.backward_trace(&trace, &[g], &mut grads)?;
    }
    let nf = fake.len() as f64;
    for x in fake {
        let trace = d.trace(x)?;
        let s = trace.output()[0];
        let g = if 1.0 - s > LOG_FLOOR { 1.0 / (nf * (1.0 - s)) } else { 0.0 };
        d.backward_trace(&trace, &[g], &mut grads)?;
    }
    Ok(grads)
}

/// Everything the generator objective needs besides the generator itself.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorObjective<'a> {
    pub discriminator: &'a DenseNet,
    /// Statistic network for the MI reward, if any.
    pub mine: Option<&'a DenseNet>,
    pub beta: f64,
}

/// Loss and parameter gradient of the generator objective on `latents`.
/// The MI term pairs each sample's code with its output, and
/// `permutation[i]`'s code with output `i` for the marginal side.
pub fn generator_loss_and_gradient(
    generator: &GeneratorSpec,
    objective: GeneratorObjective<'_>,
    latents: &[LatentSample],
    permutation: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if latents.is_empty() {
        bail!(Size, "empty latent batch");
    }
    let n = latents.len() as f64;
    let outputs: Vec<Vec<f64>> = latents.iter().map(|z| generator.generate(z)).collect::<Result<_>>()?;

    let d = objective.discriminator;
    let mut cotangents = Vec::with_capacity(latents.len());
    let mut adv = 0.0;
    for x in &outputs {
        let trace = d.trace(x)?;
        let s = trace.output()[0];
        adv -= s.max(LOG_FLOOR).ln() / n;
        let g = if s > LOG_FLOOR { -1.0 / (n * s) } else { 0.0 };
        let mut scratch = vec![0.0; d.num_params()];
        cotangents.push(d.backward_trace(&trace, &[g], &mut scratch)?);
    }

    let mut loss = adv;
    if let (Some(net), true) = (objective.mine, objective.beta != 0.0) {
        let codes: Vec<Vec<f64>> = latents.iter().map(|z| z.code.clone()).collect();
        let batch = MineBatch::with_permutation(codes, outputs, permutation.to_vec())?;
        // The output gradient ignores the moving average, so a scratch one is fine.
        let mut ema = EmaState::new(MINE_EMA_DECAY)?;
        let mg = mine_gradients(net, &batch, &mut ema)?;
        loss -= objective.beta * mg.estimate;
        for (cot, g) in cotangents.iter_mut().zip(&mg.outputs) {
            cot.iter_mut().zip(g).for_each(|(c, gi)| *c -= objective.beta * gi);
        }
    }

    let mut grad = vec![0.0; generator.num_params()];
    for (z, cot) in latents.iter().zip(&cotangents) {
        let g = generator.vjp(z, cot)?;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

/// All mutable training state. Each random consumer owns its own stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    dataset: Vec<Vec<f64>>,
    pub generator: GeneratorSpec,
    pub generator_adam: AdamState,
    pub discriminator: DenseNet,
    pub discriminator_adam: AdamState,
    pub mine: Option<MineEstimator>,
    batch_rng: ChaCha8Rng,
    latent_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let generator = GeneratorSpec::random(
            config.qubits(),
            config.layers,
            config.readout,
            config.init_scale,
            &mut stream(seed, Stream::GeneratorInit),
        )?;
        let dim = generator.output_dim();
        if dataset.is_empty() {
            bail!(Size, "empty training set");
        }
        if let Some(row) = dataset.iter().position(|x| x.len() != dim) {
            bail!(Shape, "sample {row} has {} entries, generator emits {dim}", dataset[row].len());
        }
        let discriminator = DenseNet::discriminator(dim, &mut stream(seed, Stream::DiscriminatorInit))?;
        let mine = match config.mode {
            Mode::Qgan => None,
            Mode::Infoqgan => {
                let net = DenseNet::statistic_network(config.code_dim + dim, &mut stream(seed, Stream::MineInit))?;
                Some(MineEstimator::new(net, MINE_EMA_DECAY)?)
            }
        };
        Ok(Self {
            generator_adam: AdamState::new(generator.num_params()),
            discriminator_adam: AdamState::new(discriminator.num_params()),
            generator,
            discriminator,
            mine,
            dataset,
            batch_rng: stream(seed, Stream::Batches),
            latent_rng: stream(seed, Stream::Latents),
            shuffle_rng: stream(seed, Stream::Shuffles),
            epoch: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn dataset(&self) -> &[Vec<f64>] {
        &self.dataset
    }

    /// Number of epochs completed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn subset_size(&self) -> usize {
        let n = self.dataset.len();
        ((self.config.batch_fraction * n as f64).ceil() as usize).clamp(1, n)
    }

    fn draw_latents(&mut self, count: usize) -> Vec<LatentSample> {
        let domain = self.generator.noise_domain();
        let (noise, code) = (
            self.config.qubits() - self.config.effective_code_dim(),
            self.config.effective_code_dim(),
        );
        (0..count)
            .map(|_| LatentSample::random(noise, code, domain, &mut self.latent_rng))
            .collect()
    }

    fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.shuffle_rng);
        p
    }

    /// Runs one epoch and advances the epoch counter.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let wrap = |component: &'static str| {
            move |e: Error| match e {
                Error::NonFinite(message) => Error::Training {
                    component,
                    epoch,
                    message,
                },
                other => other,
            }
        };
        let lr_g = self.config.generator_schedule.lr_at(epoch);
        let lr_d = self.config.discriminator_schedule.lr_at(epoch);
        let lr_m = self.config.mine_schedule.lr_at(epoch);

        let size = self.subset_size();
        let subset = sample_indices(&mut self.batch_rng, self.dataset.len(), size).into_vec();
        let chunk = self.config.minibatch_size.unwrap_or(subset.len()).max(1);
        let (mut g_sum, mut d_sum, mut m_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);

        for idx in subset.chunks(chunk) {
            let real: Vec<Vec<f64>> = idx.iter().map(|&i| self.dataset[i].clone()).collect();
            let n = real.len();

            // Discriminator.
            let latents = self.draw_latents(n);
            let fake: Vec<Vec<f64>> = latents
                .iter()
                .map(|z| self.generator.generate(z))
                .collect::<Result<_>>()?;
            let d_loss = discriminator_loss(&self.discriminator, &real, &fake)?;
            if !d_loss.is_finite() {
                return Err(wrap("discriminator")(Error::NonFinite(format!("loss {d_loss}"))));
            }
            let d_grad = discriminator_gradient(&self.discriminator, &real, &fake)?;
            self.discriminator_adam
                .step(self.discriminator.params_mut(), &d_grad, lr_d)
                .map_err(wrap("discriminator"))?;

            // MI estimator, on the same fake batch.
            let mut m_est = 0.0;
            if self.mine.is_some() && n >= 2 {
                let perm = self.permutation(n);
                let codes = latents.iter().map(|z| z.code.clone()).collect();
                let batch = MineBatch::with_permutation(codes, fake, perm)?;
                let mine = self.mine.as_mut().expect("checked above");
                m_est = mine.step(&batch, lr_m).map_err(wrap("mine"))?;
            }

            // Generator, on a fresh fake batch.
            let latents = self.draw_latents(n);
            let perm = if self.mine.is_some() { self.permutation(n) } else { Vec::new() };
            let objective = GeneratorObjective {
                discriminator: &self.discriminator,
                mine: self.mine.as_ref().filter(|_| n >= 2).map(|m| &m.net),
                beta: self.config.beta,
            };
            let (g_loss, g_grad) =
                generator_loss_and_gradient(&self.generator, objective, &latents, &perm).map_err(wrap("generator"))?;
            if !g_loss.is_finite() {
                return Err(wrap("generator")(Error::NonFinite(format!("loss {g_loss}"))));
            }
            self.generator_adam
                .step(&mut self.generator.params, &g_grad, lr_g)
                .map_err(wrap("generator"))?;

            g_sum += g_loss;
            d_sum += d_loss;
            m_sum += m_est;
            steps += 1;
        }

        let s = steps as f64;
        let metrics = EpochMetrics {
            epoch,
            generator_loss: g_sum / s,
            discriminator_loss: d_sum / s,
            mine_estimate: m_sum / s,
            lr_g,
            lr_d,
            lr_m,
        };
        if !metrics.mine_estimate.is_finite() {
            return Err(Error::Training {
                component: "mine",
                epoch,
                message: "non-finite estimate".to_string(),
            });
        }
        self.epoch += 1;
        Ok(metrics)
    }

    /// Trains for the configured number of epochs. `checkpoint` is called
    /// with the completed-epoch count every [`CHECKPOINT_EVERY`] epochs and
    /// once at the end (also when there are no epochs).
    pub fn run<F>(&mut self, mut checkpoint: F) -> Result<Vec<EpochMetrics>>
    where
        F: FnMut(&Trainer, usize) -> Result<()>,
    {
        let mut history = Vec::with_capacity(self.config.epochs);
        let mut last_saved = None;
        while self.epoch < self.config.epochs {
            history.push(self.train_epoch()?);
            if self.epoch % CHECKPOINT_EVERY == 0 {
                checkpoint(self, self.epoch)?;
                last_saved = Some(self.epoch);
            }
        }
        if last_saved != Some(self.epoch) {
            checkpoint(self, self.epoch)?;
        }
        Ok(history)
    }
}

/// Builds a trainer and runs it to completion.
pub fn train<F>(config: TrainConfig, dataset: Vec<Vec<f64>>, checkpoint: F) -> Result<(Trainer, Vec<EpochMetrics>)>
where
    F: FnMut(&Trainer, usize) -> Result<()>,
{
    let mut trainer = Trainer::new(config, dataset)?;
    let history = trainer.run(checkpoint)?;
    Ok((trainer, history))
}

/// A draw from `rng` of generator outputs, for evaluation.
pub fn sample_outputs<R: Rng + ?Sized>(generator: &GeneratorSpec, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let domain = generator.noise_domain();
    (0..count)
        .map(|_| generator.generate(&LatentSample::random(generator.qubits(), 0, domain, rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;

    fn constant_disc(dim: usize, value: f64) -> DenseNet {
        let mut d = DenseNet::zeros(vec![dim, 1], Activation::Identity, Activation::Sigmoid).unwrap();
        d.bias_mut(0)[0] = (value / (1.0 - value)).ln();
        d
    }

    pub(crate) fn small_config(mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            readout: Readout::Point2d,
            layers: 2,
            noise_dim: 1,
            code_dim: 2,
            epochs: 3,
            batch_fraction: 0.25,
            minibatch_size: None,
            beta: 0.5,
            generator_schedule: StepSchedule::new(0.001, 1000, 1.0).unwrap(),
            discriminator_schedule: StepSchedule::new(0.0003, 1000, 1.0).unwrap(),
            mine_schedule: StepSchedule::new(0.001, 1000, 1.0).unwrap(),
            init_scale: 1.0,
            seed: 11,
        }
    }

    fn toy_data(n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
    }

    #[test]
    fn loss_examples() {
        let d = constant_disc(2, 0.5);
        let batch = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let l = discriminator_loss(&d, &batch, &batch).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        let g = generator_loss(&d, &batch, 0.2, 0.5).unwrap();
        assert!((g - (2f64.ln() - 0.1)).abs() < 1e-12);
        assert_eq!(generator_loss(&d, &batch, 123.0, 0.0).unwrap(), generator_loss(&d, &batch, -7.0, 0.0).unwrap());
        assert!(discriminator_loss(&d, &[], &batch).is_err());
        assert!(generator_loss(&d, &[], 0.0, 0.0).is_err());
    }

    #[test]
    fn losses_near_a_perfect_discriminator() {
        // Real points have x = 1, fake points x = 0; a steep logistic separates them.
        let mut d = DenseNet::zeros(vec![2, 1], Activation::Identity, Activation::Sigmoid).unwrap();
        d.weights_mut(0)[0] = 60.0;
        d.bias_mut(0)[0] = -30.0;
        let real = vec![vec![1.0, 0.0]; 3];
        let fake = vec![vec![0.0, 0.0]; 3];
        assert!(discriminator_loss(&d, &real, &fake).unwrap() < 1e-12);
        // Saturated the other way, the clamp keeps the loss finite.
        let l = discriminator_loss(&d, &fake, &real).unwrap();
        assert!(l.is_finite() && l > 50.0);
    }

    #[test]
    fn epochs_are_reproducible() {
        let run = || {
            let (_, h) = train(small_config(Mode::Infoqgan), toy_data(40), |_, _| Ok(())).unwrap();
            h
        };
        let a = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, run());
        assert!(a.iter().all(|m| m.generator_loss.is_finite() && m.mine_estimate.is_finite()));
    }

    #[test]
    fn baseline_reports_no_mi() {
        let (t, h) = train(small_config(Mode::Qgan), toy_data(40), |_, _| Ok(())).unwrap();
        assert!(t.mine.is_none());
        assert!(h.iter().all(|m| m.mine_estimate == 0.0));
    }

    #[test]
    fn zero_beta_matches_baseline_generator() {
        let mut info = small_config(Mode::Infoqgan);
        info.beta = 0.0;
        let (a, _) = train(info, toy_data(40), |_, _| Ok(())).unwrap();
        let (b, _) = train(small_config(Mode::Qgan), toy_data(40), |_, _| Ok(())).unwrap();
        assert_eq!(a.generator.params, b.generator.params);
        assert_eq!(a.discriminator.params(), b.discriminator.params());
    }

    #[test]
    fn checkpoint_schedule() {
        let mut cfg = small_config(Mode::Qgan);
        cfg.epochs = 0;
        let mut seen = Vec::new();
        let (_, h) = train(cfg.clone(), toy_data(8), |_, e| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert!(h.is_empty());
        assert_eq!(seen, vec![0]);

        cfg.epochs = 120;
        cfg.layers = 1;
        let mut seen = Vec::new();
        train(cfg, toy_data(8), |_, e| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![50, 100, 120]);
    }

    #[test]
    fn minibatches_split_the_subset() {
        let mut cfg = small_config(Mode::Infoqgan);
        cfg.minibatch_size = Some(4);
        cfg.epochs = 1;
        let mut t = Trainer::new(cfg, toy_data(40)).unwrap();
        t.train_epoch().unwrap();
        // 10 real samples in chunks of 4 -> 3 steps.
        assert_eq!(t.generator_adam.step_count(), 3);
        assert_eq!(t.discriminator_adam.step_count(), 3);
    }

    #[test]
    fn dataset_shape_is_checked() {
        assert!(matches!(Trainer::new(small_config(Mode::Qgan), vec![vec![0.0; 3]]), Err(Error::Shape(_))));
        assert!(matches!(Trainer::new(small_config(Mode::Qgan), vec![]), Err(Error::Size(_))));
        let mut cfg = small_config(Mode::Infoqgan);
        cfg.code_dim = 0;
        cfg.noise_dim = 3;
        assert!(matches!(Trainer::new(cfg, toy_data(4)), Err(Error::Config(_))));
    }

    #[test]
    fn generator_gradient_taylor_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GeneratorSpec::random(3, 2, Readout::Point2d, 1.0, &mut rng).unwrap();
        let d = DenseNet::discriminator(2, &mut rng).unwrap();
        let m = DenseNet::statistic_network(4, &mut rng).unwrap();
        let latents: Vec<_> = (0..6)
            .map(|_| LatentSample::random(1, 2, g.noise_domain(), &mut rng))
            .collect();
        let perm = vec![3, 0, 5, 1, 2, 4];
        let obj = GeneratorObjective {
            discriminator: &d,
            mine: Some(&m),
            beta: 0.5,
        };
        let (_, grad) = generator_loss_and_gradient(&g, obj, &latents, &perm).unwrap();
        let h = 1e-4;
        for k in [0, 7, 17] {
            let mut gp = g.clone();
            gp.params[k] += h;
            let mut gm = g.clone();
            gm.params[k] -= h;
            let lp = generator_loss_and_gradient(&gp, obj, &latents, &perm).unwrap().0;
            let lm = generator_loss_and_gradient(&gm, obj, &latents, &perm).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-3 * grad[k].abs().max(1e-6), "param {k}: fd {fd} vs {}", grad[k]);
        }
    }
}
