//! Quantum generators: noise embedding, the two ansatz families and the
//! readouts that turn final-state probabilities into samples.
//!
//! A generator evaluates `U_G(params) U_I(z) |0...0>`. The embedding `U_I`
//! places one fixed-angle RY per latent entry, noise entries first and code
//! entries after them, so latent entry `i` always lands on qubit `i`.

use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{bail, Result};
use crate::qsim::{self, AngleSource, CircuitTemplate, Gate, OutputSelector};

/// Probabilities are clipped to `[P_CLIP, 1 - P_CLIP]` before evaluating the
/// arcsine readout slope, which is infinite at 0 and 1.
pub const P_CLIP: f64 = 1e-9;

/// Range of every latent entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseDomain {
    /// `[-1, 1]`, embedded as `RY(pi z / 2)`.
    Symmetric,
    /// `[0, 1]`, embedded as `RY(pi (z - 0.5) / 2)`.
    Unit,
}

impl NoiseDomain {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            NoiseDomain::Symmetric => (-1.0, 1.0),
            NoiseDomain::Unit => (0.0, 1.0),
        }
    }

    pub fn contains(self, x: f64) -> bool {
        let (lo, hi) = self.bounds();
        (lo..=hi).contains(&x)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let (lo, hi) = self.bounds();
        rng.random_range(lo..=hi)
    }

    /// Embedding angle for one latent entry.
    pub fn angle(self, z: f64) -> f64 {
        match self {
            NoiseDomain::Symmetric => PI * z / 2.0,
            NoiseDomain::Unit => PI * (z - 0.5) / 2.0,
        }
    }
}

/// Generator input `z = (noise, code)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub noise: Vec<f64>,
    pub code: Vec<f64>,
    pub domain: NoiseDomain,
}

impl LatentSample {
    pub fn new(noise: Vec<f64>, code: Vec<f64>, domain: NoiseDomain) -> Result<Self> {
        if let Some(x) = noise.iter().chain(&code).find(|x| !domain.contains(**x)) {
            let (lo, hi) = domain.bounds();
            bail!(Domain, "latent entry {x} outside [{lo}, {hi}]");
        }
        Ok(Self {
            noise,
            code,
            domain,
        })
    }

    /// Independent uniform draws over the domain for every entry.
    pub fn random<R: Rng + ?Sized>(
        noise_dim: usize,
        code_dim: usize,
        domain: NoiseDomain,
        rng: &mut R,
    ) -> Self {
        let noise = (0..noise_dim).map(|_| domain.sample(rng)).collect();
        let code = (0..code_dim).map(|_| domain.sample(rng)).collect();
        Self {
            noise,
            code,
            domain,
        }
    }

    pub fn len(&self) -> usize {
        self.noise.len() + self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in qubit order (noise, then code).
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.noise.iter().chain(&self.code).copied()
    }

    /// Entry at latent position `index` (noise first, then code).
    pub fn get(&self, index: usize) -> Option<f64> {
        self.entries().nth(index)
    }

    /// Overwrites the entry at latent position `index`.
    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        if !self.domain.contains(value) {
            bail!(Domain, "latent entry {value} outside the domain");
        }
        let n = self.noise.len();
        match index {
            i if i < n => self.noise[i] = value,
            i if i < self.len() => self.code[i - n] = value,
            i => bail!(Index, "latent index {i} out of range for {} entries", self.len()),
        }
        Ok(())
    }
}

fn embed(z: &LatentSample, domain: NoiseDomain) -> Result<Vec<Gate>> {
    if z.domain != domain {
        bail!(Domain, "latent sample has domain {:?}, expected {domain:?}", z.domain);
    }
    z.entries()
        .enumerate()
        .map(|(qubit, x)| {
            if !domain.contains(x) {
                bail!(Domain, "latent entry {x} outside {:?}", domain.bounds());
            }
            Ok(Gate::ry(qubit, AngleSource::Fixed(domain.angle(x))))
        })
        .collect()
}

/// `RY(pi z_i / 2)` on qubit `i` for `z` in `[-1, 1]`.
pub fn embed_noise_2d(z: &LatentSample) -> Result<Vec<Gate>> {
    embed(z, NoiseDomain::Symmetric)
}

/// `RY(pi (z_i - 0.5) / 2)` on qubit `i` for `z` in `[0, 1]`.
pub fn embed_noise_finance(z: &LatentSample) -> Result<Vec<Gate>> {
    embed(z, NoiseDomain::Unit)
}

/// Layered RX/RY/RZ ansatz with a CNOT ring: per layer, one RX, RY and RZ
/// on every qubit (each with its own slot), then `CNOT(i, i+1)` down the
/// register and a closing `CNOT(last, 0)`. Uses `3 * qubits * layers` slots.
pub fn build_ansatz_2d(qubits: usize, layers: usize) -> Result<CircuitTemplate> {
    if qubits < 2 || layers < 1 {
        bail!(Size, "2D ansatz needs qubits >= 2 and layers >= 1, got {qubits}x{layers}");
    }
    let mut gates = Vec::with_capacity(layers * 4 * qubits);
    let mut slot = 0;
    for _ in 0..layers {
        for q in 0..qubits {
            for make in [Gate::rx, Gate::ry, Gate::rz] {
                gates.push(make(q, AngleSource::Param(slot)));
                slot += 1;
            }
        }
        for q in 0..qubits - 1 {
            gates.push(Gate::cnot(q, q + 1));
        }
        gates.push(Gate::cnot(qubits - 1, 0));
    }
    CircuitTemplate::new(qubits, gates, slot)
}

/// Distribution-loading ansatz: an initial RY on every qubit, then per layer
/// a CNOT chain `CNOT(i, i+1)` followed by another RY on every qubit. Uses
/// `qubits * (layers + 1)` slots.
pub fn build_ansatz_finance(qubits: usize, layers: usize) -> Result<CircuitTemplate> {
    if qubits < 2 {
        bail!(Size, "finance ansatz needs qubits >= 2, got {qubits}");
    }
    let mut gates = Vec::new();
    let mut slot = 0;
    let mut ry_layer = |gates: &mut Vec<Gate>| {
        for q in 0..qubits {
            gates.push(Gate::ry(q, AngleSource::Param(slot)));
            slot += 1;
        }
    };
    ry_layer(&mut gates);
    for _ in 0..layers {
        for q in 0..qubits - 1 {
            gates.push(Gate::cnot(q, q + 1));
        }
        ry_layer(&mut gates);
    }
    let num_params = qubits * (layers + 1);
    CircuitTemplate::new(qubits, gates, num_params)
}

/// How final-state probabilities become a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Readout {
    /// `(x, y)` from the zero-probabilities of qubits 0 and 1.
    Point2d,
    /// The full computational-basis distribution.
    Distribution,
}

impl Readout {
    pub fn noise_domain(self) -> NoiseDomain {
        match self {
            Readout::Point2d => NoiseDomain::Symmetric,
            Readout::Distribution => NoiseDomain::Unit,
        }
    }
}

/// `(4 / pi) asin(sqrt(p)) - 1/2`, mapping `[0, 1]` onto `[-0.5, 1.5]`.
pub fn point_coordinate(p: f64) -> f64 {
    4.0 / PI * p.clamp(0.0, 1.0).sqrt().asin() - 0.5
}

/// Slope of [`point_coordinate`], evaluated at `p` clipped to
/// `[P_CLIP, 1 - P_CLIP]`.
pub fn point_coordinate_slope(p: f64) -> f64 {
    let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
    2.0 / PI / (p * (1.0 - p)).sqrt()
}

/// A generator circuit together with its trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    qubits: usize,
    layers: usize,
    readout: Readout,
    template: CircuitTemplate,
    pub params: Vec<f64>,
}

impl GeneratorSpec {
    fn template_for(qubits: usize, layers: usize, readout: Readout) -> Result<CircuitTemplate> {
        match readout {
            Readout::Point2d => build_ansatz_2d(qubits, layers),
            Readout::Distribution => build_ansatz_finance(qubits, layers),
        }
    }

    /// Builds the ansatz matching `readout` and attaches `params`.
    pub fn new(qubits: usize, layers: usize, readout: Readout, params: Vec<f64>) -> Result<Self> {
        let template = Self::template_for(qubits, layers, readout)?;
        if params.len() != template.num_params() {
            bail!(
                Shape,
                "{readout:?} ansatz with {qubits} qubits and {layers} layers takes {} params, got {}",
                template.num_params(),
                params.len()
            );
        }
        Ok(Self {
            qubits,
            layers,
            readout,
            template,
            params,
        })
    }

    /// Parameters drawn uniformly from `[-init_scale, init_scale]`.
    pub fn random<R: Rng + ?Sized>(
        qubits: usize,
        layers: usize,
        readout: Readout,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let template = Self::template_for(qubits, layers, readout)?;
        let params = (0..template.num_params())
            .map(|_| {
                if init_scale > 0.0 {
                    rng.random_range(-init_scale..=init_scale)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            qubits,
            layers,
            readout,
            template,
            params,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn template(&self) -> &CircuitTemplate {
        &self.template
    }

    pub fn num_params(&self) -> usize {
        self.template.num_params()
    }

    pub fn noise_domain(&self) -> NoiseDomain {
        self.readout.noise_domain()
    }

    /// Dimension of one generated sample.
    pub fn output_dim(&self) -> usize {
        match self.readout {
            Readout::Point2d => 2,
            Readout::Distribution => 1 << self.qubits,
        }
    }

    fn selector(&self) -> OutputSelector {
        match self.readout {
            Readout::Point2d => OutputSelector::QubitZero(vec![0, 1]),
            Readout::Distribution => OutputSelector::BasisProbabilities,
        }
    }

    fn prefix(&self, z: &LatentSample) -> Result<Vec<Gate>> {
        if z.len() != self.qubits {
            bail!(Shape, "latent sample has {} entries for {} qubits", z.len(), self.qubits);
        }
        embed(z, self.noise_domain())
    }

    fn raw_outputs(&self, z: &LatentSample) -> Result<Vec<f64>> {
        let prefix = self.prefix(z)?;
        qsim::circuit_outputs(&self.template, &self.params, &prefix, &self.selector())
    }

    /// One sample: `[x, y]` for point readout, `2^qubits` probabilities for
    /// distribution readout.
    pub fn generate(&self, z: &LatentSample) -> Result<Vec<f64>> {
        let mut out = self.raw_outputs(z)?;
        if self.readout == Readout::Point2d {
            out.iter_mut().for_each(|p| *p = point_coordinate(*p));
        }
        Ok(out)
    }

    /// Jacobian of [`GeneratorSpec::generate`] with respect to `params`, one
    /// row per output.
    pub fn jacobian(&self, z: &LatentSample) -> Result<Vec<Vec<f64>>> {
        let prefix = self.prefix(z)?;
        let mut jac =
            qsim::circuit_output_gradient(&self.template, &self.params, &prefix, &self.selector())?;
        if self.readout == Readout::Point2d {
            let probs = self.raw_outputs(z)?;
            for (row, p) in jac.iter_mut().zip(probs) {
                let slope = point_coordinate_slope(p);
                row.iter_mut().for_each(|g| *g *= slope);
            }
        }
        Ok(jac)
    }

    /// `cotangent^T J` with one reverse pass through the circuit.
    pub fn vjp(&self, z: &LatentSample, cotangent: &[f64]) -> Result<Vec<f64>> {
        let prefix = self.prefix(z)?;
        let selector = self.selector();
        let weights = match self.readout {
            Readout::Point2d => {
                let probs = self.raw_outputs(z)?;
                if cotangent.len() != probs.len() {
                    bail!(Shape, "cotangent has {} entries for 2 outputs", cotangent.len());
                }
                probs
                    .iter()
                    .zip(cotangent)
                    .map(|(&p, &g)| g * point_coordinate_slope(p))
                    .collect()
            }
            Readout::Distribution => cotangent.to_vec(),
        };
        qsim::output_vjp(&self.template, &self.params, &prefix, &selector, &weights)
    }
}

pub fn generate_point(spec: &GeneratorSpec, z: &LatentSample) -> Result<(f64, f64)> {
    if spec.readout != Readout::Point2d {
        bail!(Config, "generate_point needs a point2d generator");
    }
    let out = spec.generate(z)?;
    Ok((out[0], out[1]))
}

pub fn generate_distribution(spec: &GeneratorSpec, z: &LatentSample) -> Result<Vec<f64>> {
    if spec.readout != Readout::Distribution {
        bail!(Config, "generate_distribution needs a distribution generator");
    }
    spec.generate(z)
}

pub fn generator_jacobian(spec: &GeneratorSpec, z: &LatentSample) -> Result<Vec<Vec<f64>>> {
    spec.jacobian(z)
}
