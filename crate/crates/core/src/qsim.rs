//! Exact statevector simulation of small circuits built from RX/RY/RZ and
//! CNOT gates, with gradients of computational-basis measurement outputs.
//!
//! Conventions: qubit 0 is the most significant bit of the basis index,
//! `RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`,
//! `RX(t) = [[cos t/2, -i sin t/2], [-i sin t/2, cos t/2]]` and
//! `RZ(t) = diag(e^{-it/2}, e^{it/2})`.

use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::error::{bail, Result};

pub const MAX_QUBITS: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Full amplitude vector of an n-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zero register `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&num_qubits) {
            bail!(Size, "qubit count {num_qubits} outside 1..={MAX_QUBITS}");
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two and the vector
    /// must have unit norm within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            bail!(Size, "amplitude vector length {len} is not 2^n with 1 <= n <= {MAX_QUBITS}");
        }
        let state = Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            bail!(Domain, "state norm {norm} is not 1");
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate` in place, resolving parameter slots against `params`.
    pub fn apply(&mut self, gate: &Gate, params: &[f64]) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match *gate {
            Gate::Rotation {
                axis,
                target,
                angle,
            } => {
                let theta = angle.resolve(params)?;
                self.rotate(axis, target, theta);
            }
            Gate::Cnot { control, target } => self.cnot(control, target),
        }
        Ok(())
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn rotate(&mut self, axis: Axis, target: usize, theta: f64) {
        let [[a, b], [c, d]] = axis.matrix(theta);
        let mask = self.bit(target);
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = a * x + b * y;
                self.amplitudes[j] = c * x + d * y;
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let cmask = self.bit(control);
        let tmask = self.bit(target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    /// `<other| P_q |self>` for the Pauli generator of `axis` on `qubit`.
    fn pauli_overlap(&self, other: &StateVector, axis: Axis, qubit: usize) -> Complex64 {
        let mask = self.bit(qubit);
        let i_unit = Complex64::new(0.0, 1.0);
        let mut acc = ZERO;
        for i in 0..self.amplitudes.len() {
            if i & mask != 0 {
                continue;
            }
            let j = i | mask;
            let (l0, l1) = (other.amplitudes[i].conj(), other.amplitudes[j].conj());
            let (p0, p1) = (self.amplitudes[i], self.amplitudes[j]);
            acc += match axis {
                Axis::X => l0 * p1 + l1 * p0,
                Axis::Y => l0 * (-i_unit * p1) + l1 * (i_unit * p0),
                Axis::Z => l0 * p0 - l1 * p1,
            };
        }
        acc
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal probability that `qubit` measures 0.
    pub fn qubit_zero_probability(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.num_qubits {
            bail!(Index, "qubit {qubit} out of range for {} qubits", self.num_qubits);
        }
        let mask = self.bit(qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }
}

pub fn new_zero_state(num_qubits: usize) -> Result<StateVector> {
    StateVector::zero(num_qubits)
}

/// Returns the state after `gate`, leaving the input untouched.
pub fn apply_gate(state: &StateVector, gate: &Gate, params: &[f64]) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(gate, params)?;
    Ok(out)
}

pub fn basis_probabilities(state: &StateVector) -> Vec<f64> {
    state.probabilities()
}

pub fn qubit_zero_probability(state: &StateVector, qubit: usize) -> Result<f64> {
    state.qubit_zero_probability(qubit)
}

/// Rotation axis of a single-qubit rotation gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn matrix(self, theta: f64) -> [[Complex64; 2]; 2] {
        let (s, c) = (theta / 2.0).sin_cos();
        let re = |x: f64| Complex64::new(x, 0.0);
        match self {
            Axis::X => [
                [re(c), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), re(c)],
            ],
            Axis::Y => [[re(c), re(-s)], [re(s), re(c)]],
            Axis::Z => [
                [Complex64::new(c, -s), ZERO],
                [ZERO, Complex64::new(c, s)],
            ],
        }
    }
}

/// Where a rotation gate takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AngleSource {
    /// A constant angle in radians.
    Fixed(f64),
    /// Index into the trainable parameter vector.
    Param(usize),
}

impl AngleSource {
    fn resolve(self, params: &[f64]) -> Result<f64> {
        match self {
            AngleSource::Fixed(theta) => Ok(theta),
            AngleSource::Param(slot) => match params.get(slot) {
                Some(&theta) => Ok(theta),
                None => bail!(Index, "parameter slot {slot} but only {} params", params.len()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Gate {
    Rotation {
        axis: Axis,
        target: usize,
        angle: AngleSource,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

impl Gate {
    pub fn rx(target: usize, angle: AngleSource) -> Self {
        Gate::Rotation {
            axis: Axis::X,
            target,
            angle,
        }
    }

    pub fn ry(target: usize, angle: AngleSource) -> Self {
        Gate::Rotation {
            axis: Axis::Y,
            target,
            angle,
        }
    }

    pub fn rz(target: usize, angle: AngleSource) -> Self {
        Gate::Rotation {
            axis: Axis::Z,
            target,
            angle,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    /// Parameter slot this gate reads, if any.
    pub fn slot(&self) -> Option<usize> {
        match *self {
            Gate::Rotation {
                angle: AngleSource::Param(slot),
                ..
            } => Some(slot),
            _ => None,
        }
    }

    fn validate(&self, num_qubits: usize) -> Result<()> {
        match *self {
            Gate::Rotation { target, .. } if target >= num_qubits => {
                bail!(Index, "rotation target {target} out of range for {num_qubits} qubits")
            }
            Gate::Cnot { control, target } => {
                if control >= num_qubits || target >= num_qubits {
                    bail!(Index, "CNOT({control}, {target}) out of range for {num_qubits} qubits");
                }
                if control == target {
                    bail!(Index, "CNOT control and target are both {control}");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn inverse_angle(&self, params: &[f64]) -> Result<Gate> {
        Ok(match *self {
            Gate::Rotation {
                axis,
                target,
                angle,
            } => Gate::Rotation {
                axis,
                target,
                angle: AngleSource::Fixed(-angle.resolve(params)?),
            },
            cnot => cnot,
        })
    }
}

/// An ansatz: an ordered gate list whose rotation angles come from a
/// trainable parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTemplate {
    num_qubits: usize,
    gates: Vec<Gate>,
    num_params: usize,
}

impl CircuitTemplate {
    /// Checks that every gate fits the register, every referenced slot is in
    /// `0..num_params`, and every slot is referenced at least once.
    pub fn new(num_qubits: usize, gates: Vec<Gate>, num_params: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&num_qubits) {
            bail!(Size, "qubit count {num_qubits} outside 1..={MAX_QUBITS}");
        }
        let mut used = vec![false; num_params];
        for gate in &gates {
            gate.validate(num_qubits)?;
            if let Some(slot) = gate.slot() {
                match used.get_mut(slot) {
                    Some(flag) => *flag = true,
                    None => bail!(Index, "gate references slot {slot} >= {num_params}"),
                }
            }
        }
        if let Some(slot) = used.iter().position(|u| !u) {
            bail!(Index, "parameter slot {slot} is never referenced");
        }
        Ok(Self {
            num_qubits,
            gates,
            num_params,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            bail!(Shape, "expected {} params, got {}", self.num_params, params.len());
        }
        Ok(())
    }

    /// Runs `prefix` (fixed gates) then the template on `|0...0>`.
    pub fn run(&self, prefix: &[Gate], params: &[f64]) -> Result<StateVector> {
        self.check_params(params)?;
        let mut state = StateVector::zero(self.num_qubits)?;
        for gate in prefix.iter().chain(&self.gates) {
            state.apply(gate, params)?;
        }
        Ok(state)
    }
}

/// Which measurement-derived quantities a circuit reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputSelector {
    /// `P(qubit = 0)` for each listed qubit, in order.
    QubitZero(Vec<usize>),
    /// All `2^n` computational-basis probabilities.
    BasisProbabilities,
}

impl OutputSelector {
    pub fn len(&self, num_qubits: usize) -> usize {
        match self {
            OutputSelector::QubitZero(qubits) => qubits.len(),
            OutputSelector::BasisProbabilities => 1 << num_qubits,
        }
    }

    pub fn is_empty(&self, num_qubits: usize) -> bool {
        self.len(num_qubits) == 0
    }

    fn validate(&self, num_qubits: usize) -> Result<()> {
        if let OutputSelector::QubitZero(qubits) = self {
            if let Some(q) = qubits.iter().find(|&&q| q >= num_qubits) {
                bail!(Index, "selector names qubit {q} of a {num_qubits}-qubit register");
            }
        }
        Ok(())
    }

    /// Reads the selected outputs off a state.
    pub fn read(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.validate(state.num_qubits)?;
        match self {
            OutputSelector::QubitZero(qubits) => qubits
                .iter()
                .map(|&q| state.qubit_zero_probability(q))
                .collect(),
            OutputSelector::BasisProbabilities => Ok(state.probabilities()),
        }
    }

    /// Diagonal of the observable `sum_k weights[k] * O_k`, where `O_k` is the
    /// projector whose expectation is output `k`.
    fn diagonal(&self, num_qubits: usize, weights: &[f64]) -> Vec<f64> {
        let dim = 1 << num_qubits;
        match self {
            OutputSelector::QubitZero(qubits) => (0..dim)
                .map(|i| {
                    qubits
                        .iter()
                        .zip(weights)
                        .filter(|(&q, _)| i & (1 << (num_qubits - 1 - q)) == 0)
                        .map(|(_, w)| w)
                        .sum()
                })
                .collect(),
            OutputSelector::BasisProbabilities => weights.to_vec(),
        }
    }
}

/// Evaluates the selected outputs of `prefix` followed by `template`.
pub fn circuit_outputs(
    template: &CircuitTemplate,
    params: &[f64],
    prefix: &[Gate],
    selector: &OutputSelector,
) -> Result<Vec<f64>> {
    selector.read(&template.run(prefix, params)?)
}

/// Vector-Jacobian product `sum_k cotangent[k] * d output_k / d params`,
/// computed with a single reverse pass through the statevector.
///
/// The outputs are expectations of diagonal projectors, so the weighted sum is
/// the expectation of one diagonal observable `O`. For a rotation
/// `exp(-i t P / 2)` its derivative contributes `Im <lambda| P |psi>`, where
/// `psi` is the forward state and `lambda = U_after^dagger O psi_final`.
pub fn output_vjp(
    template: &CircuitTemplate,
    params: &[f64],
    prefix: &[Gate],
    selector: &OutputSelector,
    cotangent: &[f64],
) -> Result<Vec<f64>> {
    selector.validate(template.num_qubits)?;
    let n_out = selector.len(template.num_qubits);
    if cotangent.len() != n_out {
        bail!(Shape, "cotangent has {} entries for {n_out} outputs", cotangent.len());
    }
    let mut psi = template.run(prefix, params)?;
    let diag = selector.diagonal(template.num_qubits, cotangent);
    let mut lambda = psi.clone();
    for (amp, w) in lambda.amplitudes.iter_mut().zip(&diag) {
        *amp *= *w;
    }

    let mut grad = vec![0.0; template.num_params];
    for gate in template.gates.iter().rev() {
        if let Gate::Rotation {
            axis,
            target,
            angle: AngleSource::Param(slot),
        } = *gate
        {
            grad[slot] += psi.pauli_overlap(&lambda, axis, target).im;
        }
        let inverse = gate.inverse_angle(params)?;
        psi.apply(&inverse, params)?;
        lambda.apply(&inverse, params)?;
    }
    Ok(grad)
}

/// Jacobian of the selected outputs with respect to the template parameters,
/// one row per output.
pub fn circuit_output_gradient(
    template: &CircuitTemplate,
    params: &[f64],
    prefix: &[Gate],
    selector: &OutputSelector,
) -> Result<Vec<Vec<f64>>> {
    selector.validate(template.num_qubits)?;
    let n_out = selector.len(template.num_qubits);
    let mut unit = vec![0.0; n_out];
    (0..n_out)
        .map(|k| {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[k] = 1.0;
            output_vjp(template, params, prefix, selector, &unit)
        })
        .collect()
}

/// Same Jacobian as [`circuit_output_gradient`] via the parameter-shift rule,
/// `[f(t + pi/2) - f(t - pi/2)] / 2` per gate occurrence of each slot.
pub fn parameter_shift_gradient(
    template: &CircuitTemplate,
    params: &[f64],
    prefix: &[Gate],
    selector: &OutputSelector,
) -> Result<Vec<Vec<f64>>> {
    selector.validate(template.num_qubits)?;
    template.check_params(params)?;
    let n_out = selector.len(template.num_qubits);
    let mut jac = vec![vec![0.0; template.num_params]; n_out];
    let shift = core::f64::consts::FRAC_PI_2;
    for (g, gate) in template.gates.iter().enumerate() {
        let Some(slot) = gate.slot() else { continue };
        let shifted = |delta: f64| -> Result<Vec<f64>> {
            let mut state = StateVector::zero(template.num_qubits)?;
            for gate in prefix {
                state.apply(gate, params)?;
            }
            for (k, gate) in template.gates.iter().enumerate() {
                if let (true, &Gate::Rotation { axis, target, .. }) = (k == g, gate) {
                    let moved = Gate::Rotation {
                        axis,
                        target,
                        angle: AngleSource::Fixed(params[slot] + delta),
                    };
                    state.apply(&moved, params)?;
                } else {
                    state.apply(gate, params)?;
                }
            }
            selector.read(&state)
        };
        let plus = shifted(shift)?;
        let minus = shifted(-shift)?;
        for (row, (p, m)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
            row[slot] += (p - m) / 2.0;
        }
    }
    Ok(jac)
}
