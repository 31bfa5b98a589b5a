//! Exact simulator for small qubit registers.
//!
//! Two backends share one gate set: a statevector backend for ideal circuits
//! and a density-matrix backend for channel-level noise. Qubit 0 is the
//! least-significant bit of the amplitude index, so basis index `i` assigns
//! qubit `t` the bit `(i >> t) & 1`. Expectations are computed analytically;
//! shot sampling exists behind [`sample_z`] for realism studies but nothing
//! in the pipeline uses it by default.

mod density;
mod statevector;

pub mod oracle;

pub use density::DensityMatrix;
pub use statevector::StateVector;

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// One operation from the simulator's gate set.
///
/// `CRy` rotates `target` by `angle` when `control` is set. For `Swap`, `a`
/// is the "first" qubit, which is where gate-level noise attaches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    Ry { target: usize, angle: f64 },
    CRy { control: usize, target: usize, angle: f64 },
    Swap { a: usize, b: usize },
    X { target: usize },
}

impl GateOp {
    /// Qubit indices the op touches, first index = noise attachment point.
    pub fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            GateOp::Ry { target, .. } | GateOp::X { target } => (target, None),
            GateOp::CRy {
                control, target, ..
            } => (target, Some(control)),
            GateOp::Swap { a, b } => (a, Some(b)),
        }
    }

    pub fn max_qubit(&self) -> usize {
        let (a, b) = self.qubits();
        b.map_or(a, |b| a.max(b))
    }

    pub fn validate(&self, qubits: usize) -> Result<()> {
        if self.max_qubit() >= qubits {
            return Err(Error::InvalidArgument(format!(
                "gate {self:?} addresses a qubit outside the {qubits}-qubit register"
            )));
        }
        if let GateOp::CRy {
            control, target, ..
        } = *self
        {
            if control == target {
                return Err(Error::InvalidArgument(
                    "controlled rotation needs distinct control and target".into(),
                ));
            }
        }
        if let GateOp::Swap { a, b } = *self {
            if a == b {
                return Err(Error::InvalidArgument("swap needs distinct qubits".into()));
            }
        }
        let angle = match *self {
            GateOp::Ry { angle, .. } | GateOp::CRy { angle, .. } => angle,
            _ => 0.0,
        };
        if !angle.is_finite() {
            return Err(Error::InvalidArgument("gate angle must be finite".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for GateOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            GateOp::Ry { target, angle } => write!(f, "ry q{target} {angle:.12}"),
            GateOp::CRy {
                control,
                target,
                angle,
            } => write!(f, "cry q{control} q{target} {angle:.12}"),
            GateOp::Swap { a, b } => write!(f, "swap q{a} q{b}"),
            GateOp::X { target } => write!(f, "x q{target}"),
        }
    }
}

/// Textual gate list, one op per line, for debug dumps.
pub fn dump_circuit(ops: &[GateOp]) -> String {
    let mut out = String::new();
    for op in ops {
        out.push_str(&op.to_string());
        out.push('\n');
    }
    out
}

/// Rotation angle that carries classical value `x` in `[-1, 1]` onto one
/// qubit: applying `Ry` by this angle to `|0>` yields
/// `cos(x pi/4 + pi/4)|0> + sin(x pi/4 + pi/4)|1>`.
pub fn input_angle(x: f64) -> f64 {
    x * FRAC_PI_2 + FRAC_PI_2
}

/// Product-state preparation of a classical vector in `[-1, 1]^n`.
///
/// Data qubits 0..n carry one entry each; `ancilla_count` extra qubits sit
/// above them in `|0>`. The endpoints map exactly: -1 to `|0>`, +1 to `|1>`,
/// 0 to the equal superposition.
pub fn prepare_input(x: &[f64], ancilla_count: usize) -> Result<StateVector> {
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "input entry {i} = {v} is outside [-1, 1]"
            )));
        }
    }
    Ok(StateVector::product_state(x, ancilla_count))
}

/// Like [`prepare_input`] but with one preparation angle shifted, for
/// parameter-shift gradients with respect to the inputs.
pub fn prepare_input_shifted(
    x: &[f64],
    ancilla_count: usize,
    qubit: usize,
    shift: f64,
) -> Result<StateVector> {
    if qubit >= x.len() {
        return Err(Error::InvalidArgument(format!(
            "shift qubit {qubit} out of range for {} inputs",
            x.len()
        )));
    }
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "input entry {i} = {v} is outside [-1, 1]"
            )));
        }
    }
    Ok(StateVector::product_state_shifted(x, ancilla_count, qubit, shift))
}

/// Probability pair `(P(0), P(1))` for one measured qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDist {
    pub p0: f64,
    pub p1: f64,
}

impl OutcomeDist {
    pub fn from_p1(p1: f64) -> Self {
        OutcomeDist { p0: 1.0 - p1, p1 }
    }

    pub fn from_z(z: f64) -> Self {
        Self::from_p1((1.0 - z) / 2.0)
    }

    pub fn z(&self) -> f64 {
        self.p0 - self.p1
    }
}

/// Classical readout confusion: a measured 0 flips to 1 with probability
/// `p01` and a measured 1 flips to 0 with probability `p10`.
pub fn apply_readout_error(probs: OutcomeDist, p01: f64, p10: f64) -> Result<OutcomeDist> {
    for (name, p) in [("p01", p01), ("p10", p10)] {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} = {p} is not a probability"
            )));
        }
    }
    if !(probs.p0 + probs.p1 - 1.0).abs().is_finite() || (probs.p0 + probs.p1 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "outcome distribution ({}, {}) does not sum to 1",
            probs.p0, probs.p1
        )));
    }
    let p1 = (1.0 - p10) * probs.p1 + p01 * probs.p0;
    Ok(OutcomeDist::from_p1(p1))
}

/// Shot-sampled `<Z>` estimate. Off by default everywhere; exact
/// expectations are the pipeline's contract.
pub fn sample_z(p1: f64, shots: u32, rng: &mut impl rand::Rng) -> f64 {
    let mut ones = 0u32;
    for _ in 0..shots {
        if rng.random::<f64>() < p1 {
            ones += 1;
        }
    }
    1.0 - 2.0 * f64::from(ones) / f64::from(shots.max(1))
}
