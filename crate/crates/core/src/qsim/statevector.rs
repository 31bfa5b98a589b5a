//! Ideal pure-state backend.

use num_complex::Complex64;

use super::GateOp;
use crate::error::Result;

/// Pure state of `qubits` qubits as `2^qubits` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All-zeros computational basis state `|0...0>`.
    pub fn zero(qubits: usize) -> Self {
        assert!(qubits >= 1 && qubits <= 24, "unsupported register size");
        let mut amps = vec![Complex64::ZERO; 1 << qubits];
        amps[0] = Complex64::ONE;
        StateVector { qubits, amps }
    }

    /// Product state from per-qubit preparation angles: qubit `i` is
    /// `cos(a_i/2)|0> + sin(a_i/2)|1>`, ancillas above stay `|0>`.
    fn from_angles(angles: &[f64], ancilla_count: usize) -> Self {
        let n = angles.len();
        let qubits = n + ancilla_count;
        let mut sv = StateVector::zero(qubits);
        for (q, &a) in angles.iter().enumerate() {
            sv.apply_ry(q, a);
        }
        sv
    }

    pub(super) fn product_state(x: &[f64], ancilla_count: usize) -> Self {
        let angles: Vec<f64> = x.iter().map(|&v| super::input_angle(v)).collect();
        Self::from_angles(&angles, ancilla_count)
    }

    pub(super) fn product_state_shifted(
        x: &[f64],
        ancilla_count: usize,
        qubit: usize,
        shift: f64,
    ) -> Self {
        let mut angles: Vec<f64> = x.iter().map(|&v| super::input_angle(v)).collect();
        angles[qubit] += shift;
        Self::from_angles(&angles, ancilla_count)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `P(measuring qubit = 1)`.
    pub fn prob_one(&self, qubit: usize) -> f64 {
        assert!(qubit < self.qubits);
        let mask = 1usize << qubit;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// `<Z>` on one qubit: `P(0) - P(1)`.
    pub fn expectation_z(&self, qubit: usize) -> f64 {
        1.0 - 2.0 * self.prob_one(qubit)
    }

    pub fn apply(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.qubits)?;
        match op {
            GateOp::Ry { target, angle } => self.apply_ry(target, angle),
            GateOp::CRy {
                control,
                target,
                angle,
            } => self.apply_cry(control, target, angle),
            GateOp::Swap { a, b } => self.apply_swap(a, b),
            GateOp::X { target } => self.apply_x(target),
        }
        Ok(())
    }

    pub fn run(&mut self, ops: &[GateOp]) -> Result<()> {
        for &op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    fn apply_ry(&mut self, target: usize, angle: f64) {
        let (sin, cos) = (angle / 2.0).sin_cos();
        let mask = 1usize << target;
        for i0 in 0..self.amps.len() {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let a0 = self.amps[i0];
            let a1 = self.amps[i1];
            self.amps[i0] = cos * a0 - sin * a1;
            self.amps[i1] = sin * a0 + cos * a1;
        }
    }

    fn apply_cry(&mut self, control: usize, target: usize, angle: f64) {
        let (sin, cos) = (angle / 2.0).sin_cos();
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i0 in 0..self.amps.len() {
            if i0 & cmask == 0 || i0 & tmask != 0 {
                continue;
            }
            let i1 = i0 | tmask;
            let a0 = self.amps[i0];
            let a1 = self.amps[i1];
            self.amps[i0] = cos * a0 - sin * a1;
            self.amps[i1] = sin * a0 + cos * a1;
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize) {
        let amask = 1usize << a;
        let bmask = 1usize << b;
        for i in 0..self.amps.len() {
            // visit each {01, 10} pair once, from its a=1,b=0 member
            if i & amask != 0 && i & bmask == 0 {
                let j = (i & !amask) | bmask;
                self.amps.swap(i, j);
            }
        }
    }

    fn apply_x(&mut self, target: usize) {
        let mask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
    }
}
