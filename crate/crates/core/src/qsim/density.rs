//! Mixed-state backend for noisy execution.
//!
//! States are dense row-major density matrices. Unitaries are applied as
//! `U rho U^H` in two passes (rows, then columns); all gates in our set are
//! real, so `U^H = U^T` and both passes reuse the same 2x2 coefficients.

use num_complex::Complex64;

use super::{GateOp, StateVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zero(qubits: usize) -> Self {
        Self::from_statevector(&StateVector::zero(qubits))
    }

    /// Outer product `|psi><psi|` of a pure state.
    pub fn from_statevector(sv: &StateVector) -> Self {
        let amps = sv.amplitudes();
        let dim = amps.len();
        let mut rho = vec![Complex64::ZERO; dim * dim];
        for r in 0..dim {
            if amps[r] == Complex64::ZERO {
                continue;
            }
            for c in 0..dim {
                rho[r * dim + c] = amps[r] * amps[c].conj();
            }
        }
        DensityMatrix {
            qubits: sv.qubits(),
            dim,
            rho,
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.rho[row * self.dim + col]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.rho[i * self.dim + i].re).sum()
    }

    /// Largest `|rho[r][c] - conj(rho[c][r])|` over the matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in r..self.dim {
                let d = (self.rho[r * self.dim + c] - self.rho[c * self.dim + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn prob_one(&self, qubit: usize) -> f64 {
        assert!(qubit < self.qubits);
        let mask = 1usize << qubit;
        (0..self.dim)
            .filter(|i| i & mask != 0)
            .map(|i| self.rho[i * self.dim + i].re)
            .sum()
    }

    pub fn expectation_z(&self, qubit: usize) -> f64 {
        1.0 - 2.0 * self.prob_one(qubit)
    }

    pub fn apply(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.qubits)?;
        match op {
            GateOp::Ry { target, angle } => self.rotate(target, None, angle),
            GateOp::CRy {
                control,
                target,
                angle,
            } => self.rotate(target, Some(control), angle),
            GateOp::Swap { a, b } => self.permute(|i| {
                let (pa, pb) = ((i >> a) & 1, (i >> b) & 1);
                (i & !(1 << a) & !(1 << b)) | (pb << a) | (pa << b)
            }),
            GateOp::X { target } => self.permute(|i| i ^ (1 << target)),
        }
        Ok(())
    }

    pub fn run(&mut self, ops: &[GateOp]) -> Result<()> {
        for &op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    /// Bit-flip channel on one qubit: `rho -> (1-p) rho + p X rho X`.
    pub fn apply_bit_flip(&mut self, qubit: usize, p: f64) -> Result<()> {
        if qubit >= self.qubits {
            return Err(Error::InvalidArgument(format!(
                "bit-flip qubit {qubit} out of range"
            )));
        }
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bit-flip probability {p} is not in [0, 1]"
            )));
        }
        let mask = 1usize << qubit;
        let dim = self.dim;
        // X rho X flips the qubit bit of both indices; mix pairwise in place.
        for r in 0..dim {
            let rf = r ^ mask;
            if rf < r {
                continue;
            }
            for c in 0..dim {
                let cf = c ^ mask;
                if rf == r && cf < c {
                    continue;
                }
                let a = self.rho[r * dim + c];
                let b = self.rho[rf * dim + cf];
                self.rho[r * dim + c] = (1.0 - p) * a + p * b;
                if rf != r || cf != c {
                    self.rho[rf * dim + cf] = (1.0 - p) * b + p * a;
                }
            }
        }
        Ok(())
    }

    /// Real rotation block on `target`, optionally controlled. Applies the
    /// row pass (`U rho`) then the column pass (`... U^T`).
    fn rotate(&mut self, target: usize, control: Option<usize>, angle: f64) {
        let (sin, cos) = (angle / 2.0).sin_cos();
        let tmask = 1usize << target;
        let cmask = control.map(|c| 1usize << c);
        let dim = self.dim;
        let active = |i: usize| cmask.is_none_or(|m| i & m != 0);

        for r0 in 0..dim {
            if r0 & tmask != 0 || !active(r0) {
                continue;
            }
            let r1 = r0 | tmask;
            for c in 0..dim {
                let a = self.rho[r0 * dim + c];
                let b = self.rho[r1 * dim + c];
                self.rho[r0 * dim + c] = cos * a - sin * b;
                self.rho[r1 * dim + c] = sin * a + cos * b;
            }
        }
        for c0 in 0..dim {
            if c0 & tmask != 0 || !active(c0) {
                continue;
            }
            let c1 = c0 | tmask;
            for r in 0..dim {
                let a = self.rho[r * dim + c0];
                let b = self.rho[r * dim + c1];
                self.rho[r * dim + c0] = cos * a - sin * b;
                self.rho[r * dim + c1] = sin * a + cos * b;
            }
        }
    }

    /// Basis permutation `P rho P^T` for X and SWAP.
    fn permute(&mut self, map: impl Fn(usize) -> usize) {
        let dim = self.dim;
        let mut next = vec![Complex64::ZERO; dim * dim];
        for r in 0..dim {
            let pr = map(r);
            for c in 0..dim {
                next[pr * dim + map(c)] = self.rho[r * dim + c];
            }
        }
        self.rho = next;
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::qsim::prepare_input;

    fn assert_matches_statevector(x: &[f64], ops: &[GateOp]) {
        let mut sv = prepare_input(x, 1).unwrap();
        let mut dm = DensityMatrix::from_statevector(&sv);
        sv.run(ops).unwrap();
        dm.run(ops).unwrap();
        for q in 0..sv.qubits() {
            assert!(
                (sv.prob_one(q) - dm.prob_one(q)).abs() < 1e-12,
                "qubit {q} marginal mismatch"
            );
        }
        assert!((dm.trace() - 1.0).abs() < 1e-12);
        assert!(dm.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn noiseless_density_agrees_with_statevector() {
        assert_matches_statevector(
            &[0.4, -0.9, 0.15],
            &[
                GateOp::CRy { control: 0, target: 3, angle: 0.8 },
                GateOp::CRy { control: 2, target: 3, angle: -1.1 },
                GateOp::Ry { target: 3, angle: 0.35 },
                GateOp::Swap { a: 1, b: 3 },
                GateOp::X { target: 0 },
            ],
        );
    }

    #[test]
    fn bit_flip_mixes_toward_half() {
        // |0><0| under p=0.5 bit flip becomes the maximally mixed qubit
        let mut dm = DensityMatrix::zero(1);
        dm.apply_bit_flip(0, 0.5).unwrap();
        assert!((dm.prob_one(0) - 0.5).abs() < 1e-15);
        assert!((dm.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bit_flip_identity_and_full_flip() {
        let mut dm = DensityMatrix::zero(2);
        dm.apply(GateOp::Ry { target: 0, angle: 0.9 }).unwrap();
        let before = dm.clone();
        dm.apply_bit_flip(0, 0.0).unwrap();
        assert_eq!(dm, before);

        // p=1 equals a deterministic X
        let mut flipped = before.clone();
        flipped.apply_bit_flip(0, 1.0).unwrap();
        let mut xed = before.clone();
        xed.apply(GateOp::X { target: 0 }).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((flipped.entry(r, c) - xed.entry(r, c)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn bit_flip_p1_exact_algebra() {
        // For a qubit with P(1) = q, the channel gives (1-p) q + p (1-q).
        let x = 0.37f64;
        let mut dm = DensityMatrix::from_statevector(&prepare_input(&[x], 0).unwrap());
        let q = dm.prob_one(0);
        let p = 0.013;
        dm.apply_bit_flip(0, p).unwrap();
        let want = (1.0 - p) * q + p * (1.0 - q);
        assert!((dm.prob_one(0) - want).abs() < 1e-15);
    }

    #[test]
    fn channel_preserves_invariants_under_composition() {
        let mut dm = DensityMatrix::from_statevector(&prepare_input(&[0.2, -0.6], 1).unwrap());
        dm.apply(GateOp::CRy { control: 0, target: 2, angle: 1.3 }).unwrap();
        dm.apply_bit_flip(2, 0.004).unwrap();
        dm.apply(GateOp::CRy { control: 1, target: 2, angle: -0.7 }).unwrap();
        dm.apply_bit_flip(2, 0.01).unwrap();
        dm.apply(GateOp::Ry { target: 2, angle: PI / 3.0 }).unwrap();
        dm.apply(GateOp::Swap { a: 0, b: 2 }).unwrap();
        dm.apply_bit_flip(0, 0.002).unwrap();
        assert!((dm.trace() - 1.0).abs() < 1e-12);
        assert!(dm.hermiticity_defect() < 1e-12);
    }
}
