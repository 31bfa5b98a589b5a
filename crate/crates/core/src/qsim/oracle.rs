//! Dense-matrix reference implementations, used only by tests.
//!
//! Everything here is built by a different route than the production
//! backends: full unitaries assembled from explicit Kronecker products and
//! applied by dense matrix arithmetic, plus an angle-tree state-preparation
//! oracle. Slow on purpose; capped at small registers.

use num_complex::Complex64;

use super::{GateOp, StateVector};
use crate::error::{Error, Result};

const MAX_ORACLE_QUBITS: usize = 5;

type Mat = Vec<Complex64>; // row-major square

fn identity(dim: usize) -> Mat {
    let mut m = vec![Complex64::ZERO; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = Complex64::ONE;
    }
    m
}

fn kron(a: &Mat, da: usize, b: &Mat, db: usize) -> Mat {
    let dim = da * db;
    let mut out = vec![Complex64::ZERO; dim * dim];
    for i in 0..da {
        for j in 0..da {
            let aij = a[i * da + j];
            if aij == Complex64::ZERO {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * dim + (j * db + l)] = aij * b[k * db + l];
                }
            }
        }
    }
    out
}

fn matmul(a: &Mat, b: &Mat, dim: usize) -> Mat {
    let mut out = vec![Complex64::ZERO; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == Complex64::ZERO {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn scale(a: &Mat, s: Complex64) -> Mat {
    a.iter().map(|x| x * s).collect()
}

/// Embed a 2x2 matrix on `target` of a `q`-qubit register:
/// `I_{2^(q-t-1)} (x) g (x) I_{2^t}` with qubit 0 as the low Kronecker factor.
fn embed_single(g: [[Complex64; 2]; 2], target: usize, q: usize) -> Mat {
    let g: Mat = vec![g[0][0], g[0][1], g[1][0], g[1][1]];
    let low = identity(1 << target);
    let high = identity(1 << (q - target - 1));
    let ge = kron(&g, 2, &low, 1 << target);
    kron(&high, 1 << (q - target - 1), &ge, 2 << target)
}

fn ry_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (angle / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn pauli(which: char) -> [[Complex64; 2]; 2] {
    let z = Complex64::ZERO;
    let one = Complex64::ONE;
    let i = Complex64::I;
    match which {
        'X' => [[z, one], [one, z]],
        'Y' => [[z, -i], [i, z]],
        'Z' => [[one, z], [z, -one]],
        _ => unreachable!(),
    }
}

fn gate_matrix(op: GateOp, q: usize) -> Mat {
    let dim = 1usize << q;
    match op {
        GateOp::Ry { target, angle } => embed_single(ry_matrix(angle), target, q),
        GateOp::X { target } => embed_single(pauli('X'), target, q),
        GateOp::CRy {
            control,
            target,
            angle,
        } => {
            let z = Complex64::ZERO;
            let one = Complex64::ONE;
            let p0 = embed_single([[one, z], [z, z]], control, q);
            let p1 = embed_single([[z, z], [z, one]], control, q);
            let rot = embed_single(ry_matrix(angle), target, q);
            add(&p0, &matmul(&p1, &rot, dim))
        }
        GateOp::Swap { a, b } => {
            // SWAP_{ab} = (II + XX + YY + ZZ) / 2
            let mut acc = identity(dim);
            for p in ['X', 'Y', 'Z'] {
                let pa = embed_single(pauli(p), a, q);
                let pb = embed_single(pauli(p), b, q);
                acc = add(&acc, &matmul(&pa, &pb, dim));
            }
            scale(&acc, Complex64::new(0.5, 0.0))
        }
    }
}

/// Full `2^q x 2^q` unitary of a gate list, last op leftmost.
pub fn circuit_unitary(ops: &[GateOp], q: usize) -> Result<Mat> {
    if q == 0 || q > MAX_ORACLE_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "oracle supports 1..={MAX_ORACLE_QUBITS} qubits, got {q}"
        )));
    }
    for op in ops {
        op.validate(q)?;
    }
    let dim = 1usize << q;
    let mut u = identity(dim);
    for &op in ops {
        u = matmul(&gate_matrix(op, q), &u, dim);
    }
    Ok(u)
}

/// Apply an oracle-built unitary to a statevector by dense mat-vec.
pub fn apply_unitary(u: &Mat, sv: &StateVector) -> Vec<Complex64> {
    let amps = sv.amplitudes();
    let dim = amps.len();
    let mut out = vec![Complex64::ZERO; dim];
    for (i, slot) in out.iter_mut().enumerate() {
        for j in 0..dim {
            *slot += u[i * dim + j] * amps[j];
        }
    }
    out
}

/// Angle-tree (Mottonen-style) preparation oracle for real non-negative
/// amplitude targets. Walks a binary tree of conditional rotations, most
/// significant qubit first, and emits the resulting amplitudes directly.
pub fn mottonen_amplitudes(target: &[f64]) -> Result<Vec<f64>> {
    let dim = target.len();
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::InvalidArgument(
            "target length must be a power of two >= 2".into(),
        ));
    }
    if target.iter().any(|&a| a < 0.0 || !a.is_finite()) {
        return Err(Error::InvalidArgument(
            "angle-tree oracle handles non-negative real amplitudes".into(),
        ));
    }
    let norm: f64 = target.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "target amplitudes have norm {norm}, expected 1"
        )));
    }

    // subtree_mass[k] over the implicit heap: node 1 is the root, children
    // of k are 2k and 2k+1; leaves are the basis probabilities.
    let mut mass = vec![0.0f64; 2 * dim];
    for (i, &a) in target.iter().enumerate() {
        mass[dim + i] = a * a;
    }
    for k in (1..dim).rev() {
        mass[k] = mass[2 * k] + mass[2 * k + 1];
    }

    let mut amps = vec![0.0f64; dim];
    for (i, slot) in amps.iter_mut().enumerate() {
        let mut amp = 1.0f64;
        let mut node = 1usize;
        // branch per qubit from MSB down; rotation angle at each node is
        // 2*atan2(sqrt(right), sqrt(left)), we take its cos or sin half
        for level in (0..dim.trailing_zeros()).rev() {
            let bit = (i >> level) & 1;
            let theta = 2.0 * mass[2 * node + 1].sqrt().atan2(mass[2 * node].sqrt());
            amp *= if bit == 0 {
                (theta / 2.0).cos()
            } else {
                (theta / 2.0).sin()
            };
            node = 2 * node + bit;
        }
        *slot = amp;
    }
    Ok(amps)
}

/// Smallest-eigenvalue estimate of a Hermitian matrix via shifted power
/// iteration. Good to ~1e-9 on the well-separated spectra tests feed it.
pub fn min_eigenvalue(h: &Mat, dim: usize) -> f64 {
    // Gershgorin upper bound so that c*I - H is PSD with dominant
    // eigenvalue c - lambda_min.
    let mut c = 0.0f64;
    for i in 0..dim {
        let mut row: f64 = h[i * dim + i].re;
        for j in 0..dim {
            if j != i {
                row += h[i * dim + j].norm();
            }
        }
        c = c.max(row);
    }
    c += 1.0;

    let mut v: Vec<Complex64> = (0..dim)
        .map(|i| Complex64::new(1.0 + (i as f64) * 0.37, 0.11 * (i as f64)))
        .collect();
    let mut lambda = 0.0f64;
    for _ in 0..4000 {
        let mut w = vec![Complex64::ZERO; dim];
        for (i, slot) in w.iter_mut().enumerate() {
            let mut acc = c * v[i];
            for j in 0..dim {
                acc -= h[i * dim + j] * v[j];
            }
            *slot = acc;
        }
        let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return c; // H = c*I on this subspace; any vector is extremal
        }
        for x in &mut w {
            *x /= norm;
        }
        lambda = norm
            * v.iter()
                .zip(&w)
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
                .abs();
        v = w;
    }
    c - lambda
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::qsim::{prepare_input, DensityMatrix};

    #[test]
    fn empty_circuit_is_identity() {
        let u = circuit_unitary(&[], 2).unwrap();
        assert_eq!(u, identity(4));
    }

    #[test]
    fn single_x_matrix() {
        let u = circuit_unitary(&[GateOp::X { target: 0 }], 1).unwrap();
        let want = [0.0, 1.0, 1.0, 0.0];
        for (got, want) in u.iter().zip(want) {
            assert!((got - Complex64::new(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn oracle_refuses_large_registers() {
        assert!(circuit_unitary(&[], 6).is_err());
        assert!(circuit_unitary(&[], 0).is_err());
    }

    fn random_ops(rng: &mut ChaCha8Rng, q: usize, len: usize) -> Vec<GateOp> {
        // two-qubit gates need q >= 2; pick the partner by nonzero offset
        let kinds = if q == 1 { 2 } else { 4 };
        (0..len)
            .map(|_| match rng.random_range(0..kinds) {
                0 => GateOp::Ry {
                    target: rng.random_range(0..q),
                    angle: rng.random_range(-3.0..3.0),
                },
                1 => GateOp::X {
                    target: rng.random_range(0..q),
                },
                2 => {
                    let control = rng.random_range(0..q);
                    GateOp::CRy {
                        control,
                        target: (control + rng.random_range(1..q)) % q,
                        angle: rng.random_range(-3.0..3.0),
                    }
                }
                _ => {
                    let a = rng.random_range(0..q);
                    GateOp::Swap {
                        a,
                        b: (a + rng.random_range(1..q)) % q,
                    }
                }
            })
            .collect()
    }

    #[test]
    fn oracle_matches_gate_chain_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let q = rng.random_range(1..=4usize);
            let x: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ops = random_ops(&mut rng, q, 3);

            let mut sv = prepare_input(&x, 0).unwrap();
            let u = circuit_unitary(&ops, q).unwrap();
            let want = apply_unitary(&u, &sv);
            sv.run(&ops).unwrap();
            for (got, want) in sv.amplitudes().iter().zip(&want) {
                assert!((got - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_matches_density_backend_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let q = rng.random_range(2..=4usize);
            let x: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ops = random_ops(&mut rng, q, 5);

            let sv0 = prepare_input(&x, 0).unwrap();
            let mut dm = DensityMatrix::from_statevector(&sv0);
            dm.run(&ops).unwrap();

            let u = circuit_unitary(&ops, q).unwrap();
            let amps = apply_unitary(&u, &sv0);
            for qubit in 0..q {
                let p1: f64 = amps
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i & (1 << qubit) != 0)
                    .map(|(_, a)| a.norm_sqr())
                    .sum();
                assert!((dm.prob_one(qubit) - p1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mottonen_reproduces_product_states() {
        let x = [0.3, -0.7, 0.5];
        let sv = prepare_input(&x, 0).unwrap();
        let target: Vec<f64> = sv.amplitudes().iter().map(|a| a.re).collect();
        let rebuilt = mottonen_amplitudes(&target).unwrap();
        for (got, want) in rebuilt.iter().zip(&target) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mottonen_reproduces_non_product_states() {
        // amplitudes proportional to sqrt(1..=8): entangled, non-product
        let raw: Vec<f64> = (1..=8).map(|i| (i as f64).sqrt()).collect();
        let norm: f64 = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
        let target: Vec<f64> = raw.iter().map(|a| a / norm).collect();
        let rebuilt = mottonen_amplitudes(&target).unwrap();
        for (got, want) in rebuilt.iter().zip(&target) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mottonen_rejects_bad_targets() {
        assert!(mottonen_amplitudes(&[0.6, 0.8, 0.0]).is_err()); // not power of two
        assert!(mottonen_amplitudes(&[-0.6, 0.8]).is_err()); // negative
        assert!(mottonen_amplitudes(&[0.5, 0.5]).is_err()); // norm != 1
    }

    #[test]
    fn density_matrices_stay_positive() {
        // PSD spot check demanded by the backend invariants
        let mut dm = DensityMatrix::from_statevector(&prepare_input(&[0.4, -0.2], 1).unwrap());
        dm.run(&[
            GateOp::CRy { control: 0, target: 2, angle: 1.0 },
            GateOp::CRy { control: 1, target: 2, angle: -0.6 },
            GateOp::Ry { target: 2, angle: 0.9 },
        ])
        .unwrap();
        dm.apply_bit_flip(2, 0.03).unwrap();
        dm.apply_bit_flip(0, 0.008).unwrap();

        let dim = 1 << dm.qubits();
        let mut h = vec![Complex64::ZERO; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                h[r * dim + c] = dm.entry(r, c);
            }
        }
        assert!(min_eigenvalue(&h, dim) >= -1e-8);
    }

    #[test]
    fn min_eigenvalue_on_known_spectrum() {
        // diag(0.1, 0.7, 0.2, 0.0)
        let mut h = vec![Complex64::ZERO; 16];
        for (i, v) in [0.1, 0.7, 0.2, 0.0].into_iter().enumerate() {
            h[i * 4 + i] = Complex64::new(v, 0.0);
        }
        assert!((min_eigenvalue(&h, 4) - 0.0).abs() < 1e-8);
    }
}
