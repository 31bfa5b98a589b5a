//! Hardware-style error profile: bit-flips on randomly chosen gates and
//! confusion on randomly chosen measurements.
//!
//! A [`NoiseSpec`] is sampled once per run (a fixed error profile, not
//! per-sample noise) and bound to one circuit layout. Gate sites flip the
//! gate's first listed qubit right after that gate executes; readout sites
//! apply a symmetric classical confusion to the measured `<Z>` values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{apply_readout_error, DensityMatrix, GateOp, OutcomeDist};

pub const GATE_FLIP_RANGE: (f64, f64) = (0.001, 0.01);
pub const READOUT_RANGE: (f64, f64) = (0.01, 0.07);
const GATE_SITES: usize = 6;
const READOUT_SITES: usize = 6;

/// One run's error profile, bound to a circuit of `circuit_len` gates and
/// `n_measurements` measured qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `(gate index, flip probability)`, indices unique and ascending.
    pub gate_sites: Vec<(usize, f64)>,
    /// `(measured qubit, confusion probability)`, indices unique and ascending.
    pub readout_sites: Vec<(usize, f64)>,
    pub circuit_len: usize,
    pub n_measurements: usize,
    pub seed: u64,
}

/// Draw an error profile: up to 6 gate sites with p in `[0.001, 0.01]` and
/// up to 6 readout sites with p in `[0.01, 0.07]`, uniformly without
/// replacement, fully determined by `seed`.
pub fn sample_noise_spec(circuit_len: usize, n_measurements: usize, seed: u64) -> Result<NoiseSpec> {
    if circuit_len == 0 {
        return Err(Error::InvalidArgument(
            "cannot bind noise to an empty circuit".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pick = |rng: &mut ChaCha8Rng, pool: usize, want: usize| -> Vec<usize> {
        let mut sites = rand::seq::index::sample(rng, pool, want.min(pool)).into_vec();
        sites.sort_unstable();
        sites
    };

    let gate_sites = pick(&mut rng, circuit_len, GATE_SITES)
        .into_iter()
        .map(|i| (i, rng.random_range(GATE_FLIP_RANGE.0..=GATE_FLIP_RANGE.1)))
        .collect();
    let readout_sites = pick(&mut rng, n_measurements, READOUT_SITES)
        .into_iter()
        .map(|q| (q, rng.random_range(READOUT_RANGE.0..=READOUT_RANGE.1)))
        .collect();

    Ok(NoiseSpec {
        gate_sites,
        readout_sites,
        circuit_len,
        n_measurements,
        seed,
    })
}

impl NoiseSpec {
    /// Profile with no error sites; noisy execution under it is exactly ideal.
    pub fn silent(circuit_len: usize, n_measurements: usize) -> Self {
        NoiseSpec {
            gate_sites: Vec::new(),
            readout_sites: Vec::new(),
            circuit_len,
            n_measurements,
            seed: 0,
        }
    }

    pub fn validate_for(&self, ops: &[GateOp], n_measurements: usize) -> Result<()> {
        if self.circuit_len != ops.len() {
            return Err(Error::NoiseBinding(format!(
                "spec bound to {} gates but circuit has {}",
                self.circuit_len,
                ops.len()
            )));
        }
        if let Some(&(i, _)) = self.gate_sites.iter().find(|(i, _)| *i >= ops.len()) {
            return Err(Error::NoiseBinding(format!(
                "gate site {i} outside circuit of length {}",
                ops.len()
            )));
        }
        if let Some(&(q, _)) = self
            .readout_sites
            .iter()
            .find(|(q, _)| *q >= n_measurements)
        {
            return Err(Error::NoiseBinding(format!(
                "readout site {q} outside the {n_measurements} measured qubits"
            )));
        }
        Ok(())
    }
}

/// Run a gate list on a density matrix, inserting a bit-flip channel after
/// every gate the spec marks. The flip lands on the gate's first listed
/// qubit (the rotation target for RY/CRY).
pub fn apply_noisy_circuit(
    rho: &mut DensityMatrix,
    ops: &[GateOp],
    spec: &NoiseSpec,
) -> Result<()> {
    spec.validate_for(ops, spec.n_measurements)?;
    let mut sites = spec.gate_sites.iter().peekable();
    for (i, &op) in ops.iter().enumerate() {
        rho.apply(op)?;
        while let Some(&&(site, p)) = sites.peek() {
            if site != i {
                break;
            }
            let (qubit, _) = op.qubits();
            rho.apply_bit_flip(qubit, p)?;
            sites.next();
        }
    }
    Ok(())
}

/// Apply the spec's readout confusions to a vector of per-qubit `<Z>`.
pub fn apply_readout_sites(z_values: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    let mut out = z_values.to_vec();
    for &(q, p) in &spec.readout_sites {
        let z = *out.get(q).ok_or_else(|| {
            Error::NoiseBinding(format!(
                "readout site {q} outside the {} measured qubits",
                z_values.len()
            ))
        })?;
        let adjusted = apply_readout_error(OutcomeDist::from_z(z), p, p)?;
        out[q] = adjusted.z();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::qsim::prepare_input;

    #[test]
    fn sampling_is_reproducible_and_in_range() {
        for seed in 0..1000u64 {
            let spec = sample_noise_spec(9, 8, seed).unwrap();
            assert_eq!(spec.gate_sites.len(), 6);
            assert_eq!(spec.readout_sites.len(), 6);
            for &(i, p) in &spec.gate_sites {
                assert!(i < 9);
                assert!((GATE_FLIP_RANGE.0..=GATE_FLIP_RANGE.1).contains(&p));
            }
            for &(q, p) in &spec.readout_sites {
                assert!(q < 8);
                assert!((READOUT_RANGE.0..=READOUT_RANGE.1).contains(&p));
            }
            // no repeats
            for w in spec.gate_sites.windows(2) {
                assert!(w[0].0 < w[1].0);
            }
            assert_eq!(spec, sample_noise_spec(9, 8, seed).unwrap());
        }
    }

    #[test]
    fn short_circuit_uses_every_gate() {
        let spec = sample_noise_spec(3, 2, 42).unwrap();
        let indices: Vec<usize> = spec.gate_sites.iter().map(|s| s.0).collect();
        assert_eq!(indices, vec![0, 1, 2]);
        assert_eq!(spec.readout_sites.len(), 2);
    }

    #[test]
    fn empty_spec_matches_noiseless_evolution() {
        let ops = [
            GateOp::CRy { control: 0, target: 2, angle: 0.9 },
            GateOp::Ry { target: 2, angle: 0.4 },
            GateOp::Swap { a: 2, b: 1 },
        ];
        let sv0 = prepare_input(&[0.3, -0.6], 1).unwrap();

        let mut plain = DensityMatrix::from_statevector(&sv0);
        plain.run(&ops).unwrap();

        let mut noisy = DensityMatrix::from_statevector(&sv0);
        apply_noisy_circuit(&mut noisy, &ops, &NoiseSpec::silent(3, 2)).unwrap();

        for q in 0..3 {
            assert!((plain.prob_one(q) - noisy.prob_one(q)).abs() < 1e-12);
        }
        assert!((noisy.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn flip_after_ry_pi_gives_minus_one_plus_2p() {
        let p = 0.007;
        let spec = NoiseSpec {
            gate_sites: vec![(0, p)],
            readout_sites: vec![],
            circuit_len: 1,
            n_measurements: 1,
            seed: 0,
        };
        let mut rho = DensityMatrix::zero(1);
        apply_noisy_circuit(&mut rho, &[GateOp::Ry { target: 0, angle: PI }], &spec).unwrap();
        assert!((rho.expectation_z(0) - (-(1.0 - 2.0 * p))).abs() < 1e-14);
    }

    #[test]
    fn binding_errors_are_reported() {
        let spec = sample_noise_spec(9, 8, 1).unwrap();
        let short = [GateOp::Ry { target: 0, angle: 0.1 }];
        let mut rho = DensityMatrix::zero(1);
        assert!(matches!(
            apply_noisy_circuit(&mut rho, &short, &spec),
            Err(Error::NoiseBinding(_))
        ));
        assert!(matches!(
            apply_readout_sites(&[0.0; 3], &spec),
            Err(Error::NoiseBinding(_))
        ));
    }

    #[test]
    fn readout_confusion_scales_z_by_one_minus_2p() {
        let spec = NoiseSpec {
            gate_sites: vec![],
            readout_sites: vec![(0, 0.07), (2, 0.01)],
            circuit_len: 1,
            n_measurements: 3,
            seed: 0,
        };
        let z = apply_readout_sites(&[1.0, 0.5, -0.4], &spec).unwrap();
        assert!((z[0] - 0.86).abs() < 1e-15);
        assert!((z[1] - 0.5).abs() < 1e-15);
        assert!((z[2] - (-0.4 * 0.98)).abs() < 1e-15);

        // <Z> = 0 is a fixed point of symmetric confusion
        let z = apply_readout_sites(&[0.0], &NoiseSpec {
            gate_sites: vec![],
            readout_sites: vec![(0, 0.05)],
            circuit_len: 1,
            n_measurements: 1,
            seed: 0,
        })
        .unwrap();
        assert!(z[0].abs() < 1e-15);
    }

    #[test]
    fn site_frequencies_are_roughly_uniform() {
        // 6-of-9 sampling: each gate index should appear with freq ~ 2/3
        let mut counts = [0usize; 9];
        let trials = 2000;
        for seed in 0..trials {
            for &(i, _) in &sample_noise_spec(9, 8, seed).unwrap().gate_sites {
                counts[i] += 1;
            }
        }
        let expect = trials as f64 * 6.0 / 9.0;
        for &c in &counts {
            assert!(
                (c as f64 - expect).abs() < 4.0 * (expect * (1.0 - 6.0 / 9.0)).sqrt(),
                "count {c} too far from {expect}"
            );
        }
    }
}
