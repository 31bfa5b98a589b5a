//! Quantum Hopfield associative memory.
//!
//! Stored patterns configure a Hebbian weight matrix; retrieval runs the
//! variational quantum-neuron circuit against one randomly chosen target
//! qubit. On a polar input the rotations controlled by the other qubits
//! accumulate, together with the bias, a total ancilla rotation of exactly
//! `2*phi_i` where `phi_i = gamma*theta_i + pi/4` and `theta_i` is the
//! classical local field, so the updated neuron reads `P(1) = sin^2(phi_i)`:
//! above 1/2 exactly when the field pushes the neuron toward +1.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::archetypes::PatternSet;
use crate::error::{Error, Result};
use crate::noise::{apply_noisy_circuit, apply_readout_sites, NoiseSpec};
use crate::qsim::{prepare_input, prepare_input_shifted, DensityMatrix, GateOp, StateVector};

/// Hebbian weight configuration (weights, normalization, bias angles).
#[derive(Debug, Clone, PartialEq)]
pub struct HebbianConfig {
    pub w: Array2<f64>,
    /// `(pi/4) / (n * w_max)`: scales any polar local field into `[-pi/4, pi/4]`.
    pub gamma: f64,
    /// `beta_i = pi/4 - gamma * sum_{j != i} w_ij`. The diagonal is left out
    /// to mirror the circuit, whose controls exclude the target qubit.
    pub beta: Array1<f64>,
    pub n: usize,
    pub w_max: f64,
}

/// Trainable circuit angles. `alpha[[i, j]]` drives the rotation controlled
/// by qubit `j` when the target is `i`; the diagonal is unused and held at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronParams {
    pub alpha: Array2<f64>,
    pub b: Array1<f64>,
    pub trainable: bool,
}

/// Classical local field of one neuron, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFieldReport {
    pub theta: f64,
    pub phi: f64,
}

/// Hebbian rule: `w_ij = (1/m) * sum_mu eps_i^mu eps_j^mu`.
pub fn hebbian_weights(patterns: &PatternSet) -> Array2<f64> {
    let n = patterns.n();
    let m = patterns.len() as f64;
    let mut w = Array2::zeros((n, n));
    for p in patterns.iter() {
        for i in 0..n {
            for j in 0..n {
                w[[i, j]] += f64::from(p[i]) * f64::from(p[j]) / m;
            }
        }
    }
    w
}

/// Derive `gamma` and the bias angles from a weight matrix.
pub fn hebbian_config(w: Array2<f64>) -> Result<HebbianConfig> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "weight matrix must be square and non-empty, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if (w[[i, j]] - w[[j, i]]).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "weight matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let w_max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if w_max == 0.0 {
        return Err(Error::Config(
            "all-zero weight matrix leaves gamma undefined".into(),
        ));
    }
    let gamma = FRAC_PI_4 / (n as f64 * w_max);
    let beta = Array1::from_iter((0..n).map(|i| {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| w[[i, j]]).sum();
        FRAC_PI_4 - gamma * row_sum
    }));
    Ok(HebbianConfig {
        w,
        gamma,
        beta,
        n,
        w_max,
    })
}

impl HebbianConfig {
    /// `theta_i = sum_{j != i} w_ij x_j` and `phi_i = gamma*theta_i + pi/4`.
    pub fn local_field(&self, x: &[f64], i: usize) -> LocalFieldReport {
        let theta: f64 = (0..self.n)
            .filter(|&j| j != i)
            .map(|j| self.w[[i, j]] * x[j])
            .sum();
        LocalFieldReport {
            theta,
            phi: self.gamma * theta + FRAC_PI_4,
        }
    }
}

impl NeuronParams {
    /// Hebbian starting point: `alpha[i][j] = 4*gamma*w_ij`, `b[i] = 2*beta_i`.
    ///
    /// The factors make the circuit reproduce the Hopfield update exactly:
    /// with controls contributing `alpha` on active (+1) inputs, the
    /// ancilla's total rotation on a polar input is
    /// `4*gamma*(row_sum + theta)/2 + pi/2 - 2*gamma*row_sum = 2*phi`,
    /// giving `P(1) = sin^2(phi)`.
    pub fn from_hebbian(cfg: &HebbianConfig) -> Self {
        let n = cfg.n;
        let mut alpha = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    alpha[[i, j]] = 4.0 * cfg.gamma * cfg.w[[i, j]];
                }
            }
        }
        let b = cfg.beta.mapv(|beta| 2.0 * beta);
        NeuronParams {
            alpha,
            b,
            trainable: true,
        }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.alpha.nrows() != n || self.alpha.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "alpha is {}x{} but b has length {n}",
                self.alpha.nrows(),
                self.alpha.ncols()
            )));
        }
        if self.alpha.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite neuron parameter".into()));
        }
        Ok(())
    }
}

/// Gate list of one neuron update: controlled rotations from every other
/// data qubit onto a fresh ancilla (index `n`), the bias rotation, then a
/// swap of the ancilla into the target's slot.
pub fn build_neuron_circuit(target: usize, params: &NeuronParams) -> Result<Vec<GateOp>> {
    params.validate()?;
    let n = params.n();
    if target >= n {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {n} neurons"
        )));
    }
    let ancilla = n;
    let mut ops = Vec::with_capacity(n + 1);
    for j in (0..n).filter(|&j| j != target) {
        ops.push(GateOp::CRy {
            control: j,
            target: ancilla,
            angle: params.alpha[[target, j]],
        });
    }
    ops.push(GateOp::Ry {
        target: ancilla,
        angle: params.b[target],
    });
    ops.push(GateOp::Swap {
        a: ancilla,
        b: target,
    });
    Ok(ops)
}

/// Execution backend for a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    Ideal,
    Noisy(&'a NoiseSpec),
}

/// Final pure state of an ideal forward pass (`n` data qubits + ancilla).
pub fn qham_forward_state(
    latent: &[f64],
    target: usize,
    params: &NeuronParams,
) -> Result<StateVector> {
    if latent.len() != params.n() {
        return Err(Error::InvalidArgument(format!(
            "latent length {} does not match {} neurons",
            latent.len(),
            params.n()
        )));
    }
    let ops = build_neuron_circuit(target, params)?;
    let mut sv = prepare_input(latent, 1)?;
    sv.run(&ops)?;
    Ok(sv)
}

/// One associative-memory update: returns `<Z>` of the `n` data qubits
/// after the neuron circuit, with qubit `target` carrying the update.
pub fn qham_forward(
    latent: &[f64],
    target: usize,
    params: &NeuronParams,
    backend: Backend,
) -> Result<Vec<f64>> {
    let n = params.n();
    match backend {
        Backend::Ideal => {
            let sv = qham_forward_state(latent, target, params)?;
            Ok((0..n).map(|q| sv.expectation_z(q)).collect())
        }
        Backend::Noisy(spec) => {
            if latent.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "latent length {} does not match {n} neurons",
                    latent.len()
                )));
            }
            let ops = build_neuron_circuit(target, params)?;
            let mut rho = DensityMatrix::from_statevector(&prepare_input(latent, 1)?);
            apply_noisy_circuit(&mut rho, &ops, spec)?;
            let z: Vec<f64> = (0..n).map(|q| rho.expectation_z(q)).collect();
            apply_readout_sites(&z, spec)
        }
    }
}

/// Uniform draw of the one qubit to update this pass.
pub fn pick_target(n: usize, rng: &mut impl Rng) -> usize {
    rng.random_range(0..n)
}

/// Loss gradient with respect to one target row of circuit angles.
#[derive(Debug, Clone, PartialEq)]
pub struct QhamGradients {
    /// `d loss / d alpha[target][j]`; entry `target` is identically 0.
    pub alpha_row: Array1<f64>,
    pub b: f64,
}

fn check_upstream(upstream: &[f64], n: usize) -> Result<()> {
    if upstream.len() != n {
        return Err(Error::InvalidArgument(format!(
            "upstream has {} entries for {n} measured qubits",
            upstream.len()
        )));
    }
    if upstream.iter().any(|u| !u.is_finite()) {
        return Err(Error::Numeric("non-finite upstream gradient".into()));
    }
    Ok(())
}

fn forward_loss(
    latent: &[f64],
    target: usize,
    params: &NeuronParams,
    upstream: &[f64],
) -> Result<f64> {
    let z = qham_forward(latent, target, params, Backend::Ideal)?;
    Ok(z.iter().zip(upstream).map(|(z, u)| z * u).sum())
}

// Four-term shift-rule coefficients for controlled rotations, whose
// expectation is a trig polynomial in the half- and full-angle.
const CR_SHIFT_PLUS: f64 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
const CR_SHIFT_MINUS: f64 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);

/// Exact gradients of `sum_k upstream_k * <Z>_k` with respect to the
/// target's angle row, by the parameter-shift rule on the ideal backend.
pub fn parameter_gradients(
    params: &NeuronParams,
    latent: &[f64],
    target: usize,
    upstream: &[f64],
) -> Result<QhamGradients> {
    params.validate()?;
    let n = params.n();
    check_upstream(upstream, n)?;
    if target >= n {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {n} neurons"
        )));
    }

    let eval_alpha = |j: usize, shift: f64| -> Result<f64> {
        let mut shifted = params.clone();
        shifted.alpha[[target, j]] += shift;
        forward_loss(latent, target, &shifted, upstream)
    };

    let mut alpha_row = Array1::zeros(n);
    for j in (0..n).filter(|&j| j != target) {
        let half = eval_alpha(j, std::f64::consts::FRAC_PI_2)?
            - eval_alpha(j, -std::f64::consts::FRAC_PI_2)?;
        let three_half = eval_alpha(j, 3.0 * std::f64::consts::FRAC_PI_2)?
            - eval_alpha(j, -3.0 * std::f64::consts::FRAC_PI_2)?;
        alpha_row[j] = CR_SHIFT_PLUS * half - CR_SHIFT_MINUS * three_half;
    }

    let eval_b = |shift: f64| -> Result<f64> {
        let mut shifted = params.clone();
        shifted.b[target] += shift;
        forward_loss(latent, target, &shifted, upstream)
    };
    let b = (eval_b(std::f64::consts::FRAC_PI_2)? - eval_b(-std::f64::consts::FRAC_PI_2)?) / 2.0;

    Ok(QhamGradients { alpha_row, b })
}

/// Gradients of the same loss with respect to the latent inputs, via the
/// shift rule on the preparation rotations (chain factor `pi/2` per input).
pub fn input_gradients(
    params: &NeuronParams,
    latent: &[f64],
    target: usize,
    upstream: &[f64],
) -> Result<Array1<f64>> {
    params.validate()?;
    let n = params.n();
    check_upstream(upstream, n)?;
    let ops = build_neuron_circuit(target, params)?;

    let eval = |qubit: usize, shift: f64| -> Result<f64> {
        let mut sv = prepare_input_shifted(latent, 1, qubit, shift)?;
        sv.run(&ops)?;
        Ok((0..n)
            .map(|q| sv.expectation_z(q))
            .zip(upstream)
            .map(|(z, u)| z * u)
            .sum())
    };

    let mut grad = Array1::zeros(n);
    for j in 0..n {
        let diff = eval(j, std::f64::consts::FRAC_PI_2)? - eval(j, -std::f64::consts::FRAC_PI_2)?;
        // d/dx = (d/da) * (da/dx) = (diff / 2) * (pi/2)
        grad[j] = diff * std::f64::consts::FRAC_PI_4;
    }
    Ok(grad)
}
