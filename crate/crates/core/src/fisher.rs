//! Fisher information for the target DOAs, the sum-CRLB objective
//! `f1(W) = tr(F^-1)` and its Euclidean gradient.
//!
//! With `A_ij = (2L / sigma^2) conj(alpha_i) alpha_j dG(theta_i)^H dG(theta_j)`
//! the Fisher matrix is `[F]_ij = Re tr(W^H A_ij W)`, linear in `R_X = W W^H`.
//! The gradient `2 Omega W` is assembled from the `F_t` matrices (`F` with
//! its `t`-th column replaced by `e_t`); the block of `F_t^-1` that survives
//! is obtained from `F^-1` by a rank-one update instead of explicit cofactors.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::array::{target_channel_derivative, ArrayConfig};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scenario::{Scenario, Target};

/// Condition-number ceiling beyond which targets are declared unresolvable.
pub const MAX_CONDITION: f64 = 1e12;

/// `T x T` grid of `M_T x M_T` coupling matrices, row-major.
#[derive(Debug, Clone)]
pub struct Coupling {
    num_targets: usize,
    num_tx: usize,
    blocks: Vec<CMat>,
}

impl Coupling {
    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    /// `A_{i,j}`.
    pub fn get(&self, i: usize, j: usize) -> &CMat {
        &self.blocks[i * self.num_targets + j]
    }
}

pub fn coupling_matrices(scenario: &Scenario) -> Result<Coupling> {
    coupling_from_parts(&scenario.array, &scenario.targets, scenario.snapshots, scenario.noise_power)
}

pub fn coupling_from_parts(
    array: &ArrayConfig,
    targets: &[Target],
    snapshots: usize,
    noise_power: f64,
) -> Result<Coupling> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets".into()));
    }
    for (i, a) in targets.iter().enumerate() {
        for b in &targets[i + 1..] {
            if (a.angle - b.angle).abs() < 1e-9 {
                return Err(Error::DuplicateTargets(a.angle));
            }
        }
    }
    let scale = 2.0 * snapshots as f64 / noise_power;
    let dg: Vec<CMat> = targets
        .iter()
        .map(|t| target_channel_derivative(t.angle, array))
        .collect::<Result<_>>()?;
    let n = targets.len();
    let mut blocks = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let c = targets[i].rcs.conj() * targets[j].rcs * scale;
            blocks.push(dg[i].adjoint() * &dg[j] * c);
        }
    }
    Ok(Coupling { num_targets: n, num_tx: array.num_tx, blocks })
}

#[derive(Debug, Clone)]
pub struct FisherState {
    pub f_matrix: DMatrix<f64>,
    pub f_inverse: DMatrix<f64>,
    /// `tr(F^-1)`, the sum of the per-target CRLBs.
    pub objective: f64,
    pub condition: f64,
}

impl FisherState {
    /// Per-target CRLB, the diagonal of `F^-1`.
    pub fn crlb(&self) -> Vec<f64> {
        self.f_inverse.diagonal().iter().copied().collect()
    }
}

/// Fisher matrix for the beamformer `W` (`R_X = W W^H`).
pub fn fisher_matrix(w: &CMat, coupling: &Coupling) -> Result<FisherState> {
    if w.nrows() != coupling.num_tx {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", coupling.num_tx),
            actual: format!("{} rows", w.nrows()),
        });
    }
    fisher_from_covariance(&(w * w.adjoint()), coupling)
}

/// Fisher matrix straight from a covariance, `[F]_ij = Re tr(A_ij R_X)`.
pub fn fisher_from_covariance(r_x: &CMat, coupling: &Coupling) -> Result<FisherState> {
    let m = coupling.num_tx;
    if r_x.shape() != (m, m) {
        return Err(Error::ShapeMismatch {
            expected: format!("{m}x{m}"),
            actual: format!("{}x{}", r_x.nrows(), r_x.ncols()),
        });
    }
    let n = coupling.num_targets;
    let mut f = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = trace_product_re(coupling.get(i, j), r_x);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    invert_fisher(f)
}

/// `Re tr(A B)` without forming the product.
fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

fn invert_fisher(f: DMatrix<f64>) -> Result<FisherState> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let eig = SymmetricEigen::new(f.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateGeometry(condition));
    }
    let chol = f.clone().cholesky().ok_or(Error::DegenerateGeometry(condition))?;
    let f_inverse = chol.inverse();
    let objective = f_inverse.trace();
    Ok(FisherState { f_matrix: f, f_inverse, objective, condition })
}

/// Inverse of `F_t` restricted to indices `!= t` (zero row and column `t`).
///
/// That block equals the inverse of `F` with row and column `t` deleted, i.e.
/// `F^-1 - F^-1 e_t e_t^T F^-1 / [F^-1]_tt`.
pub fn reduced_inverse(f_inverse: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let n = f_inverse.nrows();
    let pivot = f_inverse[(t, t)];
    DMatrix::from_fn(n, n, |i, j| {
        if i == t || j == t {
            0.0
        } else {
            f_inverse[(i, j)] - f_inverse[(i, t)] * f_inverse[(t, j)] / pivot
        }
    })
}

/// Weight matrix `c` with `Omega = sum_ij c_ij A_ji`:
/// `c = sum_t [F^-1]_tt (reduced_inverse(t) - F^-1)`.
pub fn omega_weights(state: &FisherState) -> DMatrix<f64> {
    let inv = &state.f_inverse;
    let n = inv.nrows();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for t in 0..n {
        let reduced = reduced_inverse(inv, t);
        c += (reduced - inv) * inv[(t, t)];
    }
    c
}

pub fn omega(state: &FisherState, coupling: &Coupling) -> CMat {
    let c = omega_weights(state);
    let m = coupling.num_tx;
    let n = coupling.num_targets;
    let mut out = CMat::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            out += coupling.get(j, i) * Complex64::new(c[(i, j)], 0.0);
        }
    }
    out
}

/// Euclidean gradient `2 Omega W`, scaled so that
/// `f1(W + D) ~ f1(W) + Re tr(grad D^H)`.
pub fn grad_f1(w: &CMat, coupling: &Coupling) -> Result<CMat> {
    Ok(f1_and_grad(w, coupling)?.1)
}

pub fn f1(w: &CMat, coupling: &Coupling) -> Result<f64> {
    Ok(fisher_matrix(w, coupling)?.objective)
}

pub fn f1_and_grad(w: &CMat, coupling: &Coupling) -> Result<(f64, CMat)> {
    let state = fisher_matrix(w, coupling)?;
    let om = omega(&state, coupling);
    Ok((state.objective, om * w * Complex64::new(2.0, 0.0)))
}
