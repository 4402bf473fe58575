//! Complex oblique manifold `OB(M_T, N)`: matrices whose rows all have
//! Euclidean norm `rho`. Row `m` of `W W^H` is then the per-antenna power
//! `rho^2 = P_max / M_T` and the total power is exactly `P_max`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, CMat};

pub use crate::linalg::inner;

/// Relative tolerance on row norms for manifold membership.
pub const MANIFOLD_TOL: f64 = 1e-10;

/// A beamformer `W = [W_C, W_S]` on the oblique manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerMatrix {
    entries: CMat,
    radius: f64,
}

impl BeamformerMatrix {
    /// Wraps `entries`, rejecting matrices whose rows are not on the sphere of `radius`.
    pub fn new(entries: CMat, radius: f64) -> Result<Self> {
        check_on_manifold(&entries, radius)?;
        Ok(Self { entries, radius })
    }

    /// Row-normalizes `y` onto the manifold of the given radius.
    pub fn retract_from(y: &CMat, radius: f64) -> Result<Self> {
        retract(radius, y)
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn covariance(&self) -> CMat {
        &self.entries * self.entries.adjoint()
    }

    pub fn max_row_deviation(&self) -> f64 {
        max_row_deviation(&self.entries, self.radius)
    }
}

/// Tangent vector at some base point. The base point is not stored; callers
/// keep track of which point a tangent vector belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(pub CMat);

impl TangentVector {
    pub fn entries(&self) -> &CMat {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest per-row normal component `|Re <w_m, x_m>|`.
    pub fn normal_defect(&self, base: &BeamformerMatrix) -> f64 {
        row_real_products(base.entries(), &self.0).into_iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

fn max_row_deviation(w: &CMat, radius: f64) -> f64 {
    w.row_iter().map(|r| (r.norm() - radius).abs() / radius).fold(0.0, f64::max)
}

fn check_on_manifold(w: &CMat, radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("manifold radius must be positive, got {radius}")));
    }
    for (row, r) in w.row_iter().enumerate() {
        let norm = r.norm();
        if !((norm - radius).abs() <= MANIFOLD_TOL * radius) {
            return Err(Error::OffManifold { row, norm, radius });
        }
    }
    Ok(())
}

/// `Re(w_m x_m^H)` for each row `m`.
fn row_real_products(w: &CMat, x: &CMat) -> Vec<f64> {
    (0..w.nrows())
        .map(|m| {
            (0..w.ncols())
                .map(|j| {
                    let a = w[(m, j)];
                    let b = x[(m, j)];
                    a.re * b.re + a.im * b.im
                })
                .sum()
        })
        .collect()
}

/// `Pi(X) = X - (1/rho^2) Re{(W X^H) .* I} W`.
pub fn project_tangent(w: &BeamformerMatrix, x: &CMat) -> Result<TangentVector> {
    check_same_shape(w.entries(), x)?;
    check_on_manifold(w.entries(), w.radius())?;
    Ok(project_unchecked(w, x))
}

pub(crate) fn project_unchecked(w: &BeamformerMatrix, x: &CMat) -> TangentVector {
    let rho2 = w.radius * w.radius;
    let coeffs = row_real_products(&w.entries, x);
    let mut out = x.clone();
    for (m, c) in coeffs.into_iter().enumerate() {
        let s = Complex64::new(c / rho2, 0.0);
        for j in 0..out.ncols() {
            out[(m, j)] -= w.entries[(m, j)] * s;
        }
    }
    TangentVector(out)
}

/// `R(Y) = rho (Y Y^H .* I)^(-1/2) Y`: every row rescaled to norm `rho`.
pub fn retract(radius: f64, y: &CMat) -> Result<BeamformerMatrix> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("manifold radius must be positive, got {radius}")));
    }
    let mut out = y.clone();
    for (m, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateRetraction(m));
        }
        row *= Complex64::new(radius / norm, 0.0);
    }
    Ok(BeamformerMatrix { entries: out, radius })
}

/// Moves `d` into the tangent space at `w_new` by orthogonal projection.
pub fn transport(w_new: &BeamformerMatrix, d: &TangentVector) -> Result<TangentVector> {
    project_tangent(w_new, d.entries())
}
