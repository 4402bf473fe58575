//! Uniform linear array geometry: steering vectors, their angle derivatives,
//! round-trip target channels and transmit beampattern gain.
//!
//! Angles are radians measured from broadside and must lie in
//! `[-pi/2, pi/2]`; element 0 is the phase reference.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, CMat, CVec, J};

/// Co-located transmit and receive ULAs sharing one phase centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_tx: usize,
    pub num_rx: usize,
    /// Inter-element spacing in wavelengths.
    pub element_spacing: f64,
}

impl ArrayConfig {
    pub fn new(num_tx: usize, num_rx: usize) -> Result<Self> {
        Self::with_spacing(num_tx, num_rx, 0.5)
    }

    pub fn with_spacing(num_tx: usize, num_rx: usize, element_spacing: f64) -> Result<Self> {
        let cfg = Self { num_tx, num_rx, element_spacing };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tx == 0 || self.num_rx == 0 {
            return Err(Error::InvalidArgument("array needs at least one tx and one rx element".into()));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {}",
                self.element_spacing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: CVec,
    pub angle: f64,
}

fn check_angle(theta: f64) -> Result<()> {
    // a hair of slack so that +-pi/2 computed from degrees is accepted
    if !theta.is_finite() || theta.abs() > FRAC_PI_2 * (1.0 + 1e-12) {
        return Err(Error::AngleOutOfRange(theta));
    }
    Ok(())
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("steering vector length must be >= 1".into()));
    }
    Ok(())
}

/// Half-wavelength steering vector, entry `n` is `exp(j pi n sin(theta))`.
pub fn steering(theta: f64, n: usize) -> Result<SteeringVector> {
    steering_spaced(theta, n, 0.5)
}

pub fn steering_spaced(theta: f64, n: usize, spacing: f64) -> Result<SteeringVector> {
    check_angle(theta)?;
    check_len(n)?;
    Ok(SteeringVector { entries: steering_unchecked(theta, n, spacing), angle: theta })
}

pub(crate) fn steering_unchecked(theta: f64, n: usize, spacing: f64) -> CVec {
    let k = 2.0 * PI * spacing * theta.sin();
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, k * i as f64))
}

/// `d a / d theta = j 2 pi d cos(theta) (0, 1, ..., n-1) .* a(theta)`.
pub fn steering_derivative(theta: f64, n: usize) -> Result<CVec> {
    steering_derivative_spaced(theta, n, 0.5)
}

pub fn steering_derivative_spaced(theta: f64, n: usize, spacing: f64) -> Result<CVec> {
    check_angle(theta)?;
    check_len(n)?;
    Ok(steering_derivative_unchecked(theta, n, spacing))
}

pub(crate) fn steering_derivative_unchecked(theta: f64, n: usize, spacing: f64) -> CVec {
    let a = steering_unchecked(theta, n, spacing);
    let scale = 2.0 * PI * spacing * theta.cos();
    CVec::from_fn(n, |i, _| J * (scale * i as f64) * a[i])
}

/// Round-trip channel `G(theta) = a_R(theta) a_T(theta)^H`, shape `M_R x M_T`.
pub fn target_channel(theta: f64, cfg: &ArrayConfig) -> Result<CMat> {
    check_angle(theta)?;
    cfg.validate()?;
    let a_r = steering_unchecked(theta, cfg.num_rx, cfg.element_spacing);
    let a_t = steering_unchecked(theta, cfg.num_tx, cfg.element_spacing);
    Ok(&a_r * a_t.adjoint())
}

/// `dG/dtheta = a_R' a_T^H + a_R a_T'^H`.
pub fn target_channel_derivative(theta: f64, cfg: &ArrayConfig) -> Result<CMat> {
    check_angle(theta)?;
    cfg.validate()?;
    let d = cfg.element_spacing;
    let a_r = steering_unchecked(theta, cfg.num_rx, d);
    let a_t = steering_unchecked(theta, cfg.num_tx, d);
    let da_r = steering_derivative_unchecked(theta, cfg.num_rx, d);
    let da_t = steering_derivative_unchecked(theta, cfg.num_tx, d);
    Ok(&da_r * a_t.adjoint() + &a_r * da_t.adjoint())
}

/// Transmit beampattern `B(theta) = a_T(theta)^H R_X a_T(theta)` in linear power units.
pub fn beampattern_gain(r_x: &CMat, theta: f64) -> Result<f64> {
    beampattern_gain_spaced(r_x, theta, 0.5)
}

pub fn beampattern_gain_spaced(r_x: &CMat, theta: f64, spacing: f64) -> Result<f64> {
    check_angle(theta)?;
    let defect = hermitian_defect(r_x);
    if defect > 1e-9 {
        return Err(Error::NotHermitian(defect));
    }
    let a = steering_unchecked(theta, r_x.nrows(), spacing);
    Ok(quadratic_form(r_x, &a).max(0.0))
}

/// `Re(a^H R a)`; callers guarantee `R` Hermitian.
pub(crate) fn quadratic_form(r: &CMat, a: &CVec) -> f64 {
    let ra = r * a;
    a.iter().zip(ra.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}
