//! Small dense complex linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Real trace inner product `Re tr(A B^H) = sum Re(a_ij conj(b_ij))`.
pub fn inner(a: &CMat, b: &CMat) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(inner_unchecked(a, b))
}

pub(crate) fn inner_unchecked(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn check_same_shape(a: &CMat, b: &CMat) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            actual: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    Ok(())
}

/// Column-major vectorization.
pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVec, nrows: usize, ncols: usize) -> Result<CMat> {
    if v.len() != nrows * ncols {
        return Err(Error::ShapeMismatch {
            expected: format!("{}", nrows * ncols),
            actual: format!("{}", v.len()),
        });
    }
    Ok(CMat::from_column_slice(nrows, ncols, v.as_slice()))
}

/// Relative Hermitian defect `||A - A^H||_F / max(||A||_F, tiny)`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let d = (a - a.adjoint()).norm();
    d / a.norm().max(f64::MIN_POSITIVE)
}

/// Matrix with i.i.d. circularly-symmetric complex Gaussian entries of unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, nrows: usize, ncols: usize) -> CMat {
    CMat::from_fn(nrows, ncols, |_, _| complex_normal(rng))
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

pub fn rad_to_deg(rad: f64) -> f64 {
    rad.to_degrees()
}

/// `P[W] = 10^((P[dBm] - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inner_of_identity() {
        let i2 = CMat::identity(2, 2);
        assert_eq!(inner(&i2, &i2).unwrap(), 2.0);
    }

    #[test]
    fn inner_with_rotated_copy_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = complex_gaussian(&mut rng, 3, 4);
        let jx = x.map(|v| v * J);
        assert!(inner(&x, &jx).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inner_matches_trace_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = complex_gaussian(&mut rng, 3, 5);
        let b = complex_gaussian(&mut rng, 3, 5);
        let trace = (&a * b.adjoint()).trace().re;
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..5 {
                direct += (a[(i, j)] * b[(i, j)].conj()).re;
            }
        }
        assert!((inner(&a, &b).unwrap() - direct).abs() < 1e-12);
        assert!((trace - direct).abs() < 1e-12);
        assert!((inner(&a, &a).unwrap() - a.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn inner_rejects_shape_mismatch() {
        let a = CMat::zeros(2, 3);
        let b = CMat::zeros(3, 2);
        assert!(matches!(inner(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn vec_unvec_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = complex_gaussian(&mut rng, 3, 4);
        let v = vec(&a);
        // column-major: second entry is (1, 0)
        assert_eq!(v[1], a[(1, 0)]);
        assert_eq!(unvec(&v, 3, 4).unwrap(), a);
        assert!(unvec(&v, 5, 4).is_err());
    }

    #[test]
    fn noise_power_conversion() {
        assert!((dbm_to_watts(-96.0) - 2.511_886_431_509_58e-13).abs() < 1e-24);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
    }
}
