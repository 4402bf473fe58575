//! Downlink side: SINR and rates, zero-forcing initialization, equal-rate
//! power allocation, and the second-order-cone encoding of the rate
//! constraints used by the feasibility stage.
//!
//! Beamformers here are plain `M_T x N` matrices whose first `K` columns are
//! the user streams; any further columns are dedicated sensing streams and
//! act as interference at every user.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Smallest singular value ratio accepted by the zero-forcing precoder.
const ZF_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
    pub min_rate: f64,
}

fn check_users(w: &CMat, channels: &CMat) -> Result<()> {
    if channels.nrows() != w.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} channel rows", w.nrows()),
            actual: format!("{}", channels.nrows()),
        });
    }
    if channels.ncols() > w.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {} beamformer columns", channels.ncols()),
            actual: format!("{}", w.ncols()),
        });
    }
    Ok(())
}

/// `SINR_k = |h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + sigma^2)`, the sum
/// running over all other user and sensing columns.
pub fn rates(w: &CMat, channels: &CMat, noise_power: f64) -> Result<RateReport> {
    check_users(w, channels)?;
    // row k holds h_k^H w_j for every column j
    let proj = channels.adjoint() * w;
    let k_users = channels.ncols();
    let mut sinr = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let total: f64 = proj.row(k).iter().map(|z| z.norm_sqr()).sum();
        let signal = proj[(k, k)].norm_sqr();
        sinr.push(signal / (total - signal + noise_power));
    }
    let rate: Vec<f64> = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    let min_rate = rate.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RateReport { sinr, rate, min_rate })
}

/// Unit-norm zero-forcing directions: columns of `H (H^H H)^-1`, normalized.
pub fn zf_precoder(channels: &CMat) -> Result<CMat> {
    let (m, k) = channels.shape();
    if k == 0 {
        return Ok(CMat::zeros(m, 0));
    }
    if k > m {
        return Err(Error::RankDeficient);
    }
    let sv = channels.clone().singular_values();
    let smax = sv.max();
    if !(smax > 0.0) || sv.min() < ZF_RANK_TOL * smax {
        return Err(Error::RankDeficient);
    }
    let gram = channels.adjoint() * channels;
    let inv = gram.try_inverse().ok_or(Error::RankDeficient)?;
    let mut v = channels * inv;
    for mut col in v.column_iter_mut() {
        let n = col.norm();
        col /= Complex64::new(n, 0.0);
    }
    Ok(v)
}

/// `gamma_k = 2^r_k - 1`.
pub fn sinr_target(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

/// Powers making every user's rate exactly `r_min[k]` with directions `v`
/// (`w_k = sqrt(p_k) v_k`) and the given sensing columns as interference:
/// `p = Delta^-1 (sigma^2 + diag(H^H W_S W_S^H H))` with
/// `Delta_kk = |h_k^H v_k|^2 / gamma_k`, `Delta_kj = -|h_k^H v_j|^2`.
pub fn equal_rate_power(
    channels: &CMat,
    directions: &CMat,
    w_sensing: &CMat,
    noise_power: f64,
    r_min: &[f64],
) -> Result<Vec<f64>> {
    let k = channels.ncols();
    if directions.shape() != channels.shape() || r_min.len() != k {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} directions and {k} rates", channels.nrows(), k),
            actual: format!("{:?} directions and {} rates", directions.shape(), r_min.len()),
        });
    }
    if w_sensing.ncols() > 0 && w_sensing.nrows() != channels.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} sensing rows", channels.nrows()),
            actual: format!("{}", w_sensing.nrows()),
        });
    }
    if let Some(r) = r_min.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!("minimum rate must be finite and >= 0, got {r}")));
    }
    let gain = (channels.adjoint() * directions).map(|z| z.norm_sqr());
    let sensing = if w_sensing.ncols() > 0 {
        (channels.adjoint() * w_sensing).map(|z| z.norm_sqr()).column_sum()
    } else {
        DVector::zeros(k)
    };
    // users with a zero target get zero power and drop out of the system
    let active: Vec<usize> = (0..k).filter(|&i| r_min[i] > 0.0).collect();
    let n = active.len();
    let mut delta = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (a, &i) in active.iter().enumerate() {
        let gamma = sinr_target(r_min[i]);
        for (b, &j) in active.iter().enumerate() {
            delta[(a, b)] = if i == j { gain[(i, i)] / gamma } else { -gain[(i, j)] };
        }
        rhs[a] = noise_power + sensing[i];
    }
    let mut p = vec![0.0; k];
    if n == 0 {
        return Ok(p);
    }
    let sol = delta.lu().solve(&rhs).ok_or(Error::RankDeficient)?;
    for (a, &i) in active.iter().enumerate() {
        let v = sol[a];
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativePower { index: i, value: v });
        }
        p[i] = v;
    }
    Ok(p)
}

/// `W_C = V diag(sqrt(p))`.
pub fn comm_block(directions: &CMat, powers: &[f64]) -> CMat {
    let mut w = directions.clone();
    for (mut col, p) in w.column_iter_mut().zip(powers) {
        col *= Complex64::new(p.sqrt(), 0.0);
    }
    w
}

/// Largest common rate reachable by zero-forcing with no sensing streams under
/// the power budget, by bisection on the rate over `[0, 40]` bit/s/Hz.
pub fn max_min_zf_rate(channels: &CMat, noise_power: f64, p_max: f64) -> Result<f64> {
    if !(p_max >= 0.0 && p_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("power budget must be >= 0, got {p_max}")));
    }
    let k = channels.ncols();
    if k == 0 || p_max == 0.0 {
        return Ok(0.0);
    }
    let v = zf_precoder(channels)?;
    let empty = CMat::zeros(channels.nrows(), 0);
    let total = |r: f64| -> Result<f64> {
        Ok(equal_rate_power(channels, &v, &empty, noise_power, &vec![r; k])?.iter().sum())
    };
    let (mut lo, mut hi) = (0.0, 40.0);
    if total(hi)? <= p_max {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let used = total(mid)?;
        if ((used - p_max) / p_max).abs() < 1e-6 {
            return Ok(mid);
        }
        if used < p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cone encoding of user `k`'s rate constraint:
/// `x_k(W) = [h_k^H w_1, ..., h_k^H w_N, sigma, sqrt(Gamma_k) h_k^H w_k]` lies in
/// `{ |x~| >= ||x_bar|| }` (last entry `x~`) iff `SINR_k >= gamma_k`,
/// with `Gamma_k = 1 + 1/gamma_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocInstance {
    pub user: usize,
    pub channel: CVec,
    pub gamma: f64,
    pub big_gamma: f64,
    pub noise_sd: f64,
    pub num_streams: usize,
}

impl SocInstance {
    pub fn len(&self) -> usize {
        self.num_streams + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `z`: zero except for `sigma` in the second-to-last slot.
    pub fn offset(&self) -> CVec {
        let mut z = CVec::zeros(self.len());
        z[self.num_streams] = Complex64::new(self.noise_sd, 0.0);
        z
    }

    /// `x_k = H_k vec(W) + z`, evaluated without forming `H_k`.
    pub fn assemble(&self, w: &CMat) -> Result<CVec> {
        self.check(w)?;
        let n = self.num_streams;
        let proj = w.adjoint() * &self.channel; // conj(h^H w_j)
        let mut x = CVec::zeros(n + 2);
        for j in 0..n {
            x[j] = proj[j].conj();
        }
        x[n] = Complex64::new(self.noise_sd, 0.0);
        x[n + 1] = x[self.user] * self.big_gamma.sqrt();
        Ok(x)
    }

    /// Explicit `(N+2) x M_T N` matrix `H_k` acting on column-major `vec(W)`.
    pub fn stacked_matrix(&self) -> CMat {
        let m = self.channel.len();
        let n = self.num_streams;
        let hh = self.channel.adjoint();
        let mut out = CMat::zeros(n + 2, m * n);
        for j in 0..n {
            out.view_mut((j, j * m), (1, m)).copy_from(&hh);
        }
        let scaled = hh * Complex64::new(self.big_gamma.sqrt(), 0.0);
        out.view_mut((n + 1, self.user * m), (1, m)).copy_from(&scaled);
        out
    }

    pub fn contains(&self, x: &CVec) -> bool {
        in_cone(x, 0.0)
    }

    fn check(&self, w: &CMat) -> Result<()> {
        if w.nrows() != self.channel.len() || w.ncols() != self.num_streams {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.channel.len(), self.num_streams),
                actual: format!("{}x{}", w.nrows(), w.ncols()),
            });
        }
        Ok(())
    }
}

/// Builds one cone per user for beamformers with `num_streams` columns.
pub fn soc_assemble(channels: &CMat, r_min: &[f64], noise_power: f64, num_streams: usize) -> Result<Vec<SocInstance>> {
    let k = channels.ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("at least one user is required".into()));
    }
    if r_min.len() != k {
        return Err(Error::ShapeMismatch { expected: format!("{k} rates"), actual: format!("{}", r_min.len()) });
    }
    if num_streams < k {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {k} streams"),
            actual: format!("{num_streams}"),
        });
    }
    if !(noise_power > 0.0) {
        return Err(Error::InvalidArgument(format!("noise power must be positive, got {noise_power}")));
    }
    r_min
        .iter()
        .enumerate()
        .map(|(user, &r)| {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "cone for user {user} needs a positive finite rate, got {r}"
                )));
            }
            let gamma = sinr_target(r);
            Ok(SocInstance {
                user,
                channel: channels.column(user).into_owned(),
                gamma,
                big_gamma: 1.0 + 1.0 / gamma,
                noise_sd: noise_power.sqrt(),
                num_streams,
            })
        })
        .collect()
}

fn split_norms(x: &CVec) -> (f64, Complex64) {
    let n = x.len();
    let head = x.rows(0, n - 1).norm();
    (head, x[n - 1])
}

/// `|x~| + slack >= ||x_bar||`.
pub(crate) fn in_cone(x: &CVec, slack: f64) -> bool {
    let (head, tail) = split_norms(x);
    head <= tail.norm() + slack
}

/// Nearest point of `{ |x~| >= ||x_bar|| }`:
/// `x` itself inside, the apex when `x = 0`, otherwise
/// `1/2 (||x_bar|| + |x~|) [x_bar / ||x_bar||; x~ / |x~|]` (phase 1 when `x~ = 0`).
pub fn soc_project(x: &CVec) -> CVec {
    assert!(x.len() >= 2, "cone vectors have at least two entries");
    let n = x.len();
    let (head, tail) = split_norms(x);
    let t = tail.norm();
    if head <= t {
        return x.clone();
    }
    // head > t >= 0 here, so head > 0
    let s = 0.5 * (head + t);
    let mut y = x * Complex64::new(s / head, 0.0);
    y[n - 1] = if t > 0.0 { tail * (s / t) } else { Complex64::new(s, 0.0) };
    y
}

/// `f2(W) = sum_k ||x_k - Pi(x_k)||^2` and its Euclidean gradient
/// `2 unvec(sum_k H_k^H (x_k - Pi(x_k)))`.
pub fn f2_and_grad(w: &CMat, instances: &[SocInstance]) -> Result<(f64, CMat)> {
    let mut value = 0.0;
    let mut grad = CMat::zeros(w.nrows(), w.ncols());
    for inst in instances {
        let x = inst.assemble(w)?;
        let v = &x - soc_project(&x);
        value += v.norm_squared();
        let n = inst.num_streams;
        for j in 0..n {
            if v[j] != Complex64::new(0.0, 0.0) {
                let mut col = grad.column_mut(j);
                col.axpy(v[j] * 2.0, &inst.channel, Complex64::new(1.0, 0.0));
            }
        }
        let last = v[n + 1] * (2.0 * inst.big_gamma.sqrt());
        grad.column_mut(inst.user).axpy(last, &inst.channel, Complex64::new(1.0, 0.0));
    }
    Ok((value, grad))
}

pub fn f2(w: &CMat, instances: &[SocInstance]) -> Result<f64> {
    Ok(f2_and_grad(w, instances)?.0)
}
