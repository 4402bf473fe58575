//! Problem instances: targets, Rician user channels, path loss and the
//! deterministic random streams everything else draws from.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{steering_unchecked, ArrayConfig};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, deg_to_rad, CMat, CVec};

/// Independent random streams derived from one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Users = 1,
    Targets = 2,
    Noise = 3,
    Waveform = 4,
    Init = 5,
    Test = 15,
}

/// ChaCha8 generator for `(seed, stream, index)`. Different streams or indices
/// never share key-stream blocks.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}

/// `beta(d) = C0 (d0 / d)^exponent` with `C0 = 10^(c0_db / 10)`.
pub fn pathloss(distance: f64, exponent: f64, c0_db: f64, d0: f64) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::InvalidArgument(format!("reference distance must be positive, got {d0}")));
    }
    if !(distance >= d0) {
        return Err(Error::InvalidArgument(format!(
            "distance {distance} m is below the reference distance {d0} m"
        )));
    }
    Ok(10f64.powf(c0_db / 10.0) * (d0 / distance).powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub c0_db: f64,
    pub d0: f64,
    pub user_exponent: f64,
    /// Exponent applied per bounce of the radar round trip.
    pub target_exponent: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { c0_db: -30.0, d0: 1.0, user_exponent: 2.2, target_exponent: 2.2 }
    }
}

/// Annular sector users are dropped into (radians, metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRegion {
    pub min_range: f64,
    pub max_range: f64,
    pub min_angle: f64,
    pub max_angle: f64,
}

impl Default for UserRegion {
    fn default() -> Self {
        Self {
            min_range: 50.0,
            max_range: 55.0,
            min_angle: deg_to_rad(-25.0),
            max_angle: deg_to_rad(25.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub angle: f64,
    pub range: f64,
    /// Complex reflection coefficient including the round-trip path loss.
    pub rcs: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub vector: CVec,
    pub angle: f64,
    pub range: f64,
    pub pathloss: f64,
}

/// Everything needed to build a [`Scenario`]; angles in radians, powers in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub array: ArrayConfig,
    pub target_angles: Vec<f64>,
    pub target_ranges: Vec<f64>,
    pub num_users: usize,
    pub noise_power: f64,
    pub power_budget: f64,
    pub snapshots: usize,
    pub rician_k: f64,
    pub overload: f64,
    pub seed: u64,
    pub pathloss: PathLossModel,
    pub user_region: UserRegion,
}

impl Default for ScenarioParams {
    /// Full-scale defaults: 32x32 array, K = 6, T = 3, L = 1024,
    /// sigma^2 = -96 dBm, P_max = 20 dBm, kappa = 0.1, delta = 0.7.
    fn default() -> Self {
        Self {
            array: ArrayConfig { num_tx: 32, num_rx: 32, element_spacing: 0.5 },
            target_angles: vec![deg_to_rad(-45.0), deg_to_rad(30.0), deg_to_rad(60.0)],
            target_ranges: vec![50.0, 60.0, 70.0],
            num_users: 6,
            noise_power: crate::linalg::dbm_to_watts(-96.0),
            power_budget: crate::linalg::dbm_to_watts(20.0),
            snapshots: 1024,
            rician_k: 0.1,
            overload: 0.7,
            seed: 1,
            pathloss: PathLossModel::default(),
            user_region: UserRegion::default(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.target_angles.is_empty() {
            return bad("at least one target is required".into());
        }
        if self.snapshots == 0 {
            return bad("snapshot count must be >= 1".into());
        }
        if !(self.noise_power > 0.0) {
            return bad(format!("noise power must be positive, got {}", self.noise_power));
        }
        if !(self.power_budget > 0.0) {
            return bad(format!("power budget must be positive, got {}", self.power_budget));
        }
        if !(self.rician_k >= 0.0) {
            return bad(format!("Rician factor must be nonnegative, got {}", self.rician_k));
        }
        if !(0.0..=1.0).contains(&self.overload) {
            return bad(format!("overload factor must lie in [0, 1], got {}", self.overload));
        }
        let r = &self.user_region;
        if !(r.min_range >= self.pathloss.d0 && r.max_range >= r.min_range) {
            return bad("user annulus must satisfy d0 <= min_range <= max_range".into());
        }
        if !(r.min_angle <= r.max_angle) {
            return bad("user sector must satisfy min_angle <= max_angle".into());
        }
        Ok(())
    }
}

/// Immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub array: ArrayConfig,
    pub targets: Vec<Target>,
    pub users: Vec<UserChannel>,
    pub noise_power: f64,
    pub power_budget: f64,
    pub snapshots: usize,
    pub rician_k: f64,
    pub overload: f64,
    pub seed: u64,
    pub pathloss: PathLossModel,
}

impl Scenario {
    /// Builds targets and user channels from the scenario seed.
    pub fn build(params: &ScenarioParams) -> Result<Self> {
        params.validate()?;
        let mut target_rng = stream_rng(params.seed, Stream::Targets, 0);
        let targets = make_targets(
            &params.target_angles,
            &params.target_ranges,
            &params.pathloss,
            &mut target_rng,
        )?;
        let mut user_rng = stream_rng(params.seed, Stream::Users, 0);
        let users = make_user_channels(params, &mut user_rng)?;
        Ok(Self {
            array: params.array,
            targets,
            users,
            noise_power: params.noise_power,
            power_budget: params.power_budget,
            snapshots: params.snapshots,
            rician_k: params.rician_k,
            overload: params.overload,
            seed: params.seed,
            pathloss: params.pathloss,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn num_tx(&self) -> usize {
        self.array.num_tx
    }

    /// Columns of the beamformer: `K` communication plus `M_T` sensing streams.
    pub fn num_streams(&self) -> usize {
        self.num_users() + self.num_tx()
    }

    /// Per-row radius of the oblique manifold, `sqrt(P_max / M_T)`.
    pub fn row_radius(&self) -> f64 {
        (self.power_budget / self.num_tx() as f64).sqrt()
    }

    /// `H = [h_1, ..., h_K]`, shape `M_T x K`.
    pub fn channel_matrix(&self) -> CMat {
        let m = self.num_tx();
        let mut h = CMat::zeros(m, self.num_users());
        for (k, u) in self.users.iter().enumerate() {
            h.set_column(k, &u.vector);
        }
        h
    }

    pub fn target_angles(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.angle).collect()
    }

    /// Same channels and targets, different power budget.
    pub fn with_power_budget(&self, power_budget: f64) -> Self {
        Self { power_budget, ..self.clone() }
    }

    pub fn with_overload(&self, overload: f64) -> Self {
        Self { overload, ..self.clone() }
    }
}

/// Rician channels `h_k = sqrt(beta kappa/(kappa+1)) a_T(theta_k) + sqrt(beta/(kappa+1)) g_k`
/// for users dropped uniformly (in angle and range) in the configured sector.
pub fn make_user_channels<R: Rng + ?Sized>(params: &ScenarioParams, rng: &mut R) -> Result<Vec<UserChannel>> {
    let region = &params.user_region;
    let m = params.array.num_tx;
    let kappa = params.rician_k;
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("Rician factor must be nonnegative, got {kappa}")));
    }
    (0..params.num_users)
        .map(|_| {
            let angle = uniform(rng, region.min_angle, region.max_angle);
            let range = uniform(rng, region.min_range, region.max_range);
            let beta = pathloss(
                range,
                params.pathloss.user_exponent,
                params.pathloss.c0_db,
                params.pathloss.d0,
            )?;
            let los = steering_unchecked(angle, m, params.array.element_spacing);
            let nlos = complex_gaussian(rng, m, 1).column(0).into_owned();
            let (w_los, w_nlos) = if kappa.is_infinite() {
                (beta.sqrt(), 0.0)
            } else {
                ((beta * kappa / (kappa + 1.0)).sqrt(), (beta / (kappa + 1.0)).sqrt())
            };
            let vector = los * Complex64::new(w_los, 0.0) + nlos * Complex64::new(w_nlos, 0.0);
            Ok(UserChannel { vector, angle, range, pathloss: beta })
        })
        .collect()
}

/// Targets whose echo power is the round-trip path loss,
/// `|alpha_t|^2 = C0 (d0 / rho_t)^(2 lambda)`, with a uniformly random phase.
pub fn make_targets<R: Rng + ?Sized>(
    angles: &[f64],
    ranges: &[f64],
    model: &PathLossModel,
    rng: &mut R,
) -> Result<Vec<Target>> {
    if angles.len() != ranges.len() {
        return Err(Error::InvalidArgument(format!(
            "{} target angles but {} ranges",
            angles.len(),
            ranges.len()
        )));
    }
    angles
        .iter()
        .zip(ranges)
        .map(|(&angle, &range)| {
            if !(angle.is_finite() && angle.abs() <= std::f64::consts::FRAC_PI_2) {
                return Err(Error::AngleOutOfRange(angle));
            }
            let amplitude = pathloss(range, 2.0 * model.target_exponent, model.c0_db, model.d0)?.sqrt();
            let phase = rng.random_range(0.0..2.0 * PI);
            Ok(Target { angle, range, rcs: Complex64::from_polar(amplitude, phase) })
        })
        .collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(k: usize, kappa: f64, seed: u64) -> ScenarioParams {
        ScenarioParams {
            array: ArrayConfig::new(8, 8).unwrap(),
            num_users: k,
            rician_k: kappa,
            seed,
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn pathloss_examples() {
        assert!((pathloss(1.0, 3.7, -30.0, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        assert!((pathloss(10.0, 2.0, -30.0, 1.0).unwrap() - 1e-5).abs() < 1e-18);
        let g = pathloss(50.0, 2.2, -30.0, 1.0).unwrap();
        let oracle = 1e-3 * (-2.2 * 50f64.ln()).exp();
        assert!((g - oracle).abs() / oracle < 1e-12);
        // quoted as roughly 1.836e-7
        assert!((g - 1.836e-7).abs() / 1.836e-7 < 5e-3);
        assert!(pathloss(0.5, 2.0, -30.0, 1.0).is_err());
    }

    #[test]
    fn pure_los_limit() {
        let params = small_params(4, 1e12, 7);
        let users = make_user_channels(&params, &mut stream_rng(7, Stream::Users, 0)).unwrap();
        for u in users {
            let los = steering_unchecked(u.angle, 8, 0.5) * Complex64::new(u.pathloss.sqrt(), 0.0);
            assert!((&u.vector - los).norm() < 1e-4 * u.vector.norm());
        }
    }

    #[test]
    fn rayleigh_second_moment() {
        // kappa = 0: E||h||^2 = beta M_T; compare the normalized average over 1e4 draws.
        let params = small_params(1, 0.0, 9);
        let mut rng = stream_rng(9, Stream::Test, 0);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let u = &make_user_channels(&params, &mut rng).unwrap()[0];
            acc += u.vector.norm_squared() / (u.pathloss * 8.0);
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean = {mean}");
    }

    #[test]
    fn los_power_fraction() {
        // E|<a_T, h>|^2 / M^2 picks the LoS power fraction kappa/(kappa+1) plus 1/M of scatter.
        let kappa = 0.5;
        let params = small_params(1, kappa, 10);
        let mut rng = stream_rng(10, Stream::Test, 1);
        let n = 10_000;
        let mut los = 0.0;
        for _ in 0..n {
            let u = &make_user_channels(&params, &mut rng).unwrap()[0];
            let a = steering_unchecked(u.angle, 8, 0.5);
            let proj = a.dotc(&u.vector).norm_sqr() / 64.0;
            los += proj / u.pathloss;
        }
        let expected = kappa / (kappa + 1.0) + 1.0 / (kappa + 1.0) / 8.0;
        let mean = los / n as f64;
        assert!((mean - expected).abs() / expected < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn channels_are_deterministic_and_in_region() {
        let params = small_params(6, 0.1, 42);
        let a = Scenario::build(&params).unwrap();
        let b = Scenario::build(&params).unwrap();
        assert_eq!(a, b);
        let region = UserRegion::default();
        for u in &a.users {
            assert!(u.angle >= region.min_angle && u.angle <= region.max_angle);
            assert!(u.range >= region.min_range && u.range <= region.max_range);
            assert!(u.vector.iter().all(|x| x.re.is_finite() && x.im.is_finite()));
        }
        let c = Scenario::build(&ScenarioParams { seed: 43, ..params }).unwrap();
        assert_ne!(a.users[0].vector, c.users[0].vector);
    }

    #[test]
    fn default_targets() {
        let s = Scenario::build(&ScenarioParams::default()).unwrap();
        let deg: Vec<f64> = s.targets.iter().map(|t| t.angle.to_degrees()).collect();
        assert!((deg[0] + 45.0).abs() < 1e-12 && (deg[1] - 30.0).abs() < 1e-12 && (deg[2] - 60.0).abs() < 1e-12);
        let ranges: Vec<f64> = s.targets.iter().map(|t| t.range).collect();
        assert_eq!(ranges, vec![50.0, 60.0, 70.0]);
        assert_eq!(s.num_streams(), 6 + 32);
    }

    #[test]
    fn target_at_reference_distance() {
        let model = PathLossModel::default();
        let t = make_targets(&[0.2], &[1.0], &model, &mut stream_rng(1, Stream::Targets, 0)).unwrap();
        // |alpha|^2 = 10^(c0_db / 10) at d0
        assert!((t[0].rcs.norm_sqr() - 1e-3).abs() < 1e-15);
        let t = make_targets(&[0.2], &[50.0], &model, &mut stream_rng(1, Stream::Targets, 0)).unwrap();
        let oracle = 1e-3 * 50f64.powf(-4.4);
        assert!((t[0].rcs.norm_sqr() - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn target_phases_are_seeded() {
        let model = PathLossModel::default();
        let a = make_targets(&[0.1, 0.5], &[50.0, 60.0], &model, &mut stream_rng(5, Stream::Targets, 0)).unwrap();
        let b = make_targets(&[0.1, 0.5], &[50.0, 60.0], &model, &mut stream_rng(5, Stream::Targets, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_target_lists_rejected() {
        let model = PathLossModel::default();
        let r = make_targets(&[0.1, 0.5], &[50.0], &model, &mut stream_rng(5, Stream::Targets, 0));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = ScenarioParams { noise_power: 0.0, ..ScenarioParams::default() };
        assert!(Scenario::build(&p).is_err());
        let mut p = ScenarioParams::default();
        p.target_angles.clear();
        p.target_ranges.clear();
        assert!(Scenario::build(&p).is_err());
        let p = ScenarioParams { overload: 1.5, ..ScenarioParams::default() };
        assert!(Scenario::build(&p).is_err());
    }
}
