//! Echo synthesis, MUSIC direction finding and the Monte-Carlo RMSE harness.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::array::steering_unchecked;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, deg_to_rad, CMat};
use crate::scenario::{stream_rng, Scenario, Stream, Target};

/// Orthogonal probing streams `X~` (`N x L`, `X~ X~^H / L = I`) and the
/// transmitted block `X = W X~`.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub streams: CMat,
    pub transmitted: CMat,
}

/// `X~ = sqrt(L) Q^H` with `Q` the orthonormal factor of a random `L x N`
/// Gaussian matrix.
pub fn synthesize_waveform<R: Rng + ?Sized>(w: &CMat, snapshots: usize, rng: &mut R) -> Result<Waveform> {
    let n = w.ncols();
    if snapshots < n {
        return Err(Error::InvalidArgument(format!(
            "{snapshots} snapshots cannot carry {n} orthogonal streams"
        )));
    }
    let g = complex_gaussian(rng, snapshots, n);
    let q = g.qr().q();
    let streams = q.adjoint() * Complex64::new((snapshots as f64).sqrt(), 0.0);
    let transmitted = w * &streams;
    Ok(Waveform { streams, transmitted })
}

#[derive(Debug, Clone)]
pub struct EchoBatch {
    pub received: CMat,
    pub transmitted: CMat,
    pub noise_power: f64,
}

/// Noiseless echo `sum_t alpha_t a_R(theta_t) a_T(theta_t)^H X`.
pub fn echo_signal(scenario: &Scenario, targets: &[Target], x: &CMat) -> Result<CMat> {
    let array = &scenario.array;
    if x.nrows() != array.num_tx {
        return Err(Error::ShapeMismatch {
            expected: format!("{} transmit rows", array.num_tx),
            actual: format!("{}", x.nrows()),
        });
    }
    let mut y = CMat::zeros(array.num_rx, x.ncols());
    for t in targets {
        let a_r = steering_unchecked(t.angle, array.num_rx, array.element_spacing);
        let a_t = steering_unchecked(t.angle, array.num_tx, array.element_spacing);
        // a_T^H X first keeps this O((M_T + M_R) L)
        let beam = a_t.adjoint() * x;
        y += &a_r * beam * t.rcs;
    }
    Ok(y)
}

/// `Y~ = sum_t alpha_t G(theta_t) X + N`, `N` i.i.d. `CN(0, sigma^2)`.
pub fn synthesize_echo<R: Rng + ?Sized>(scenario: &Scenario, x: &CMat, rng: &mut R) -> Result<EchoBatch> {
    let signal = echo_signal(scenario, &scenario.targets, x)?;
    let noise = complex_gaussian(rng, signal.nrows(), signal.ncols())
        * Complex64::new(scenario.noise_power.sqrt(), 0.0);
    Ok(EchoBatch { received: signal + noise, transmitted: x.clone(), noise_power: scenario.noise_power })
}

/// Receive steering vectors on a uniform angular grid over `[-90, 90]` degrees.
#[derive(Debug, Clone)]
pub struct MusicGrid {
    pub angles: Vec<f64>,
    steering: CMat,
}

impl MusicGrid {
    pub fn new(num_rx: usize, spacing: f64, resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
            return Err(Error::InvalidArgument(format!("grid resolution must be in (0, 90] deg, got {resolution_deg}")));
        }
        let steps = (180.0 / resolution_deg).round() as usize;
        let angles: Vec<f64> = (0..=steps)
            .map(|i| deg_to_rad((-90.0 + 180.0 * i as f64 / steps as f64).clamp(-90.0, 90.0)))
            .collect();
        let mut steering = CMat::zeros(num_rx, angles.len());
        for (j, &a) in angles.iter().enumerate() {
            steering.set_column(j, &steering_unchecked(a, num_rx, spacing));
        }
        Ok(Self { angles, steering })
    }

    pub fn num_rx(&self) -> usize {
        self.steering.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicEstimate {
    /// Sorted ascending, radians.
    pub angles: Vec<f64>,
    /// Fewer than the requested number of peaks were found; the strongest was repeated.
    pub degraded: bool,
}

/// `1 / ||E_n^H a(theta)||^2` on the grid, `E_n` the `M_R - t` weakest
/// eigenvectors of the forward-backward averaged sample covariance
/// `(R + J R^* J) / 2`.
pub fn music_spectrum(received: &CMat, t: usize, grid: &MusicGrid) -> Result<Vec<f64>> {
    let m = received.nrows();
    if m != grid.num_rx() {
        return Err(Error::ShapeMismatch { expected: format!("{} receive rows", grid.num_rx()), actual: format!("{m}") });
    }
    if t == 0 || t >= m {
        return Err(Error::InvalidArgument(format!("MUSIC needs 0 < t < M_R, got t = {t}, M_R = {m}")));
    }
    let l = received.ncols().max(1) as f64;
    let r = received * received.adjoint() / Complex64::new(l, 0.0);
    let backward = CMat::from_fn(m, m, |i, j| r[(m - 1 - i, m - 1 - j)].conj());
    let r = (r + backward) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut noise = CMat::zeros(m, m - t);
    for (c, &i) in order[..m - t].iter().enumerate() {
        noise.set_column(c, &eig.eigenvectors.column(i));
    }
    let proj = noise.adjoint() * &grid.steering;
    Ok(proj
        .column_iter()
        .map(|c| 1.0 / c.norm_squared().max(f64::MIN_POSITIVE))
        .collect())
}

/// MUSIC estimate of `t` directions: the `t` largest interior local maxima of
/// the pseudospectrum, each refined by a parabola through the log-spectrum.
pub fn music_estimate(echo: &EchoBatch, t: usize, grid: &MusicGrid) -> Result<MusicEstimate> {
    let spec = music_spectrum(&echo.received, t, grid)?;
    let log: Vec<f64> = spec.iter().map(|p| p.ln()).collect();
    let mut peaks: Vec<usize> = (1..log.len() - 1)
        .filter(|&i| log[i] > log[i - 1] && log[i] >= log[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| log[b].total_cmp(&log[a]));
    peaks.truncate(t);
    let step = grid.angles[1] - grid.angles[0];
    let mut angles: Vec<f64> = peaks
        .iter()
        .map(|&i| {
            let (a, b, c) = (log[i - 1], log[i], log[i + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            grid.angles[i] + shift.clamp(-0.5, 0.5) * step
        })
        .collect();
    let degraded = angles.len() < t;
    if degraded {
        let strongest = angles.first().copied().unwrap_or(0.0);
        angles.resize(t, strongest);
    }
    angles.sort_by(f64::total_cmp);
    Ok(MusicEstimate { angles, degraded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub estimated: Vec<f64>,
    pub squared_errors: Vec<f64>,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub true_angles: Vec<f64>,
    pub trials: Vec<TrialOutcome>,
    /// `sqrt(mean over trials of sum_t (theta_t - theta^_t)^2)`, radians.
    pub rmse: f64,
    /// `sqrt(tr F^-1)`, radians.
    pub rcrlb: f64,
    pub degraded_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub trials: usize,
    pub grid_deg: f64,
    /// Add receiver noise; off gives the noiseless estimator floor.
    pub noise: bool,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { trials: 100, grid_deg: 0.02, noise: true }
    }
}

/// Independent trials of waveform + echo + MUSIC for the beamformer `w`;
/// trial `i` draws from the `(seed, i)` waveform and noise substreams.
pub fn monte_carlo(
    scenario: &Scenario,
    w: &CMat,
    sum_crlb: f64,
    opts: &MonteCarloOptions,
) -> Result<EstimationReport> {
    if opts.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let grid = MusicGrid::new(scenario.array.num_rx, scenario.array.element_spacing, opts.grid_deg)?;
    let mut true_angles = scenario.target_angles();
    true_angles.sort_by(f64::total_cmp);
    let t = true_angles.len();
    let trials: Vec<TrialOutcome> = (0..opts.trials)
        .into_par_iter()
        .map(|i| -> Result<TrialOutcome> {
            let mut wave_rng = stream_rng(scenario.seed, Stream::Waveform, i as u64);
            let mut noise_rng = stream_rng(scenario.seed, Stream::Noise, i as u64);
            let wave = synthesize_waveform(w, scenario.snapshots, &mut wave_rng)?;
            let echo = if opts.noise {
                synthesize_echo(scenario, &wave.transmitted, &mut noise_rng)?
            } else {
                EchoBatch {
                    received: echo_signal(scenario, &scenario.targets, &wave.transmitted)?,
                    transmitted: wave.transmitted.clone(),
                    noise_power: 0.0,
                }
            };
            let est = music_estimate(&echo, t, &grid)?;
            let squared_errors = est.angles.iter().zip(&true_angles).map(|(a, b)| (a - b).powi(2)).collect();
            Ok(TrialOutcome { estimated: est.angles, squared_errors, degraded: est.degraded })
        })
        .collect::<Result<_>>()?;
    let mse = trials.iter().map(|o| o.squared_errors.iter().sum::<f64>()).sum::<f64>() / trials.len() as f64;
    let degraded_trials = trials.iter().filter(|o| o.degraded).count();
    Ok(EstimationReport { true_angles, rmse: mse.sqrt(), rcrlb: sum_crlb.sqrt(), trials, degraded_trials })
}
