//! Two-stage design: minimize the sum-CRLB over the oblique manifold
//! (subproblem I), then pull the result into the rate-feasible set by
//! minimizing the summed squared distance of each user's cone vector to its
//! cone (subproblem II).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comm::{self, RateReport, SocInstance};
use crate::error::{Error, Result};
use crate::fisher::{coupling_matrices, f1_and_grad, fisher_matrix, Coupling, FisherState};
use crate::linalg::CMat;
use crate::manifold::{retract, BeamformerMatrix};
use crate::rcg::{minimize, minimize_until, RcgOptions, SolverTrace, Termination};
use crate::scenario::{stream_rng, Scenario, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    Sgcdf,
    SensingOnly,
    NoDedicatedStream,
    Omnidirectional,
}

impl DesignMode {
    pub const ALL: [DesignMode; 4] =
        [DesignMode::Sgcdf, DesignMode::SensingOnly, DesignMode::NoDedicatedStream, DesignMode::Omnidirectional];

    pub fn as_str(&self) -> &'static str {
        match self {
            DesignMode::Sgcdf => "sgcdf",
            DesignMode::SensingOnly => "sensing_only",
            DesignMode::NoDedicatedStream => "no_dedicated_stream",
            DesignMode::Omnidirectional => "omnidirectional",
        }
    }

    /// Whether the design must meet the users' minimum rate.
    pub fn constrained(&self) -> bool {
        matches!(self, DesignMode::Sgcdf | DesignMode::NoDedicatedStream)
    }
}

impl fmt::Display for DesignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode '{s}' (expected sgcdf, sensing_only, no_dedicated_stream or omnidirectional)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgcdfOptions {
    /// Subproblem I, on `f1(W) / f1(W0)`.
    pub sp1: RcgOptions,
    /// Subproblem II, on `f2(W) / sigma^2`.
    pub sp2: RcgOptions,
    /// A rate counts as met at `R_min - rate_slack`.
    pub rate_slack: f64,
    /// The cones of subproblem II target `R_min + rate_margin`.
    pub rate_margin: f64,
}

impl Default for SgcdfOptions {
    fn default() -> Self {
        Self::from_rcg(RcgOptions { eps: 1e-7, grad_tol: 1e-6, ..RcgOptions::default() })
    }
}

impl SgcdfOptions {
    /// Uses `rcg` for subproblem I; subproblem II shares the line-search
    /// settings but only stops on feasibility or the iteration cap.
    pub fn from_rcg(rcg: RcgOptions) -> Self {
        Self {
            sp1: rcg,
            sp2: RcgOptions { eps: 0.0, grad_tol: 1e-14, zero_residual_step: true, ..rcg },
            rate_slack: 1e-6,
            rate_margin: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sp1.validate()?;
        self.sp2.validate()?;
        if !(self.rate_slack >= 0.0 && self.rate_margin >= 0.0) {
            return Err(Error::InvalidArgument("rate slack and margin must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `R_min = delta R_max^ZF` for the scenario's overload factor.
pub fn min_rate_requirement(scenario: &Scenario) -> Result<f64> {
    if scenario.num_users() == 0 || scenario.overload == 0.0 {
        return Ok(0.0);
    }
    let r_max = comm::max_min_zf_rate(&scenario.channel_matrix(), scenario.noise_power, scenario.power_budget)?;
    Ok(scenario.overload * r_max)
}

#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub w: BeamformerMatrix,
    /// `[W_C, W_S]` before retraction.
    pub unretracted: CMat,
    pub comm_powers: Vec<f64>,
    pub sensing_power: f64,
    /// Communication powers exceeded the budget and were scaled to 90 % of it.
    pub scaled: bool,
    /// Zero-forcing was impossible; communication columns start at zero.
    pub sensing_fallback: bool,
}

/// Zero-forcing communication block with equal-rate powers at `r_min` plus
/// `W_S = sqrt(p_S / M_T) I` carrying the rest of the budget, retracted onto
/// the manifold. With `dedicated = false` the sensing block is zero.
pub fn initial_point(scenario: &Scenario, r_min: f64, dedicated: bool) -> Result<InitialPoint> {
    let m = scenario.num_tx();
    let k = scenario.num_users();
    let n = scenario.num_streams();
    let p_max = scenario.power_budget;
    let sigma2 = scenario.noise_power;
    let h = scenario.channel_matrix();
    let eye = CMat::identity(m, m);

    let mut scaled = false;
    let mut sensing_fallback = false;
    let (directions, comm_powers, sensing_power) = if k == 0 {
        (CMat::zeros(m, 0), Vec::new(), p_max)
    } else {
        match comm::zf_precoder(&h) {
            Err(Error::RankDeficient) => {
                sensing_fallback = true;
                (CMat::zeros(m, k), vec![0.0; k], p_max)
            }
            Err(e) => return Err(e),
            Ok(v) => {
                let rates = vec![r_min; k];
                let empty = CMat::zeros(m, 0);
                if dedicated {
                    // p = u + p_S s with u the noise-only powers and s the
                    // powers per unit of sensing power; p_S = P - sum(p)
                    let u = comm::equal_rate_power(&h, &v, &empty, sigma2, &rates)?;
                    let unit = &eye * Complex64::new((1.0 / m as f64).sqrt(), 0.0);
                    let s = comm::equal_rate_power(&h, &v, &unit, 0.0, &rates)?;
                    let su: f64 = u.iter().sum();
                    let ss: f64 = s.iter().sum();
                    let p_s = (p_max - su) / (1.0 + ss);
                    if p_s >= 0.0 {
                        let ws = &eye * Complex64::new((p_s / m as f64).sqrt(), 0.0);
                        let p = comm::equal_rate_power(&h, &v, &ws, sigma2, &rates)?;
                        (v, p, p_s)
                    } else {
                        scaled = true;
                        let p: Vec<f64> = u.iter().map(|x| x * 0.9 * p_max / su).collect();
                        (v, p, 0.1 * p_max)
                    }
                } else {
                    let mut p = comm::equal_rate_power(&h, &v, &empty, sigma2, &rates)?;
                    let total: f64 = p.iter().sum();
                    if total == 0.0 {
                        p = vec![p_max / k as f64; k];
                    } else if total > p_max {
                        scaled = true;
                        p.iter_mut().for_each(|x| *x *= p_max / total);
                    }
                    (v, p, 0.0)
                }
            }
        }
    };

    let mut raw = CMat::zeros(m, n);
    if k > 0 {
        raw.columns_mut(0, k).copy_from(&comm::comm_block(&directions, &comm_powers));
    }
    if dedicated {
        let ws = &eye * Complex64::new((sensing_power / m as f64).sqrt(), 0.0);
        raw.columns_mut(k, m).copy_from(&ws);
    }
    let unretracted = raw.clone();

    // silent rows cannot be retracted; give them a negligible random phase
    let active = if dedicated { n } else { k.max(1) };
    let mut rng = stream_rng(scenario.seed, Stream::Init, 0);
    for r in 0..m {
        if raw.row(r).iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            for j in 0..active.min(n) {
                raw[(r, j)] = Complex64::from_polar(1e-12, rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
    }
    let w = retract(scenario.row_radius(), &raw)?;
    Ok(InitialPoint { w, unretracted, comm_powers, sensing_power, scaled, sensing_fallback })
}

/// `W = sqrt(P_max / M_T) [0 | I]`, i.e. `R_X = (P_max / M_T) I`.
pub fn omnidirectional(scenario: &Scenario) -> Result<BeamformerMatrix> {
    let m = scenario.num_tx();
    let k = scenario.num_users();
    let mut w = CMat::zeros(m, scenario.num_streams());
    w.columns_mut(k, m).fill_with_identity();
    w *= Complex64::new(scenario.row_radius(), 0.0);
    BeamformerMatrix::new(w, scenario.row_radius())
}

/// Minimizes `tr(F^-1)` from `w0`. The objective is scaled by `1 / f1(w0)`
/// so tolerances are relative. A singular Fisher matrix at `w0` triggers one
/// retry with randomized phases.
pub fn solve_sp1(
    scenario: &Scenario,
    w0: BeamformerMatrix,
    opts: &RcgOptions,
) -> Result<(BeamformerMatrix, SolverTrace)> {
    let coupling = coupling_matrices(scenario)?;
    let w0 = match fisher_matrix(w0.entries(), &coupling) {
        Ok(_) => w0,
        Err(Error::DegenerateGeometry(_)) => {
            let mut rng = stream_rng(scenario.seed, Stream::Init, 1);
            let phased = w0.entries().map(|z| {
                if z == Complex64::new(0.0, 0.0) {
                    z
                } else {
                    z * Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
                }
            });
            let w = BeamformerMatrix::new(phased, w0.radius())?;
            fisher_matrix(w.entries(), &coupling)?;
            w
        }
        Err(e) => return Err(e),
    };
    minimize_scaled_f1(&coupling, w0, opts)
}

fn minimize_scaled_f1(
    coupling: &Coupling,
    w0: BeamformerMatrix,
    opts: &RcgOptions,
) -> Result<(BeamformerMatrix, SolverTrace)> {
    let scale = 1.0 / fisher_matrix(w0.entries(), coupling)?.objective;
    let objective = |w: &BeamformerMatrix| -> Result<(f64, CMat)> {
        let (f, g) = f1_and_grad(w.entries(), coupling)?;
        Ok((f * scale, g * Complex64::new(scale, 0.0)))
    };
    minimize(&objective, w0, opts)
}

/// Subproblem II. Returns `w` unchanged when every rate already meets
/// `r_min - rate_slack`; otherwise minimizes `f2 / sigma^2` with cones at
/// `r_min + rate_margin` until the rates are met.
pub fn solve_sp2(
    scenario: &Scenario,
    w: BeamformerMatrix,
    r_min: f64,
    opts: &SgcdfOptions,
) -> Result<(BeamformerMatrix, SolverTrace)> {
    let h = scenario.channel_matrix();
    let sigma2 = scenario.noise_power;
    let k = scenario.num_users();
    let feasible = |w: &BeamformerMatrix| {
        k == 0 || comm::rates(w.entries(), &h, sigma2).is_ok_and(|r| r.min_rate >= r_min - opts.rate_slack)
    };
    if k == 0 || r_min <= 0.0 {
        return Ok((w, SolverTrace::untouched(0.0, Termination::Satisfied, opts.sp2)));
    }
    let cones: Vec<SocInstance> = comm::soc_assemble(&h, &vec![r_min + opts.rate_margin; k], sigma2, scenario.num_streams())?;
    let scale = 1.0 / sigma2;
    let objective = |w: &BeamformerMatrix| -> Result<(f64, CMat)> {
        let (f, g) = comm::f2_and_grad(w.entries(), &cones)?;
        Ok((f * scale, g * Complex64::new(scale, 0.0)))
    };
    let (w, trace) = minimize_until(&objective, w, &opts.sp2, feasible)?;
    if trace.termination != Termination::Satisfied {
        let got = comm::rates(w.entries(), &h, sigma2)?.min_rate;
        return Err(Error::RateInfeasible { iterations: trace.iterations(), gap: r_min - got });
    }
    Ok((w, trace))
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub mode: DesignMode,
    pub w_star: BeamformerMatrix,
    pub r_x: CMat,
    pub sum_crlb: f64,
    pub rcrlb: f64,
    pub crlb: Vec<f64>,
    pub rates: RateReport,
    pub r_min: f64,
    pub sp1: Option<SolverTrace>,
    pub sp2: Option<SolverTrace>,
    pub init: Option<InitialPoint>,
    pub sp1_time: f64,
    pub sp2_time: f64,
    pub wall_time: f64,
}

impl DesignResult {
    pub fn iterations(&self) -> (usize, usize) {
        (
            self.sp1.as_ref().map_or(0, |t| t.iterations()),
            self.sp2.as_ref().map_or(0, |t| t.iterations()),
        )
    }
}

/// Runs the pipeline for `mode`.
pub fn run(scenario: &Scenario, mode: DesignMode, opts: &SgcdfOptions) -> Result<DesignResult> {
    opts.validate()?;
    let start = Instant::now();
    let coupling = coupling_matrices(scenario)?;
    let r_min = min_rate_requirement(scenario)?;

    let mut sp1 = None;
    let mut sp2 = None;
    let mut init = None;
    let mut sp1_time = 0.0;
    let mut sp2_time = 0.0;
    let w_star = if mode == DesignMode::Omnidirectional {
        omnidirectional(scenario)?
    } else {
        let dedicated = mode != DesignMode::NoDedicatedStream;
        let ip = initial_point(scenario, r_min, dedicated)?;
        let t = Instant::now();
        let (w_bar, trace) = solve_sp1(scenario, ip.w.clone(), &opts.sp1)?;
        sp1_time = t.elapsed().as_secs_f64();
        sp1 = Some(trace);
        init = Some(ip);
        if mode.constrained() {
            let t = Instant::now();
            let (w, trace) = solve_sp2(scenario, w_bar, r_min, opts)?;
            sp2_time = t.elapsed().as_secs_f64();
            sp2 = Some(trace);
            w
        } else {
            w_bar
        }
    };

    let state: FisherState = fisher_matrix(w_star.entries(), &coupling)?;
    let rates = comm::rates(w_star.entries(), &scenario.channel_matrix(), scenario.noise_power)?;
    Ok(DesignResult {
        mode,
        r_x: w_star.covariance(),
        sum_crlb: state.objective,
        rcrlb: state.objective.sqrt(),
        crlb: state.crlb(),
        rates,
        r_min,
        w_star,
        sp1,
        sp2,
        init,
        sp1_time,
        sp2_time,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
