//! Experiment drivers. Each returns a [`Table`]; rows are ordered by
//! (grid index, mode) whatever order the worker pool finishes them in.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::table::{num, Table};
use crate::array::beampattern_gain_spaced;
use crate::error::{Error, Result};
use crate::linalg::{dbm_to_watts, deg_to_rad, linear_to_db, rad_to_deg};
use crate::radar::{monte_carlo, MonteCarloOptions};
use crate::rcg::Termination;
use crate::scenario::Scenario;
use crate::sgcdf::{run, DesignMode, DesignResult, SgcdfOptions};

pub const DESIGN_HEADER: [&str; 12] = [
    "mode",
    "sum_crlb",
    "rcrlb_deg",
    "min_rate",
    "r_min",
    "rates",
    "wall_time_s",
    "sp1_iters",
    "sp2_iters",
    "sp1_termination",
    "sp2_termination",
    "seed",
];
pub const SWEEP_POWER_HEADER: [&str; 7] =
    ["p_max_dbm", "mode", "sum_beampattern_gain_db", "sum_crlb", "rcrlb_deg", "rmse_deg", "min_rate"];
pub const SWEEP_DELTA_HEADER: [&str; 6] = ["delta", "mode", "sum_crlb", "rmse_deg", "min_rate", "r_min"];
pub const BEAMPATTERN_HEADER: [&str; 3] = ["theta_deg", "mode", "gain_db"];
pub const TIMING_HEADER: [&str; 6] = ["mode", "stage", "trials", "mean_s", "std_s", "mean_iters"];

struct Setup {
    scenario: Scenario,
    opts: SgcdfOptions,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let params = cfg.scenario.to_params()?;
    Ok(Setup { scenario: Scenario::build(&params)?, opts: cfg.solver.to_options()? })
}

fn mc_options(cfg: &ExperimentConfig) -> MonteCarloOptions {
    MonteCarloOptions { trials: cfg.experiment.trials, grid_deg: cfg.experiment.music_grid_deg, noise: true }
}

fn termination(t: Option<Termination>) -> String {
    t.map_or("none", |t| t.as_str()).to_string()
}

/// Sum over targets of `a^H R_X a`, in dB.
pub fn sum_beampattern_gain_db(scenario: &Scenario, d: &DesignResult) -> Result<f64> {
    let mut total = 0.0;
    for t in &scenario.targets {
        total += beampattern_gain_spaced(&d.r_x, t.angle, scenario.array.element_spacing)?;
    }
    Ok(linear_to_db(total))
}

pub fn design(cfg: &ExperimentConfig) -> Result<Table> {
    let s = setup(cfg)?;
    let mut table = Table::new(&DESIGN_HEADER);
    for &mode in &cfg.experiment.modes {
        let d = run(&s.scenario, mode, &s.opts)?;
        let (it1, it2) = d.iterations();
        let rates: Vec<String> = d.rates.rate.iter().map(|r| num(*r)).collect();
        table.push(vec![
            mode.to_string(),
            num(d.sum_crlb),
            num(rad_to_deg(d.rcrlb)),
            num(d.rates.min_rate),
            num(d.r_min),
            rates.join(";"),
            num(d.wall_time),
            it1.to_string(),
            it2.to_string(),
            termination(d.sp1.as_ref().map(|t| t.termination)),
            termination(d.sp2.as_ref().map(|t| t.termination)),
            s.scenario.seed.to_string(),
        ])?;
    }
    Ok(table)
}

fn jobs<T: Copy + Sync>(grid: &[T], modes: &[DesignMode]) -> Vec<(T, DesignMode)> {
    grid.iter().flat_map(|&g| modes.iter().map(move |&m| (g, m))).collect()
}

pub fn sweep_power(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.power_grid()?;
    let s = setup(cfg)?;
    let mc = mc_options(cfg);
    let rows = jobs(grid, &cfg.experiment.modes)
        .into_par_iter()
        .map(|(p_dbm, mode)| -> Result<Vec<String>> {
            let sc = s.scenario.with_power_budget(dbm_to_watts(p_dbm));
            let d = run(&sc, mode, &s.opts)?;
            let rep = monte_carlo(&sc, d.w_star.entries(), d.sum_crlb, &mc)?;
            Ok(vec![
                num(p_dbm),
                mode.to_string(),
                num(sum_beampattern_gain_db(&sc, &d)?),
                num(d.sum_crlb),
                num(rad_to_deg(d.rcrlb)),
                num(rad_to_deg(rep.rmse)),
                num(d.rates.min_rate),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&SWEEP_POWER_HEADER);
    for r in rows {
        table.push(r)?;
    }
    Ok(table)
}

pub fn sweep_delta(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.delta_grid()?;
    let s = setup(cfg)?;
    let mc = mc_options(cfg);
    let rows = jobs(grid, &cfg.experiment.modes)
        .into_par_iter()
        .map(|(delta, mode)| -> Result<Vec<String>> {
            let sc = s.scenario.with_overload(delta);
            let d = run(&sc, mode, &s.opts)?;
            let rep = monte_carlo(&sc, d.w_star.entries(), d.sum_crlb, &mc)?;
            Ok(vec![
                num(delta),
                mode.to_string(),
                num(d.sum_crlb),
                num(rad_to_deg(rep.rmse)),
                num(d.rates.min_rate),
                num(d.r_min),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&SWEEP_DELTA_HEADER);
    for r in rows {
        table.push(r)?;
    }
    Ok(table)
}

/// `[-90, 90]` in steps of at most `step` degrees, both endpoints exact.
pub fn angle_grid_deg(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("beampattern step must be positive, got {step}")));
    }
    let n = (180.0 / step - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=n)
        .map(|i| if i == n { 90.0 } else { -90.0 + 180.0 * i as f64 / n as f64 })
        .collect())
}

pub fn beampattern(cfg: &ExperimentConfig) -> Result<Table> {
    let s = setup(cfg)?;
    let grid = angle_grid_deg(cfg.experiment.beampattern_step_deg)?;
    let spacing = s.scenario.array.element_spacing;
    let designs = cfg
        .experiment
        .modes
        .par_iter()
        .map(|&m| run(&s.scenario, m, &s.opts))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&BEAMPATTERN_HEADER);
    let degs = |a: &mut dyn Iterator<Item = f64>| a.map(|x| num(rad_to_deg(x))).collect::<Vec<_>>().join(",");
    table.comments.push(format!("target_deg,{}", degs(&mut s.scenario.targets.iter().map(|t| t.angle))));
    table.comments.push(format!("user_deg,{}", degs(&mut s.scenario.users.iter().map(|u| u.angle))));
    for &theta in &grid {
        for d in &designs {
            let g = beampattern_gain_spaced(&d.r_x, deg_to_rad(theta), spacing)?;
            table.push(vec![num(theta), d.mode.to_string(), num(linear_to_db(g))])?;
        }
    }
    Ok(table)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Runs each mode on `trials` channel realizations (seeds `seed..seed+trials`)
/// one after another and reports per-stage wall time.
pub fn timing(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.experiment.trials;
    if trials < 3 {
        return Err(Error::Config(format!("timing needs experiment.trials >= 3, got {trials}")));
    }
    let opts = cfg.solver.to_options()?;
    let base = cfg.scenario.to_params()?;
    let scenarios = (0..trials)
        .map(|i| {
            let mut p = base.clone();
            p.seed = base.seed.wrapping_add(i as u64);
            Scenario::build(&p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&TIMING_HEADER);
    for &mode in &cfg.experiment.modes {
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        let mut tt = Vec::new();
        let mut it1 = Vec::new();
        let mut it2 = Vec::new();
        for sc in &scenarios {
            let d = run(sc, mode, &opts)?;
            let (a, b) = d.iterations();
            t1.push(d.sp1_time);
            t2.push(d.sp2_time);
            tt.push(d.wall_time);
            it1.push(a as f64);
            it2.push(b as f64);
        }
        let itt: Vec<f64> = it1.iter().zip(&it2).map(|(a, b)| a + b).collect();
        for (stage, times, iters) in [("sp1", &t1, &it1), ("sp2", &t2, &it2), ("total", &tt, &itt)] {
            let (mean, std) = mean_std(times);
            table.push(vec![
                mode.to_string(),
                stage.to_string(),
                trials.to_string(),
                num(mean),
                num(std),
                num(mean_std(iters).0),
            ])?;
        }
    }
    Ok(table)
}
