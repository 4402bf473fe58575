//! TOML experiment configuration. Angles are in degrees and powers in dBm
//! here; everything is converted to radians and watts on the way in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::error::{Error, Result};
use crate::linalg::{dbm_to_watts, deg_to_rad};
use crate::rcg::RcgOptions;
use crate::scenario::{PathLossModel, ScenarioParams, UserRegion};
use crate::sgcdf::{DesignMode, SgcdfOptions};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub num_tx: usize,
    pub num_rx: usize,
    /// In wavelengths.
    pub element_spacing: f64,
    pub num_users: usize,
    pub target_angles_deg: Vec<f64>,
    pub target_ranges_m: Vec<f64>,
    pub noise_power_dbm: f64,
    pub power_budget_dbm: f64,
    pub snapshots: usize,
    pub rician_k: f64,
    pub overload: f64,
    pub seed: u64,
    pub c0_db: f64,
    pub d0_m: f64,
    pub user_exponent: f64,
    pub target_exponent: f64,
    pub user_min_range_m: f64,
    pub user_max_range_m: f64,
    pub user_min_angle_deg: f64,
    pub user_max_angle_deg: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let pl = PathLossModel::default();
        let region = UserRegion::default();
        Self {
            num_tx: 32,
            num_rx: 32,
            element_spacing: 0.5,
            num_users: 6,
            target_angles_deg: vec![-45.0, 30.0, 60.0],
            target_ranges_m: vec![50.0, 60.0, 70.0],
            noise_power_dbm: -96.0,
            power_budget_dbm: 20.0,
            snapshots: 1024,
            rician_k: 0.1,
            overload: 0.7,
            seed: 1,
            c0_db: pl.c0_db,
            d0_m: pl.d0,
            user_exponent: pl.user_exponent,
            target_exponent: pl.target_exponent,
            user_min_range_m: region.min_range,
            user_max_range_m: region.max_range,
            user_min_angle_deg: region.min_angle.to_degrees().round(),
            user_max_angle_deg: region.max_angle.to_degrees().round(),
        }
    }
}

impl ScenarioConfig {
    pub fn to_params(&self) -> Result<ScenarioParams> {
        let params = ScenarioParams {
            array: ArrayConfig { num_tx: self.num_tx, num_rx: self.num_rx, element_spacing: self.element_spacing },
            target_angles: self.target_angles_deg.iter().map(|a| deg_to_rad(*a)).collect(),
            target_ranges: self.target_ranges_m.clone(),
            num_users: self.num_users,
            noise_power: dbm_to_watts(self.noise_power_dbm),
            power_budget: dbm_to_watts(self.power_budget_dbm),
            snapshots: self.snapshots,
            rician_k: self.rician_k,
            overload: self.overload,
            seed: self.seed,
            pathloss: PathLossModel {
                c0_db: self.c0_db,
                d0: self.d0_m,
                user_exponent: self.user_exponent,
                target_exponent: self.target_exponent,
            },
            user_region: UserRegion {
                min_range: self.user_min_range_m,
                max_range: self.user_max_range_m,
                min_angle: deg_to_rad(self.user_min_angle_deg),
                max_angle: deg_to_rad(self.user_max_angle_deg),
            },
        };
        params.validate().map_err(|e| Error::Config(format!("[scenario] {e}")))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub c1: f64,
    pub c2: f64,
    /// Objective-change tolerance on the scaled sensing objective.
    pub eps: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub max_linesearch_evals: usize,
    /// Iterations between steepest-descent restarts; unset or 0 disables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart_period: Option<usize>,
    pub rate_slack: f64,
    pub rate_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SgcdfOptions::default();
        Self {
            c1: o.sp1.c1,
            c2: o.sp1.c2,
            eps: o.sp1.eps,
            grad_tol: o.sp1.grad_tol,
            max_iters: o.sp1.max_iters,
            max_linesearch_evals: o.sp1.max_linesearch_evals,
            restart_period: o.sp1.restart_period,
            rate_slack: o.rate_slack,
            rate_margin: o.rate_margin,
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> Result<SgcdfOptions> {
        let rcg = RcgOptions {
            c1: self.c1,
            c2: self.c2,
            eps: self.eps,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            max_linesearch_evals: self.max_linesearch_evals,
            restart_period: self.restart_period,
            zero_residual_step: false,
        };
        let opts = SgcdfOptions { rate_slack: self.rate_slack, rate_margin: self.rate_margin, ..SgcdfOptions::from_rcg(rcg) };
        opts.validate().map_err(|e| Error::Config(format!("[solver] {e}")))?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Modes for sweeps and beampatterns, in output order.
    pub modes: Vec<DesignMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_grid_dbm: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    pub trials: usize,
    pub music_grid_deg: f64,
    pub beampattern_step_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            modes: DesignMode::ALL.to_vec(),
            power_grid_dbm: None,
            delta_grid: None,
            trials: 100,
            music_grid_deg: 0.02,
            beampattern_step_deg: 0.1,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn dump(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.to_params()?;
        self.solver.to_options()?;
        let x = &self.experiment;
        if x.modes.is_empty() {
            return Err(Error::Config("experiment.modes must not be empty".into()));
        }
        if x.trials == 0 {
            return Err(Error::Config("experiment.trials must be >= 1".into()));
        }
        if !(x.music_grid_deg > 0.0) || !(x.beampattern_step_deg > 0.0) {
            return Err(Error::Config("grid resolutions must be positive".into()));
        }
        if let Some(d) = x.delta_grid.iter().flatten().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::Config(format!("experiment.delta_grid value {d} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn power_grid(&self) -> Result<&[f64]> {
        required(&self.experiment.power_grid_dbm, "experiment.power_grid_dbm")
    }

    pub fn delta_grid(&self) -> Result<&[f64]> {
        required(&self.experiment.delta_grid, "experiment.delta_grid")
    }
}

fn required<'a>(v: &'a Option<Vec<f64>>, key: &str) -> Result<&'a [f64]> {
    match v {
        Some(g) if !g.is_empty() => Ok(g),
        Some(_) => Err(Error::Config(format!("{key} must not be empty"))),
        None => Err(Error::Config(format!("missing required key {key}"))),
    }
}
