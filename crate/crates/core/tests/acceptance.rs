//! Desk-scale acceptance checks. Every test prints a `PASS` or `FAIL` line
//! before asserting.

use std::cell::Cell;
use std::time::Instant;

use isac_beam::array::ArrayConfig;
use isac_beam::cli::commands;
use isac_beam::cli::{ExperimentConfig, Table};
use isac_beam::comm::{self, f2_and_grad, rates, soc_assemble, sinr_target};
use isac_beam::fisher::{coupling_matrices, f1, f1_and_grad, fisher_matrix};
use isac_beam::linalg::{complex_gaussian, deg_to_rad, dbm_to_watts, inner};
use isac_beam::manifold::{project_tangent, retract, BeamformerMatrix};
use isac_beam::rcg::{minimize, RcgOptions};
use isac_beam::scenario::{stream_rng, Scenario, ScenarioParams, Stream};
use isac_beam::sgcdf::{run, DesignMode, SgcdfOptions};
use isac_beam::CMat;
use num_complex::Complex64;
use rand::Rng;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn params(m: usize, k: usize, angles_deg: &[f64], snapshots: usize, seed: u64) -> ScenarioParams {
    ScenarioParams {
        array: ArrayConfig::new(m, m).unwrap(),
        target_angles: angles_deg.iter().map(|a| deg_to_rad(*a)).collect(),
        target_ranges: (0..angles_deg.len()).map(|i| 50.0 + 10.0 * i as f64).collect(),
        num_users: k,
        snapshots,
        seed,
        ..ScenarioParams::default()
    }
}

fn scenario(m: usize, k: usize, angles_deg: &[f64], snapshots: usize, seed: u64) -> Scenario {
    Scenario::build(&params(m, k, angles_deg, snapshots, seed)).unwrap()
}

fn random_point<R: Rng>(rng: &mut R, sc: &Scenario) -> BeamformerMatrix {
    retract(sc.row_radius(), &complex_gaussian(rng, sc.num_tx(), sc.num_streams())).unwrap()
}

/// Entrywise central differences; `d/dRe + i d/dIm` matches the gradient convention.
fn fd_gradient(f: &dyn Fn(&CMat) -> f64, w: &CMat, h: f64) -> CMat {
    let mut g = CMat::zeros(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let mut part = [0.0; 2];
            for (slot, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)].into_iter().enumerate() {
                let mut p = w.clone();
                p[(i, j)] += dir;
                let mut q = w.clone();
                q[(i, j)] -= dir;
                part[slot] = (f(&p) - f(&q)) / (2.0 * h);
            }
            g[(i, j)] = Complex64::new(part[0], part[1]);
        }
    }
    g
}

#[test]
fn gradient_correctness() {
    let start = Instant::now();
    let angles = [-20.0, 35.0];
    let mut worst1: f64 = 0.0;
    let mut worst2: f64 = 0.0;
    for i in 0..20 {
        let sc = scenario(8, 2, &angles, 64, 100 + i);
        let coupling = coupling_matrices(&sc).unwrap();
        let cones = soc_assemble(&sc.channel_matrix(), &[1.5, 2.5], sc.noise_power, sc.num_streams()).unwrap();
        let mut rng = stream_rng(i, Stream::Test, 1);
        let w = random_point(&mut rng, &sc);
        let w = w.entries();
        let h = 1e-6 * sc.row_radius();

        let (_, g1) = f1_and_grad(w, &coupling).unwrap();
        let fd1 = fd_gradient(&|x| f1(x, &coupling).unwrap(), w, h);
        worst1 = worst1.max((&fd1 - &g1).norm() / g1.norm());

        let (_, g2) = f2_and_grad(w, &cones).unwrap();
        let fd2 = fd_gradient(&|x| comm::f2(x, &cones).unwrap(), w, h);
        worst2 = worst2.max((&fd2 - &g2).norm() / g2.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "gradient_correctness",
        worst1 < 1e-5 && worst2 < 1e-5 && secs < 10.0,
        format!("max rel err f1 {worst1:.2e}, f2 {worst2:.2e} (< 1e-5), {secs:.2}s (< 10s)"),
    );
}

#[test]
fn manifold_invariants() {
    let start = Instant::now();
    let mut rng = stream_rng(7, Stream::Test, 2);
    let mut idem: f64 = 0.0;
    let mut adj: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(2..10);
        let n = rng.random_range(1..12);
        let radius = rng.random_range(0.1..2.0);
        let w = retract(radius, &complex_gaussian(&mut rng, m, n)).unwrap();
        let x = complex_gaussian(&mut rng, m, n);
        let y = complex_gaussian(&mut rng, m, n);
        let px = project_tangent(&w, &x).unwrap();
        let ppx = project_tangent(&w, px.entries()).unwrap();
        idem = idem.max((ppx.entries() - px.entries()).norm());
        let py = project_tangent(&w, &y).unwrap();
        let lhs = inner(px.entries(), &y).unwrap();
        let rhs = inner(&x, py.entries()).unwrap();
        adj = adj.max((lhs - rhs).abs());
    }

    // every point the solver evaluates, accepted iterates included
    let mut power_dev: f64 = 0.0;
    let mut iterates = 0;
    for seed in 0..5 {
        let sc = scenario(8, 2, &[-45.0, 30.0, 60.0], 64, 200 + seed);
        let coupling = coupling_matrices(&sc).unwrap();
        let target = sc.power_budget / sc.num_tx() as f64;
        let dev = Cell::new(0.0f64);
        let objective = |w: &BeamformerMatrix| {
            for row in w.entries().row_iter() {
                dev.set(dev.get().max((row.norm_squared() - target).abs()));
            }
            f1_and_grad(w.entries(), &coupling).map(|(f, g)| (f * 1e4, g * Complex64::new(1e4, 0.0)))
        };
        let mut rng = stream_rng(seed, Stream::Test, 3);
        let w0 = random_point(&mut rng, &sc);
        let opts = RcgOptions { max_iters: 100, ..RcgOptions::default() };
        let (w, trace) = minimize(&objective, w0, &opts).unwrap();
        for row in w.entries().row_iter() {
            dev.set(dev.get().max((row.norm_squared() - target).abs()));
        }
        iterates += trace.iterations();
        power_dev = power_dev.max(dev.get());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "manifold_invariants",
        idem < 1e-10 && adj < 1e-10 && power_dev < 1e-10 && secs < 5.0,
        format!(
            "idempotence {idem:.2e}, self-adjointness {adj:.2e}, per-antenna power {power_dev:.2e} over {iterates} iterates (all < 1e-10), {secs:.2}s (< 5s)"
        ),
    );
}

#[test]
fn wolfe_and_descent() {
    let start = Instant::now();
    let opts = SgcdfOptions::default().sp1;
    let mut steps = 0;
    let mut violations = 0;
    let mut increases = 0;
    for seed in 0..10 {
        let sc = scenario(16, 4, &[-45.0, 30.0, 60.0], 256, 300 + seed);
        let coupling = coupling_matrices(&sc).unwrap();
        let mut rng = stream_rng(seed, Stream::Test, 4);
        let w0 = random_point(&mut rng, &sc);
        let scale = 1.0 / fisher_matrix(w0.entries(), &coupling).unwrap().objective;
        let objective = |w: &BeamformerMatrix| {
            f1_and_grad(w.entries(), &coupling).map(|(f, g)| (f * scale, g * Complex64::new(scale, 0.0)))
        };
        let (_, trace) = minimize(&objective, w0, &opts).unwrap();
        for r in &trace.records {
            steps += 1;
            if !trace.satisfies_wolfe(r) {
                violations += 1;
            }
            if r.objective > r.prev_objective {
                increases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "wolfe_and_descent",
        violations == 0 && increases == 0 && steps > 0 && secs < 30.0,
        format!("{steps} accepted steps: {violations} strong-Wolfe violations, {increases} objective increases, {secs:.2}s (< 30s)"),
    );
}

#[test]
fn soc_equivalence() {
    let start = Instant::now();
    let mut disagreements = 0;
    let mut inside = 0;
    for i in 0..200 {
        let sc = scenario(8, 3, &[-45.0, 30.0], 64, 400 + i / 20);
        let h = sc.channel_matrix();
        let mut rng = stream_rng(i, Stream::Test, 5);
        let w = random_point(&mut rng, &sc);
        let rep = rates(w.entries(), &h, sc.noise_power).unwrap();
        let r_min: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0) * rep.rate.iter().sum::<f64>() / 3.0).collect();
        let cones = soc_assemble(&h, &r_min, sc.noise_power, sc.num_streams()).unwrap();
        for (k, c) in cones.iter().enumerate() {
            let member = c.contains(&c.assemble(w.entries()).unwrap());
            let sinr_ok = rep.sinr[k] >= sinr_target(r_min[k]);
            inside += member as usize;
            if member != sinr_ok {
                disagreements += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "soc_equivalence",
        disagreements == 0 && secs < 5.0,
        format!("{disagreements} disagreements over 600 user checks ({inside} inside), {secs:.2}s (< 5s)"),
    );
}

#[test]
fn equal_rate_fixed_point() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut feasible = 0;
    let mut rejected = 0;
    let mut wrongly_accepted = 0;
    let mut seed = 0;
    while feasible < 50 {
        seed += 1;
        let sc = scenario(8, 3, &[-45.0, 30.0], 64, 500 + seed);
        let h = sc.channel_matrix();
        let mut rng = stream_rng(seed, Stream::Test, 6);
        // zero-forcing directions bent off their nulls so users interfere
        let zf = comm::zf_precoder(&h).unwrap();
        let dirs = zf + complex_gaussian(&mut rng, 8, 3) * Complex64::new(0.2, 0.0);
        let ws = complex_gaussian(&mut rng, 8, 2) * Complex64::new(1e-3, 0.0);
        let r_min: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..4.0)).collect();
        match comm::equal_rate_power(&h, &dirs, &ws, sc.noise_power, &r_min) {
            Ok(p) => {
                feasible += 1;
                let mut w = comm::comm_block(&dirs, &p);
                w.extend(ws.column_iter().map(|c| c.into_owned()));
                let rep = rates(&w, &h, sc.noise_power).unwrap();
                for (got, want) in rep.rate.iter().zip(&r_min) {
                    worst = worst.max((got - want).abs());
                }
            }
            Err(isac_beam::Error::NegativePower { .. }) => rejected += 1,
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    // strongly coupled directions with demanding targets: no nonnegative solution exists
    let mut infeasible = 0;
    for seed in 0..20 {
        let sc = scenario(8, 3, &[-45.0, 30.0], 64, 600 + seed);
        let h = sc.channel_matrix();
        let mut rng = stream_rng(seed, Stream::Test, 7);
        let base = complex_gaussian(&mut rng, 8, 1);
        let dirs = CMat::from_fn(8, 3, |i, j| base[(i, 0)] + complex_gaussian(&mut rng, 1, 1)[(0, 0)] * 1e-3 * (j as f64));
        let r_min = [8.0, 8.0, 8.0];
        let powered = comm::equal_rate_power(&h, &dirs, &CMat::zeros(8, 0), sc.noise_power, &r_min);
        match powered {
            Err(isac_beam::Error::NegativePower { .. }) => infeasible += 1,
            Ok(p) => {
                let rep = rates(&comm::comm_block(&dirs, &p), &h, sc.noise_power).unwrap();
                if rep.rate.iter().zip(&r_min).any(|(a, b)| (a - b).abs() > 1e-8) {
                    wrongly_accepted += 1;
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "equal_rate_fixed_point",
        worst < 1e-8 && infeasible == 20 && wrongly_accepted == 0 && secs < 5.0,
        format!(
            "max |rate - R_min| {worst:.2e} (< 1e-8) on {feasible} feasible instances ({rejected} random draws rejected), {infeasible}/20 infeasible instances rejected, {secs:.2}s (< 5s)"
        ),
    );
}

#[test]
fn pipeline_ordering() {
    let start = Instant::now();
    let base = scenario(16, 4, &[-45.0, 30.0, 60.0], 256, 1);
    let opts = SgcdfOptions::default();
    let sensing = run(&base, DesignMode::SensingOnly, &opts).unwrap().sum_crlb;
    let mut values = vec![sensing];
    for delta in [0.3, 0.5, 0.7] {
        values.push(run(&base.with_overload(delta), DesignMode::Sgcdf, &opts).unwrap().sum_crlb);
    }
    let ordered = values.windows(2).all(|w| w[0] <= w[1]);
    let secs = start.elapsed().as_secs_f64();
    report(
        "pipeline_ordering",
        ordered && secs < 120.0,
        format!(
            "sum-CRLB sensing_only, sgcdf at delta 0.3/0.5/0.7: [{}] nondecreasing, {secs:.2}s (< 120s)",
            values.iter().map(|v| format!("{v:.5e}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

#[test]
fn rate_feasibility() {
    let start = Instant::now();
    let opts = SgcdfOptions::default();
    let mut met = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for seed in 1..=20 {
        let sc = scenario(16, 4, &[-45.0, 30.0, 60.0], 256, seed);
        if let Ok(d) = run(&sc, DesignMode::Sgcdf, &opts) {
            let gap = d.r_min - d.rates.min_rate;
            worst_gap = worst_gap.max(gap);
            if d.rates.min_rate >= d.r_min - 1e-6 {
                met += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "rate_feasibility",
        met == 20 && secs < 120.0,
        format!("{met}/20 runs with min rate >= R_min - 1e-6 (worst R_min - min rate {worst_gap:.2e}), {secs:.2}s (< 120s)"),
    );
}

#[test]
fn crlb_power_scaling() {
    let start = Instant::now();
    let sc = scenario(16, 4, &[-45.0, 30.0, 60.0], 256, 1);
    let opts = SgcdfOptions::default();
    let a = run(&sc, DesignMode::Sgcdf, &opts).unwrap().sum_crlb;
    let b = run(&sc.with_power_budget(2.0 * sc.power_budget), DesignMode::Sgcdf, &opts).unwrap().sum_crlb;
    let ratio = b / a;
    let err = (ratio - 0.5).abs() / 0.5;
    let secs = start.elapsed().as_secs_f64();
    report(
        "crlb_power_scaling",
        err < 0.02 && secs < 60.0,
        format!("sum-CRLB(2P)/sum-CRLB(P) = {ratio:.5} (|ratio/0.5 - 1| = {err:.2e} < 2e-2), {secs:.2}s (< 60s)"),
    );
}

fn desk_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.num_tx = 16;
    cfg.scenario.num_rx = 16;
    cfg.scenario.num_users = 4;
    cfg.scenario.snapshots = 256;
    cfg.scenario.overload = 0.7;
    cfg.scenario.seed = seed;
    cfg
}

#[test]
fn rmse_tracks_rcrlb() {
    let start = Instant::now();
    let mut cfg = desk_config(1);
    cfg.experiment.trials = 30;
    cfg.experiment.power_grid_dbm = Some(vec![10.0, 15.0, 20.0]);
    cfg.experiment.modes = vec![DesignMode::Sgcdf];
    let t = commands::sweep_power(&cfg).unwrap();
    let rmse = t.column_f64("rmse_deg").unwrap();
    let rcrlb = t.column_f64("rcrlb_deg").unwrap();
    let ratio: Vec<f64> = rmse.iter().zip(&rcrlb).map(|(a, b)| a / b).collect();
    let decreasing = rmse.windows(2).all(|w| w[1] < w[0]);
    let bounded = (1.0..=3.0).contains(&ratio[2]);
    let shrinking = ratio[2] < ratio[0];
    let secs = start.elapsed().as_secs_f64();
    report(
        "rmse_tracks_rcrlb",
        decreasing && bounded && shrinking && secs < 600.0,
        format!(
            "rmse_deg {rmse:.4?} strictly decreasing: {decreasing}; rmse/rcrlb {ratio:.3?}, at 20 dBm in [1, 3]: {bounded}, below 10 dBm value: {shrinking}; {secs:.2}s (< 600s)"
        ),
    );
}

fn local_maxima(trace: &[(f64, f64)]) -> Vec<(f64, f64)> {
    trace.windows(3).filter(|w| w[1].1 >= w[0].1 && w[1].1 >= w[2].1).map(|w| w[1]).collect()
}

/// Highest local maximum within `tol` degrees of `theta`.
fn peak_near(maxima: &[(f64, f64)], theta: f64, tol: f64) -> Option<(f64, f64)> {
    maxima
        .iter()
        .filter(|(a, _)| (a - theta).abs() <= tol)
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

#[test]
fn beampattern_peaks() {
    let start = Instant::now();
    let mut cfg = desk_config(1);
    cfg.experiment.beampattern_step_deg = 0.1;
    cfg.experiment.modes = vec![DesignMode::SensingOnly, DesignMode::Sgcdf];
    let t = commands::beampattern(&cfg).unwrap();
    let t = Table::read(t.to_csv_string().unwrap().as_bytes()).unwrap();
    let trace = |mode: &str| -> Vec<(f64, f64)> {
        let sub = t.filter("mode", mode).unwrap();
        let th = sub.column_f64("theta_deg").unwrap();
        let g = sub.column_f64("gain_db").unwrap();
        th.into_iter().zip(g).collect()
    };
    let sensing = local_maxima(&trace("sensing_only"));
    let sgcdf = local_maxima(&trace("sgcdf"));
    let mut pass = true;
    let mut detail = Vec::new();
    for target in [-45.0, 30.0, 60.0] {
        let s = peak_near(&sensing, target, 2.0);
        // the sgcdf lobe that carries the same peak
        let g = s.and_then(|s| peak_near(&sgcdf, s.0, 2.0));
        match (s, g) {
            (Some(s), Some(g)) => {
                let drop = s.1 - g.1;
                pass &= drop <= 6.0;
                detail.push(format!("{target}: sensing_only {:.1}@{:.1}, sgcdf {:.1}@{:.1}, drop {drop:.2} dB", s.1, s.0, g.1, g.0));
            }
            _ => {
                pass = false;
                detail.push(format!("{target}: sensing_only peak {s:?}, sgcdf peak {g:?}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "beampattern_peaks",
        pass && secs < 60.0,
        format!("{} (sensing_only peaks within 2 deg of targets, sgcdf peaks within 2 deg of those, drop <= 6 dB), {secs:.2}s (< 60s)", detail.join("; ")),
    );
}

#[test]
fn omnidirectional_flat() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.modes = vec![DesignMode::Omnidirectional];
    let t = commands::beampattern(&cfg).unwrap();
    let g = t.column_f64("gain_db").unwrap();
    let spread = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - g.iter().cloned().fold(f64::INFINITY, f64::min);
    let expected = 10.0 * (dbm_to_watts(cfg.scenario.power_budget_dbm)).log10();
    let secs = start.elapsed().as_secs_f64();
    report(
        "omnidirectional_flat",
        spread < 1e-9 && secs < 10.0,
        format!("max-min {spread:.2e} dB (< 1e-9) over {} angles at {:.3} dB (P_max {expected:.3} dB), {secs:.2}s (< 10s)", g.len(), g[0]),
    );
}
