//! Riemannian conjugate gradient on the oblique manifold.
//!
//! Directions follow the Fletcher–Reeves rule with projection-based vector
//! transport; step sizes satisfy the strong Wolfe conditions
//!
//! ```text
//! f(R(W + a D)) <= f(W) + c1 a <grad f(W), D>
//! |<grad f(R(W + a D)), P(D)>| <= c2 |<grad f(W), D>|
//! ```
//!
//! where `P` projects onto the tangent space at the new point. With
//! `c2 < 1/2` every Fletcher–Reeves direction is then a descent direction.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inner_unchecked, CMat};
use crate::manifold::{project_unchecked, retract, BeamformerMatrix, TangentVector};

/// Objective on the manifold returning the value and its Euclidean gradient.
pub trait Objective {
    fn evaluate(&self, w: &BeamformerMatrix) -> Result<(f64, CMat)>;
}

impl<F> Objective for F
where
    F: Fn(&BeamformerMatrix) -> Result<(f64, CMat)>,
{
    fn evaluate(&self, w: &BeamformerMatrix) -> Result<(f64, CMat)> {
        self(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcgOptions {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant, `c1 < c2 < 1/2`.
    pub c2: f64,
    /// Stop once `|f(W_{l+1}) - f(W_l)| < eps`.
    pub eps: f64,
    /// Stop once `||grad f|| < grad_tol (1 + |f|)`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub max_linesearch_evals: usize,
    /// Reset `beta` to zero every this many iterations.
    pub restart_period: Option<usize>,
    /// The objective is a sum of squared residuals with minimum 0: every line
    /// search first tries the Gauss-Newton step `2 f / |slope|` that zeroes
    /// the linearized residual, so the solver moves no further than needed.
    pub zero_residual_step: bool,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.4,
            eps: 1e-3,
            grad_tol: 1e-3,
            max_iters: 2000,
            max_linesearch_evals: 60,
            restart_period: None,
            zero_residual_step: false,
        }
    }
}

impl RcgOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1/2 (c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        if !(self.eps >= 0.0 && self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("tolerances must be nonnegative".into()));
        }
        if self.max_linesearch_evals == 0 {
            return Err(Error::InvalidArgument("line search needs at least one evaluation".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    ObjTol,
    MaxIters,
    LineSearchFail,
    /// The caller's feasibility predicate was met.
    Satisfied,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::ObjTol => "obj_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFail => "linesearch_fail",
            Termination::Satisfied => "satisfied",
        }
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub prev_objective: f64,
    pub objective: f64,
    /// Riemannian gradient norm at the new iterate.
    pub grad_norm: f64,
    pub step: f64,
    /// Fletcher–Reeves weight used to build this iteration's direction.
    pub beta: f64,
    /// `<grad f(W_l), D_l>`.
    pub slope: f64,
    /// `<grad f(W_{l+1}), P(D_l)>`.
    pub slope_new: f64,
    /// `cos` of the angle between `-grad f(W_l)` and `D_l`.
    pub cos_angle: f64,
    pub wolfe_satisfied: bool,
    pub linesearch_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub initial_objective: f64,
    pub initial_grad_norm: f64,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub restarts: usize,
    /// Running sum of `cos^2(phi_l) ||grad f(W_l)||^2`.
    pub zoutendijk: Vec<f64>,
    pub options: RcgOptions,
}

impl SolverTrace {
    /// Trace of a solve that took no step.
    pub fn untouched(objective: f64, termination: Termination, options: RcgOptions) -> Self {
        Self {
            initial_objective: objective,
            initial_grad_norm: 0.0,
            records: Vec::new(),
            termination,
            restarts: 0,
            zoutendijk: Vec::new(),
            options,
        }
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(self.initial_grad_norm, |r| r.grad_norm)
    }

    /// Checks both strong Wolfe inequalities for a record.
    pub fn satisfies_wolfe(&self, r: &IterRecord) -> bool {
        let armijo = r.objective <= r.prev_objective + self.options.c1 * r.step * r.slope;
        let curvature = r.slope_new.abs() <= self.options.c2 * r.slope.abs();
        armijo && curvature
    }

    /// `iter,f,gnorm,step,beta` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "f", "gnorm", "step", "beta"])?;
        wtr.write_record([
            "0".to_string(),
            format!("{:e}", self.initial_objective),
            format!("{:e}", self.initial_grad_norm),
            "0".to_string(),
            "0".to_string(),
        ])?;
        for r in &self.records {
            wtr.write_record([
                r.iter.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.grad_norm),
                format!("{:e}", r.step),
                format!("{:e}", r.beta),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `||grad_new||^2 / ||grad_old||^2`; `None` when the old gradient vanished.
pub fn fletcher_reeves_beta(grad_new: &TangentVector, grad_old: &TangentVector) -> Option<f64> {
    let old = grad_old.entries().norm_squared();
    if old == 0.0 {
        return None;
    }
    Some(grad_new.entries().norm_squared() / old)
}

/// A point evaluated on the manifold with its Riemannian gradient.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub point: BeamformerMatrix,
    pub value: f64,
    pub grad: TangentVector,
}

fn evaluate<O: Objective + ?Sized>(obj: &O, point: BeamformerMatrix, iter: usize) -> Result<Evaluated> {
    let (value, egrad) = obj.evaluate(&point)?;
    if !value.is_finite() || egrad.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(iter));
    }
    let grad = project_unchecked(&point, &egrad);
    Ok(Evaluated { point, value, grad })
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub step: f64,
    pub evals: usize,
    /// Both strong Wolfe conditions hold at `point`. When false, `point` is
    /// the best Armijo point found (or the start point if there was none).
    pub wolfe_satisfied: bool,
    pub armijo_satisfied: bool,
    pub point: Evaluated,
    /// `<grad f(new), P_new(D)>`.
    pub slope_new: f64,
}

struct Trial {
    step: f64,
    eval: Evaluated,
    slope: f64,
}

/// Strong-Wolfe line search along `R(W + a D)`: expanding bracket phase,
/// then zoom by safeguarded cubic interpolation (falling back to bisection).
pub fn wolfe_linesearch<O: Objective + ?Sized>(
    obj: &O,
    start: &Evaluated,
    direction: &TangentVector,
    slope0: f64,
    initial_step: f64,
    opts: &RcgOptions,
) -> Result<LineSearchResult> {
    if !(slope0 < 0.0) {
        return Err(Error::NotDescent(slope0));
    }
    if !(initial_step > 0.0 && initial_step.is_finite()) {
        return Err(Error::InvalidArgument(format!("initial step must be positive, got {initial_step}")));
    }
    let f0 = start.value;
    let radius = start.point.radius();
    let d = direction.entries();
    let mut evals = 0usize;
    let mut best: Option<Trial> = None;

    let try_step = |step: f64, evals: &mut usize| -> Result<Trial> {
        *evals += 1;
        let y = start.point.entries() + d * Complex64::new(step, 0.0);
        let eval = evaluate(obj, retract(radius, &y)?, 0)?;
        let moved = project_unchecked(&eval.point, d);
        let slope = inner_unchecked(eval.grad.entries(), moved.entries());
        Ok(Trial { step, eval, slope })
    };
    let armijo = |t: &Trial| t.eval.value <= f0 + opts.c1 * t.step * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -opts.c2 * slope0;

    let finish = |t: Trial, evals: usize, wolfe: bool| LineSearchResult {
        step: t.step,
        evals,
        wolfe_satisfied: wolfe,
        armijo_satisfied: true,
        slope_new: t.slope,
        point: t.eval,
    };
    let remember = |best: &mut Option<Trial>, t: &Trial| {
        if armijo(t) && best.as_ref().is_none_or(|b| t.eval.value < b.eval.value) {
            *best = Some(Trial { step: t.step, eval: t.eval.clone(), slope: t.slope });
        }
    };

    // bracketing
    let mut prev = Trial { step: 0.0, eval: start.clone(), slope: slope0 };
    let mut step = initial_step;
    let (mut lo, mut hi) = loop {
        if evals >= opts.max_linesearch_evals {
            return Ok(fallback(best, start, evals));
        }
        let cur = try_step(step, &mut evals)?;
        remember(&mut best, &cur);
        if !armijo(&cur) || (prev.step > 0.0 && cur.eval.value >= prev.eval.value) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Ok(finish(cur, evals, true));
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        prev = cur;
        step *= 2.0;
    };

    // zoom: `lo` satisfies Armijo and has the lowest value seen in the bracket
    while evals < opts.max_linesearch_evals {
        let width = (hi.step - lo.step).abs();
        if width <= f64::EPSILON * lo.step.max(hi.step) {
            break;
        }
        let a = lo.step.min(hi.step);
        let b = lo.step.max(hi.step);
        let mut t = cubic_minimizer(&lo, &hi).unwrap_or(0.5 * (a + b));
        if !(t > a + 0.1 * (b - a) && t < b - 0.1 * (b - a)) {
            t = 0.5 * (a + b);
        }
        let cur = try_step(t, &mut evals)?;
        remember(&mut best, &cur);
        if !armijo(&cur) || cur.eval.value >= lo.eval.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok(finish(cur, evals, true));
            }
            if cur.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(fallback(best, start, evals))
}

fn fallback(best: Option<Trial>, start: &Evaluated, evals: usize) -> LineSearchResult {
    match best {
        Some(t) => LineSearchResult {
            step: t.step,
            evals,
            wolfe_satisfied: false,
            armijo_satisfied: true,
            slope_new: t.slope,
            point: t.eval,
        },
        None => LineSearchResult {
            step: 0.0,
            evals,
            wolfe_satisfied: false,
            armijo_satisfied: false,
            slope_new: 0.0,
            point: start.clone(),
        },
    }
}

/// Minimizer of the cubic interpolating values and slopes at two steps.
fn cubic_minimizer(a: &Trial, b: &Trial) -> Option<f64> {
    let (x1, f1, g1) = (a.step, a.eval.value, a.slope);
    let (x2, f2, g2) = (b.step, b.eval.value, b.slope);
    if x1 == x2 {
        return None;
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if disc < 0.0 {
        return None;
    }
    let d2 = (x2 - x1).signum() * disc.sqrt();
    let denom = g2 - g1 + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = x2 - (x2 - x1) * (g2 + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Minimizes `obj` from `w0`.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    w0: BeamformerMatrix,
    opts: &RcgOptions,
) -> Result<(BeamformerMatrix, SolverTrace)> {
    minimize_until(obj, w0, opts, |_: &BeamformerMatrix| false)
}

/// Like [`minimize`], additionally stopping as soon as `satisfied` holds at
/// the current iterate (checked before the first step too).
pub fn minimize_until<O, S>(
    obj: &O,
    w0: BeamformerMatrix,
    opts: &RcgOptions,
    mut satisfied: S,
) -> Result<(BeamformerMatrix, SolverTrace)>
where
    O: Objective + ?Sized,
    S: FnMut(&BeamformerMatrix) -> bool,
{
    opts.validate()?;
    if w0.max_row_deviation() > crate::manifold::MANIFOLD_TOL {
        return Err(Error::OffManifold { row: 0, norm: f64::NAN, radius: w0.radius() });
    }
    let mut cur = evaluate(obj, w0, 0)?;
    let mut trace = SolverTrace {
        initial_objective: cur.value,
        initial_grad_norm: cur.grad.norm(),
        records: Vec::new(),
        termination: Termination::MaxIters,
        restarts: 0,
        zoutendijk: Vec::new(),
        options: *opts,
    };
    let grad_small = |e: &Evaluated| e.grad.norm() <= opts.grad_tol * (1.0 + e.value.abs());
    if satisfied(&cur.point) {
        trace.termination = Termination::Satisfied;
        return Ok((cur.point, trace));
    }
    if grad_small(&cur) {
        trace.termination = Termination::GradTol;
        return Ok((cur.point, trace));
    }

    let point_scale = cur.point.entries().norm();
    let mut direction = TangentVector(-cur.grad.entries().clone());
    let mut beta = 0.0;
    let mut prev_step_slope: Option<(f64, f64)> = None;
    let mut zoutendijk = 0.0;

    for iter in 1..=opts.max_iters {
        let gnorm2 = cur.grad.entries().norm_squared();
        let mut slope = inner_unchecked(cur.grad.entries(), direction.entries());
        if !(slope < 0.0) {
            direction = TangentVector(-cur.grad.entries().clone());
            slope = -gnorm2;
            beta = 0.0;
            trace.restarts += 1;
        }
        let dnorm = direction.norm();
        let cos_angle = -slope / (gnorm2.sqrt() * dnorm);
        let max_step = point_scale / dnorm;
        let initial_step = if opts.zero_residual_step && cur.value > 0.0 {
            (2.0 * cur.value / -slope).min(max_step)
        } else {
            match prev_step_slope {
                Some((step, prev_slope)) => (step * prev_slope / slope).min(max_step),
                None => max_step,
            }
        };

        let ls = wolfe_linesearch(obj, &cur, &direction, slope, initial_step, opts)?;
        if !ls.armijo_satisfied {
            trace.termination = Termination::LineSearchFail;
            break;
        }
        let next = ls.point;
        zoutendijk += cos_angle * cos_angle * gnorm2;
        trace.zoutendijk.push(zoutendijk);
        trace.records.push(IterRecord {
            iter,
            prev_objective: cur.value,
            objective: next.value,
            grad_norm: next.grad.norm(),
            step: ls.step,
            beta,
            slope,
            slope_new: ls.slope_new,
            cos_angle,
            wolfe_satisfied: ls.wolfe_satisfied,
            linesearch_evals: ls.evals,
        });
        prev_step_slope = Some((ls.step, slope));

        let change = (next.value - cur.value).abs();
        let old_grad = std::mem::replace(&mut cur, next).grad;
        if satisfied(&cur.point) {
            trace.termination = Termination::Satisfied;
            break;
        }
        if grad_small(&cur) {
            trace.termination = Termination::GradTol;
            break;
        }
        if change < opts.eps {
            trace.termination = Termination::ObjTol;
            break;
        }
        if !ls.wolfe_satisfied {
            // Armijo-only fallback: restart from steepest descent, give up if that was one
            if beta == 0.0 {
                trace.termination = Termination::LineSearchFail;
                break;
            }
            direction = TangentVector(-cur.grad.entries().clone());
            beta = 0.0;
            trace.restarts += 1;
            continue;
        }
        let restart = opts.restart_period.is_some_and(|p| p > 0 && iter % p == 0);
        beta = if restart {
            trace.restarts += 1;
            0.0
        } else {
            fletcher_reeves_beta(&cur.grad, &old_grad).unwrap_or(0.0)
        };
        let moved = project_unchecked(&cur.point, direction.entries());
        direction = TangentVector(moved.entries() * Complex64::new(beta, 0.0) - cur.grad.entries());
    }
    Ok((cur.point, trace))
}
