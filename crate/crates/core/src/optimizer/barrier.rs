//! Log-barrier Newton solver for small dense convex programs with smooth
//! convex rows and second-order-cone rows.
//!
//! Rows marked `soft` may be violated by the starting point; a phase-I
//! problem (minimize a common shift `s` of all soft rows) then finds a
//! strictly feasible point first. Hard rows (simple bounds) must hold
//! strictly at the starting point.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A twice-differentiable convex function. `value` returns `None` outside
/// the function's domain.
pub trait Smooth {
    fn value(&self, z: &Vector) -> Option<f64>;
    fn gradient(&self, z: &Vector) -> Vector;
    fn hessian(&self, z: &Vector) -> Matrix;
}

pub enum Constraint {
    /// `aᵀz + b ≤ 0`.
    Linear { a: Vector, b: f64 },
    /// `zᵀPz + qᵀz + r ≤ 0` with `P ⪰ 0`.
    Quadratic { p: Matrix, q: Vector, r: f64 },
    /// `‖Az + b‖ ≤ cᵀz + d`.
    Soc { a: Matrix, b: Vector, c: Vector, d: f64 },
    /// `g(z) ≤ 0`.
    Smooth(Box<dyn Smooth>),
}

pub struct Row {
    pub constraint: Constraint,
    pub soft: bool,
    pub label: String,
}

impl Row {
    pub fn hard(constraint: Constraint, label: impl Into<String>) -> Self {
        Self { constraint, soft: false, label: label.into() }
    }

    pub fn soft(constraint: Constraint, label: impl Into<String>) -> Self {
        Self { constraint, soft: true, label: label.into() }
    }

    /// Constraint violation at `z`: `g(z)` for scalar rows, `‖Az+b‖ − (cᵀz+d)`
    /// for cones. Positive means violated; `+∞` outside the domain.
    pub fn violation(&self, z: &Vector) -> f64 {
        match &self.constraint {
            Constraint::Linear { a, b } => a.dot(z) + b,
            Constraint::Quadratic { p, q, r } => z.dot(&(p * z)) + q.dot(z) + r,
            Constraint::Soc { a, b, c, d } => (a * z + b).norm() - (c.dot(z) + d),
            Constraint::Smooth(g) => g.value(z).unwrap_or(f64::INFINITY),
        }
    }

    fn barrier_weight(&self) -> f64 {
        match self.constraint {
            Constraint::Soc { .. } => 2.0,
            _ => 1.0,
        }
    }
}

pub struct Program {
    pub n: usize,
    pub objective: Box<dyn Smooth>,
    pub rows: Vec<Row>,
}

impl Program {
    /// Largest violation over all rows.
    pub fn max_violation(&self, z: &Vector) -> f64 {
        self.rows.iter().map(|r| r.violation(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn strictly_feasible(&self, z: &Vector) -> bool {
        self.rows.iter().all(|r| r.violation(z) < 0.0 && self.domain_ok(r, z, 0.0))
    }

    fn domain_ok(&self, row: &Row, z: &Vector, shift: f64) -> bool {
        match &row.constraint {
            Constraint::Soc { c, d, .. } => c.dot(z) + d + shift > 0.0,
            Constraint::Smooth(g) => g.value(z).is_some(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Stop when the barrier gap bound `ν/t` is below `gap_tol·(1 + |f|)`.
    pub gap_tol: f64,
    pub t0: f64,
    pub barrier_growth: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
    /// Phase I stops as soon as the common shift drops below `-phase1_margin`.
    pub phase1_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            t0: 1.0,
            barrier_growth: 10.0,
            max_newton_per_center: 200,
            max_outer: 40,
            phase1_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: Vector,
    pub objective: f64,
    pub newton_steps: usize,
    pub gap_bound: f64,
    pub used_phase1: bool,
}

/// Weight of the true objective in phase I, relative to its magnitude at the
/// starting point. It keeps the phase-I barrier bounded along directions the
/// soft rows leave free (for example a penalized slack) without changing
/// which points are found.
const PHASE1_WEIGHT: f64 = 1e-3;

/// Relative barrier decrease below which a Newton step counts as stalled.
const STALL_TOL: f64 = 1e-13;

/// Evaluation of the barrier-augmented function in the (possibly extended)
/// variable space. In phase I the last coordinate is the shift `s`.
struct Barrier<'a> {
    program: &'a Program,
    phase1: bool,
    /// Objective weight in phase I.
    weight: f64,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.program.n + usize::from(self.phase1)
    }

    fn split<'v>(&self, x: &'v Vector) -> (nalgebra::DVectorView<'v, f64>, f64) {
        let n = self.program.n;
        let s = if self.phase1 { x[n] } else { 0.0 };
        (x.rows(0, n), s)
    }

    fn objective(&self, x: &Vector) -> Option<f64> {
        if self.phase1 {
            let (z, s) = self.split(x);
            Some(s + self.weight * self.program.objective.value(&z.into_owned())?)
        } else {
            self.program.objective.value(x)
        }
    }

    /// `t·f(x) + φ(x)`, or `None` outside the strict interior.
    fn value(&self, x: &Vector, t: f64) -> Option<f64> {
        let (zv, s) = self.split(x);
        let z: Vector = zv.into_owned();
        let mut phi = t * self.objective(x)?;
        if self.phase1 && s <= -1.0 {
            return None;
        }
        if self.phase1 {
            phi -= (s + 1.0).ln();
        }
        for row in &self.program.rows {
            let shift = if self.phase1 && row.soft { s } else { 0.0 };
            match &row.constraint {
                Constraint::Soc { a, b, c, d } => {
                    let u = a * &z + b;
                    let tt = c.dot(&z) + d + shift;
                    let slack = tt * tt - u.norm_squared();
                    if tt <= 0.0 || slack <= 0.0 {
                        return None;
                    }
                    phi -= slack.ln();
                }
                _ => {
                    let g = row_value(&row.constraint, &z)? - shift;
                    if g >= 0.0 {
                        return None;
                    }
                    phi -= (-g).ln();
                }
            }
        }
        if phi.is_finite() {
            Some(phi)
        } else {
            None
        }
    }

    fn derivatives(&self, x: &Vector, t: f64) -> (Vector, Matrix) {
        let n = self.program.n;
        let dim = self.dim();
        let (zv, s) = self.split(x);
        let z: Vector = zv.into_owned();
        let mut grad = Vector::zeros(dim);
        let mut hess = Matrix::zeros(dim, dim);
        if self.phase1 {
            grad[n] += t;
            let tw = t * self.weight;
            grad.rows_mut(0, n).axpy(tw, &self.program.objective.gradient(&z), 1.0);
            let mut view = hess.view_mut((0, 0), (n, n));
            view += self.program.objective.hessian(&z) * tw;
            let w = s + 1.0;
            grad[n] -= 1.0 / w;
            hess[(n, n)] += 1.0 / (w * w);
        } else {
            grad += self.program.objective.gradient(&z) * t;
            hess += self.program.objective.hessian(&z) * t;
        }
        for row in &self.program.rows {
            let shifted = self.phase1 && row.soft;
            let shift = if shifted { s } else { 0.0 };
            match &row.constraint {
                Constraint::Soc { a, b, c, d } => {
                    let u = a * &z + b;
                    let tt = c.dot(&z) + d + shift;
                    let slack = tt * tt - u.norm_squared();
                    // ∇slack and ∇²slack in the extended space
                    let mut ds = Vector::zeros(dim);
                    let atu = a.transpose() * &u;
                    ds.rows_mut(0, n).copy_from(&(c * (2.0 * tt) - atu * 2.0));
                    let mut d2s = Matrix::zeros(dim, dim);
                    let core = c * c.transpose() * 2.0 - a.transpose() * a * 2.0;
                    d2s.view_mut((0, 0), (n, n)).copy_from(&core);
                    if shifted {
                        ds[n] = 2.0 * tt;
                        d2s[(n, n)] = 2.0;
                        let cc = c * 2.0;
                        for i in 0..n {
                            d2s[(i, n)] = cc[i];
                            d2s[(n, i)] = cc[i];
                        }
                    }
                    grad -= &ds / slack;
                    hess += &ds * ds.transpose() / (slack * slack) - d2s / slack;
                }
                other => {
                    let g = row_value(other, &z).expect("checked by value()") - shift;
                    let (gz, hz) = row_derivatives(other, &z);
                    let mut dg = Vector::zeros(dim);
                    dg.rows_mut(0, n).copy_from(&gz);
                    if shifted {
                        dg[n] = -1.0;
                    }
                    let ng = -g;
                    grad += &dg / ng;
                    hess += &dg * dg.transpose() / (ng * ng);
                    if let Some(hz) = hz {
                        let mut view = hess.view_mut((0, 0), (n, n));
                        view += hz / ng;
                    }
                }
            }
        }
        (grad, hess)
    }

    fn nu(&self) -> f64 {
        self.program.rows.iter().map(Row::barrier_weight).sum::<f64>() + if self.phase1 { 1.0 } else { 0.0 }
    }
}

fn row_value(c: &Constraint, z: &Vector) -> Option<f64> {
    match c {
        Constraint::Linear { a, b } => Some(a.dot(z) + b),
        Constraint::Quadratic { p, q, r } => Some(z.dot(&(p * z)) + q.dot(z) + r),
        Constraint::Smooth(g) => g.value(z),
        Constraint::Soc { .. } => unreachable!("cones are handled separately"),
    }
}

fn row_derivatives(c: &Constraint, z: &Vector) -> (Vector, Option<Matrix>) {
    match c {
        Constraint::Linear { a, .. } => (a.clone(), None),
        Constraint::Quadratic { p, q, .. } => (p * z * 2.0 + q, Some(p * 2.0)),
        Constraint::Smooth(g) => (g.gradient(z), Some(g.hessian(z))),
        Constraint::Soc { .. } => unreachable!("cones are handled separately"),
    }
}

/// Solve `H d = -g` by Cholesky, adding diagonal loading if needed.
fn newton_direction(hess: &Matrix, grad: &Vector) -> Option<Vector> {
    let scale = hess.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut loading = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        if loading > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += loading;
            }
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        loading = if loading == 0.0 { 1e-14 * scale } else { loading * 100.0 };
    }
    None
}

enum CenterExit {
    Centered,
    EarlyStop,
}

/// Newton centering at fixed `t`. `stop` is checked after every step.
fn center(
    bar: &Barrier,
    x: &mut Vector,
    t: f64,
    opts: &SolveOptions,
    steps: &mut usize,
    stop: &dyn Fn(&Vector) -> bool,
) -> Result<CenterExit> {
    let mut phi = bar.value(x, t).ok_or_else(|| Error::NoConvergence("iterate left the barrier domain".into()))?;
    for _ in 0..opts.max_newton_per_center {
        let (g, h) = bar.derivatives(x, t);
        let d = newton_direction(&h, &g).ok_or_else(|| Error::NoConvergence("singular Newton system".into()))?;
        let dec = -g.dot(&d);
        if dec / 2.0 <= 1e-10 || dec <= 0.0 {
            return Ok(CenterExit::Centered);
        }
        let mut step = 1.0;
        let mut decrease = None;
        for _ in 0..60 {
            let trial = &*x + &d * step;
            if let Some(v) = bar.value(&trial, t) {
                if v <= phi - 1e-4 * step * dec {
                    *x = trial;
                    decrease = Some(phi - v);
                    phi = v;
                    break;
                }
            }
            step *= 0.5;
        }
        *steps += 1;
        // no progress possible at machine precision: treat as centered
        match decrease {
            None => return Ok(CenterExit::Centered),
            Some(dv) if dv <= STALL_TOL * phi.abs().max(1.0) => return Ok(CenterExit::Centered),
            _ => {}
        }
        if stop(x) {
            return Ok(CenterExit::EarlyStop);
        }
    }
    Ok(CenterExit::Centered)
}

fn run_barrier(
    bar: &Barrier,
    x0: Vector,
    opts: &SolveOptions,
    stop: &dyn Fn(&Vector) -> bool,
) -> Result<(Vector, usize, f64, bool)> {
    let mut x = x0;
    let mut t = opts.t0;
    let nu = bar.nu();
    let mut steps = 0;
    for _ in 0..opts.max_outer {
        if let CenterExit::EarlyStop = center(bar, &mut x, t, opts, &mut steps, stop)? {
            return Ok((x, steps, nu / t, true));
        }
        let f = bar.objective(&x).unwrap_or(f64::INFINITY);
        if nu / t <= opts.gap_tol * (1.0 + f.abs()) {
            return Ok((x, steps, nu / t, false));
        }
        t *= opts.barrier_growth;
    }
    Ok((x.clone(), steps, nu / t, false))
}

/// Result of phase I: the point with the smallest common shift of the soft rows.
#[derive(Debug, Clone)]
pub struct PhaseOne {
    pub z: Vector,
    /// Negative when `z` satisfies every soft row strictly.
    pub shift: f64,
    pub newton_steps: usize,
}

fn check_hard(program: &Program, z0: &Vector) -> Result<()> {
    for row in program.rows.iter().filter(|r| !r.soft) {
        if !(row.violation(z0) < 0.0) || !program.domain_ok(row, z0, 0.0) {
            return Err(Error::Infeasible(format!("starting point violates bound `{}`", row.label)));
        }
    }
    Ok(())
}

/// Minimize a common shift `s` of the soft rows from `z0`. Stops early once
/// `s < -phase1_margin`.
pub fn phase_one(program: &Program, z0: &Vector, opts: &SolveOptions) -> Result<PhaseOne> {
    check_hard(program, z0)?;
    let worst = program
        .rows
        .iter()
        .filter(|r| r.soft)
        .map(|r| {
            let v = r.violation(z0);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0_f64, f64::max);
    if !worst.is_finite() {
        return Err(Error::Infeasible("soft row outside its domain at the starting point".into()));
    }
    let n = program.n;
    let mut x = Vector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(z0);
    x[n] = worst.max(0.0) + 1.0;
    let f0 = program.objective.value(z0).map_or(1.0, f64::abs);
    let bar = Barrier { program, phase1: true, weight: PHASE1_WEIGHT / f0.max(1.0) };
    let margin = opts.phase1_margin;
    let p1_opts = SolveOptions { gap_tol: 1e-12, ..*opts };
    let (x, newton_steps, _, _) = run_barrier(&bar, x, &p1_opts, &|x: &Vector| x[n] < -margin)?;
    Ok(PhaseOne { z: x.rows(0, n).into_owned(), shift: x[n], newton_steps })
}

/// Minimize the program from `z0`. Hard rows must hold strictly at `z0`.
pub fn solve(program: &Program, z0: &Vector, opts: &SolveOptions) -> Result<Solution> {
    check_hard(program, z0)?;
    let mut newton_steps = 0;
    let mut used_phase1 = false;
    let start = if program.strictly_feasible(z0) && program.objective.value(z0).is_some() {
        z0.clone()
    } else {
        used_phase1 = true;
        let p1 = phase_one(program, z0, opts)?;
        newton_steps += p1.newton_steps;
        if p1.shift >= 0.0 || !program.strictly_feasible(&p1.z) {
            let label = program
                .rows
                .iter()
                .filter(|r| r.soft)
                .max_by(|a, b| a.violation(&p1.z).total_cmp(&b.violation(&p1.z)))
                .map(|r| r.label.clone())
                .unwrap_or_default();
            return Err(Error::Infeasible(format!(
                "no strictly feasible point (phase-I shift {:.3e}, tightest row `{label}`)",
                p1.shift
            )));
        }
        p1.z
    };
    let bar = Barrier { program, phase1: false, weight: 1.0 };
    let (z, steps, gap, _) = run_barrier(&bar, start, opts, &|_: &Vector| false)?;
    newton_steps += steps;
    let objective = program
        .objective
        .value(&z)
        .ok_or_else(|| Error::NoConvergence("objective undefined at solution".into()))?;
    Ok(Solution { z, objective, newton_steps, gap_bound: gap, used_phase1 })
}

/// Linear objective `cᵀz`.
pub struct LinearObjective(pub Vector);

impl Smooth for LinearObjective {
    fn value(&self, z: &Vector) -> Option<f64> {
        Some(self.0.dot(z))
    }
    fn gradient(&self, _: &Vector) -> Vector {
        self.0.clone()
    }
    fn hessian(&self, _: &Vector) -> Matrix {
        Matrix::zeros(self.0.len(), self.0.len())
    }
}
