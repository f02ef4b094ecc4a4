//! Constrained minimization of `f` over loops with `|q_i(0)| = R`.
//!
//! The endpoint constraint `c_i = |q_i(0)| - R = 0` enters through the
//! augmented merit `f - Σ λ_i c_i + μ Σ c_i²`, with `μ` driven up a schedule and
//! the multipliers updated between inner solves. Each inner solve is L-BFGS
//! preconditioned by the kinetic diagonal plus the rank-one penalty curvature,
//! with a backtracking line search that rejects any trial point whose grid
//! minimum distance falls below the guard.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEvaluator, ActionParts};
use crate::error::{Error, Result};
use crate::loop_space::{LoopPath, Part, QuadratureGrid};
use crate::model::{BodySystem, Configuration};

pub const SCHEMA_VERSION: u32 = 1;

/// Endpoint residual accepted at convergence, relative to `R`.
pub const ENDPOINT_TOL: f64 = 1e-8;

/// Solver settings for one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub radius: f64,
    /// Set from the discretization block, not serialized here.
    #[serde(skip)]
    pub harmonics: usize,
    /// Penalty weights in units of `H`.
    pub penalty_schedule: Vec<f64>,
    /// Absolute tolerance on the projected gradient; `None` means
    /// `1e-8 max(1, f(start))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    pub max_iters: usize,
    pub armijo: f64,
    pub ls_backtrack: f64,
    pub ls_max_steps: usize,
    pub min_dist_guard: f64,
    pub seed: u64,
    pub history: usize,
    /// Amplitude of the seeded higher-harmonic kick, relative to `R`.
    pub perturbation: f64,
    /// Extra cold starts with fresh seeds after a non-converged attempt.
    pub retries: usize,
    /// Multiplier updates allowed at the final penalty weight.
    pub max_outer: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            harmonics: 32,
            penalty_schedule: vec![10.0, 1e2, 1e3, 1e4, 1e6],
            grad_tol: None,
            max_iters: 20_000,
            armijo: 1e-4,
            ls_backtrack: 0.5,
            ls_max_steps: 60,
            min_dist_guard: 1e-6,
            seed: 0,
            history: 10,
            perturbation: 1e-3,
            retries: 3,
            max_outer: 200,
        }
    }
}

impl SolveConfig {
    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if self.harmonics == 0 {
            return bad("harmonics must be at least 1".into());
        }
        let s = &self.penalty_schedule;
        if s.is_empty() || s.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("penalty schedule must be a non-empty list of positive weights".into());
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return bad("penalty schedule must be strictly increasing".into());
        }
        if *s.last().unwrap() < 1e6 {
            return bad(format!(
                "final penalty weight must be at least 1e6 (in units of H), got {}",
                s.last().unwrap()
            ));
        }
        if let Some(t) = self.grad_tol {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("grad_tol must be positive, got {t}"));
            }
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad(format!("armijo must lie in (0, 1), got {}", self.armijo));
        }
        if !(self.ls_backtrack > 0.0 && self.ls_backtrack < 1.0) {
            return bad(format!("ls_backtrack must lie in (0, 1), got {}", self.ls_backtrack));
        }
        if self.ls_max_steps == 0 || self.max_iters == 0 || self.history == 0 || self.max_outer == 0 {
            return bad("ls_max_steps, max_iters, history and max_outer must be positive".into());
        }
        if !(self.min_dist_guard.is_finite() && self.min_dist_guard > 0.0) {
            return bad(format!("min_dist_guard must be positive, got {}", self.min_dist_guard));
        }
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return bad(format!("perturbation must be non-negative, got {}", self.perturbation));
        }
        Ok(())
    }
}

/// Result of a solve at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub radius: f64,
    pub harmonics: usize,
    pub grid_nodes: usize,
    /// Seed of the attempt that produced this report.
    pub seed: u64,
    pub attempts: usize,
    pub f_start: f64,
    pub f_value: f64,
    pub kinetic: f64,
    pub mean_excess: f64,
    /// `T_R = sqrt(½‖q‖² / ∫(H - V))`.
    pub period: f64,
    pub projected_grad_norm: f64,
    pub grad_tol: f64,
    pub endpoint_res: f64,
    /// `|∫(2H + (alpha-2)V) dt| / 2H`.
    pub virial_res: f64,
    pub min_dist: f64,
    /// Endpoint multipliers, one per body.
    pub multipliers: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub path: LoopPath,
}

/// One accepted iterate, passed to the observer of [`minimize_observed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateInfo {
    pub attempt: usize,
    pub stage: usize,
    pub iter: usize,
    pub f: f64,
    pub kinetic: f64,
    pub merit: f64,
    pub projected_grad_norm: f64,
    pub endpoint_res: f64,
    pub min_dist: f64,
}

/// Comparison loop `Q_i(t) = R[e1 cos 2π(t + i/N) + e2 sin 2π(t + i/N)]`,
/// `i = 1..N`, plus a seeded kick of size `perturbation·R` on the higher
/// harmonics.
pub fn initial_loop(
    sys: &BodySystem,
    radius: f64,
    harmonics: usize,
    seed: u64,
    perturbation: f64,
) -> Result<LoopPath> {
    if sys.dim() < 2 {
        return Err(Error::Domain(format!(
            "comparison loop needs two orthonormal directions, dimension is {}",
            sys.dim()
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if harmonics == 0 {
        return Err(Error::Domain("need at least one harmonic".into()));
    }
    let n = sys.n_bodies();
    let mut path = LoopPath::zeros(n, sys.dim(), harmonics);
    for i in 0..n {
        let phase = 2.0 * PI * (i + 1) as f64 / n as f64;
        let (s, c) = phase.sin_cos();
        let a = path.coeff_mut(i, 0, Part::Cos);
        a[0] = radius * c;
        a[1] = radius * s;
        let b = path.coeff_mut(i, 0, Part::Sin);
        b[0] = -radius * s;
        b[1] = radius * c;
    }
    if perturbation > 0.0 && harmonics > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = perturbation * radius;
        for i in 0..n {
            for h in 1..harmonics {
                for part in [Part::Cos, Part::Sin] {
                    for x in path.coeff_mut(i, h, part) {
                        *x = amp * rng.random_range(-1.0..=1.0);
                    }
                }
            }
        }
    }
    Ok(path)
}

/// Minimize from the comparison loop, retrying with fresh seeds if needed.
pub fn minimize(sys: &BodySystem, cfg: &SolveConfig, grid: &QuadratureGrid) -> Result<SolveReport> {
    minimize_observed(sys, cfg, grid, None, &mut |_| {})
}

/// Minimize from `start` (or the comparison loop), reporting every accepted
/// iterate to `observer`. Retries always restart from the comparison loop.
pub fn minimize_observed(
    sys: &BodySystem,
    cfg: &SolveConfig,
    grid: &QuadratureGrid,
    start: Option<&LoopPath>,
    observer: &mut dyn FnMut(&IterateInfo),
) -> Result<SolveReport> {
    cfg.validate()?;
    grid.check_harmonics(cfg.harmonics)?;
    let mut best: Option<SolveReport> = None;
    let mut last_iters = 0;
    for attempt in 0..=cfg.retries {
        let seed = cfg.seed.wrapping_add(attempt as u64);
        let path = match (attempt, start) {
            (0, Some(p)) => {
                p.check_system(sys)?;
                p.resized(cfg.harmonics)
            }
            _ => initial_loop(sys, cfg.radius, cfg.harmonics, seed, cfg.perturbation)?,
        };
        let mut solver = Solver::new(sys, grid, cfg, &path)?;
        let mut report = solver.run(path, attempt, observer)?;
        report.seed = seed;
        report.attempts = attempt + 1;
        if report.converged {
            return Ok(report);
        }
        last_iters = report.iters;
        if best
            .as_ref()
            .is_none_or(|b| report.projected_grad_norm < b.projected_grad_norm)
        {
            best = Some(report);
        }
    }
    let best = best.expect("at least one attempt");
    Err(Error::NonConvergence {
        iters: last_iters,
        grad_norm: best.projected_grad_norm,
        endpoint_res: best.endpoint_res,
        best: Box::new(best),
    })
}

/// An evaluated iterate.
struct Point {
    path: LoopPath,
    parts: ActionParts,
    grad_f: Vec<f64>,
    /// Constraint values `|q_i(0)| - R`.
    c: Vec<f64>,
    /// Unit vectors `q_i(0) / |q_i(0)|`, flat `[body][component]`.
    dirs: Vec<f64>,
    merit: f64,
    grad_merit: Vec<f64>,
    /// Magnitude of the terms summed into the merit, for the noise allowance.
    merit_scale: f64,
}

struct Solver<'a> {
    sys: &'a BodySystem,
    grid: &'a QuadratureGrid,
    cfg: &'a SolveConfig,
    ev: ActionEvaluator<'a>,
    lambda: Vec<f64>,
    mu: f64,
    iters: usize,
}

enum Step {
    Accepted(Point),
    /// No trial point passed the Armijo test although some were admissible.
    Stalled,
    /// Every trial point violated the collision guard.
    Guarded,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Solver<'a> {
    fn new(sys: &'a BodySystem, grid: &'a QuadratureGrid, cfg: &'a SolveConfig, path: &LoopPath) -> Result<Self> {
        Ok(Self {
            sys,
            grid,
            cfg,
            ev: ActionEvaluator::new(sys, grid, path)?,
            lambda: vec![0.0; sys.n_bodies()],
            mu: 0.0,
            iters: 0,
        })
    }

    fn eval(&mut self, path: LoopPath) -> Result<Point> {
        let (n, d) = (self.sys.n_bodies(), self.sys.dim());
        let mut grad_f = vec![0.0; path.coeffs().len()];
        let parts = self.ev.evaluate(&path, Some(&mut grad_f))?;
        let mut c = vec![0.0; n];
        let mut dirs = vec![0.0; n * d];
        let mut merit = parts.f;
        let mut merit_scale = parts.f.abs();
        let mut grad_merit = grad_f.clone();
        for i in 0..n {
            let p = path.start_position(i);
            let r = dot(&p, &p).sqrt();
            c[i] = r - self.cfg.radius;
            if r > 0.0 {
                for (u, x) in dirs[i * d..(i + 1) * d].iter_mut().zip(&p) {
                    *u = x / r;
                }
            }
            let lin = -self.lambda[i] * c[i];
            let quad = self.mu * c[i] * c[i];
            merit += lin + quad;
            merit_scale += lin.abs() + quad;
            let coef = -self.lambda[i] + 2.0 * self.mu * c[i];
            for h in 0..path.harmonics() {
                let o = path.offset(i, h, Part::Cos);
                for k in 0..d {
                    grad_merit[o + k] += coef * dirs[i * d + k];
                }
            }
        }
        Ok(Point {
            path,
            parts,
            grad_f,
            c,
            dirs,
            merit,
            grad_merit,
            merit_scale,
        })
    }

    /// Gradient of `f` with the endpoint normals projected out.
    fn projected_grad(&self, pt: &Point) -> Vec<f64> {
        let d = self.sys.dim();
        let kk = pt.path.harmonics();
        let mut g = pt.grad_f.clone();
        for i in 0..self.sys.n_bodies() {
            let u = &pt.dirs[i * d..(i + 1) * d];
            let mut along = 0.0;
            for h in 0..kk {
                let o = pt.path.offset(i, h, Part::Cos);
                along += dot(&g[o..o + d], u);
            }
            let norm2 = kk as f64 * dot(u, u);
            if norm2 == 0.0 {
                continue;
            }
            let s = along / norm2;
            for h in 0..kk {
                let o = pt.path.offset(i, h, Part::Cos);
                for k in 0..d {
                    g[o + k] -= s * u[k];
                }
            }
        }
        g
    }

    fn endpoint_res(pt: &Point) -> f64 {
        pt.c.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Apply the inverse of `diag(½E m_i ω_k²) + 2μ Σ_i n_i n_iᵀ`.
    fn precondition(&self, pt: &Point, v: &[f64]) -> Vec<f64> {
        let (n, d) = (self.sys.n_bodies(), self.sys.dim());
        let kk = pt.path.harmonics();
        let e = pt.parts.mean_excess;
        let mut out = vec![0.0; v.len()];
        for i in 0..n {
            let m = self.sys.masses()[i];
            let u = &pt.dirs[i * d..(i + 1) * d];
            let mut vz = 0.0;
            let mut vw = 0.0;
            for h in 0..kk {
                let w = 2.0 * PI * LoopPath::order(h) as f64;
                let diag = 0.5 * e * m * w * w;
                for part in [Part::Cos, Part::Sin] {
                    let o = pt.path.offset(i, h, part);
                    for k in 0..d {
                        out[o + k] = v[o + k] / diag;
                    }
                }
                let o = pt.path.offset(i, h, Part::Cos);
                vz += dot(&out[o..o + d], u);
                vw += dot(u, u) / diag;
            }
            let sigma = 2.0 * self.mu;
            let s = sigma * vz / (1.0 + sigma * vw);
            for h in 0..kk {
                let w = 2.0 * PI * LoopPath::order(h) as f64;
                let diag = 0.5 * e * m * w * w;
                let o = pt.path.offset(i, h, Part::Cos);
                for k in 0..d {
                    out[o + k] -= s * u[k] / diag;
                }
            }
        }
        out
    }

    fn direction(&self, pt: &Point, memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
        let mut q = pt.grad_merit.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let mut r = self.precondition(pt, &q);
        if let Some((s, y, _)) = memory.back() {
            let py = self.precondition(pt, y);
            let gamma = dot(s, y) / dot(y, &py);
            if gamma.is_finite() && gamma > 0.0 {
                r.iter_mut().for_each(|x| *x *= gamma);
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
        }
        r.iter_mut().for_each(|x| *x = -*x);
        r
    }

    fn line_search(&mut self, pt: &Point, dir: &[f64]) -> Result<Step> {
        let slope = dot(&pt.grad_merit, dir);
        let noise = 16.0 * f64::EPSILON * pt.merit_scale;
        let mut step = 1.0;
        let mut admissible = false;
        for _ in 0..self.cfg.ls_max_steps {
            let mut trial = pt.path.clone();
            trial
                .coeffs_mut()
                .iter_mut()
                .zip(dir)
                .for_each(|(x, d)| *x += step * d);
            match self.eval(trial) {
                Ok(t) if t.parts.min_dist >= self.cfg.min_dist_guard => {
                    admissible = true;
                    if t.merit <= pt.merit + self.cfg.armijo * step * slope + noise {
                        return Ok(Step::Accepted(t));
                    }
                }
                Ok(_) | Err(Error::Collision { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= self.cfg.ls_backtrack;
        }
        Ok(if admissible { Step::Stalled } else { Step::Guarded })
    }

    /// L-BFGS on the merit at fixed `(λ, μ)` until its gradient is below `tol`.
    fn inner(
        &mut self,
        mut pt: Point,
        tol: f64,
        attempt: usize,
        stage: usize,
        observer: &mut dyn FnMut(&IterateInfo),
    ) -> Result<Point> {
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        while self.iters < self.cfg.max_iters {
            if dot(&pt.grad_merit, &pt.grad_merit).sqrt() <= tol {
                break;
            }
            let mut dir = self.direction(&pt, &memory);
            if dot(&dir, &pt.grad_merit) >= 0.0 {
                memory.clear();
                dir = self.direction(&pt, &memory);
            }
            let next = match self.line_search(&pt, &dir)? {
                Step::Accepted(t) => t,
                Step::Stalled | Step::Guarded if !memory.is_empty() => {
                    memory.clear();
                    continue;
                }
                Step::Stalled => break,
                Step::Guarded => {
                    return Err(Error::CollisionGuardTripped {
                        iters: self.iters,
                        guard: self.cfg.min_dist_guard,
                    })
                }
            };
            self.iters += 1;
            let s: Vec<f64> = next
                .path
                .coeffs()
                .iter()
                .zip(pt.path.coeffs())
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = next
                .grad_merit
                .iter()
                .zip(&pt.grad_merit)
                .map(|(a, b)| a - b)
                .collect();
            let sy = dot(&s, &y);
            if sy > f64::EPSILON * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if memory.len() == self.cfg.history {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }
            pt = next;
            observer(&IterateInfo {
                attempt,
                stage,
                iter: self.iters,
                f: pt.parts.f,
                kinetic: pt.parts.kinetic,
                merit: pt.merit,
                projected_grad_norm: norm(&self.projected_grad(&pt)),
                endpoint_res: Self::endpoint_res(&pt),
                min_dist: pt.parts.min_dist,
            });
        }
        Ok(pt)
    }

    fn run(
        &mut self,
        path: LoopPath,
        attempt: usize,
        observer: &mut dyn FnMut(&IterateInfo),
    ) -> Result<SolveReport> {
        let h = self.sys.energy();
        let radius = self.cfg.radius;
        let mut pt = self.eval(path)?;
        if pt.parts.min_dist < self.cfg.min_dist_guard {
            return Err(Error::CollisionGuardTripped {
                iters: 0,
                guard: self.cfg.min_dist_guard,
            });
        }
        let f_start = pt.parts.f;
        let grad_tol = self.cfg.grad_tol.unwrap_or(1e-8 * f_start.max(1.0));
        let stages = self.cfg.penalty_schedule.len();
        let mut converged = false;
        'stages: for (stage, weight) in self.cfg.penalty_schedule.clone().into_iter().enumerate() {
            let last = stage + 1 == stages;
            self.mu = weight * h;
            pt = self.eval(pt.path)?;
            let tol = if last { grad_tol } else { 1e2 * grad_tol };
            let rounds = if last { self.cfg.max_outer } else { 1 };
            for _ in 0..rounds {
                pt = self.inner(pt, tol, attempt, stage, observer)?;
                for (l, c) in self.lambda.iter_mut().zip(&pt.c) {
                    *l -= 2.0 * self.mu * c;
                }
                pt = self.eval(pt.path)?;
                if last {
                    converged = norm(&self.projected_grad(&pt)) <= grad_tol
                        && Self::endpoint_res(&pt) <= ENDPOINT_TOL * radius
                        && pt.parts.min_dist >= self.cfg.min_dist_guard;
                    if converged {
                        break 'stages;
                    }
                }
                if self.iters >= self.cfg.max_iters {
                    break 'stages;
                }
            }
        }
        // Multipliers of the Lagrangian f - Σ λ_i c_i at the final point.
        let multipliers = self
            .lambda
            .iter()
            .zip(&pt.c)
            .map(|(l, c)| l - 2.0 * self.mu * c)
            .collect();
        let virial = 2.0 * h + (self.sys.alpha() - 2.0) * pt.parts.mean_potential;
        Ok(SolveReport {
            schema_version: SCHEMA_VERSION,
            radius,
            harmonics: pt.path.harmonics(),
            grid_nodes: self.grid.nodes(),
            seed: self.cfg.seed,
            attempts: 1,
            f_start,
            f_value: pt.parts.f,
            kinetic: pt.parts.kinetic,
            mean_excess: pt.parts.mean_excess,
            period: (0.5 * pt.parts.kinetic / pt.parts.mean_excess).sqrt(),
            projected_grad_norm: norm(&self.projected_grad(&pt)),
            grad_tol,
            endpoint_res: Self::endpoint_res(&pt),
            virial_res: virial.abs() / (2.0 * h),
            min_dist: pt.parts.min_dist,
            multipliers,
            iters: self.iters,
            converged,
            path: pt.path,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// A period-1 loop with every Fourier order `0..=M`, constant term included.
///
/// This is the unconstrained space in which antiperiodic loops sit as the
/// fixed points of `q(t) -> -q(t + 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLoop {
    n_bodies: usize,
    dim: usize,
    max_order: usize,
    coeffs: Vec<f64>,
}

impl FourierLoop {
    /// Embed an odd-harmonic loop; even orders and the constant start at zero.
    pub fn embed(path: &LoopPath) -> Self {
        let max_order = LoopPath::order(path.harmonics() - 1);
        let mut out = Self {
            n_bodies: path.n_bodies(),
            dim: path.dim(),
            max_order,
            coeffs: vec![0.0; path.n_bodies() * (max_order + 1) * 2 * path.dim()],
        };
        for i in 0..path.n_bodies() {
            for h in 0..path.harmonics() {
                for part in [Part::Cos, Part::Sin] {
                    out.coeff_mut(i, LoopPath::order(h), part)
                        .copy_from_slice(path.coeff(i, h, part));
                }
            }
        }
        out
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn offset(&self, body: usize, order: usize, part: Part) -> usize {
        ((body * (self.max_order + 1) + order) * 2 + part as usize) * self.dim
    }

    pub fn coeff(&self, body: usize, order: usize, part: Part) -> &[f64] {
        let o = self.offset(body, order, part);
        &self.coeffs[o..o + self.dim]
    }

    pub fn coeff_mut(&mut self, body: usize, order: usize, part: Part) -> &mut [f64] {
        let o = self.offset(body, order, part);
        &mut self.coeffs[o..o + self.dim]
    }

    pub fn evaluate(&self, t: f64) -> Configuration {
        let s = t.rem_euclid(1.0);
        let mut out = Configuration::zeros(self.n_bodies, self.dim);
        for k in 0..=self.max_order {
            let (sn, cs) = (2.0 * PI * k as f64 * s).sin_cos();
            for i in 0..self.n_bodies {
                let a = self.coeff(i, k, Part::Cos);
                let b = self.coeff(i, k, Part::Sin);
                for (c, x) in out.body_mut(i).iter_mut().enumerate() {
                    *x += a[c] * cs + b[c] * sn;
                }
            }
        }
        out
    }

    /// `f` and its gradient over all coefficients, on `grid`.
    pub fn action_and_gradient(&self, sys: &BodySystem, grid: &QuadratureGrid) -> Result<(f64, Vec<f64>)> {
        let (n, d) = (self.n_bodies, self.dim);
        if n != sys.n_bodies() || d != sys.dim() {
            return Err(Error::Validation("loop shape does not match system".into()));
        }
        grid.check_harmonics(self.max_order.div_ceil(2))?;
        let stride = n * d;
        let nodes = grid.nodes();
        let mut x = vec![0.0; nodes * stride];
        for k in 0..=self.max_order {
            for m in 0..nodes {
                let (cs, sn) = grid.trig(k, m);
                let row = &mut x[m * stride..(m + 1) * stride];
                for i in 0..n {
                    let a = self.coeff(i, k, Part::Cos);
                    let b = self.coeff(i, k, Part::Sin);
                    for c in 0..d {
                        row[i * d + c] += a[c] * cs + b[c] * sn;
                    }
                }
            }
        }
        let mut gv = vec![0.0; nodes * stride];
        let mut sum_v = 0.0;
        for m in 0..nodes {
            sum_v += sys.potential_and_gradient_flat(
                &x[m * stride..(m + 1) * stride],
                &mut gv[m * stride..(m + 1) * stride],
            )?;
        }
        let w = grid.weight();
        let excess = sys.energy() - sum_v * w;
        let mut kinetic = 0.0;
        for i in 0..n {
            for k in 1..=self.max_order {
                let om = 2.0 * PI * k as f64;
                let amp = dot(self.coeff(i, k, Part::Cos), self.coeff(i, k, Part::Cos))
                    + dot(self.coeff(i, k, Part::Sin), self.coeff(i, k, Part::Sin));
                kinetic += sys.masses()[i] * om * om * amp / 2.0;
            }
        }
        let mut grad = vec![0.0; self.coeffs.len()];
        for k in 0..=self.max_order {
            let om = 2.0 * PI * k as f64;
            let mut proj = vec![0.0; 2 * stride];
            for m in 0..nodes {
                let (cs, sn) = grid.trig(k, m);
                for (s, g) in gv[m * stride..(m + 1) * stride].iter().enumerate() {
                    proj[s] += g * cs;
                    proj[stride + s] += g * sn;
                }
            }
            for i in 0..n {
                let stiff = sys.masses()[i] * om * om;
                for (p, part) in [Part::Cos, Part::Sin].into_iter().enumerate() {
                    let o = self.offset(i, k, part);
                    for c in 0..d {
                        grad[o + c] = 0.5 * excess * stiff * self.coeffs[o + c]
                            - 0.5 * kinetic * proj[p * stride + i * d + c] * w;
                    }
                }
            }
        }
        Ok((0.5 * kinetic * excess, grad))
    }

    pub fn action(&self, sys: &BodySystem, grid: &QuadratureGrid) -> Result<f64> {
        Ok(self.action_and_gradient(sys, grid)?.0)
    }

    /// Full gradient with the endpoint normals `∂|q_i(0)|` projected out.
    pub fn projected_gradient_norm(&self, sys: &BodySystem, grid: &QuadratureGrid) -> Result<f64> {
        let (_, mut g) = self.action_and_gradient(sys, grid)?;
        let d = self.dim;
        for i in 0..self.n_bodies {
            let mut p = vec![0.0; d];
            for k in 0..=self.max_order {
                p.iter_mut()
                    .zip(self.coeff(i, k, Part::Cos))
                    .for_each(|(x, a)| *x += a);
            }
            let r = norm(&p);
            if r == 0.0 {
                continue;
            }
            let u: Vec<f64> = p.iter().map(|x| x / r).collect();
            let mut along = 0.0;
            for k in 0..=self.max_order {
                let o = self.offset(i, k, Part::Cos);
                along += dot(&g[o..o + d], &u);
            }
            let s = along / (self.max_order + 1) as f64;
            for k in 0..=self.max_order {
                let o = self.offset(i, k, Part::Cos);
                for c in 0..d {
                    g[o + c] -= s * u[c];
                }
            }
        }
        Ok(norm(&g))
    }
}

/// Norm of the full-space gradient of `f` at `path`, endpoint directions
/// removed. Small values witness that the antiperiodic critical point is
/// critical among all period-1 loops.
pub fn symmetric_criticality_check(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<f64> {
    FourierLoop::embed(path).projected_gradient_norm(sys, grid)
}
