//! Continuation in the endpoint radius `R`.
//!
//! For each radius the constrained minimizer is rescaled to a trajectory on
//! `(-T_R/2, T_R/2)`; the crossing set `S` of the radii `d1·R` and `R/d2`
//! gives `t₋ = inf S`, `t₊ = sup S` and the shift `t* = (t₋ + t₊)/2`. Growing
//! margins `T_R/2 - t₊` and `t₋ + T_R/2` are the finite-R signature of an
//! escaping orbit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::{LoopPath, QuadratureGrid};
use crate::minimizer::{minimize_observed, SolveConfig, SolveReport};
use crate::model::BodySystem;
use crate::rescale::{energy_residuals, eom_residual, rescale, Trajectory};

pub const CLASS_HYPERBOLIC: &str = "hyperbolic-approximant";
pub const CLASS_WITHHELD: &str = "withheld";

/// Largest allowed ratio of converged minimum distances across a sweep.
pub const BAND_RATIO: f64 = 1e3;

/// Radii to visit and the two crossing levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub radii: Vec<f64>,
    pub d1: f64,
    pub d2: f64,
}

impl ContinuationSchedule {
    pub fn new(radii: Vec<f64>, d1: f64, d2: f64) -> Result<Self> {
        let s = Self { radii, d1, d2 };
        s.validate()?;
        Ok(s)
    }

    /// `count` radii `start·ratio^k` with the default levels `d1 = 1.1`, `d2 = 1.25`.
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Result<Self> {
        let radii = (0..count).map(|k| start * ratio.powi(k as i32)).collect();
        Self::new(radii, 1.1, 1.25)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::Validation("continuation schedule has no radii".into()));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Validation("schedule radii must be positive".into()));
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("schedule radii must be strictly increasing".into()));
        }
        if !(self.d1 > 1.0 && self.d2 > 1.0 && 1.0 - 1.0 / self.d2 > self.d1 - 1.0) {
            return Err(Error::Validation(format!(
                "crossing levels need 1 - 1/d2 > d1 - 1 > 0, got d1 = {}, d2 = {}",
                self.d1, self.d2
            )));
        }
        Ok(())
    }
}

/// Escape diagnostics at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub radius: f64,
    pub period: f64,
    /// `None` when the crossing set is empty.
    pub t_minus: Option<f64>,
    pub t_plus: Option<f64>,
    /// `T_R/2 - t₊`.
    pub margin_plus: Option<f64>,
    /// `t₋ + T_R/2`.
    pub margin_minus: Option<f64>,
    pub t_star: Option<f64>,
    pub s_empty: bool,
    /// Mean of `sqrt(Σ m_i|u̇_i|² / max m)` outside `[t₋, t₊]`.
    pub escape_speed: f64,
    pub min_dist: f64,
    pub f_value: f64,
    pub virial_res: f64,
    pub eom_residual: f64,
    pub energy_residual: f64,
    pub report_ref: String,
}

/// `(t₋, t₊)`: extreme times at which some body's radius equals `d1·R` or `R/d2`.
///
/// Crossings are bracketed on the samples (the end of the period closes the
/// loop back to the first sample) and refined by bisection on the exact loop
/// to `1e-10·T`, or linearly for raw samples.
pub fn crossing_times(traj: &Trajectory, radius: f64, d1: f64, d2: f64) -> Result<(f64, f64)> {
    let n = traj.len();
    let t_end = traj.time(0) + traj.period();
    let time = |j: usize| if j == n { t_end } else { traj.time(j) };
    let levels = [d1 * radius, radius / d2];
    let d = traj.system().dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..traj.system().n_bodies() {
        let radius_at = |t: f64| -> f64 {
            let x = traj.position_at(t).expect("loop-backed trajectory");
            x[i * d..(i + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let sampled = |j: usize| traj.radius(j % n, i);
        for level in levels {
            for j in 0..n {
                let (fa, fb) = (sampled(j) - level, sampled(j + 1) - level);
                let (ta, tb) = (time(j), time(j + 1));
                let hit = if fa == 0.0 {
                    Some(ta)
                } else if fa * fb < 0.0 {
                    Some(if traj.path().is_some() {
                        let (mut a, mut b, mut ga) = (ta, tb, fa);
                        while b - a > 1e-10 * traj.period() {
                            let m = 0.5 * (a + b);
                            let gm = radius_at(m) - level;
                            if gm == 0.0 {
                                a = m;
                                b = m;
                            } else if (gm < 0.0) == (ga < 0.0) {
                                a = m;
                                ga = gm;
                            } else {
                                b = m;
                            }
                        }
                        0.5 * (a + b)
                    } else {
                        ta + (tb - ta) * fa / (fa - fb)
                    })
                } else {
                    None
                };
                if let Some(t) = hit {
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
            }
        }
    }
    if lo.is_finite() {
        Ok((lo, hi))
    } else {
        Err(Error::SEmpty {
            outer: levels[0],
            inner: levels[1],
        })
    }
}

/// `u*(t) = u(t - t*)`.
pub fn time_shift(traj: &Trajectory, t_star: f64) -> Trajectory {
    traj.shifted(t_star)
}

fn mass_speed(traj: &Trajectory, j: usize) -> f64 {
    let sys = traj.system();
    let d = sys.dim();
    let v = traj.velocity(j);
    let mmax = sys.masses().iter().cloned().fold(0.0, f64::max);
    let k: f64 = sys
        .masses()
        .iter()
        .enumerate()
        .map(|(i, m)| m * v[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>())
        .sum();
    (k / mmax).sqrt()
}

/// Build the record for a solved radius from its trajectory.
pub fn make_record(
    report: &SolveReport,
    traj: &Trajectory,
    d1: f64,
    d2: f64,
    report_ref: String,
) -> Result<ContinuationRecord> {
    let half = 0.5 * traj.period();
    let center = traj.shift();
    let crossing = match crossing_times(traj, report.radius, d1, d2) {
        Ok(c) => Some(c),
        Err(Error::SEmpty { .. }) => None,
        Err(e) => return Err(e),
    };
    let outside = |t: f64| match crossing {
        Some((a, b)) => t < a || t > b,
        None => (t - center).abs() >= half * 2.0 / 3.0,
    };
    let speeds: Vec<f64> = (0..traj.len())
        .filter(|&j| outside(traj.time(j)))
        .map(|j| mass_speed(traj, j))
        .collect();
    let escape_speed = if speeds.is_empty() {
        0.0
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    };
    Ok(ContinuationRecord {
        radius: report.radius,
        period: traj.period(),
        t_minus: crossing.map(|c| c.0),
        t_plus: crossing.map(|c| c.1),
        margin_plus: crossing.map(|c| center + half - c.1),
        margin_minus: crossing.map(|c| c.0 - (center - half)),
        t_star: crossing.map(|c| 0.5 * (c.0 + c.1)),
        s_empty: crossing.is_none(),
        escape_speed,
        min_dist: report.min_dist,
        f_value: report.f_value,
        virial_res: report.virial_res,
        eom_residual: eom_residual(traj)?,
        energy_residual: energy_residuals(traj)?.physical,
        report_ref,
    })
}

/// Count of strict decreases in `v`.
fn decreases(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] < w[0]).count()
}

/// Margins over the upper half of the records, in schedule order.
fn upper_half_margins(records: &[ContinuationRecord]) -> Option<(Vec<f64>, Vec<f64>)> {
    let upper = &records[records.len() / 2..];
    let plus: Option<Vec<f64>> = upper.iter().map(|r| r.margin_plus).collect();
    let minus: Option<Vec<f64>> = upper.iter().map(|r| r.margin_minus).collect();
    Some((plus?, minus?))
}

/// Post-hoc checks over a finished sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendChecks {
    /// Decreases of `T_R/2 - t₊` over the upper half of the schedule.
    pub violations_plus: Option<usize>,
    pub violations_minus: Option<usize>,
    pub margins_nondecreasing: bool,
    /// Largest over smallest converged minimum distance.
    pub band_ratio: f64,
    pub band_ok: bool,
    /// `((alpha-2) Σ_{i≠j} m_i m_j / 4H)^{1/alpha} · 1.1^{1/alpha}`.
    pub upper_bound: f64,
    pub upper_ok: bool,
}

/// Upper bound on the converged minimum distance.
pub fn min_dist_upper_bound(sys: &BodySystem) -> f64 {
    let a = sys.alpha();
    ((a - 2.0) * sys.ordered_pair_mass_sum() / (4.0 * sys.energy()) * 1.1).powf(1.0 / a)
}

pub fn trend_checks(sys: &BodySystem, records: &[ContinuationRecord]) -> TrendChecks {
    let (vp, vm) = match upper_half_margins(records) {
        Some((p, m)) if !records.is_empty() => (Some(decreases(&p)), Some(decreases(&m))),
        _ => (None, None),
    };
    let dmin = records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let dmax = records.iter().map(|r| r.min_dist).fold(0.0, f64::max);
    let band_ratio = dmax / dmin;
    let upper_bound = min_dist_upper_bound(sys);
    TrendChecks {
        violations_plus: vp,
        violations_minus: vm,
        margins_nondecreasing: matches!((vp, vm), (Some(a), Some(b)) if a <= 1 && b <= 1),
        band_ratio,
        band_ok: band_ratio.is_finite() && band_ratio <= BAND_RATIO,
        upper_bound,
        upper_ok: !records.is_empty() && dmax <= upper_bound,
    }
}

/// Sub-scores and verdict of [`classify_hyperbolic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: String,
    /// (a) margins nondecreasing over the upper half and larger at the end.
    pub margins_pass: bool,
    pub margin_growth: Option<f64>,
    /// (b) median of `|d|u|/dt|` on the outer thirds `|t - t*| ≥ T/6`.
    pub speed_pass: bool,
    pub observed_speed: f64,
    /// `sqrt(2H / M_eff)`.
    pub expected_speed: f64,
    pub effective_mass: f64,
    pub speed_rel_err: f64,
    /// (c) smallest `|u|` on the central third, against `1e-3 max|u|`.
    pub central_pass: bool,
    pub central_min_radius: f64,
    pub central_threshold: f64,
}

pub const SPEED_TOLERANCE: f64 = 0.2;

/// Decide whether the sweep looks like the approach to a hyperbolic orbit.
///
/// The outer thirds hold both legs of a flyby, so the slope of `|u|` against
/// `|t - t*|` is taken pointwise as `|d|u|/dt|` and summarized by its median,
/// which ignores the slow samples near periapsis and the endpoints.
///
/// `M_eff = 1 / Σ_i (p_i / m_i)`, where `p_i` is body `i`'s mean share of the
/// kinetic energy on the outer thirds; if all of `2H` is kinetic and the motion
/// radial, `d|u|/dt → sqrt(2H / M_eff)`.
pub fn classify_hyperbolic(records: &[ContinuationRecord], traj: &Trajectory) -> Result<Classification> {
    if records.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: records.len(),
        });
    }
    let (margins_pass, margin_growth) = match upper_half_margins(records) {
        Some((p, m)) => {
            let growth = (p[p.len() - 1] - p[0]).min(m[m.len() - 1] - m[0]);
            (decreases(&p) <= 1 && decreases(&m) <= 1 && growth > 0.0, Some(growth))
        }
        None => (false, None),
    };

    let sys = traj.system();
    let d = sys.dim();
    let n = sys.n_bodies();
    let center = traj.shift();
    let third = traj.period() / 6.0;
    let norm_u = |j: usize| traj.position(j).iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut slopes = Vec::new();
    let mut share = vec![0.0; n];
    let mut central_min = f64::INFINITY;
    let mut max_u: f64 = 0.0;
    for j in 0..traj.len() {
        let tau = (traj.time(j) - center).abs();
        let r = norm_u(j);
        max_u = max_u.max(r);
        if tau < third {
            central_min = central_min.min(r);
            continue;
        }
        let v = traj.velocity(j);
        if r > 0.0 {
            let radial: f64 = traj.position(j).iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / r;
            slopes.push(radial.abs());
        }
        let ke: Vec<f64> = (0..n)
            .map(|i| sys.masses()[i] * v[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>())
            .collect();
        let total: f64 = ke.iter().sum();
        if total > 0.0 {
            share.iter_mut().zip(&ke).for_each(|(s, k)| *s += k / total);
        }
    }
    let count = slopes.len() as f64;
    slopes.sort_by(f64::total_cmp);
    let observed_speed = slopes.get(slopes.len() / 2).copied().unwrap_or(0.0);
    let inv: f64 = share
        .iter()
        .zip(sys.masses())
        .map(|(p, m)| p / count.max(1.0) / m)
        .sum();
    let effective_mass = if inv > 0.0 { 1.0 / inv } else { f64::INFINITY };
    let expected_speed = (2.0 * sys.energy() / effective_mass).sqrt();
    let speed_rel_err = (observed_speed - expected_speed).abs() / expected_speed;
    let speed_pass = speed_rel_err <= SPEED_TOLERANCE;
    let central_threshold = 1e-3 * max_u;
    let central_pass = central_min.is_finite() && central_min >= central_threshold;
    let all = margins_pass && speed_pass && central_pass;
    Ok(Classification {
        label: if all { CLASS_HYPERBOLIC } else { CLASS_WITHHELD }.to_string(),
        margins_pass,
        margin_growth,
        speed_pass,
        observed_speed,
        expected_speed,
        effective_mass,
        speed_rel_err,
        central_pass,
        central_min_radius: central_min,
        central_threshold,
    })
}

/// Outcome at one radius.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub radius: f64,
    /// The converged report, or the best iterate of a failed solve.
    pub report: Option<SolveReport>,
    pub record: Option<ContinuationRecord>,
    /// Rescaled and shifted by `t*`.
    pub trajectory: Option<Trajectory>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub trends: TrendChecks,
    pub classification: Option<Classification>,
    pub classification_error: Option<String>,
}

impl SweepResult {
    pub fn records(&self) -> Vec<ContinuationRecord> {
        self.entries.iter().filter_map(|e| e.record.clone()).collect()
    }

    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| e.record.is_none()).count()
    }

    /// `SweepFailed` when more than half of the radii produced no record.
    pub fn status(&self) -> Result<()> {
        let (failed, total) = (self.failed(), self.entries.len());
        if 2 * failed > total {
            return Err(Error::SweepFailed { failed, total });
        }
        Ok(())
    }
}

/// How a sweep visits its radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Sequential; each solve starts from the previous minimizer scaled by
    /// `R_{k+1} / R_k`.
    Warm,
    /// Independent solves from the comparison loop on up to `threads` workers.
    Cold { threads: usize },
}

fn solve_one(
    sys: &BodySystem,
    cfg: &SolveConfig,
    grid: &QuadratureGrid,
    sched: &ContinuationSchedule,
    index: usize,
    start: Option<&LoopPath>,
) -> SweepEntry {
    let radius = cfg.radius;
    let mut entry = SweepEntry {
        radius,
        report: None,
        record: None,
        trajectory: None,
        error: None,
    };
    let report = match minimize_observed(sys, cfg, grid, start, &mut |_| {}) {
        Ok(r) => r,
        Err(Error::NonConvergence { best, .. }) => {
            entry.error = Some(format!(
                "minimizer did not converge (projected gradient {:e}, endpoint residual {:e})",
                best.projected_grad_norm, best.endpoint_res
            ));
            entry.report = Some(*best);
            return entry;
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            return entry;
        }
    };
    let built = rescale(sys, &report.path, report.period, grid.nodes()).and_then(|traj| {
        let rec = make_record(&report, &traj, sched.d1, sched.d2, format!("R{index:02}"))?;
        let shifted = time_shift(&traj, rec.t_star.unwrap_or(0.0));
        Ok((rec, shifted))
    });
    match built {
        Ok((rec, traj)) => {
            entry.record = Some(rec);
            entry.trajectory = Some(traj);
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry.report = Some(report);
    entry
}

/// Solve every radius, keeping failures as entries.
pub fn sweep(
    sys: &BodySystem,
    sched: &ContinuationSchedule,
    template: &SolveConfig,
    grid: &QuadratureGrid,
    mode: SweepMode,
) -> Result<SweepResult> {
    sched.validate()?;
    template.validate()?;
    let entries = match mode {
        SweepMode::Warm => {
            let mut out: Vec<SweepEntry> = Vec::with_capacity(sched.radii.len());
            let mut prev: Option<(f64, LoopPath)> = None;
            for (k, &r) in sched.radii.iter().enumerate() {
                let start = prev.as_ref().map(|(r0, p)| p.scaled(r / r0));
                let e = solve_one(sys, &template.with_radius(r), grid, sched, k, start.as_ref());
                if let Some(rep) = &e.report {
                    prev = Some((r, rep.path.clone()));
                }
                out.push(e);
            }
            out
        }
        SweepMode::Cold { threads } => {
            let threads = threads.max(1);
            let mut slots: Vec<Option<SweepEntry>> = vec![None; sched.radii.len()];
            for (chunk_idx, chunk) in slots.chunks_mut(threads).enumerate() {
                std::thread::scope(|s| {
                    for (off, slot) in chunk.iter_mut().enumerate() {
                        let k = chunk_idx * threads + off;
                        let cfg = template.with_radius(sched.radii[k]);
                        s.spawn(move || {
                            *slot = Some(solve_one(sys, &cfg, grid, sched, k, None));
                        });
                    }
                });
            }
            slots.into_iter().map(|e| e.expect("every slot filled")).collect()
        }
    };
    let records: Vec<ContinuationRecord> = entries.iter().filter_map(|e| e.record.clone()).collect();
    let trends = trend_checks(sys, &records);
    let last_traj = entries.iter().rev().find_map(|e| e.trajectory.as_ref());
    let (classification, classification_error) = match last_traj {
        None => (None, Some("no trajectory available".to_string())),
        Some(t) => match classify_hyperbolic(&records, t) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    Ok(SweepResult {
        entries,
        trends,
        classification,
        classification_error,
    })
}

/// Warm-started sweep; `SweepFailed` if more than half of the radii fail.
pub fn run_sweep(
    sys: &BodySystem,
    sched: &ContinuationSchedule,
    template: &SolveConfig,
    grid: &QuadratureGrid,
) -> Result<SweepResult> {
    let result = sweep(sys, sched, template, grid, SweepMode::Warm)?;
    result.status()?;
    Ok(result)
}
