//! Trajectory CSV files and the JSON documents written for each run.
//!
//! The CSV header is `t,body,x1..xd,v1..vd` with one row per (time, body),
//! time-major. Every JSON document carries `schema_version`; wall-clock data
//! lives only under `metadata` so numeric content is reproducible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{directional_identity_parts, DirectionalIdentity};
use crate::continuation::{
    min_dist_upper_bound, Classification, ContinuationRecord, ContinuationSchedule, SweepResult,
    TrendChecks,
};
use crate::error::{Error, Result};
use crate::loop_space::QuadratureGrid;
use crate::minimizer::{symmetric_criticality_check, SolveConfig, SolveReport, SCHEMA_VERSION};
use crate::model::BodySystem;
use crate::rescale::{
    energy_residuals, eom_residual, rescale, symplectic_crosscheck, CrossCheck, EnergyResiduals,
    Trajectory,
};

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let sys = traj.system();
    let (n, d) = (sys.n_bodies(), sys.dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "body".to_string()];
    header.extend((1..=d).map(|c| format!("x{c}")));
    header.extend((1..=d).map(|c| format!("v{c}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(2 + 2 * d);
    for j in 0..traj.len() {
        let (x, v) = (traj.position(j), traj.velocity(j));
        for i in 0..n {
            row.clear();
            row.push(traj.time(j).to_string());
            row.push(i.to_string());
            row.extend(x[i * d..(i + 1) * d].iter().map(|a| a.to_string()));
            row.extend(v[i * d..(i + 1) * d].iter().map(|a| a.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_trajectory_csv(traj, BufWriter::new(File::create(path)?))
}

pub fn read_trajectory_csv<R: Read>(sys: &BodySystem, input: R) -> Result<Trajectory> {
    let bad = |msg: String| Error::MalformedTrajectory(msg);
    let (n, d) = (sys.n_bodies(), sys.dim());
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 || header.get(0) != Some("t") || header.get(1) != Some("body") {
        return Err(bad("header must start with t,body".into()));
    }
    if header.len() != 2 + 2 * d {
        return Err(bad(format!(
            "header has {} columns, dimension {d} needs {}",
            header.len(),
            2 + 2 * d
        )));
    }
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let mut rows = 0usize;
    for rec in r.records() {
        let rec = rec?;
        let line = rows + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("line {line}: column {} is not a number", k + 1)))
        };
        let t = num(0)?;
        let body: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {line}: body index is not an integer")))?;
        if body != rows % n {
            return Err(bad(format!(
                "line {line}: expected body {}, found {body}",
                rows % n
            )));
        }
        if body == 0 {
            times.push(t);
        } else if t != *times.last().unwrap() {
            return Err(bad(format!("line {line}: time differs within one sample")));
        }
        for k in 0..d {
            positions.push(num(2 + k)?);
        }
        for k in 0..d {
            velocities.push(num(2 + d + k)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(bad("no data rows".into()));
    }
    if !rows.is_multiple_of(n) {
        return Err(bad(format!("{rows} rows is not a multiple of {n} bodies")));
    }
    Trajectory::from_samples(sys.clone(), times, positions, velocities)
}

pub fn load_trajectory_csv(sys: &BodySystem, path: &Path) -> Result<Trajectory> {
    read_trajectory_csv(sys, BufReader::new(File::open(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Non-reproducible facts about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix_secs: u64,
    pub tool_version: String,
}

impl Metadata {
    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            created_unix_secs: secs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Checks run on a finished solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub radius: f64,
    pub period: f64,
    pub eom_residual: f64,
    pub energy: EnergyResiduals,
    pub crosscheck: Option<CrossCheck>,
    pub crosscheck_error: Option<String>,
    /// Full-space gradient norm with endpoint directions removed.
    pub symmetric_criticality: f64,
    pub grad_tol: f64,
    pub directional_closed_form: f64,
    pub directional_inner_product: f64,
    pub virial_res: f64,
    /// `f ≥ (H/2)‖q‖²`.
    pub action_lower_bound_ok: bool,
    pub min_dist: f64,
    pub min_dist_upper_bound: f64,
    pub multipliers: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 10_000;

pub fn diagnose(
    sys: &BodySystem,
    report: &SolveReport,
    grid: &QuadratureGrid,
    steps_per_period: usize,
) -> Result<(Diagnostics, Trajectory)> {
    let traj = rescale(sys, &report.path, report.period, grid.nodes())?;
    let (crosscheck, crosscheck_error) = match symplectic_crosscheck(&traj, steps_per_period) {
        Ok(c) => (Some(c), None),
        Err(e @ Error::IntegratorBlowup { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let DirectionalIdentity {
        closed_form,
        inner_product,
        ..
    } = directional_identity_parts(sys, &report.path, grid)?;
    let diag = Diagnostics {
        schema_version: SCHEMA_VERSION,
        radius: report.radius,
        period: report.period,
        eom_residual: eom_residual(&traj)?,
        energy: energy_residuals(&traj)?,
        crosscheck,
        crosscheck_error,
        symmetric_criticality: symmetric_criticality_check(sys, &report.path, grid)?,
        grad_tol: report.grad_tol,
        directional_closed_form: closed_form,
        directional_inner_product: inner_product,
        virial_res: report.virial_res,
        action_lower_bound_ok: report.f_value >= 0.5 * sys.energy() * report.kinetic,
        min_dist: report.min_dist,
        min_dist_upper_bound: min_dist_upper_bound(sys),
        multipliers: report.multipliers.clone(),
    };
    Ok((diag, traj))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub radius: f64,
    pub error: String,
}

/// Contents of `sweep.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub schema_version: u32,
    pub system: BodySystem,
    pub schedule: ContinuationSchedule,
    pub solver: SolveConfig,
    pub harmonics: usize,
    pub grid_nodes: usize,
    pub records: Vec<ContinuationRecord>,
    pub failures: Vec<SweepFailure>,
    pub trends: TrendChecks,
    pub classification: Option<Classification>,
    pub classification_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl SweepDocument {
    pub fn new(
        sys: &BodySystem,
        schedule: &ContinuationSchedule,
        solver: &SolveConfig,
        grid: &QuadratureGrid,
        result: &SweepResult,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: sys.clone(),
            schedule: schedule.clone(),
            solver: solver.clone(),
            harmonics: solver.harmonics,
            grid_nodes: grid.nodes(),
            records: result.records(),
            failures: result
                .entries
                .iter()
                .filter(|e| e.record.is_none())
                .map(|e| SweepFailure {
                    radius: e.radius,
                    error: e.error.clone().unwrap_or_default(),
                })
                .collect(),
            trends: result.trends.clone(),
            classification: result.classification.clone(),
            classification_error: result.classification_error.clone(),
            metadata: None,
        }
    }
}

/// Pass thresholds for an external trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub max_eom: f64,
    pub max_energy: f64,
    pub max_closure: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_eom: 1e-3,
            max_energy: 1e-6,
            max_closure: 1e-3,
        }
    }
}

/// Contents of `verification.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationDocument {
    pub schema_version: u32,
    pub samples: usize,
    pub period: f64,
    /// Finite-difference accelerations.
    pub eom_residual: f64,
    pub energy_residual: f64,
    pub closure_gap: Option<f64>,
    pub max_position_gap: Option<f64>,
    pub energy_drift: Option<f64>,
    pub integrator_error: Option<String>,
    pub thresholds: Thresholds,
    pub eom_ok: bool,
    pub energy_ok: bool,
    pub closure_ok: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

pub fn verify_trajectory(
    traj: &Trajectory,
    thresholds: Thresholds,
    steps_per_period: usize,
) -> Result<VerificationDocument> {
    let eom = eom_residual(traj)?;
    let energy = energy_residuals(traj)?.physical;
    let (cross, integrator_error) = match symplectic_crosscheck(traj, steps_per_period) {
        Ok(c) => (Some(c), None),
        Err(e @ Error::IntegratorBlowup { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let eom_ok = eom <= thresholds.max_eom;
    let energy_ok = energy <= thresholds.max_energy;
    let closure_ok = cross.is_some_and(|c| c.closure_gap <= thresholds.max_closure);
    Ok(VerificationDocument {
        schema_version: SCHEMA_VERSION,
        samples: traj.len(),
        period: traj.period(),
        eom_residual: eom,
        energy_residual: energy,
        closure_gap: cross.map(|c| c.closure_gap),
        max_position_gap: cross.map(|c| c.max_position_gap),
        energy_drift: cross.map(|c| c.energy_drift),
        integrator_error,
        thresholds,
        eom_ok,
        energy_ok,
        closure_ok,
        passed: eom_ok && energy_ok && closure_ok,
        metadata: None,
    })
}
