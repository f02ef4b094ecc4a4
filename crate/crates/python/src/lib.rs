//! Python bindings: systems, solves, rescaled trajectories and sweeps.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use strongforce::continuation::SweepMode;
use strongforce::io::{load_trajectory_csv, save_trajectory_csv, verify_trajectory, SweepDocument, Thresholds};
use strongforce::rescale::energy_residuals;
use strongforce::{Configuration, Error};

create_exception!(pystrongforce, StrongforceError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::Domain(_) | Error::Config(_) | Error::GridTooCoarse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => StrongforceError::new_err(e.to_string()),
    }
}

/// Parse a JSON string into Python objects.
fn to_py(py: Python<'_>, text: String) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| StrongforceError::new_err(e.to_string()))
}

#[pyclass(frozen)]
struct BodySystem {
    inner: strongforce::BodySystem,
}

#[pymethods]
impl BodySystem {
    #[new]
    #[pyo3(signature = (masses, dim=2, alpha=3.0, energy=1.0))]
    fn new(masses: Vec<f64>, dim: usize, alpha: f64, energy: f64) -> PyResult<Self> {
        let inner = strongforce::BodySystem::new(masses, dim, alpha, energy).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    /// Potential at one configuration given as a list of body positions.
    fn potential(&self, positions: Vec<Vec<f64>>) -> PyResult<f64> {
        let c = Configuration::from_bodies(&positions).map_err(err)?;
        strongforce::potential(&self.inner, &c).map_err(err)
    }

    fn potential_gradient(&self, positions: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let c = Configuration::from_bodies(&positions).map_err(err)?;
        let g = strongforce::potential_gradient(&self.inner, &c).map_err(err)?;
        Ok((0..g.n_bodies()).map(|i| g.body(i).to_vec()).collect())
    }

    /// Radius at which the equal-mass comparison ring is a circular orbit.
    fn ring_equilibrium_radius(&self) -> PyResult<f64> {
        strongforce::model::ring_equilibrium_radius(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "BodySystem(masses={:?}, dim={}, alpha={}, energy={})",
            self.inner.masses(),
            self.inner.dim(),
            self.inner.alpha(),
            self.inner.energy()
        )
    }
}

#[pyclass(frozen)]
struct Trajectory {
    inner: strongforce::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    /// Positions per sample, each a list of body positions.
    #[getter]
    fn positions(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.inner.system().dim();
        (0..self.inner.len())
            .map(|j| self.inner.position(j).chunks(d).map(<[f64]>::to_vec).collect())
            .collect()
    }

    #[getter]
    fn velocities(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.inner.system().dim();
        (0..self.inner.len())
            .map(|j| self.inner.velocity(j).chunks(d).map(<[f64]>::to_vec).collect())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn eom_residual(&self) -> PyResult<f64> {
        strongforce::eom_residual(&self.inner).map_err(err)
    }

    fn energy_residual(&self) -> PyResult<f64> {
        Ok(energy_residuals(&self.inner).map_err(err)?.physical)
    }

    /// Leapfrog integration over one period; returns the cross-check as a dict.
    #[pyo3(signature = (steps=10_000))]
    fn crosscheck(&self, py: Python<'_>, steps: usize) -> PyResult<Py<PyAny>> {
        let c = strongforce::symplectic_crosscheck(&self.inner, steps).map_err(err)?;
        to_py(py, json(&c)?)
    }

    /// Residual, energy and closure checks as a dict.
    #[pyo3(signature = (max_eom=1e-3, max_energy=1e-6, max_closure=1e-3, steps=10_000))]
    fn verify(&self, py: Python<'_>, max_eom: f64, max_energy: f64, max_closure: f64, steps: usize) -> PyResult<Py<PyAny>> {
        let t = Thresholds {
            max_eom,
            max_energy,
            max_closure,
        };
        to_py(py, json(&verify_trajectory(&self.inner, t, steps).map_err(err)?)?)
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        save_trajectory_csv(&self.inner, &path).map_err(err)
    }

    #[staticmethod]
    fn load_csv(system: &BodySystem, path: PathBuf) -> PyResult<Self> {
        let inner = load_trajectory_csv(&system.inner, &path).map_err(err)?;
        Ok(Self { inner })
    }
}

#[pyclass(frozen)]
struct SolveReport {
    inner: strongforce::SolveReport,
    system: strongforce::BodySystem,
}

#[pymethods]
impl SolveReport {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period
    }

    #[getter]
    fn f_value(&self) -> f64 {
        self.inner.f_value
    }

    #[getter]
    fn min_dist(&self) -> f64 {
        self.inner.min_dist
    }

    #[getter]
    fn virial_res(&self) -> f64 {
        self.inner.virial_res
    }

    #[getter]
    fn multipliers(&self) -> Vec<f64> {
        self.inner.multipliers.clone()
    }

    #[getter]
    fn iters(&self) -> usize {
        self.inner.iters
    }

    /// Loop coefficients as a JSON string.
    fn loop_json(&self) -> PyResult<String> {
        json(&self.inner.path)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, json(&self.inner)?)
    }

    /// The rescaled `T_R`-periodic orbit, sampled from `-T/2`.
    #[pyo3(signature = (samples=256))]
    fn trajectory(&self, samples: usize) -> PyResult<Trajectory> {
        let inner = strongforce::rescale(&self.system, &self.inner.path, self.inner.period, samples).map_err(err)?;
        Ok(Trajectory { inner })
    }

    /// Full-space gradient norm with endpoint directions removed.
    #[pyo3(signature = (nodes=256))]
    fn symmetric_criticality(&self, nodes: usize) -> PyResult<f64> {
        let grid = strongforce::QuadratureGrid::new(nodes).map_err(err)?;
        strongforce::symmetric_criticality_check(&self.system, &self.inner.path, &grid).map_err(err)
    }
}

fn solve_config(radius: f64, harmonics: usize, seed: u64) -> strongforce::SolveConfig {
    strongforce::SolveConfig {
        harmonics,
        seed,
        ..strongforce::SolveConfig::default().with_radius(radius)
    }
}

fn grid(harmonics: usize, nodes: Option<usize>) -> PyResult<strongforce::QuadratureGrid> {
    let g = match nodes {
        Some(n) => strongforce::QuadratureGrid::new(n),
        None => strongforce::QuadratureGrid::for_harmonics(harmonics),
    }
    .map_err(err)?;
    g.check_harmonics(harmonics).map_err(err)?;
    Ok(g)
}

/// Minimize the functional at one radius. Raises if the solve does not converge.
#[pyfunction]
#[pyo3(signature = (system, radius, harmonics=32, nodes=None, seed=0))]
fn solve(
    py: Python<'_>,
    system: &BodySystem,
    radius: f64,
    harmonics: usize,
    nodes: Option<usize>,
    seed: u64,
) -> PyResult<SolveReport> {
    let cfg = solve_config(radius, harmonics, seed);
    let g = grid(harmonics, nodes)?;
    let sys = system.inner.clone();
    let inner = py.detach(|| strongforce::minimize(&sys, &cfg, &g)).map_err(err)?;
    Ok(SolveReport { inner, system: sys })
}

/// Action value and factors of a loop given as JSON.
#[pyfunction]
#[pyo3(signature = (system, loop_json, nodes=None))]
fn action(py: Python<'_>, system: &BodySystem, loop_json: &str, nodes: Option<usize>) -> PyResult<Py<PyAny>> {
    let path = strongforce::LoopPath::from_json(loop_json).map_err(err)?;
    let g = grid(path.harmonics(), nodes)?;
    let v = strongforce::action(&system.inner, &path, &g).map_err(err)?;
    let out = serde_json::json!({
        "f": v.f,
        "kinetic": v.kinetic,
        "mean_excess": v.mean_excess,
        "grad_norm": v.grad_norm,
    });
    to_py(py, out.to_string())
}

/// Continue in R and classify; returns the sweep document as a dict.
#[pyfunction]
#[pyo3(signature = (system, radii, harmonics=32, nodes=None, seed=0, d1=1.1, d2=1.25, warm_start=true, threads=1))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    system: &BodySystem,
    radii: Vec<f64>,
    harmonics: usize,
    nodes: Option<usize>,
    seed: u64,
    d1: f64,
    d2: f64,
    warm_start: bool,
    threads: usize,
) -> PyResult<Py<PyAny>> {
    let sched = strongforce::ContinuationSchedule::new(radii, d1, d2).map_err(err)?;
    let cfg = solve_config(sched.radii[0], harmonics, seed);
    let g = grid(harmonics, nodes)?;
    let mode = if warm_start {
        SweepMode::Warm
    } else {
        SweepMode::Cold { threads: threads.max(1) }
    };
    let sys = &system.inner;
    let doc = py.detach(|| {
        strongforce::continuation::sweep(sys, &sched, &cfg, &g, mode)
            .map(|res| SweepDocument::new(sys, &sched, &cfg, &g, &res))
    });
    to_py(py, json(&doc.map_err(err)?)?)
}

#[pymodule]
fn pystrongforce(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BodySystem>()?;
    m.add_class::<SolveReport>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(action, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("StrongforceError", m.py().get_type::<StrongforceError>())?;
    Ok(())
}
