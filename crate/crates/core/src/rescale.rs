//! From the unit-interval minimizer to a `T_R`-periodic Newtonian trajectory,
//! and independent checks that the result solves `m_i ü_i + ∇_i V = 0` at
//! energy `H`.
//!
//! The rescaled motion is `u(t) = q((t + T/2) / T)`, so `u̇ = q̇ / T` and
//! `ü = q̈ / T²`.

use serde::{Deserialize, Serialize};

use crate::action::ActionEvaluator;
use crate::error::{Error, Result};
use crate::loop_space::{LoopPath, QuadratureGrid};
use crate::model::BodySystem;

/// Sampled solution on one period, optionally backed by its loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    sys: BodySystem,
    period: f64,
    shift: f64,
    base_times: Vec<f64>,
    /// `[sample][body][component]`.
    positions: Vec<f64>,
    velocities: Vec<f64>,
    path: Option<LoopPath>,
}

impl Trajectory {
    /// Trajectory from raw samples (no underlying loop). Times must increase
    /// strictly; the period is taken as `n` times the mean spacing.
    pub fn from_samples(
        sys: BodySystem,
        times: Vec<f64>,
        positions: Vec<f64>,
        velocities: Vec<f64>,
    ) -> Result<Self> {
        let stride = sys.n_bodies() * sys.dim();
        let n = times.len();
        if n < 3 {
            return Err(Error::MalformedTrajectory(format!(
                "need at least 3 samples, got {n}"
            )));
        }
        if positions.len() != n * stride || velocities.len() != n * stride {
            return Err(Error::MalformedTrajectory(format!(
                "expected {} values per state array, got {} and {}",
                n * stride,
                positions.len(),
                velocities.len()
            )));
        }
        if times.iter().chain(&positions).chain(&velocities).any(|x| !x.is_finite()) {
            return Err(Error::MalformedTrajectory("non-finite value".into()));
        }
        if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::MalformedTrajectory(format!(
                "times are not strictly increasing at sample {}",
                j + 1
            )));
        }
        let period = (times[n - 1] - times[0]) * n as f64 / (n - 1) as f64;
        Ok(Self {
            sys,
            period,
            shift: 0.0,
            base_times: times,
            positions,
            velocities,
            path: None,
        })
    }

    pub fn system(&self) -> &BodySystem {
        &self.sys
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn path(&self) -> Option<&LoopPath> {
        self.path.as_ref()
    }

    pub fn len(&self) -> usize {
        self.base_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_times.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.base_times[j] + self.shift
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    fn stride(&self) -> usize {
        self.sys.n_bodies() * self.sys.dim()
    }

    pub fn position(&self, j: usize) -> &[f64] {
        let s = self.stride();
        &self.positions[j * s..(j + 1) * s]
    }

    pub fn velocity(&self, j: usize) -> &[f64] {
        let s = self.stride();
        &self.velocities[j * s..(j + 1) * s]
    }

    /// Loop time `(t - shift + T/2) / T` of physical time `t`.
    pub fn loop_time(&self, t: f64) -> f64 {
        (t - self.shift + 0.5 * self.period) / self.period
    }

    /// Exact position at any time, when the loop is known.
    pub fn position_at(&self, t: f64) -> Option<Vec<f64>> {
        self.path
            .as_ref()
            .map(|p| p.evaluate(self.loop_time(t)).into_vec())
    }

    pub fn velocity_at(&self, t: f64) -> Option<Vec<f64>> {
        let inv = 1.0 / self.period;
        self.path.as_ref().map(|p| {
            let mut v = p.velocity(self.loop_time(t)).into_vec();
            v.iter_mut().for_each(|x| *x *= inv);
            v
        })
    }

    /// Spectral acceleration `q̈ / T²`, when the loop is known.
    pub fn acceleration_at(&self, t: f64) -> Option<Vec<f64>> {
        let inv = 1.0 / (self.period * self.period);
        self.path.as_ref().map(|p| {
            let mut a = p.acceleration(self.loop_time(t)).into_vec();
            a.iter_mut().for_each(|x| *x *= inv);
            a
        })
    }

    /// The same motion with time labels moved by `t_star`: `u*(t) = u(t - t*)`.
    pub fn shifted(&self, t_star: f64) -> Self {
        Self {
            shift: self.shift + t_star,
            ..self.clone()
        }
    }

    /// Radius `|u_i|` of body `i` at sample `j`.
    pub fn radius(&self, j: usize, i: usize) -> f64 {
        let d = self.sys.dim();
        let x = &self.position(j)[i * d..(i + 1) * d];
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Total energy `½ Σ m_i |u̇_i|² + V(u)` at sample `j`.
    pub fn energy(&self, j: usize) -> Result<f64> {
        energy_of(&self.sys, self.position(j), self.velocity(j))
    }
}

fn energy_of(sys: &BodySystem, x: &[f64], v: &[f64]) -> Result<f64> {
    let d = sys.dim();
    let kinetic: f64 = sys
        .masses()
        .iter()
        .enumerate()
        .map(|(i, m)| m * v[i * d..(i + 1) * d].iter().map(|a| a * a).sum::<f64>())
        .sum();
    Ok(0.5 * kinetic + sys.potential_flat(x)?)
}

/// `T_R = sqrt(½‖q‖² / ∫(H - V) dt)`.
pub fn period_from_path(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<f64> {
    let kinetic = path.norm_squared(sys);
    if kinetic == 0.0 {
        return Err(Error::DegenerateLoop);
    }
    let parts = ActionEvaluator::new(sys, grid, path)?.evaluate(path, None)?;
    Ok((0.5 * kinetic / parts.mean_excess).sqrt())
}

/// Sample `u(t) = q((t + T/2)/T)` at `samples` uniform times starting at `-T/2`.
pub fn rescale(sys: &BodySystem, path: &LoopPath, period: f64, samples: usize) -> Result<Trajectory> {
    path.check_system(sys)?;
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::Domain(format!("period must be positive, got {period}")));
    }
    if samples < 3 {
        return Err(Error::Validation(format!("need at least 3 samples, got {samples}")));
    }
    let stride = sys.n_bodies() * sys.dim();
    let mut base_times = Vec::with_capacity(samples);
    let mut positions = Vec::with_capacity(samples * stride);
    let mut velocities = Vec::with_capacity(samples * stride);
    for j in 0..samples {
        let s = j as f64 / samples as f64;
        base_times.push(period * s - 0.5 * period);
        positions.extend_from_slice(path.evaluate(s).as_slice());
        velocities.extend(path.velocity(s).as_slice().iter().map(|v| v / period));
    }
    Ok(Trajectory {
        sys: sys.clone(),
        period,
        shift: 0.0,
        base_times,
        positions,
        velocities,
        path: Some(path.clone()),
    })
}

/// `max |m_i ü_i + ∇_i V| / (m_i · max|ü|)` over interior samples.
///
/// Accelerations are spectral when the loop is known and central
/// differences of the sampled velocities otherwise.
pub fn eom_residual(traj: &Trajectory) -> Result<f64> {
    let sys = &traj.sys;
    let (n, d) = (sys.n_bodies(), sys.dim());
    let stride = n * d;
    let samples = traj.len();
    let mut acc = Vec::with_capacity(samples.saturating_sub(2) * stride);
    for j in 1..samples - 1 {
        match traj.acceleration_at(traj.time(j)) {
            Some(a) => acc.extend(a),
            None => {
                let dt = traj.time(j + 1) - traj.time(j - 1);
                acc.extend(
                    traj.velocity(j + 1)
                        .iter()
                        .zip(traj.velocity(j - 1))
                        .map(|(a, b)| (a - b) / dt),
                );
            }
        }
    }
    let scale = acc
        .chunks_exact(d)
        .map(|a| a.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut grad = vec![0.0; stride];
    let mut worst: f64 = 0.0;
    for (row, j) in acc.chunks_exact(stride).zip(1..samples - 1) {
        sys.potential_and_gradient_flat(traj.position(j), &mut grad)?;
        for (i, m) in sys.masses().iter().enumerate() {
            let r: f64 = (0..d)
                .map(|c| {
                    let e = m * row[i * d + c] + grad[i * d + c];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / (m * scale));
        }
    }
    Ok(worst)
}

/// Energy identity residuals `max |E - H| / H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResiduals {
    /// From the physical samples `½ Σ m|u̇|² + V(u)`.
    pub physical: f64,
    /// From the loop, `(1/2T²) Σ m|q̇|² + V(q)`; absent for raw samples.
    pub loop_time: Option<f64>,
}

pub fn energy_residuals(traj: &Trajectory) -> Result<EnergyResiduals> {
    let h = traj.sys.energy();
    let mut physical: f64 = 0.0;
    for j in 0..traj.len() {
        physical = physical.max((traj.energy(j)? - h).abs() / h);
    }
    let loop_time = match &traj.path {
        None => None,
        Some(p) => {
            let t2 = traj.period * traj.period;
            let mut worst: f64 = 0.0;
            for j in 0..traj.len() {
                let s = j as f64 / traj.len() as f64;
                let q = p.evaluate(s);
                let qd = p.velocity(s);
                let kin: f64 = traj
                    .sys
                    .masses()
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m * qd.body(i).iter().map(|x| x * x).sum::<f64>())
                    .sum();
                let e = kin / (2.0 * t2) + traj.sys.potential_flat(q.as_slice())?;
                worst = worst.max((e - h).abs() / h);
            }
            Some(worst)
        }
    };
    Ok(EnergyResiduals {
        physical,
        loop_time,
    })
}

/// Outcome of integrating one period with kick-drift-kick leapfrog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub steps: usize,
    /// Largest per-body distance to the sampled trajectory.
    pub max_position_gap: f64,
    /// Largest `|E - E_0| / |E_0|` along the run.
    pub energy_drift: f64,
    pub final_energy_drift: f64,
    /// Largest per-body distance between the state after one period and the start.
    pub closure_gap: f64,
}

/// Integrate from the first sample over one period and compare.
///
/// The step count is rounded up to a multiple of the sample count so every
/// sample time is hit exactly.
pub fn symplectic_crosscheck(traj: &Trajectory, steps_per_period: usize) -> Result<CrossCheck> {
    if steps_per_period < 1000 {
        return Err(Error::Validation(format!(
            "steps_per_period must be at least 1000, got {steps_per_period}"
        )));
    }
    let sys = &traj.sys;
    let (n, d) = (sys.n_bodies(), sys.dim());
    let stride = n * d;
    let samples = traj.len();
    let per_sample = steps_per_period.div_ceil(samples);
    let steps = per_sample * samples;
    let h = traj.period / steps as f64;

    let mut x = traj.position(0).to_vec();
    let mut v = traj.velocity(0).to_vec();
    let mut g = vec![0.0; stride];
    let floor = sys.distance_floor();
    let force = |x: &[f64], g: &mut [f64], step: usize| -> Result<()> {
        sys.potential_and_gradient_flat(x, g).map(|_| ()).map_err(|e| match e {
            Error::Collision { distance, .. } => Error::IntegratorBlowup { step, distance },
            other => other,
        })
    };
    let gap = |a: &[f64], b: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                (0..d)
                    .map(|c| (a[i * d + c] - b[i * d + c]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    };
    let e0 = energy_of(sys, &x, &v)?;
    force(&x, &mut g, 0)?;
    let mut max_gap: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut final_drift = 0.0;
    for step in 1..=steps {
        for i in 0..n {
            let k = 0.5 * h / sys.masses()[i];
            for c in 0..d {
                v[i * d + c] -= k * g[i * d + c];
            }
        }
        x.iter_mut().zip(&v).for_each(|(a, b)| *a += h * b);
        force(&x, &mut g, step)?;
        for i in 0..n {
            let k = 0.5 * h / sys.masses()[i];
            for c in 0..d {
                v[i * d + c] -= k * g[i * d + c];
            }
        }
        let e = energy_of(sys, &x, &v).map_err(|_| Error::IntegratorBlowup {
            step,
            distance: floor,
        })?;
        final_drift = (e - e0).abs() / e0.abs();
        drift = drift.max(final_drift);
        if step % per_sample == 0 {
            let j = (step / per_sample) % samples;
            max_gap = max_gap.max(gap(&x, traj.position(j)));
        }
    }
    Ok(CrossCheck {
        steps,
        max_position_gap: max_gap,
        energy_drift: drift,
        final_energy_drift: final_drift,
        closure_gap: gap(&x, traj.position(0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_space::Part;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Two unit masses on a circle of separation `rho` at the energy that
    /// makes it a Newtonian orbit.
    fn circle() -> (BodySystem, LoopPath, f64, f64) {
        let alpha = 3.0;
        let rho = 0.5f64.powf(1.0 / 3.0);
        // Relative motion with reduced mass 1/2: ω² = 2 alpha rho^{-alpha-2}.
        let omega = (2.0 * alpha * rho.powf(-alpha - 2.0)).sqrt();
        let h = (alpha / 2.0 - 1.0) * rho.powf(-alpha);
        let sys = BodySystem::new(vec![1.0, 1.0], 2, alpha, h).unwrap();
        let mut p = LoopPath::zeros(2, 2, 4);
        p.coeff_mut(0, 0, Part::Cos)[0] = rho / 2.0;
        p.coeff_mut(0, 0, Part::Sin)[1] = rho / 2.0;
        p.coeff_mut(1, 0, Part::Cos)[0] = -rho / 2.0;
        p.coeff_mut(1, 0, Part::Sin)[1] = -rho / 2.0;
        (sys, p, 2.0 * PI / omega, rho)
    }

    #[test]
    fn period_formula_arithmetic() {
        let (sys, p, t, _) = circle();
        let grid = QuadratureGrid::new(32).unwrap();
        assert_relative_eq!(period_from_path(&sys, &p, &grid).unwrap(), t, max_relative = 1e-13);
    }

    #[test]
    fn rescale_endpoints() {
        let (sys, p, t, _) = circle();
        let traj = rescale(&sys, &p, t, 64).unwrap();
        assert_relative_eq!(traj.time(0), -t / 2.0);
        assert_eq!(traj.position(0), p.evaluate(0.0).as_slice());
        let mid = traj.position_at(0.0).unwrap();
        for (a, b) in mid.iter().zip(p.evaluate(0.0).as_slice()) {
            assert!((a + b).abs() < 1e-15);
        }
        assert_eq!(traj.position(32), p.evaluate(0.5).as_slice());
    }

    #[test]
    fn analytic_circle_solves_newton() {
        let (sys, p, t, _) = circle();
        let traj = rescale(&sys, &p, t, 128).unwrap();
        assert!(eom_residual(&traj).unwrap() < 1e-10);
        let e = energy_residuals(&traj).unwrap();
        assert!(e.physical < 1e-12);
        assert!(e.loop_time.unwrap() < 1e-12);
    }

    #[test]
    fn perturbed_circle_fails_newton() {
        let (sys, p, t, _) = circle();
        let base = eom_residual(&rescale(&sys, &p, t, 128).unwrap()).unwrap();
        let mut q = p.scaled(1.01);
        q.coeff_mut(0, 1, Part::Cos)[0] = 1e-2;
        let bad = eom_residual(&rescale(&sys, &q, t, 128).unwrap()).unwrap();
        assert!(bad > 1e2 * base.max(1e-12), "{bad} vs {base}");
    }

    #[test]
    fn raw_samples_use_finite_differences() {
        let (sys, p, t, _) = circle();
        let traj = rescale(&sys, &p, t, 512).unwrap();
        let raw = Trajectory::from_samples(
            sys,
            traj.times(),
            (0..traj.len()).flat_map(|j| traj.position(j).to_vec()).collect(),
            (0..traj.len()).flat_map(|j| traj.velocity(j).to_vec()).collect(),
        )
        .unwrap();
        assert_relative_eq!(raw.period(), t, max_relative = 1e-12);
        let r = eom_residual(&raw).unwrap();
        assert!(r < 1e-3, "{r}");
        assert!(energy_residuals(&raw).unwrap().loop_time.is_none());
    }

    #[test]
    fn leapfrog_follows_the_circle() {
        let (sys, p, t, rho) = circle();
        let traj = rescale(&sys, &p, t, 100).unwrap();
        let c = symplectic_crosscheck(&traj, 100_000).unwrap();
        assert!(c.max_position_gap < 1e-6 * rho, "{c:?}");
        assert!(c.closure_gap < 1e-6 * rho);
        let coarse = symplectic_crosscheck(&traj, 2000).unwrap();
        let fine = symplectic_crosscheck(&traj, 4000).unwrap();
        // On an exact circle the h² energy error is constant along the orbit,
        // so the drift falls faster than the generic factor 4.
        let ratio = coarse.energy_drift / fine.energy_drift;
        assert!(ratio > 3.0, "{ratio}");
    }

    #[test]
    fn shift_only_moves_time_labels() {
        let (sys, p, t, _) = circle();
        let traj = rescale(&sys, &p, t, 64).unwrap();
        let s = traj.shifted(0.3 * t);
        assert_relative_eq!(eom_residual(&s).unwrap(), eom_residual(&traj).unwrap(), epsilon = 1e-12);
        assert_eq!(s.shifted(-0.3 * t).times(), traj.times());
        assert_eq!(traj.shifted(0.0), traj);
    }

    #[test]
    fn malformed_samples_are_rejected() {
        let sys = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.0).unwrap();
        let r = Trajectory::from_samples(sys.clone(), vec![0.0, 1.0, 0.5], vec![0.0; 12], vec![0.0; 12]);
        assert!(matches!(r, Err(Error::MalformedTrajectory(_))));
        let r = Trajectory::from_samples(sys, vec![0.0, 1.0, 2.0], vec![0.0; 11], vec![0.0; 12]);
        assert!(matches!(r, Err(Error::MalformedTrajectory(_))));
    }
}
