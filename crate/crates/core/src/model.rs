//! Strong-force N-body model.
//!
//! The pair interaction is the homogeneous power law
//! `V_ij(x) = -m_i m_j / |x|^alpha` with `alpha > 2`, summed once over
//! unordered pairs. Every evaluation checks pairwise distances against a hard
//! floor and reports a [`Error::Collision`] instead of returning huge values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default hard distance floor below which potential evaluation fails.
pub const DEFAULT_DISTANCE_FLOOR: f64 = 1e-12;

/// The physical problem: masses, spatial dimension, force exponent and energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemSpec", into = "SystemSpec")]
pub struct BodySystem {
    masses: Vec<f64>,
    dim: usize,
    alpha: f64,
    energy: f64,
    total_mass: f64,
    distance_floor: f64,
}

/// Plain serialized form of [`BodySystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub masses: Vec<f64>,
    pub dim: usize,
    pub alpha: f64,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_floor: Option<f64>,
}

impl TryFrom<SystemSpec> for BodySystem {
    type Error = Error;

    fn try_from(spec: SystemSpec) -> Result<Self> {
        let mut sys = BodySystem::new(spec.masses, spec.dim, spec.alpha, spec.energy)?;
        if let Some(floor) = spec.distance_floor {
            sys = sys.with_distance_floor(floor)?;
        }
        Ok(sys)
    }
}

impl From<BodySystem> for SystemSpec {
    fn from(sys: BodySystem) -> Self {
        let distance_floor =
            (sys.distance_floor != DEFAULT_DISTANCE_FLOOR).then_some(sys.distance_floor);
        SystemSpec {
            masses: sys.masses,
            dim: sys.dim,
            alpha: sys.alpha,
            energy: sys.energy,
            distance_floor,
        }
    }
}

impl BodySystem {
    pub fn new(masses: Vec<f64>, dim: usize, alpha: f64, energy: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 bodies, got {}",
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::Validation(format!(
                "masses must be finite and strictly positive, got {m}"
            )));
        }
        if dim < 2 {
            return Err(Error::Validation(format!(
                "spatial dimension must be at least 2, got {dim}"
            )));
        }
        if !(alpha.is_finite() && alpha > 2.0) {
            return Err(Error::Validation(format!(
                "strong-force hypothesis requires α>2 (alpha > 2), got alpha = {alpha}"
            )));
        }
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Validation(format!(
                "hyperbolic regime requires H>0 (energy > 0), got energy = {energy}"
            )));
        }
        let total_mass = masses.iter().sum();
        Ok(Self {
            masses,
            dim,
            alpha,
            energy,
            total_mass,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        })
    }

    pub fn with_distance_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::Validation(format!(
                "distance floor must be positive, got {floor}"
            )));
        }
        self.distance_floor = floor;
        Ok(self)
    }

    /// Same system at a different energy level.
    pub fn with_energy(&self, energy: f64) -> Result<Self> {
        let mut sys = BodySystem::new(self.masses.clone(), self.dim, self.alpha, energy)?;
        sys.distance_floor = self.distance_floor;
        Ok(sys)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn distance_floor(&self) -> f64 {
        self.distance_floor
    }

    /// `Σ_{i≠j} m_i m_j` over ordered pairs.
    pub fn ordered_pair_mass_sum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n_bodies() {
            for j in 0..self.n_bodies() {
                if i != j {
                    s += self.masses[i] * self.masses[j];
                }
            }
        }
        s
    }

    /// Pair potential `V_ij` at separation `r`.
    pub fn pair_potential(&self, i: usize, j: usize, r: f64) -> f64 {
        -self.masses[i] * self.masses[j] * r.powf(-self.alpha)
    }

    /// Sum over pairs of `V` evaluated on a flat `[body][component]` slice.
    pub(crate) fn potential_flat(&self, x: &[f64]) -> Result<f64> {
        let (n, d) = (self.n_bodies(), self.dim);
        let mut v = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let r2 = dist2(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
                let r = r2.sqrt();
                if !(r > self.distance_floor) {
                    return Err(self.collision(i, j, r));
                }
                v -= self.masses[i] * self.masses[j] * r.powf(-self.alpha);
            }
        }
        Ok(v)
    }

    /// Potential and its gradient on flat slices; `grad` is overwritten.
    pub(crate) fn potential_and_gradient_flat(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (n, d) = (self.n_bodies(), self.dim);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let xi = &x[i * d..(i + 1) * d];
                let xj = &x[j * d..(j + 1) * d];
                let r2 = dist2(xi, xj);
                let r = r2.sqrt();
                if !(r > self.distance_floor) {
                    return Err(self.collision(i, j, r));
                }
                let mm = self.masses[i] * self.masses[j];
                let pot = mm * r.powf(-self.alpha);
                v -= pot;
                // dV/dx_i = alpha m_i m_j r^{-alpha-2} (x_i - x_j)
                let coef = self.alpha * pot / r2;
                for c in 0..d {
                    let g = coef * (xi[c] - xj[c]);
                    grad[i * d + c] += g;
                    grad[j * d + c] -= g;
                }
            }
        }
        Ok(v)
    }

    fn collision(&self, i: usize, j: usize, distance: f64) -> Error {
        Error::Collision {
            i,
            j,
            distance,
            floor: self.distance_floor,
        }
    }
}

/// Positions of all bodies at one instant, stored body-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    n_bodies: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Configuration {
    pub fn zeros(n_bodies: usize, dim: usize) -> Self {
        Self {
            n_bodies,
            dim,
            data: vec![0.0; n_bodies * dim],
        }
    }

    pub fn from_flat(n_bodies: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_bodies * dim {
            return Err(Error::Validation(format!(
                "configuration needs {} values, got {}",
                n_bodies * dim,
                data.len()
            )));
        }
        Ok(Self {
            n_bodies,
            dim,
            data,
        })
    }

    pub fn from_bodies(bodies: &[Vec<f64>]) -> Result<Self> {
        let dim = bodies.first().map_or(0, Vec::len);
        if bodies.iter().any(|b| b.len() != dim) {
            return Err(Error::Validation(
                "all bodies must have the same dimension".into(),
            ));
        }
        Self::from_flat(bodies.len(), dim, bodies.concat())
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn body_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_bodies: self.n_bodies,
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// Every body moved by the same vector `w`.
    pub fn translated(&self, w: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_bodies {
            for (x, dw) in out.body_mut(i).iter_mut().zip(w) {
                *x += dw;
            }
        }
        out
    }

    /// Euclidean inner product over all bodies and components.
    pub fn dot(&self, other: &Configuration) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_collision_free(&self) -> bool {
        min_pairwise_distance(self) > 0.0
    }

    fn check_shape(&self, sys: &BodySystem) -> Result<()> {
        if self.n_bodies != sys.n_bodies() || self.dim != sys.dim() {
            return Err(Error::Validation(format!(
                "configuration shape {}x{} does not match system {}x{}",
                self.n_bodies,
                self.dim,
                sys.n_bodies(),
                sys.dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `V = Σ_{i<j} -m_i m_j |x_i - x_j|^{-alpha}`.
pub fn potential(sys: &BodySystem, c: &Configuration) -> Result<f64> {
    c.check_shape(sys)?;
    sys.potential_flat(c.as_slice())
}

/// Gradient of [`potential`] with respect to every body position.
pub fn potential_gradient(sys: &BodySystem, c: &Configuration) -> Result<Configuration> {
    c.check_shape(sys)?;
    let mut g = Configuration::zeros(sys.n_bodies(), sys.dim());
    sys.potential_and_gradient_flat(c.as_slice(), g.as_mut_slice())?;
    Ok(g)
}

/// Both evaluations of `2(H - V) - (∇V, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialQuantity {
    /// Evaluated literally from `V` and `∇V`.
    pub direct: f64,
    /// `2H + (alpha - 2) V`, using homogeneity of degree `-alpha`.
    pub homogeneous: f64,
}

pub fn virial_quantity(sys: &BodySystem, c: &Configuration) -> Result<VirialQuantity> {
    c.check_shape(sys)?;
    let mut g = vec![0.0; c.as_slice().len()];
    let v = sys.potential_and_gradient_flat(c.as_slice(), &mut g)?;
    let gx: f64 = g.iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
    let h = sys.energy();
    Ok(VirialQuantity {
        direct: 2.0 * (h - v) - gx,
        homogeneous: 2.0 * h + (sys.alpha() - 2.0) * v,
    })
}

/// Constant `C` with `-V_ij(x) >= C / |x|^2` for `0 < |x| <= delta`.
///
/// For the power law, `r^2 (-V_ij(r)) = m_i m_j r^{2-alpha}` decreases in `r`,
/// so the infimum over `(0, delta]` is attained at `delta`.
pub fn gordon_constant(sys: &BodySystem, i: usize, j: usize, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let n = sys.n_bodies();
    if i >= n || j >= n || i == j {
        return Err(Error::Domain(format!(
            "need two distinct body indices below {n}, got ({i}, {j})"
        )));
    }
    Ok(-sys.pair_potential(i, j, delta) * delta * delta)
}

/// Smallest distance between any two bodies; zero for coincident bodies.
pub fn min_pairwise_distance(c: &Configuration) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..c.n_bodies() {
        for j in (i + 1)..c.n_bodies() {
            best = best.min(dist2(c.body(i), c.body(j)));
        }
    }
    best.sqrt()
}

/// Radius at which the regular polygon of equal masses with all bodies on a
/// circle rotates rigidly at energy `H` (a relative equilibrium).
///
/// For such a configuration the kinetic energy is `(alpha/2)|V|`, so
/// `H = (alpha/2 - 1) |V(R)|` with `|V(R)| = |V(1)| R^{-alpha}`.
pub fn ring_equilibrium_radius(sys: &BodySystem) -> Result<f64> {
    let m0 = sys.masses()[0];
    if sys.masses().iter().any(|m| *m != m0) {
        return Err(Error::Domain(
            "ring relative equilibrium requires equal masses".into(),
        ));
    }
    let n = sys.n_bodies();
    let mut unit = Configuration::zeros(n, sys.dim());
    for i in 0..n {
        let phase = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
        unit.body_mut(i)[0] = phase.cos();
        unit.body_mut(i)[1] = phase.sin();
    }
    let v1 = -potential(sys, &unit)?;
    Ok(((sys.alpha() / 2.0 - 1.0) * v1 / sys.energy()).powf(1.0 / sys.alpha()))
}
