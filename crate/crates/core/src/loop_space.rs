//! Antiperiodic loops on the unit circle as truncated odd-harmonic series.
//!
//! Body `i` follows `q_i(t) = Σ_k a_ik cos 2πkt + b_ik sin 2πkt` over the odd
//! orders `k = 1, 3, …, 2K-1`. Odd orders make `q(t + 1/2) = -q(t)` hold
//! identically and remove the mean, so the only constraint left for the solver
//! is the endpoint radius `|q_i(0)| = R`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BodySystem, Configuration};

const TWO_PI: f64 = 2.0 * PI;

/// Coefficient part selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Cos = 0,
    Sin = 1,
}

/// Truncated odd-harmonic loop. Coefficients are stored flat in the order
/// `[body][harmonic][cos|sin][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LoopDocument", into = "LoopDocument")]
pub struct LoopPath {
    n_bodies: usize,
    dim: usize,
    harmonics: usize,
    coeffs: Vec<f64>,
}

impl LoopPath {
    pub fn zeros(n_bodies: usize, dim: usize, harmonics: usize) -> Self {
        Self {
            n_bodies,
            dim,
            harmonics,
            coeffs: vec![0.0; n_bodies * harmonics * 2 * dim],
        }
    }

    pub fn from_coeffs(n_bodies: usize, dim: usize, harmonics: usize, coeffs: Vec<f64>) -> Result<Self> {
        if harmonics == 0 || n_bodies == 0 || dim == 0 {
            return Err(Error::Validation("loop shape must be non-empty".into()));
        }
        let want = n_bodies * harmonics * 2 * dim;
        if coeffs.len() != want {
            return Err(Error::Validation(format!(
                "loop with {n_bodies} bodies, {harmonics} harmonics and dimension {dim} needs {want} coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("loop coefficients must be finite".into()));
        }
        Ok(Self {
            n_bodies,
            dim,
            harmonics,
            coeffs,
        })
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of odd harmonics `K`.
    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    /// Frequency of harmonic slot `h`, i.e. `2h + 1`.
    pub fn order(h: usize) -> usize {
        2 * h + 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub(crate) fn offset(&self, body: usize, h: usize, part: Part) -> usize {
        ((body * self.harmonics + h) * 2 + part as usize) * self.dim
    }

    pub fn coeff(&self, body: usize, h: usize, part: Part) -> &[f64] {
        let o = self.offset(body, h, part);
        &self.coeffs[o..o + self.dim]
    }

    pub fn coeff_mut(&mut self, body: usize, h: usize, part: Part) -> &mut [f64] {
        let o = self.offset(body, h, part);
        &mut self.coeffs[o..o + self.dim]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// Copy into a loop with a different harmonic count; extra slots are zero.
    pub fn resized(&self, harmonics: usize) -> Self {
        let mut out = LoopPath::zeros(self.n_bodies, self.dim, harmonics);
        for i in 0..self.n_bodies {
            for h in 0..self.harmonics.min(harmonics) {
                for part in [Part::Cos, Part::Sin] {
                    out.coeff_mut(i, h, part).copy_from_slice(self.coeff(i, h, part));
                }
            }
        }
        out
    }

    pub(crate) fn check_system(&self, sys: &BodySystem) -> Result<()> {
        if self.n_bodies != sys.n_bodies() || self.dim != sys.dim() {
            return Err(Error::Validation(format!(
                "loop shape {}x{} does not match system {}x{}",
                self.n_bodies,
                self.dim,
                sys.n_bodies(),
                sys.dim()
            )));
        }
        Ok(())
    }

    /// Reduce `t` to `[0, 1/2)` and return the sign picked up on the way.
    fn reduce(t: f64) -> (f64, f64) {
        let mut s = t.rem_euclid(1.0);
        let mut sign = 1.0;
        if s >= 0.5 {
            s -= 0.5;
            sign = -1.0;
        }
        (s, sign)
    }

    fn series(&self, t: f64, derivative: u32) -> Configuration {
        let (s, sign) = Self::reduce(t);
        let mut out = Configuration::zeros(self.n_bodies, self.dim);
        for h in 0..self.harmonics {
            let k = Self::order(h) as f64;
            let w = TWO_PI * k;
            let (sn, cs) = (w * s).sin_cos();
            // d^n/dt^n of (cos, sin) expressed back in (cos, sin).
            let (fa, fb) = match derivative {
                0 => (cs, sn),
                1 => (-w * sn, w * cs),
                _ => (-w * w * cs, -w * w * sn),
            };
            for i in 0..self.n_bodies {
                let a = self.coeff(i, h, Part::Cos);
                let b = self.coeff(i, h, Part::Sin);
                let x = out.body_mut(i);
                for c in 0..self.dim {
                    x[c] += a[c] * fa + b[c] * fb;
                }
            }
        }
        if sign < 0.0 {
            out.as_mut_slice().iter_mut().for_each(|x| *x = -*x);
        }
        out
    }

    /// Positions `q(t)`; `t` is taken modulo 1.
    pub fn evaluate(&self, t: f64) -> Configuration {
        self.series(t, 0)
    }

    /// Termwise derivative `q̇(t)`.
    pub fn velocity(&self, t: f64) -> Configuration {
        self.series(t, 1)
    }

    /// Termwise second derivative `q̈(t)`.
    pub fn acceleration(&self, t: f64) -> Configuration {
        self.series(t, 2)
    }

    /// `‖q‖² = ∫₀¹ Σ m_i |q̇_i|² dt` in closed form (Parseval).
    pub fn norm_squared(&self, sys: &BodySystem) -> f64 {
        let mut total = 0.0;
        for (i, m) in sys.masses().iter().enumerate().take(self.n_bodies) {
            for h in 0..self.harmonics {
                let w = TWO_PI * Self::order(h) as f64;
                let amp: f64 = self.coeff(i, h, Part::Cos).iter().map(|a| a * a).sum::<f64>()
                    + self.coeff(i, h, Part::Sin).iter().map(|b| b * b).sum::<f64>();
                total += m * w * w * amp / 2.0;
            }
        }
        total
    }

    /// `q_i(0) = Σ_k a_ik`, exact from the cosine coefficients.
    pub fn start_position(&self, body: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for h in 0..self.harmonics {
            for (x, a) in p.iter_mut().zip(self.coeff(body, h, Part::Cos)) {
                *x += a;
            }
        }
        p
    }

    /// `max_i | |q_i(0)| - R |`.
    pub fn endpoint_residual(&self, radius: f64) -> f64 {
        (0..self.n_bodies)
            .map(|i| {
                let r = self.start_position(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                (r - radius).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_document(&self) -> LoopDocument {
        let coeffs = (0..self.n_bodies)
            .map(|i| {
                (0..self.harmonics)
                    .map(|h| {
                        [
                            self.coeff(i, h, Part::Cos).to_vec(),
                            self.coeff(i, h, Part::Sin).to_vec(),
                        ]
                    })
                    .collect()
            })
            .collect();
        LoopDocument {
            harmonics: self.harmonics,
            dim: self.dim,
            n_bodies: self.n_bodies,
            coeffs,
        }
    }

    pub fn from_document(doc: &LoopDocument) -> Result<Self> {
        let bad = |msg: &str| Error::Validation(format!("loop document: {msg}"));
        if doc.coeffs.len() != doc.n_bodies {
            return Err(bad("body count does not match coeffs"));
        }
        let mut flat = Vec::with_capacity(doc.n_bodies * doc.harmonics * 2 * doc.dim);
        for body in &doc.coeffs {
            if body.len() != doc.harmonics {
                return Err(bad("harmonic count does not match coeffs"));
            }
            for pair in body {
                for part in pair {
                    if part.len() != doc.dim {
                        return Err(bad("component count does not match dim"));
                    }
                    flat.extend_from_slice(part);
                }
            }
        }
        Self::from_coeffs(doc.n_bodies, doc.dim, doc.harmonics, flat)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LoopDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// JSON layout of a [`LoopPath`]: coefficients nested as
/// `[body][harmonic][cos|sin][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDocument {
    pub harmonics: usize,
    pub dim: usize,
    pub n_bodies: usize,
    pub coeffs: Vec<Vec<[Vec<f64>; 2]>>,
}

impl TryFrom<LoopDocument> for LoopPath {
    type Error = Error;

    fn try_from(doc: LoopDocument) -> Result<Self> {
        LoopPath::from_document(&doc)
    }
}

impl From<LoopPath> for LoopDocument {
    fn from(path: LoopPath) -> Self {
        path.to_document()
    }
}

/// Uniform nodes `t_m = m / n_t` on the circle with weights `1 / n_t`.
///
/// Only the `n_t` values of `cos 2πj/n_t` and `sin 2πj/n_t` are tabulated;
/// harmonic `k` at node `m` reads slot `k m mod n_t`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 4 || !nodes.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "grid needs an even node count of at least 4, got {nodes}"
            )));
        }
        let (sin, cos) = (0..nodes)
            .map(|j| (TWO_PI * j as f64 / nodes as f64).sin_cos())
            .unzip();
        Ok(Self { nodes, cos, sin })
    }

    /// Smallest node count that resolves `harmonics` odd harmonics.
    pub fn required_nodes(harmonics: usize) -> usize {
        4 * (2 * harmonics - 1)
    }

    pub fn for_harmonics(harmonics: usize) -> Result<Self> {
        Self::new(Self::required_nodes(harmonics).next_power_of_two())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.nodes as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        m as f64 / self.nodes as f64
    }

    /// `(cos 2πkt_m, sin 2πkt_m)` from the table.
    #[inline]
    pub(crate) fn trig(&self, k: usize, m: usize) -> (f64, f64) {
        let j = (k * m) % self.nodes;
        (self.cos[j], self.sin[j])
    }

    pub fn check(&self, path: &LoopPath) -> Result<()> {
        self.check_harmonics(path.harmonics())
    }

    pub fn check_harmonics(&self, harmonics: usize) -> Result<()> {
        let required = Self::required_nodes(harmonics);
        if self.nodes < required {
            return Err(Error::GridTooCoarse {
                nodes: self.nodes,
                harmonics,
                required,
            });
        }
        Ok(())
    }

    /// All node positions, laid out `[node][body][component]`.
    pub(crate) fn sample_positions(&self, path: &LoopPath, out: &mut [f64]) {
        self.sample(path, 0, out)
    }

    /// All node velocities `q̇(t_m)`, laid out like [`Self::sample_positions`].
    #[cfg(test)]
    pub(crate) fn sample_velocities(&self, path: &LoopPath, out: &mut [f64]) {
        self.sample(path, 1, out)
    }

    fn sample(&self, path: &LoopPath, derivative: u32, out: &mut [f64]) {
        let (n, d, kk) = (path.n_bodies, path.dim, path.harmonics);
        let stride = n * d;
        out.iter_mut().for_each(|x| *x = 0.0);
        for h in 0..kk {
            let k = LoopPath::order(h);
            let w = TWO_PI * k as f64;
            for m in 0..self.nodes {
                let (cs, sn) = self.trig(k, m);
                let (fa, fb) = if derivative == 0 { (cs, sn) } else { (-w * sn, w * cs) };
                let row = &mut out[m * stride..(m + 1) * stride];
                for i in 0..n {
                    let a = path.coeff(i, h, Part::Cos);
                    let b = path.coeff(i, h, Part::Sin);
                    for c in 0..d {
                        row[i * d + c] += a[c] * fa + b[c] * fb;
                    }
                }
            }
        }
    }

    /// `(1/n_t) Σ_m integrand(q(t_m))`.
    pub fn integrate<F>(&self, path: &LoopPath, mut integrand: F) -> Result<f64>
    where
        F: FnMut(&Configuration) -> Result<f64>,
    {
        let stride = path.n_bodies * path.dim;
        let mut buf = vec![0.0; self.nodes * stride];
        self.sample_positions(path, &mut buf);
        let mut total = 0.0;
        for row in buf.chunks_exact(stride) {
            let c = Configuration::from_flat(path.n_bodies, path.dim, row.to_vec())?;
            total += integrand(&c)?;
        }
        Ok(total * self.weight())
    }
}

/// Free-function form of [`QuadratureGrid::integrate`].
pub fn integrate_over_loop<F>(path: &LoopPath, grid: &QuadratureGrid, integrand: F) -> Result<f64>
where
    F: FnMut(&Configuration) -> Result<f64>,
{
    grid.integrate(path, integrand)
}
