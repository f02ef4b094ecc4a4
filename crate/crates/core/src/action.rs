//! The fixed-energy functional `f(q) = ½ ‖q‖² ∫₀¹ (H - V(q(t))) dt`.
//!
//! The kinetic factor is evaluated in closed form from the coefficients and
//! the potential integral on a [`QuadratureGrid`]. The gradient is the exact
//! gradient of this discretized functional.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::loop_space::{LoopPath, Part, QuadratureGrid};
use crate::model::{dist2, BodySystem};

/// Value of the functional and its factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub f: f64,
    /// `‖q‖²`.
    pub kinetic: f64,
    /// `∫ (H - V) dt`.
    pub mean_excess: f64,
    /// Euclidean norm of the coefficient-space gradient.
    pub grad_norm: f64,
}

/// Everything one grid pass produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ActionParts {
    pub f: f64,
    pub kinetic: f64,
    pub mean_excess: f64,
    pub mean_potential: f64,
    /// `∫ (∇V(q), q) dt`.
    pub mean_euler: f64,
    pub min_dist: f64,
}

/// Reusable scratch space for repeated evaluations on one grid.
pub(crate) struct ActionEvaluator<'a> {
    sys: &'a BodySystem,
    grid: &'a QuadratureGrid,
    positions: Vec<f64>,
    node_grad: Vec<f64>,
}

impl<'a> ActionEvaluator<'a> {
    pub fn new(sys: &'a BodySystem, grid: &'a QuadratureGrid, path: &LoopPath) -> Result<Self> {
        path.check_system(sys)?;
        grid.check(path)?;
        let stride = sys.n_bodies() * sys.dim();
        Ok(Self {
            sys,
            grid,
            positions: vec![0.0; grid.nodes() * stride],
            node_grad: vec![0.0; grid.nodes() * stride],
        })
    }

    /// Evaluate `f`, optionally writing its gradient into `grad`
    /// (same layout as the path coefficients).
    pub fn evaluate(&mut self, path: &LoopPath, grad: Option<&mut [f64]>) -> Result<ActionParts> {
        let sys = self.sys;
        let (n, d) = (sys.n_bodies(), sys.dim());
        let stride = n * d;
        let nodes = self.grid.nodes();
        self.grid.sample_positions(path, &mut self.positions);

        let mut sum_v = 0.0;
        let mut sum_euler = 0.0;
        let mut min_d2 = f64::INFINITY;
        for m in 0..nodes {
            let x = &self.positions[m * stride..(m + 1) * stride];
            let g = &mut self.node_grad[m * stride..(m + 1) * stride];
            sum_v += sys.potential_and_gradient_flat(x, g)?;
            sum_euler += g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                for j in (i + 1)..n {
                    min_d2 = min_d2.min(dist2(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]));
                }
            }
        }
        let w = self.grid.weight();
        let mean_potential = sum_v * w;
        let mean_excess = sys.energy() - mean_potential;
        let kinetic = path.norm_squared(sys);
        let f = 0.5 * kinetic * mean_excess;

        if let Some(grad) = grad {
            self.assemble_gradient(path, kinetic, mean_excess, grad);
        }
        Ok(ActionParts {
            f,
            kinetic,
            mean_excess,
            mean_potential,
            mean_euler: sum_euler * w,
            min_dist: min_d2.sqrt(),
        })
    }

    fn assemble_gradient(&self, path: &LoopPath, kinetic: f64, mean_excess: f64, grad: &mut [f64]) {
        let sys = self.sys;
        let (n, d) = (sys.n_bodies(), sys.dim());
        let stride = n * d;
        let w = self.grid.weight();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for h in 0..path.harmonics() {
            let k = LoopPath::order(h);
            let omega = 2.0 * PI * k as f64;
            // Projection of ∇V(q(t_m)) onto cos/sin of order k.
            let mut proj = vec![0.0; 2 * stride];
            for m in 0..self.grid.nodes() {
                let (cs, sn) = self.grid.trig(k, m);
                let g = &self.node_grad[m * stride..(m + 1) * stride];
                for (s, gv) in g.iter().enumerate() {
                    proj[s] += gv * cs;
                    proj[stride + s] += gv * sn;
                }
            }
            for i in 0..n {
                let stiff = sys.masses()[i] * omega * omega;
                for (p, part) in [Part::Cos, Part::Sin].into_iter().enumerate() {
                    let o = path.offset(i, h, part);
                    for c in 0..d {
                        let dk = stiff * path.coeffs()[o + c];
                        let dp = -proj[p * stride + i * d + c] * w;
                        grad[o + c] = 0.5 * mean_excess * dk + 0.5 * kinetic * dp;
                    }
                }
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `f(q)` with its factors and gradient norm.
pub fn action(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<ActionValue> {
    let mut ev = ActionEvaluator::new(sys, grid, path)?;
    let mut g = vec![0.0; path.coeffs().len()];
    let parts = ev.evaluate(path, Some(&mut g))?;
    Ok(ActionValue {
        f: parts.f,
        kinetic: parts.kinetic,
        mean_excess: parts.mean_excess,
        grad_norm: norm(&g),
    })
}

/// Coefficient-space gradient of `f`, returned in loop layout.
pub fn action_gradient(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<LoopPath> {
    let mut ev = ActionEvaluator::new(sys, grid, path)?;
    let mut g = vec![0.0; path.coeffs().len()];
    ev.evaluate(path, Some(&mut g))?;
    LoopPath::from_coeffs(path.n_bodies(), path.dim(), path.harmonics(), g)
}

/// The two evaluations of `(f'(q), q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalIdentity {
    /// `‖q‖² ∫ (H - V - ½(∇V, q)) dt`.
    pub closed_form: f64,
    /// Coefficient inner product of the gradient with `q`.
    pub inner_product: f64,
    /// Size of the terms that cancel near a critical point.
    pub scale: f64,
}

pub fn directional_identity_parts(
    sys: &BodySystem,
    path: &LoopPath,
    grid: &QuadratureGrid,
) -> Result<DirectionalIdentity> {
    let mut ev = ActionEvaluator::new(sys, grid, path)?;
    let mut g = vec![0.0; path.coeffs().len()];
    let parts = ev.evaluate(path, Some(&mut g))?;
    let inner_product = g.iter().zip(path.coeffs()).map(|(a, b)| a * b).sum();
    let closed_form = parts.kinetic * (parts.mean_excess - 0.5 * parts.mean_euler);
    Ok(DirectionalIdentity {
        closed_form,
        inner_product,
        scale: parts.kinetic * (parts.mean_excess.abs() + 0.5 * parts.mean_euler.abs()),
    })
}

/// `(f'(q), q)` in closed form, after checking it against the inner product.
pub fn directional_identity(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<f64> {
    let id = directional_identity_parts(sys, path, grid)?;
    if (id.closed_form - id.inner_product).abs() > 1e-10 * id.scale {
        return Err(Error::IdentityMismatch {
            closed_form: id.closed_form,
            inner_product: id.inner_product,
        });
    }
    Ok(id.closed_form)
}

/// `∫ (2H + (alpha - 2) V) dt`, which vanishes at free critical points.
pub fn virial_integral(sys: &BodySystem, path: &LoopPath, grid: &QuadratureGrid) -> Result<f64> {
    let mut ev = ActionEvaluator::new(sys, grid, path)?;
    let parts = ev.evaluate(path, None)?;
    Ok(2.0 * sys.energy() + (sys.alpha() - 2.0) * parts.mean_potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn circle_pair(rho: f64, k: usize) -> LoopPath {
        let mut p = LoopPath::zeros(2, 2, k);
        p.coeff_mut(0, 0, Part::Cos)[0] = rho / 2.0;
        p.coeff_mut(0, 0, Part::Sin)[1] = rho / 2.0;
        p.coeff_mut(1, 0, Part::Cos)[0] = -rho / 2.0;
        p.coeff_mut(1, 0, Part::Sin)[1] = -rho / 2.0;
        p
    }

    #[test]
    fn zero_loop_is_a_total_collision() {
        // The only loop with zero kinetic energy is q = 0, where every pair collides.
        let s = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.0).unwrap();
        let g = QuadratureGrid::new(32).unwrap();
        let p = LoopPath::zeros(2, 2, 2);
        assert_eq!(p.norm_squared(&s), 0.0);
        assert!(matches!(action(&s, &p, &g), Err(Error::Collision { .. })));
        assert!(matches!(directional_identity(&s, &p, &g), Err(Error::Collision { .. })));
    }

    #[test]
    fn circular_pair_action() {
        let s = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.5).unwrap();
        let g = QuadratureGrid::new(32).unwrap();
        let rho = 0.7;
        let p = circle_pair(rho, 4);
        let a = action(&s, &p, &g).unwrap();
        let kin = p.norm_squared(&s);
        assert_relative_eq!(a.f, 0.5 * kin * (1.5 + rho.powf(-3.0)), max_relative = 1e-13);
        assert_relative_eq!(a.f, 0.5 * a.kinetic * a.mean_excess, max_relative = 1e-15);
        assert!(a.mean_excess > s.energy());
    }

    #[test]
    fn kinetic_part_of_gradient_is_diagonal() {
        // Far-apart bodies: the potential part is negligible next to ½∫(H-V) ∂K.
        let s = BodySystem::new(vec![1.0, 2.0], 2, 4.0, 1.0).unwrap();
        let g = QuadratureGrid::new(32).unwrap();
        let mut p = LoopPath::zeros(2, 2, 3);
        p.coeff_mut(0, 0, Part::Cos)[0] = 1e3;
        p.coeff_mut(0, 1, Part::Sin)[1] = 2e2;
        p.coeff_mut(1, 0, Part::Sin)[1] = 1e3;
        let a = action(&s, &p, &g).unwrap();
        let grad = action_gradient(&s, &p, &g).unwrap();
        let w1 = 2.0 * PI;
        let w3 = 6.0 * PI;
        let expect = [
            (0, 0, Part::Cos, 0, 1.0 * w1 * w1 * 1e3),
            (0, 1, Part::Sin, 1, 1.0 * w3 * w3 * 2e2),
            (1, 0, Part::Sin, 1, 2.0 * w1 * w1 * 1e3),
        ];
        for (i, h, part, c, dk) in expect {
            assert_relative_eq!(
                grad.coeff(i, h, part)[c],
                0.5 * a.mean_excess * dk,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn directional_identity_of_zero_scaled_loop() {
        let s = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.0).unwrap();
        let g = QuadratureGrid::new(32).unwrap();
        let id = directional_identity_parts(&s, &circle_pair(0.8, 3), &g).unwrap();
        assert_relative_eq!(id.closed_form, id.inner_product, max_relative = 1e-12);
    }

    #[test]
    fn virial_vanishes_on_matched_circle() {
        // 2H + (alpha - 2) V = 0 exactly when rho^{-alpha} = 2H / (alpha - 2).
        let s = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.0).unwrap();
        let g = QuadratureGrid::new(32).unwrap();
        let rho = 0.5f64.powf(1.0 / 3.0);
        assert!(virial_integral(&s, &circle_pair(rho, 2), &g).unwrap().abs() < 1e-13);
        let id = directional_identity(&s, &circle_pair(rho, 2), &g).unwrap();
        assert!(id.abs() < 1e-12);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let s = BodySystem::new(vec![1.0, 1.0], 2, 3.0, 1.0).unwrap();
        let g = QuadratureGrid::new(16).unwrap();
        assert!(matches!(
            action(&s, &circle_pair(1.0, 8), &g),
            Err(Error::GridTooCoarse { .. })
        ));
    }
}
