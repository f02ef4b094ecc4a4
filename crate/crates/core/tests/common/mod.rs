#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strongforce::{initial_loop, min_pairwise_distance, BodySystem, LoopPath, Part, QuadratureGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pair(alpha: f64, energy: f64) -> BodySystem {
    BodySystem::new(vec![1.0, 1.0], 2, alpha, energy).unwrap()
}

/// Random system with `n` bodies in dimension `d`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, d: usize, alpha: f64) -> BodySystem {
    let masses = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    BodySystem::new(masses, d, alpha, rng.random_range(0.2..3.0)).unwrap()
}

/// Smallest pairwise distance over the grid nodes.
pub fn grid_min_dist(path: &LoopPath, grid: &QuadratureGrid) -> f64 {
    (0..grid.nodes())
        .map(|m| min_pairwise_distance(&path.evaluate(grid.node(m))))
        .fold(f64::INFINITY, f64::min)
}

/// Comparison loop with random radius plus random higher harmonics and a
/// random first-harmonic tilt, resampled until the grid stays collision-free.
pub fn random_path(rng: &mut ChaCha8Rng, sys: &BodySystem, harmonics: usize, grid: &QuadratureGrid) -> LoopPath {
    loop {
        let radius = rng.random_range(0.5..2.0);
        let mut p = initial_loop(sys, radius, harmonics, rng.random(), 0.1).unwrap();
        for i in 0..sys.n_bodies() {
            for part in [Part::Cos, Part::Sin] {
                for x in p.coeff_mut(i, 0, part) {
                    *x += 0.2 * radius * rng.random_range(-1.0..1.0);
                }
            }
        }
        if grid_min_dist(&p, grid) > 0.1 * radius {
            return p;
        }
    }
}

/// Central-difference gradient of `g` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut g: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let fp = g(&y);
            y[j] = x[j] - h;
            let fm = g(&y);
            y[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖∞ / ‖b‖∞`.
pub fn rel_err_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den
}
