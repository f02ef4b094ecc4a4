mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use strongforce::action::directional_identity_parts;
use strongforce::*;

fn random_config(seed: u64, n: usize, d: usize) -> Configuration {
    let mut r = rng(seed);
    loop {
        let data = (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect();
        let c = Configuration::from_flat(n, d, data).unwrap();
        if min_pairwise_distance(&c) > 0.2 {
            return c;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_homogeneous(seed: u64, n in 2usize..5, d in 2usize..4, alpha in 2.1f64..6.0, lambda in 0.2f64..5.0) {
        let sys = random_system(&mut rng(seed), n, d, alpha);
        let c = random_config(seed, n, d);
        let v = potential(&sys, &c).unwrap();
        let vs = potential(&sys, &c.scaled(lambda)).unwrap();
        prop_assert!((vs - lambda.powf(-alpha) * v).abs() <= 1e-12 * vs.abs());
    }

    #[test]
    fn euler_identity_holds(seed: u64, n in 2usize..5, d in 2usize..4, alpha in 2.1f64..6.0) {
        let sys = random_system(&mut rng(seed), n, d, alpha);
        let c = random_config(seed, n, d);
        let v = potential(&sys, &c).unwrap();
        let g = potential_gradient(&sys, &c).unwrap();
        prop_assert!((g.dot(&c) + alpha * v).abs() <= 1e-11 * v.abs());
    }

    #[test]
    fn potential_is_translation_invariant(seed: u64, n in 2usize..5, d in 2usize..4, shift in -3.0f64..3.0) {
        let sys = random_system(&mut rng(seed), n, d, 3.0);
        let c = random_config(seed, n, d);
        let w = vec![shift; d];
        let v = potential(&sys, &c).unwrap();
        let vt = potential(&sys, &c.translated(&w)).unwrap();
        prop_assert!((v - vt).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn potential_gradient_matches_differences(seed: u64, n in 2usize..4, d in 2usize..4, alpha in 2.1f64..5.0) {
        let sys = random_system(&mut rng(seed), n, d, alpha);
        let c = random_config(seed, n, d);
        let g = potential_gradient(&sys, &c).unwrap();
        let fd = fd_gradient(c.as_slice(), 1e-6, |x| {
            potential(&sys, &Configuration::from_flat(n, d, x.to_vec()).unwrap()).unwrap()
        });
        prop_assert!(rel_err_inf(g.as_slice(), &fd) < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn action_gradient_matches_differences(seed: u64, n in 2usize..4, d in 2usize..4, a in 0usize..3) {
        let alpha = [2.5, 3.0, 4.0][a];
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, d, alpha);
        let grid = QuadratureGrid::for_harmonics(3).unwrap();
        let p = random_path(&mut r, &sys, 3, &grid);
        let g = action_gradient(&sys, &p, &grid).unwrap();
        let fd = fd_gradient(p.coeffs(), 1e-6, |x| {
            let q = LoopPath::from_coeffs(n, d, 3, x.to_vec()).unwrap();
            action(&sys, &q, &grid).unwrap().f
        });
        prop_assert!(rel_err_inf(g.coeffs(), &fd) < 1e-6);
    }

    #[test]
    fn action_dominates_energy_bound(seed: u64, n in 2usize..4, d in 2usize..4, a in 0usize..3) {
        let alpha = [2.5, 3.0, 4.0][a];
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, d, alpha);
        let grid = QuadratureGrid::for_harmonics(4).unwrap();
        let p = random_path(&mut r, &sys, 4, &grid);
        let v = action(&sys, &p, &grid).unwrap();
        prop_assert!(v.f >= 0.5 * sys.energy() * v.kinetic);
    }

    #[test]
    fn directional_derivative_closed_form_agrees(seed: u64, n in 2usize..4, d in 2usize..4) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, d, 3.0);
        let grid = QuadratureGrid::for_harmonics(4).unwrap();
        let p = random_path(&mut r, &sys, 4, &grid);
        let id = directional_identity_parts(&sys, &p, &grid).unwrap();
        prop_assert!((id.closed_form - id.inner_product).abs() <= 1e-10 * id.scale);
        prop_assert!(directional_identity(&sys, &p, &grid).is_ok());
    }

    #[test]
    fn action_is_scale_covariant(seed: u64, lambda in 0.3f64..3.0) {
        // f(λq) = ½λ²‖q‖² (H - λ^{-α}∫V): check against the factors at q.
        let mut r = rng(seed);
        let sys = random_system(&mut r, 2, 2, 3.0);
        let grid = QuadratureGrid::for_harmonics(4).unwrap();
        let p = random_path(&mut r, &sys, 4, &grid);
        let v = action(&sys, &p, &grid).unwrap();
        let mean_v = sys.energy() - v.mean_excess;
        let expect = 0.5 * lambda * lambda * v.kinetic * (sys.energy() - lambda.powf(-3.0) * mean_v);
        let got = action(&sys, &p.scaled(lambda), &grid).unwrap().f;
        prop_assert!((got - expect).abs() <= 1e-12 * expect.abs());
    }
}
