use matmono_core::linalg::{c, from_real_diag, padded_identity, CMat};
use matmono_core::random::{complex_gaussian, random_psd};
use matmono_core::structure::{solve_joint, solve_weighted, GainObjective};
use matmono_core::waterfill::waterfill_capped;
use matmono_core::{PowerConstraint, Tolerances};
use matmono_oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn capacity(gains: &[f64], powers: &[f64]) -> f64 {
    gains.iter().zip(powers).map(|(g, p)| (g * p).ln_1p()).sum()
}

#[test]
fn grid_reaches_closed_form_utility() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let n = rng.random_range(1..=3);
        let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
        let budget = rng.random_range(0.2..3.0);
        let cap = rng.random_range(0.3..2.0);
        let grid = grid_waterfill(&gains, budget, Some(cap), 1e-3).unwrap();
        let exact = waterfill_capped(&gains, budget, cap).unwrap().powers;
        assert!(grid.iter().sum::<f64>() <= budget + 1e-12 && grid.iter().all(|p| *p <= cap + 1e-12));
        assert!(capacity(&gains, &exact) >= capacity(&gains, &grid) - 1e-12);
        // A cap that binds off the grid costs up to one step of marginal utility.
        let gmax = gains.iter().copied().fold(0.0, f64::max);
        assert!(capacity(&gains, &exact) - capacity(&gains, &grid) < 1e-3 * gmax);
    }
}

#[test]
fn grid_rejects_bad_input() {
    assert!(grid_waterfill(&[], 1.0, None, 1e-3).is_err());
    assert!(grid_waterfill(&[1.0; 4], 1.0, None, 1e-3).is_err());
    assert!(grid_waterfill(&[1.0], 0.0, None, 1e-3).is_err());
    assert!(grid_waterfill(&[1.0], 1.0, Some(0.0), 1e-3).is_err());
}

#[test]
fn projected_gradient_matches_joint_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let pi = random_psd(&mut rng, 3, 3) * c(3.0);
        let k = [PowerConstraint::Joint { total: 2.5, cap: 1.4 }];
        let sol = solve_joint(&pi, 2.5, 1.4, 3, &GainObjective::Capacity).unwrap();
        let obj = LogDet { pi: pi.clone(), cols: 3 };
        let closed = obj.value(&[sol.dense.clone()]).unwrap();
        let opts = PgOptions { restarts: 3, ..PgOptions::default() };
        let (rep, _) = projected_gradient_restarts(&obj, &k, &[padded_identity(3, 3) * c(0.5)], &opts).unwrap();
        assert!(rep.feasibility_residual <= 1e-6);
        assert!((rep.best_objective - closed).abs() < 1e-5 * closed, "{} vs {closed}", rep.best_objective);
    }
}

#[test]
fn projected_gradient_matches_per_antenna_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = PowerConstraint::per_antenna(&[1.2, 0.8, 0.5]);
    let PowerConstraint::Weighted { terms } = &k else { unreachable!() };
    for _ in 0..4 {
        let pi = random_psd(&mut rng, 3, 3) * c(2.0);
        let sol = solve_weighted(&pi, terms, 2, &GainObjective::Capacity, None, &Tolerances::DEFAULT).unwrap();
        let obj = LogDet { pi, cols: 2 };
        let closed = obj.value(&[sol.dense.clone()]).unwrap();
        let opts = PgOptions { restarts: 3, ..PgOptions::default() };
        let init = k.scaled_identity_init(3, 2).unwrap();
        let (rep, _) = projected_gradient_restarts(&obj, std::slice::from_ref(&k), &[init], &opts).unwrap();
        assert!(closed >= rep.best_objective - 1e-5 * closed, "{closed} < {}", rep.best_objective);
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let channels: Vec<CMat> = (0..2).map(|_| complex_gaussian(&mut rng, 4, 2, 1.0)).collect();
    let uplink = UplinkSumRate {
        channels,
        noise_cov: from_real_diag(&[0.5, 0.7, 1.0, 0.4]),
        weights: vec![from_real_diag(&[1.0, 0.5]), from_real_diag(&[2.0, 1.0])],
    };
    let xs: Vec<CMat> = (0..2).map(|_| complex_gaussian(&mut rng, 2, 2, 1.0)).collect();
    let dir: Vec<CMat> = (0..2).map(|_| complex_gaussian(&mut rng, 2, 2, 1.0)).collect();
    assert!(gradient_check(&uplink, &xs, &dir).unwrap() < 1e-6);
    let single = LogDet { pi: random_psd(&mut rng, 3, 3), cols: 2 };
    let x = complex_gaussian(&mut rng, 3, 2, 1.0);
    let d = complex_gaussian(&mut rng, 3, 2, 1.0);
    assert!(gradient_check(&single, &[x], &[d]).unwrap() < 1e-6);
}

#[test]
fn dominance_check_flags_interior_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pi = random_psd(&mut rng, 3, 3);
    let k = PowerConstraint::Joint { total: 2.0, cap: 1.0 };
    let sol = solve_joint(&pi, 2.0, 1.0, 3, &GainObjective::Capacity).unwrap();
    assert!(pareto_dominance_check(&sol.dense, &pi, &k, 2000, &mut rng).unwrap());
    let shrunk = &sol.dense * c(0.5);
    assert!(!pareto_dominance_check(&shrunk, &pi, &k, 2000, &mut rng).unwrap());
}

#[test]
fn projections_land_in_the_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in [
        PowerConstraint::sum_power(1.0),
        PowerConstraint::Joint { total: 2.0, cap: 0.8 },
        PowerConstraint::per_antenna(&[0.3, 1.0, 2.0]),
        PowerConstraint::Shaping { shape: random_psd(&mut rng, 3, 3) + CMat::identity(3, 3) * c(0.1) },
    ] {
        let p = Projector::new(&k, 3).unwrap();
        for _ in 0..20 {
            let x = complex_gaussian(&mut rng, 3, 2, 4.0);
            let y = p.project(&x).unwrap();
            assert!(k.relative_violation(&y.matrix).unwrap() <= 1e-6);
            let z = p.project(&y.matrix).unwrap();
            assert!(matmono_core::linalg::frobenius(&(&z.matrix - &y.matrix)) < 1e-6);
        }
    }
}
