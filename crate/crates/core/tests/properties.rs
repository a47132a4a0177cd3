use matmono_core::linalg::{frobenius, hermitian_part, sorted_evd, unitarity_error, CMat};
use matmono_core::majorization::{majorizes_additive, majorizes_multiplicative};
use matmono_core::random::{complex_gaussian, random_pd, random_unitary};
use matmono_core::waterfill::{waterfill, waterfill_capped};
use matmono_core::PowerConstraint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hermitian(seed: u64, n: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = complex_gaussian(&mut rng, n, n, 1.0);
    hermitian_part(&(&g + g.adjoint()))
}

/// Doubly stochastic mixing `D = sum w_k P_k` of cyclic shifts, so `D y` is
/// majorized by `y`.
fn mix(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let total: f64 = w.iter().sum();
    (0..n)
        .map(|i| w.iter().enumerate().map(|(k, wk)| wk * y[(i + k) % n]).sum::<f64>() / total)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_majorization_is_reflexive(v in prop::collection::vec(-10.0f64..10.0, 1..6)) {
        prop_assert!(majorizes_additive(&v, &v).unwrap());
        let mut rev = v.clone();
        rev.reverse();
        prop_assert!(majorizes_additive(&rev, &v).unwrap());
    }

    #[test]
    fn additive_majorization_is_transitive(
        y in prop::collection::vec(0.0f64..10.0, 4),
        w1 in prop::collection::vec(0.01f64..1.0, 4),
        w2 in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        let x = mix(&y, &w1);
        let z = mix(&x, &w2);
        prop_assert!(majorizes_additive(&x, &y).unwrap());
        prop_assert!(majorizes_additive(&z, &x).unwrap());
        prop_assert!(majorizes_additive(&z, &y).unwrap());
    }

    #[test]
    fn multiplicative_majorization_is_reflexive_and_transitive(
        y in prop::collection::vec(-2.0f64..2.0, 4),
        w1 in prop::collection::vec(0.01f64..1.0, 4),
        w2 in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        // x majorized by y additively on the logs <=> multiplicatively.
        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let ex: Vec<f64> = mix(&y, &w1).iter().map(|v| v.exp()).collect();
        let ez: Vec<f64> = mix(&mix(&y, &w1), &w2).iter().map(|v| v.exp()).collect();
        prop_assert!(majorizes_multiplicative(&ey, &ey).unwrap());
        prop_assert!(majorizes_multiplicative(&ex, &ey).unwrap());
        prop_assert!(majorizes_multiplicative(&ez, &ex).unwrap());
        prop_assert!(majorizes_multiplicative(&ez, &ey).unwrap());
    }

    #[test]
    fn evd_is_deterministic_sorted_and_exact(seed in any::<u64>(), n in 1usize..6) {
        let a = hermitian(seed, n);
        let e1 = sorted_evd(&a).unwrap();
        let e2 = sorted_evd(&a).unwrap();
        prop_assert_eq!(&e1.values, &e2.values);
        prop_assert_eq!(&e1.vectors, &e2.vectors);
        prop_assert!(e1.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(unitarity_error(&e1.vectors) < 1e-12);
        prop_assert!(frobenius(&(e1.map(|v| v) - &a)) < 1e-10 * frobenius(&a).max(1.0));
    }

    #[test]
    fn constraints_are_right_unitarily_invariant(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = complex_gaussian(&mut rng, rows, cols, 1.0);
        let q = random_unitary(&mut rng, cols);
        let budgets: Vec<f64> = (0..rows).map(|i| 0.5 + i as f64).collect();
        for k in [
            PowerConstraint::sum_power(2.0),
            PowerConstraint::per_antenna(&budgets),
            PowerConstraint::Joint { total: 2.0, cap: 1.4 },
            PowerConstraint::Shaping { shape: random_pd(&mut rng, rows, 0.5, 2.0) },
        ] {
            let a = k.violation(&f).unwrap();
            let b = k.violation(&(&f * &q)).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn waterfilling_satisfies_kkt(
        gains in prop::collection::vec(0.0f64..10.0, 1..6),
        budget in 0.01f64..10.0,
        cap in 0.05f64..5.0,
    ) {
        for (r, cap) in [(waterfill(&gains, budget).unwrap(), f64::INFINITY), (waterfill_capped(&gains, budget, cap).unwrap(), cap)] {
            let used: f64 = r.powers.iter().sum();
            let live = gains.iter().filter(|g| **g > 0.0).count() as f64;
            prop_assert!(used <= budget * (1.0 + 1e-12));
            if live > 0.0 {
                prop_assert!((used - budget.min(live * cap)).abs() < 1e-9 * budget);
            }
            // Every mode below the cap with positive power sits at the water level.
            for (p, g) in r.powers.iter().zip(&gains) {
                prop_assert!(*p >= 0.0 && *p <= cap * (1.0 + 1e-12));
                if *p > 1e-12 && *p < cap - 1e-12 {
                    prop_assert!((p + 1.0 / g - r.water_level).abs() < 1e-9 * r.water_level.max(1.0));
                }
                if *p == 0.0 && *g > 0.0 {
                    prop_assert!(1.0 / g >= r.water_level - 1e-9 * r.water_level.max(1.0));
                }
            }
        }
    }
}

#[test]
fn evd_of_diagonal_sorts_descending() {
    let a = matmono_core::linalg::from_real_diag(&[1.0, 3.0, 2.0]);
    let e = sorted_evd(&a).unwrap();
    assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
    for (col, row) in [(0, 1), (1, 2), (2, 0)] {
        assert!((e.vectors[(row, col)].norm() - 1.0).abs() < 1e-14);
    }
}
