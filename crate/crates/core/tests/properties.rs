use flowridge::bounds::{c_function, scalar_inequality_margin, shrink_ratio, ScalarInequality};
use flowridge::estimators::{shrinkage_map, Estimator};
use flowridge::experiments::{generate_design, Distribution, ExperimentConfig};
use flowridge::risk::{expected_l2_norm_sq, risk_bayes, PriorModel, RiskFlavor};
use flowridge::spectral::decompose;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_inequalities_hold(x in 0.0f64..1e4) {
        for which in [ScalarInequality::ExpResolvent, ScalarInequality::Shrink, ScalarInequality::Sum] {
            prop_assert!(scalar_inequality_margin(x, which).unwrap() >= -1e-12);
        }
        prop_assert!(shrink_ratio(x) <= 1.2985 + 1e-9);
        prop_assert!(c_function(x).abs() <= 0.4634 + 1e-9);
    }

    #[test]
    fn shrinkage_maps_lie_in_unit_interval_and_grow_with_s(s in 0.0f64..50.0, ds in 1e-6f64..5.0, k in 1e-3f64..1e3) {
        for est in [Estimator::Flow, Estimator::Ridge] {
            let g = shrinkage_map(est, s, k);
            let g2 = shrinkage_map(est, s + ds, k);
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!(g2 >= g);
        }
    }

    #[test]
    fn bayes_risk_decomposes_and_norm_shrinks_with_regularization(
        seed in 0u64..1000,
        n in 5usize..25,
        p in 5usize..25,
        k in 0.01f64..50.0,
    ) {
        let mut cfg = ExperimentConfig::new(Distribution::Gaussian, n, p, 0.0, seed);
        cfg.grid = vec![1.0];
        let sd = decompose(&generate_design(&cfg).unwrap());
        let prior = PriorModel::for_data(&sd, 1.0, 1.0).unwrap();
        for est in [Estimator::Flow, Estimator::Ridge] {
            let r = risk_bayes(&sd, &prior, est, est.tuning(k), &RiskFlavor::estimation()).unwrap();
            prop_assert!(r.bias_sq >= 0.0 && r.variance >= 0.0);
            prop_assert!((r.total - r.bias_sq - r.variance).abs() <= 1e-12 * r.total.max(1.0));
        }
        // More time means less flow regularization; a larger penalty means more ridge regularization.
        let f1 = expected_l2_norm_sq(&sd, &prior, Estimator::Flow, Estimator::Flow.tuning(k)).unwrap();
        let f2 = expected_l2_norm_sq(&sd, &prior, Estimator::Flow, Estimator::Flow.tuning(2.0 * k)).unwrap();
        let r1 = expected_l2_norm_sq(&sd, &prior, Estimator::Ridge, Estimator::Ridge.tuning(k)).unwrap();
        let r2 = expected_l2_norm_sq(&sd, &prior, Estimator::Ridge, Estimator::Ridge.tuning(2.0 * k)).unwrap();
        prop_assert!(f2 >= f1);
        prop_assert!(r2 <= r1);
    }
}
