//! Property tests over the public API.

use amcert_core::adapt::{adaptation_h, am_update, constrain_step, AdaptationState, AmConfig, RecursionVariant};
use amcert_core::{derive_seed, mt_bound, run_am_chain, ConstraintSchedule, SpdMatrix, Target};
use nalgebra::DVector;
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bound_identities(lambda in 0.0f64..0.99, b in 0.1f64..50.0, delta in 0.01f64..1.0) {
        let cb = mt_bound(lambda, b, delta).unwrap();
        let gamma = (4.0 * b + 2.0 * delta * lambda * b) / (delta * delta);
        prop_assert!((cb.gamma - gamma).abs() <= 1e-12 * gamma);
        prop_assert!((cb.lambda_check - (lambda + gamma) / (1.0 + gamma)).abs() <= 1e-15);
        prop_assert_eq!(cb.b_check, b + gamma);
        prop_assert!(cb.one_minus_vartheta > 0.0);
        prop_assert!((cb.one_minus_rho - 0.5 * cb.one_minus_vartheta).abs() <= 1e-15 * cb.one_minus_vartheta.max(1e-300));
        prop_assert!(cb.log_l >= (1.0 + cb.gamma).ln() - 1e-12);
    }

    #[test]
    fn updates_keep_the_floor(xs in proptest::collection::vec(point(2), 1..40), original in any::<bool>()) {
        let mut cfg = AmConfig::for_dim(2);
        if original {
            cfg.recursion_variant = RecursionVariant::Original;
        }
        let mut s = AdaptationState::new(DVector::zeros(2), SpdMatrix::scaled_identity(2, cfg.kappa), 0).unwrap();
        for x in &xs {
            s = am_update(&s, &DVector::from_vec(x.clone()), &cfg).unwrap();
            prop_assert!(s.cov.min_eigenvalue() >= cfg.kappa - 1e-12);
            prop_assert!(s.cov.certified_floor() <= s.cov.min_eigenvalue() + 1e-12);
        }
    }

    #[test]
    fn projection_stays_in_the_set(xs in proptest::collection::vec(point(2), 1..40), t in 1.5f64..20.0) {
        let cfg = AmConfig::for_dim(2);
        let sched = ConstraintSchedule::enabled(t, 0.05);
        let mut s = AdaptationState::new(DVector::zeros(2), SpdMatrix::identity(2), 0).unwrap();
        for x in &xs {
            let n = s.n + 1;
            let inc = adaptation_h(&s, &DVector::from_vec(x.clone()), cfg.kappa).unwrap().scaled(cfg.weight(n));
            let (next, _) = constrain_step(&s, &inc, n, &sched).unwrap();
            prop_assert!(next.norm() <= sched.bound(n) || next.norm() == s.norm());
            prop_assert_eq!(next.n, n);
            s = next;
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct(root in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(derive_seed(root, i), derive_seed(root, i));
        prop_assert_ne!(derive_seed(root, i), derive_seed(root, i + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chains_are_pure_functions_of_the_seed(seed in any::<u64>()) {
        let t = Target::standard_gaussian(2);
        let cfg = AmConfig::for_dim(2);
        let x0 = DVector::zeros(2);
        let s0 = SpdMatrix::identity(2);
        let a = run_am_chain(&cfg, &ConstraintSchedule::default(), &t, &x0, &s0, 300, seed).unwrap();
        let b = run_am_chain(&cfg, &ConstraintSchedule::default(), &t, &x0, &s0, 300, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
