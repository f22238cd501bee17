use indhead_linalg::{column_softmax, softmax, Matrix, MASKED};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn cfg() -> Config {
    Config { cases: 1000, rng_seed: RngSeed::Fixed(42), ..Config::default() }
}

fn logit_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=64).prop_flat_map(|n| {
        (prop::collection::vec(-30.0..30.0f64, n), prop::collection::vec(-30.0..30.0f64, n))
    })
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn lipschitz_in_sup_norm((a, b) in logit_pair()) {
        let sa = softmax(&a).unwrap();
        let sb = softmax(&b).unwrap();
        let l1: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
        let sup = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(l1 <= 2.0 * sup + 1e-15, "l1 {l1} > 2 * {sup}");
    }

    #[test]
    fn columns_sum_to_one_and_ignore_shifts(
        col in prop::collection::vec(prop_oneof![4 => -50.0..50.0f64, 1 => Just(MASKED)], 1..40),
        shift in -100.0..100.0f64,
    ) {
        prop_assume!(col.iter().any(|&x| x != MASKED));
        let m = Matrix::column_vector(&col);
        let s = column_softmax(&m).unwrap();
        let total: f64 = s.entries().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (x, p) in col.iter().zip(s.entries()) {
            if *x == MASKED { prop_assert_eq!(*p, 0.0); } else { prop_assert!(*p >= 0.0); }
        }
        let shifted = Matrix::column_vector(&col.iter().map(|&x| if x == MASKED { x } else { x + shift }).collect::<Vec<_>>());
        let s2 = column_softmax(&shifted).unwrap();
        for (p, q) in s.entries().iter().zip(s2.entries()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
