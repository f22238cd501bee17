use indhead_constructor::{build_ihn, fit_all_lags, BetaGrid};
use indhead_linalg::{InputDist, Matrix, SeededRng};
use indhead_trainer::*;
use proptest::prelude::*;

const TARGET: MixedTarget = MixedTarget { alpha_star: 1.0, w_star: 0.49 };

fn small(stage: Stage) -> TrainConfig {
    TrainConfig { batch: 200, steps: 300, len: 12, stage, record_every: 1, ..TrainConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, rng_seed: proptest::test_runner::RngSeed::Fixed(42), ..ProptestConfig::default() })]

    #[test]
    fn reverse_mode_matches_central_difference(
        p1 in 0.0f64..3.0, g in -1.0f64..1.0, p in 0.0f64..3.0, h in -1.0f64..1.0, wq in -1.0f64..1.0, wk in -1.0f64..1.0,
    ) {
        let cfg = TrainConfig { batch: 64, len: 10, input: InputDist::Gaussian, ..TrainConfig::default() };
        let xs = sample_batch(&cfg, 0);
        let prm = ReducedParams { p1, g, p, h, w_q: wq, w_k: wk };
        let grad = batch_objective(&prm, &xs, &TARGET).grad;
        for j in 0..N_PARAMS {
            let e = 1e-6;
            let at = |d: f64| {
                let mut a = prm.to_array();
                a[j] += d;
                batch_objective(&ReducedParams::from_array(a), &xs, &TARGET).total()
            };
            let fd = (at(e) - at(-e)) / (2.0 * e);
            let scale = grad[j].abs().max(fd.abs()).max(1e-4);
            prop_assert!((grad[j] - fd).abs() <= 1e-5 * scale, "{}: {} vs {}", PARAM_NAMES[j], grad[j], fd);
        }
    }
}

#[test]
fn first_layer_copies_previous_token_at_large_slope() {
    let x = [0.4, -1.0, 2.0, 0.3, -0.6];
    let y = first_layer_outputs(&x, 40.0);
    for (k, ys) in y.iter().enumerate() {
        assert!((ys - x[k]).abs() < 1e-15);
    }
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
        let cfg = TrainConfig { lr: Some(0.0), optimizer, stage: Stage::Joint, steps: 20, ..small(Stage::Joint) };
        let tr = sgd_train(&cfg).unwrap();
        assert_eq!(tr.final_params, initial_params(&cfg));
    }
}

#[test]
fn symmetric_key_query_stays_balanced() {
    let cfg = small(Stage::II);
    let tr = sgd_train(&cfg).unwrap();
    let bound = 4.0 * cfg.effective_lr() * tr.max_abs_grad * cfg.steps as f64;
    for r in &tr.records {
        assert!((r.params.w_q.powi(2) - r.params.w_k.powi(2)).abs() <= bound);
    }
    assert_eq!(tr.final_params.w_q, tr.final_params.w_k);
}

#[test]
fn unequal_key_query_gap_within_discrete_bound() {
    // One SGD step maps w_Q² − w_K² to (w_Q² − w_K²)(1 − lr² G²) for G = ∂L/∂(w_Q w_K).
    let cfg = small(Stage::II);
    let xs = sample_batch(&cfg, 0);
    let prm = ReducedParams { w_q: 0.3, w_k: 0.1, ..initial_params(&cfg) };
    let ev = batch_objective(&prm, &xs, &TARGET);
    let lr = 0.1;
    let (q, k) = (prm.w_q - lr * ev.grad[4], prm.w_k - lr * ev.grad[5]);
    let gv = ev.grad[4] / prm.w_k;
    let expect = (0.09 - 0.01) * (1.0 - lr * lr * gv * gv);
    assert!((q * q - k * k - expect).abs() < 1e-15);
}

#[test]
fn stage_two_reduces_both_losses() {
    let cfg = TrainConfig { steps: 3000, ..small(Stage::II) };
    let tr = sgd_train(&cfg).unwrap();
    let sm = tr.smoothed(100);
    let (first, last) = (sm[0], *sm.last().unwrap());
    assert!(last.0 < 0.05 * first.0, "{first:?} → {last:?}");
    assert!(last.1 < first.1, "{first:?} → {last:?}");
}

#[test]
fn stage_one_increases_the_first_slope() {
    let cfg = TrainConfig { steps: 500, ..small(Stage::I) };
    let tr = sgd_train(&cfg).unwrap();
    assert!(tr.final_params.p1 > cfg.sigma_init);
}

#[test]
fn adam_path_runs_and_descends() {
    let cfg = TrainConfig { optimizer: Optimizer::Adam, lr: Some(5e-3), steps: 1000, ..small(Stage::II) };
    let tr = sgd_train(&cfg).unwrap();
    let sm = tr.smoothed(100);
    assert!(sm.last().unwrap().0 < sm[0].0);
}

#[test]
fn csv_has_source_column() {
    let cfg = TrainConfig { steps: 3, record_every: 1, ..small(Stage::II) };
    let mut buf = Vec::new();
    sgd_train(&cfg).unwrap().write_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), TRAIN_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[8] == "sgd"));
}

fn boolean_seqs(count: usize, len: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| rng.sample(InputDist::Boolean, len, 1)).collect()
}

fn constructed_ihn(n: usize, heads: usize) -> indhead_transformer::TransformerParams {
    let fits = fit_all_lags(n, heads, 64, &BetaGrid::default()).unwrap();
    build_ihn(n, &Matrix::identity(n - 1), heads, &fits).unwrap()
}

#[test]
fn residual_identity_probe_is_exact() {
    let net = constructed_ihn(4, 16);
    let rep = probe_first_layer(&net, 1, &boolean_seqs(50, 16, 3)).unwrap();
    assert!(rep.loss < 1e-10, "{rep:?}");
}

#[test]
fn constructed_layer_beats_random_layer() {
    let net = constructed_ihn(4, 16);
    let seqs = boolean_seqs(200, 16, 5);
    let good = probe_first_layer(&net, 4, &seqs).unwrap();
    let bad = probe_first_layer(&random_first_layer(&net, 9), 4, &seqs).unwrap();
    assert!(good.loss < bad.loss, "{good:?} vs {bad:?}");
}

#[test]
fn constructed_probe_within_patch_error_budget() {
    // Reading the copied patch coordinates is one admissible probe, so the
    // optimal residual is at most ε·√(rows·n·d) with ε the worst patch error.
    let seqs = boolean_seqs(300, 16, 11);
    for heads in [16, 32] {
        let net = constructed_ihn(4, heads);
        let rep = probe_first_layer(&net, 4, &seqs).unwrap();
        let eps = seqs.iter().map(|s| indhead_constructor::layer1_patch_error(&net, 4, s).unwrap()).fold(0.0, f64::max);
        assert!(rep.loss <= eps * ((rep.rows * 4) as f64).sqrt(), "H={heads}: {rep:?}, ε = {eps}");
    }
}
