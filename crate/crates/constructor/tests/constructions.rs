use indhead_constructor::*;
use indhead_linalg::{InputDist, Matrix, SeededRng};
use indhead_targets::{eval_ihn, sample_sequences, Predictor};
use indhead_transformer::forward_last;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

#[test]
fn lag_one_error_nonincreasing_in_heads() {
    let errs: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&h| fit_indicator_kernel(1, h, 256, &BetaGrid::default()).unwrap().ell1_error)
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn every_lag_error_nonincreasing_in_heads() {
    for lag in 2..=5 {
        let errs: Vec<f64> = (1..=24)
            .map(|h| fit_indicator_kernel(lag, h, 128, &BetaGrid::default()).unwrap().ell1_error)
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "lag {lag}: {errs:?}");
    }
}

#[test]
fn lag_three_sixteen_heads() {
    let fit = fit_indicator_kernel(3, 16, 256, &BetaGrid::default()).unwrap();
    assert!(fit.ell1_error < 0.05, "{}", fit.ell1_error);
    assert_eq!(fit.heads(), 16);
    assert!(fit.terms.iter().all(|&(_, b)| b > 0.0));
    // Reported error matches its definition.
    assert_eq!(fit.ell1_error, ell1_error(3, &fit.terms, 256));
}

#[test]
fn ihn_end_to_end_within_six_times_patch_error() {
    let n = 4;
    let mut rng = SeededRng::new(42);
    let w = rng.sample(InputDist::Gaussian, 3, 3);
    let fits = fit_all_lags(n, 16, 64, &BetaGrid::default()).unwrap();
    let budget: f64 = fits.iter().map(|f| f.ell1_error).sum();
    let net = build_ihn(n, &w, 16, &fits).unwrap();
    for x in sample_sequences(&mut rng, 1000, 16, 1, InputDist::Boolean) {
        let eps = layer1_patch_error(&net, n, &x).unwrap();
        assert!(eps <= budget, "{eps} > {budget}");
        let err = (forward_last(&x, &net).unwrap()[0] - eval_ihn(&x, n, &w).unwrap()[0]).abs();
        assert!(err <= 6.0 * w.norm_l11() * eps, "{err} vs ε = {eps}");
    }
}

#[test]
fn ihn_doubling_heads_reduces_error() {
    let n = 4;
    let w = Matrix::identity(3);
    let seqs = sample_sequences(&mut SeededRng::new(7), 2000, 16, 1, InputDist::Boolean);
    let errs: Vec<f64> = [16, 32]
        .iter()
        .map(|&h| {
            let net = build_ihn(n, &w, h, &fit_all_lags(n, h, 64, &BetaGrid::default()).unwrap()).unwrap();
            let target = indhead_targets::InductionTarget::Ihn { n, w_star: w.clone() };
            indhead_targets::approx_error_on(&target, &net, indhead_targets::ErrorNorm::Inf, &seqs).unwrap().value
        })
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn ffn_affine_exact() {
    // The always-active pair reproduces any affine function of one variable.
    let f = fit_basis_ffn(&|u: &[f64]| -1.3 * u[0] + 0.25, 2, &DomainBox::cube(1, -2.0, 2.0), 100, 42).unwrap();
    assert!(f.heldout_max_error < 1e-8, "{}", f.heldout_max_error);
}

#[test]
fn ffn_cosine_width_64() {
    let dom = DomainBox::cube(1, -2.0, 2.0);
    let f = fit_basis_ffn(&|u: &[f64]| (std::f64::consts::PI * u[0]).cos(), 64, &dom, 2000, 42).unwrap();
    assert!(!f.ridge_fallback);
    assert!(f.heldout_max_error < 0.05, "{}", f.heldout_max_error);
}

#[test]
fn ffn_error_nonincreasing_in_width() {
    let dom = DomainBox::cube(1, -2.0, 2.0);
    let errs: Vec<f64> = [8, 32, 128]
        .iter()
        .map(|&m| fit_basis_ffn(&|u: &[f64]| (std::f64::consts::PI * u[0]).cos(), m, &dom, 2000, 42).unwrap().heldout_max_error)
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn ffn_feature_sets_nested() {
    let dom = DomainBox::cube(2, 0.0, 1.0);
    let basis = |u: &[f64]| u[0] * u[1];
    let small = fit_basis_ffn(&basis, 8, &dom, 200, 9).unwrap();
    let large = fit_basis_ffn(&basis, 32, &dom, 200, 9).unwrap();
    for m in 0..8 {
        assert_eq!(small.inner.row(m), large.inner.row(m));
        assert_eq!(small.bias[m], large.bias[m]);
    }
}

/// Truncation of an orthonormal POD: `E[(g − g_K)²] = Σ_{k>K} σ_k²` exactly
/// for independent uniform patches, and `|g − g_K| ≤ C∞² Σ_{k>K} σ_k` pointwise.
#[test]
fn pod_truncation_error() {
    let pod = PodSpec::synthetic(1.0, 64, 1).unwrap();
    let g = pod.similarity();
    let mut rng = SeededRng::new(42);
    let pairs: Vec<([f64; 1], [f64; 1])> = (0..10_000).map(|_| ([rng.uniform()], [rng.uniform()])).collect();
    for k in [1, 2, 4, 8, 16] {
        let gk = pod_truncate(&pod, k).unwrap();
        let sq: Vec<f64> = pairs.iter().map(|(u, v)| (g.eval(u, v) - gk.eval(u, v)).powi(2)).collect();
        let n = sq.len() as f64;
        let mse = sq.iter().sum::<f64>() / n;
        let se = (sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let exact: f64 = pod.sigma[k..].iter().map(|s| s * s).sum();
        assert!((mse - exact).abs() <= 3.0 * se, "K = {k}: {mse} vs {exact} ± {se}");
        let cap = pod.c_inf.powi(2) * pod.tail(k);
        assert!(sq.iter().all(|&s| s.sqrt() <= cap + 1e-12));
    }
}

#[test]
fn choose_k_nondecreasing_in_sample_count() {
    for len in [8, 16, 64] {
        let ks: Vec<usize> = (2..20).map(|e| choose_k(1 << e, len, 1.0, 500)).collect();
        assert!(ks.windows(2).all(|w| w[1] >= w[0]), "{ks:?}");
    }
}

/// Exact bases and `K = K_max`: only the layer-1 (kernel) error path remains.
#[test]
fn gihn_exact_bases_reduce_to_kernel_path() {
    let pod = PodSpec::synthetic(1.0, 6, 1).unwrap();
    let seqs = sample_sequences(&mut SeededRng::new(42), 300, 12, 1, InputDist::Uniform);
    let g = pod.similarity();
    for h in [1, 2, 4] {
        let fit = fit_indicator_kernel(1, h, 64, &BetaGrid::Explicit([2.0, 4.0, 1.0, 3.0][..h].to_vec())).unwrap();
        let nets = fit_pod_bases(&pod, 6, 8, &DomainBox::cube(1, -0.1, 1.1), 200, 1).unwrap();
        let net = build_gihn(2, 1, &pod, 6, &nets, h, &[fit.clone()]).unwrap();
        let mut worst = 0.0f64;
        for x in &seqs {
            let exact_bases = pod_on_layer1(&net, &pod, 6, 2, x).unwrap();
            let target = indhead_targets::eval_gihn(x, 2, &g).unwrap();
            let eps = layer1_patch_error(&net, 2, x).unwrap();
            assert!(eps <= fit.ell1_error + 1e-12);
            // Logit perturbation ≤ Σσ_k C∞ C_lip ε; softmax is 2-Lipschitz in ℓ1 and tokens lie in [0, 1].
            let shift: f64 = pod.sigma.iter().sum::<f64>() * pod.c_inf * pod.c_lip * eps;
            let diff = (exact_bases[0] - target[0]).abs();
            assert!(diff <= 2.0 * shift + 1e-12, "{diff} vs {shift}");
            worst = worst.max(diff);
        }
        let d = decompose_error(&net, &pod, 6, 2, &seqs).unwrap();
        assert_eq!(d.truncation_term, 0.0);
        assert!(d.kernel_term <= worst);
    }
}

#[test]
fn gihn_decomposition_triangle_inequality() {
    let pod = PodSpec::synthetic(1.0, 32, 1).unwrap();
    let seqs = sample_sequences(&mut SeededRng::new(42), 500, 16, 1, InputDist::Uniform);
    let nets = fit_pod_bases(&pod, 4, 16, &DomainBox::cube(1, -0.1, 1.1), 1000, 42).unwrap();
    let fit = fit_indicator_kernel(1, 2, 64, &BetaGrid::default()).unwrap();
    let net = build_gihn(2, 1, &pod, 4, &nets, 2, &[fit]).unwrap();
    let d = decompose_error(&net, &pod, 4, 2, &seqs).unwrap();
    assert!(d.total <= d.sum_of_terms() + 1e-9, "{d:?}");
    assert!(d.truncation_term > d.kernel_term);
}

#[test]
fn constructed_weights_roundtrip_json() {
    let fits = fit_all_lags(3, 6, 64, &BetaGrid::default()).unwrap();
    let net = build_ihn(3, &Matrix::identity(2), 6, &fits).unwrap();
    let json = serde_json::to_string(&net).unwrap();
    let back: indhead_transformer::TransformerParams = serde_json::from_str(&json).unwrap();
    let x = SeededRng::new(1).sample(InputDist::Boolean, 10, 1);
    assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
}

proptest! {
    #![proptest_config(Config { cases: 256, rng_seed: RngSeed::Fixed(42), ..Config::default() })]

    #[test]
    fn partition_positive_finite(beta in 1e-9f64..700.0) {
        let z = partition(beta);
        prop_assert!(z.is_finite() && z >= 1.0);
    }

    #[test]
    fn ih2_second_layer_norms(entries in prop::collection::vec(-3.0f64..3.0, 4), p1 in 0.1f64..20.0) {
        let w = Matrix::from_vec(2, 2, entries).unwrap();
        let net = build_ih2(&w, p1).unwrap();
        let head = &net.layers[1].heads[0];
        let cap = w.norm_frobenius().max(1.0);
        prop_assert!(head.w_q.norm_spectral() <= cap + 1e-9);
        prop_assert!(head.w_k.norm_spectral() <= cap + 1e-9);
    }

    #[test]
    fn allocation_conserves_heads(n in 2usize..40, extra in 0usize..200) {
        let h = n - 1 + extra;
        let a = allocate_heads(n, h).unwrap();
        prop_assert_eq!(a.len(), n - 1);
        prop_assert_eq!(a.iter().sum::<usize>(), h);
        prop_assert!(a.iter().all(|&x| x >= 1));
    }
}
