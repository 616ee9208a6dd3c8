mod common;

use length_collapse::attention::{
    estimate_score_stats, fenton_params, monte_carlo_log_sum, norm_lemma_check, sample_attention, sample_logits,
    sigma_a, sigma_a_sweep, softmax_rows, theorem2_check, theorem3_bound, AttentionConfig, AttentionMatrix,
};
use length_collapse::rng;
use length_collapse::spectral::FeatureMatrix;
use length_collapse::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_attention_is_row_stochastic(n in 1usize..80, d in 1usize..40, tau in 0.05..=1.0f64, seed: u64) {
        let a = sample_attention(&AttentionConfig::new(n, d).with_tau(tau).with_seed(seed)).unwrap();
        for row in a.as_matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-10);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn lower_temperature_sharpens_every_row(n in 2usize..40, seed: u64) {
        let logits = sample_logits(&AttentionConfig::new(n, 8).with_seed(seed));
        let taus = [1.0, 0.8, 0.5, 0.25, 0.1];
        let maxima: Vec<Vec<f64>> = taus
            .iter()
            .map(|&t| softmax_rows(&logits, t).row_iter().map(|r| r.max()).collect())
            .collect();
        for w in maxima.windows(2) {
            for (hot, cold) in w[0].iter().zip(&w[1]) {
                prop_assert!(cold + 1e-15 >= *hot);
            }
        }
    }

    #[test]
    fn theorem2_sides_match_direct_evaluation(n in 2usize..48, d in 1usize..12, d_out in 1usize..12, seed: u64) {
        let mut r = rng::seeded(seed);
        let a = sample_attention(&AttentionConfig::new(n, 8).with_seed(seed ^ 1)).unwrap();
        let x = rng::gaussian_matrix(&mut r, n, d, 1.0).add_scalar(0.5);
        let w = rng::gaussian_matrix(&mut r, d, d_out, 1.0);
        let report = theorem2_check(&FeatureMatrix::new(x.clone()).unwrap(), &a, &w, 1e-9).unwrap();

        let lhs = common::centred_frobenius(&(a.as_matrix() * &x * &w));
        let sigma = common::jacobi_spectral_norm(&(common::centring_matrix(n) * a.as_matrix()));
        let rhs = sigma * common::jacobi_spectral_norm(&w) * common::centred_frobenius(&x);
        prop_assert!(common::rel_err(report.lhs, lhs) <= 1e-9 || (report.lhs - lhs).abs() <= 1e-12);
        prop_assert!(common::rel_err(report.rhs, rhs) <= 1e-9);
        prop_assert!(report.holds);
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn norm_lemma_holds_and_matches_jacobi(m in 1usize..20, k in 1usize..20, p in 1usize..20, seed: u64) {
        let mut r = rng::seeded(seed);
        let a = rng::gaussian_matrix(&mut r, m, k, 2.0);
        let b = rng::gaussian_matrix(&mut r, k, p, 0.5);
        let [left, right] = norm_lemma_check(&a, &b, 1e-9).unwrap();
        prop_assert!(left.holds && right.holds);
        let oracle_left = common::jacobi_spectral_norm(&a) * b.norm();
        let oracle_right = a.norm() * common::jacobi_spectral_norm(&b);
        prop_assert!(common::rel_err(left.rhs, oracle_left) <= 1e-9);
        prop_assert!(common::rel_err(right.rhs, oracle_right) <= 1e-9);
    }
}

#[test]
fn theorem2_degenerate_inputs() {
    let a = sample_attention(&AttentionConfig::new(6, 4).with_seed(3)).unwrap();
    let flat = FeatureMatrix::new(DMatrix::from_fn(6, 3, |_, j| j as f64 + 1.0)).unwrap();
    let w = DMatrix::from_element(3, 2, 0.7);
    let r = theorem2_check(&flat, &a, &w, 1e-9).unwrap();
    assert_eq!((r.lhs, r.rhs, r.holds), (0.0, 0.0, true));

    let x = FeatureMatrix::new(DMatrix::from_fn(6, 3, |i, j| (i * j) as f64)).unwrap();
    let r = theorem2_check(&x, &a, &DMatrix::zeros(3, 2), 1e-9).unwrap();
    assert_eq!((r.lhs, r.rhs, r.holds), (0.0, 0.0, true));

    assert!(theorem2_check(&x, &a, &DMatrix::zeros(4, 2), 1e-9).is_err());
}

#[test]
fn filter_rate_extremes() {
    assert!(sigma_a(&AttentionMatrix::uniform(9)) < 1e-12);
    assert!((sigma_a(&AttentionMatrix::identity(9)) - 1.0).abs() < 1e-12);
}

#[test]
fn theorem3_bound_is_monotone_on_grids() {
    let sigmas = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0];
    for &s in &sigmas {
        for n in 2..300 {
            assert!(theorem3_bound(n + 1, s) < theorem3_bound(n, s), "n={n} sigma={s}");
        }
    }
    for n in [2, 3, 8, 64, 512] {
        for w in sigmas.windows(2) {
            assert!(theorem3_bound(n, w[1]) > theorem3_bound(n, w[0]));
        }
    }
    assert_eq!(theorem3_bound(1, 0.3), 1.0);
}

#[test]
fn score_spread_matches_the_product_of_scales() {
    // 16 trials of 256 x 256 logits is 1,048,576 pooled values.
    for (sq, sk) in [(1.0, 1.0), (2.0, 0.5)] {
        let cfg = AttentionConfig::new(256, 64).with_sigmas(sq, sk).with_seed(17);
        let stats = estimate_score_stats(&cfg, 16).unwrap();
        assert!((stats.sigma_s - 1.0).abs() <= 0.02, "{stats:?}");
        assert!(stats.c_cross.abs() <= 0.04, "{stats:?}");
        assert!((stats.tau_s * stats.sigma_s - 1.0).abs() < 1e-15);
    }
}

#[test]
fn fenton_against_monte_carlo() {
    let p = fenton_params(100, 0.5).unwrap();
    let mc = monte_carlo_log_sum(100, 0.5, 100_000, 5).unwrap();
    assert!(common::rel_err(mc.mean, p.mu_sum) <= 0.10);
    assert!(common::rel_err(mc.variance, p.sigma_sum_sq) <= 0.10);
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_log_sum(10, 1.0, 5_500, 9).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn sweep_directions() {
    let base = AttentionConfig::new(2, 32).with_seed(4);
    let two = sigma_a_sweep(&[2], &base, 50).unwrap();
    assert!(two[0].sigma_a_mean <= 1.0);

    let hot = sigma_a_sweep(&[128], &base, 20).unwrap();
    let cold = sigma_a_sweep(&[128], &base.with_tau(0.5), 20).unwrap();
    assert!(cold[0].sigma_a_mean > hot[0].sigma_a_mean);
    assert_eq!(hot, sigma_a_sweep(&[128], &base, 20).unwrap());
}

#[test]
fn sampling_is_bit_deterministic() {
    let cfg = AttentionConfig::new(17, 5).with_seed(99);
    assert_eq!(sample_attention(&cfg).unwrap(), sample_attention(&cfg).unwrap());
    assert_ne!(
        sample_attention(&cfg).unwrap().as_matrix(),
        sample_attention(&cfg.with_seed(100)).unwrap().as_matrix()
    );
}
