use approx::assert_relative_eq;
use pfbound::bound_full::{batch_accumulate, bound_value, build_bound, BoundParams};
use pfbound::bound_lowrank::{build_lowrank_bound, NormalizerMode};
use pfbound::linalg::SymMat;
use pfbound::linear_model::{
    loss_gradient, regularized_loss, sample_gradient, softmax, FeatureList, FeatureMap,
    LabeledDataset,
};
use pfbound::optimizers::{lspfb_step, pfb_batch_step, sgd_step, spfb_step};
use proptest::collection::vec;
use proptest::prelude::*;

fn features(n: usize, d: usize) -> impl Strategy<Value = FeatureList> {
    vec(-3.0..3.0f64, n * d).prop_map(move |data| FeatureList::new(n, d, data).unwrap())
}

fn instance() -> impl Strategy<Value = (Vec<f64>, FeatureList)> {
    (1usize..=6, 1usize..=8).prop_flat_map(|(d, n)| (vec(-2.0..2.0f64, d), features(n, d)))
}

fn dataset() -> impl Strategy<Value = (LabeledDataset, FeatureMap)> {
    (2usize..=4, 1usize..=4, 3usize..=12).prop_flat_map(|(n, p, t)| {
        (vec(-2.0..2.0f64, t * p), vec(0..n, t)).prop_map(move |(x, y)| {
            (
                LabeledDataset::new(x, y, n, p).unwrap(),
                FeatureMap::block_one_hot(n, p),
            )
        })
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(scores in vec(-50.0..50.0f64, 1..10)) {
        let p = softmax(&scores);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_central_differences(
        (data, map) in dataset(),
        lambda in 0.0..1.0f64,
        seed in vec(-1.0..1.0f64, 16),
    ) {
        let theta: Vec<f64> = (0..map.dim()).map(|i| seed[i % seed.len()]).collect();
        let g = loss_gradient(&theta, &data, lambda, &map).unwrap();
        let h = 1e-5;
        let mut probe = theta.clone();
        for i in 0..theta.len() {
            probe[i] = theta[i] + h;
            let up = regularized_loss(&probe, &data, lambda, &map).unwrap();
            probe[i] = theta[i] - h;
            let down = regularized_loss(&probe, &data, lambda, &map).unwrap();
            probe[i] = theta[i];
            prop_assert!((g[i] - (up - down) / (2.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn shifting_all_features_translates_the_bound(
        (theta, f) in instance(),
        shift_seed in vec(-2.0..2.0f64, 6),
    ) {
        let d = f.dim();
        let c = &shift_seed[..d];
        let rows: Vec<Vec<f64>> = f
            .rows()
            .map(|r| r.iter().zip(c).map(|(a, b)| a + b).collect())
            .collect();
        let shifted = FeatureList::from_rows(&rows).unwrap();
        let a = build_bound(&theta, &f).unwrap();
        let b = build_bound(&theta, &shifted).unwrap();
        let tc: f64 = theta.iter().zip(c).map(|(x, y)| x * y).sum();
        prop_assert!((b.log_z - a.log_z - tc).abs() < 1e-10 * a.log_z.abs().max(1.0));
        let mu_shift: Vec<f64> = a.mu.iter().zip(c).map(|(m, ci)| m + ci).collect();
        prop_assert!(max_abs_diff(&b.mu, &mu_shift) < 1e-10);
        prop_assert!(max_abs_diff(b.sigma.as_slice(), a.sigma.as_slice()) < 1e-10);
    }

    #[test]
    fn rescaling_features_and_parameters_rescales_the_bound(
        (theta, f) in instance(),
        s in 0.25..4.0f64,
    ) {
        let scaled = FeatureList::new(f.n(), f.dim(), f.rows().flatten().map(|v| v * s).collect()).unwrap();
        let theta_s: Vec<f64> = theta.iter().map(|t| t / s).collect();
        let a = build_bound(&theta, &f).unwrap();
        let b = build_bound(&theta_s, &scaled).unwrap();
        assert_relative_eq!(a.log_z, b.log_z, max_relative = 1e-10, epsilon = 1e-12);
        let mu_s: Vec<f64> = a.mu.iter().map(|m| m * s).collect();
        prop_assert!(max_abs_diff(&b.mu, &mu_s) < 1e-9 * s.max(1.0));
        let sig_s: Vec<f64> = a.sigma.as_slice().iter().map(|v| v * s * s).collect();
        prop_assert!(max_abs_diff(b.sigma.as_slice(), &sig_s) < 1e-9 * (s * s).max(1.0));
    }

    #[test]
    fn batch_accumulation_ignores_order(
        theta in vec(-1.0..1.0f64, 4),
        lists in vec(features(3, 4), 1..6),
    ) {
        let mut bounds: Vec<BoundParams> = lists.iter().map(|f| build_bound(&theta, f).unwrap()).collect();
        let (s1, m1) = batch_accumulate(&bounds).unwrap();
        bounds.reverse();
        let (s2, m2) = batch_accumulate(&bounds).unwrap();
        prop_assert!(max_abs_diff(s1.as_slice(), s2.as_slice()) < 1e-12);
        prop_assert!(max_abs_diff(&m1, &m2) < 1e-12);
    }

    #[test]
    fn full_rank_lowrank_step_equals_dense_step(
        (theta, f) in instance(),
        lambda in 0.05..1.0f64,
        eta in 0.1..2.0f64,
        label in 0usize..8,
    ) {
        let d = f.dim();
        let y = label % f.n();
        let dense = build_bound(&theta, &f).unwrap();
        let low = build_lowrank_bound(&theta, std::slice::from_ref(&f), d, NormalizerMode::PerSample).unwrap();
        prop_assert!(low.diag.iter().all(|&x| x == 0.0));
        let a = spfb_step(&theta, &dense, f.row(y), eta, lambda).unwrap();
        let b = lspfb_step(&theta, &low, f.row(y), eta, lambda).unwrap();
        let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(max_abs_diff(&a, &b) < 1e-8 * scale);
    }

    #[test]
    fn unit_step_batch_update_never_increases_the_loss(
        (data, map) in dataset(),
        lambda in 0.01..1.0f64,
    ) {
        let mut theta = vec![0.0; map.dim()];
        let mut prev = regularized_loss(&theta, &data, lambda, &map).unwrap();
        for _ in 0..5 {
            theta = pfb_batch_step(&theta, &data, 1.0, lambda, &map).unwrap();
            let cur = regularized_loss(&theta, &data, lambda, &map).unwrap();
            prop_assert!(cur <= prev + 1e-12 * prev.abs().max(1.0));
            prev = cur;
        }
    }

    #[test]
    fn flat_curvature_with_unit_lambda_is_an_sgd_step(
        (data, map) in dataset(),
        theta_seed in vec(-1.0..1.0f64, 16),
        eta in 0.01..1.0f64,
    ) {
        let theta: Vec<f64> = (0..map.dim()).map(|i| theta_seed[i % 16]).collect();
        let x = data.x(0);
        let y = data.label(0);
        let f = map.feature_list(x);
        let flat = BoundParams {
            log_z: f.log_partition(&theta),
            mu: f.softmax_mean(&theta),
            sigma: SymMat::zeros(map.dim()),
        };
        let a = spfb_step(&theta, &flat, f.row(y), eta, 1.0).unwrap();
        let g = sample_gradient(&theta, x, y, 1.0, &map).unwrap();
        let b = sgd_step(&theta, &g, eta).unwrap();
        prop_assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn bound_is_tangent_at_the_expansion_point((theta, f) in instance()) {
        let b = build_bound(&theta, &f).unwrap();
        let exact = f.log_partition(&theta);
        let v = bound_value(&b, &theta, &theta).unwrap();
        prop_assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1.0));
    }
}
