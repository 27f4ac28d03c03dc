mod common;

use common::{brute_conv_same, brute_maxpool, conv_layer, max_abs_diff, qp_oracle, random_tensor, rng};
use convfeat::nn::{conv2d_same, maxpool};
use convfeat::svm::{
    grid_search, solve, svm_from_container, svm_to_container, KernelSource, KernelSpec, SolverParams, SvmConfig, SvmParams, Targets, TrainedSvm,
    VectorKernel,
};
use proptest::prelude::*;
use rand::Rng;

fn blobs(seed: u64, n: usize, d: usize, gap: f64) -> (Vec<Vec<f64>>, Vec<u32>) {
    let mut r = rng(seed);
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let x = labels.iter().map(|&l| (0..d).map(|_| r.random_range(-1.0..1.0) + gap * l as f64).collect()).collect();
    (x, labels)
}

#[test]
fn tight_tolerance_matches_the_projected_gradient_optimum() {
    let params = SolverParams { tol: 1e-7, ..Default::default() };
    for seed in 0..6 {
        let (x, labels) = blobs(seed, 30, 3, 0.8);
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let kernel = if seed % 2 == 0 { KernelSpec::Linear } else { KernelSpec::Rbf { gamma: 0.5 } };
        let src = VectorKernel { x: &x, kernel };
        let k: Vec<Vec<f64>> = (0..x.len()).map(|i| (0..x.len()).map(|j| src.entry(i, j)).collect()).collect();
        let s = solve(&src, &y, &vec![-1.0; x.len()], 4.0, &params).unwrap();
        let (_, want) = qp_oracle(&k, &y, 4.0);
        assert!((s.objective - want).abs() <= 1e-7 * want.abs(), "seed {seed}: {} vs {want}", s.objective);
    }
}

#[test]
fn separable_blobs_are_classified_perfectly() {
    let (x, labels) = blobs(1, 40, 4, 5.0);
    let cfg = SvmConfig { kernel: KernelSpec::Linear, c: 8.0 };
    let model = TrainedSvm::fit(&x, Targets::Classes(&labels), &cfg, &SvmParams::default()).unwrap();
    for (row, &l) in x.iter().zip(&labels) {
        assert_eq!(model.predict_class(row).unwrap(), l);
    }
}

#[test]
fn stored_classifier_predicts_like_the_original() {
    let (x, labels) = blobs(2, 30, 3, 1.0);
    let cfg = SvmConfig { kernel: KernelSpec::Rbf { gamma: 0.25 }, c: 2.0 };
    let model = TrainedSvm::fit(&x, Targets::Classes(&labels), &cfg, &SvmParams::default()).unwrap();
    let back = svm_from_container(&svm_to_container(&model).unwrap()).unwrap();
    assert_eq!(back.config(), cfg);
    for row in &x {
        assert_eq!(back.predict_class(row).unwrap(), model.predict_class(row).unwrap());
    }
}

#[test]
fn regressor_tracks_a_linear_target() {
    let mut r = rng(3);
    let x: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v[0] - v[1]).collect();
    let cfg = SvmConfig { kernel: KernelSpec::Linear, c: 32.0 };
    let model = TrainedSvm::fit(&x, Targets::Values(&y), &cfg, &SvmParams::default()).unwrap();
    let worst = x.iter().zip(&y).map(|(v, t)| (model.predict_value(v).unwrap() - t).abs()).fold(0.0, f64::max);
    assert!(worst < 0.2, "worst residual {worst}");
}

#[test]
fn grid_search_keeps_the_first_best_config() {
    let (x, labels) = blobs(4, 24, 2, 6.0);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..3)
        .map(|k| {
            let (valid, fit): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|i| i % 3 == k);
            (fit, valid)
        })
        .collect();
    let res = grid_search(&x, Targets::Classes(&labels), &Default::default(), &splits, &SvmParams::default()).unwrap();
    let top = res.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.best_index, res.scores.iter().position(|&s| s == top).unwrap());
    assert_eq!(res.configs.len(), 4 + 4 * 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_brute_force(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, kh in 0usize..3, kw in 0usize..3) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, &[1, 2, h, w]);
        let wt = random_tensor(&mut r, &[2, 2, 2 * kh + 1, 2 * kw + 1]);
        let bias = vec![0.3, -0.1];
        let want = brute_conv_same(&x, &wt, &bias);
        let got = conv2d_same(&x, &conv_layer(wt, bias)).unwrap();
        prop_assert!(max_abs_diff(got.data(), want.data()) < 1e-12);
    }

    #[test]
    fn pool_matches_brute_force(seed in any::<u64>(), h in 1usize..10, w in 1usize..10, ph in 1usize..5, pw in 1usize..5) {
        let x = random_tensor(&mut rng(seed), &[2, 1, h, w]);
        let got = maxpool(&x, (ph, pw)).unwrap();
        let want = brute_maxpool(&x, (ph, pw));
        prop_assert_eq!(got.shape(), want.shape());
        prop_assert_eq!(got.data(), want.data());
    }
}
