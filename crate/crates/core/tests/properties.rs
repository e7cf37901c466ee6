use bayes_deeponet::bayes::{energy, swap_probability, EnergySpec, Prior, SwapInputs};
use bayes_deeponet::metrics::{coverage_ratio, relative_errors, PredictionBand};
use bayes_deeponet::{rng, Activation, DeepOnetShape, Mat, MlpShape, TrainingBatch};
use proptest::prelude::*;
use rand::Rng;

fn small_shape() -> DeepOnetShape {
    DeepOnetShape::uniform(3, 1, 4, &[5], Activation::Tanh).unwrap()
}

fn random_batch(seed: u64, rows: usize, shape: &DeepOnetShape) -> TrainingBatch<f64> {
    let mut r = rng::stream(seed, 99);
    let m = shape.sensors();
    let u = (0..rows * m).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = (0..rows).map(|_| r.random_range(0.0..1.0)).collect();
    let t = (0..rows).map(|_| r.random_range(-1.0..1.0)).collect();
    TrainingBatch::new(Mat::from_vec(rows, m, u), Mat::from_vec(rows, 1, y), t).unwrap()
}

fn permute(b: &TrainingBatch<f64>, order: &[usize]) -> TrainingBatch<f64> {
    let u: Vec<&[f64]> = order.iter().map(|&i| b.u.row(i)).collect();
    let y: Vec<&[f64]> = order.iter().map(|&i| b.y.row(i)).collect();
    let t = order.iter().map(|&i| b.targets[i]).collect();
    TrainingBatch::new(Mat::from_rows(&u), Mat::from_rows(&y), t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        rng_seed: proptest::test_runner::RngSeed::Fixed(20),
        ..ProptestConfig::default()
    })]

    #[test]
    fn loss_ignores_row_order(seed in 0u64..1000, rows in 2usize..12, rot in 1usize..11) {
        let shape = small_shape();
        let theta = shape.glorot_init::<f64, _>(&mut rng::stream(seed, 0));
        let b = random_batch(seed, rows, &shape);
        let order: Vec<usize> = (0..rows).map(|i| (i + rot) % rows).rev().collect();
        let a = shape.loss(&theta, &b).unwrap();
        let p = shape.loss(&theta, &permute(&b, &order)).unwrap();
        prop_assert!((a - p).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn gradient_is_linear_in_scale(seed in 0u64..1000, s in 0.01f64..50.0) {
        let shape = small_shape();
        let theta = shape.glorot_init::<f64, _>(&mut rng::stream(seed, 0));
        let b = random_batch(seed, 6, &shape);
        let g1 = shape.grad(&theta, &b, 1.0).unwrap();
        let gs = shape.grad(&theta, &b, s).unwrap();
        let norm = g1.iter().fold(0.0f64, |m, v| m.max(v.abs())) * s;
        for (x, y) in g1.iter().zip(gs.iter()) {
            prop_assert!((s * x - y).abs() <= 1e-12 * norm.max(1e-12));
        }
    }

    #[test]
    fn flatten_round_trips(seed in 0u64..1000, h1 in 1usize..6, h2 in 1usize..6) {
        let shape = MlpShape::new(vec![3, h1, h2, 2], Activation::Relu).unwrap();
        let theta = shape.glorot_init::<f64, _>(&mut rng::stream(seed, 0));
        let (w, b) = shape.unflatten(&theta).unwrap();
        prop_assert_eq!(shape.flatten(&w, &b).unwrap(), theta);
    }

    #[test]
    fn swap_rate_grows_with_energy_gap(
        base in -50.0f64..50.0,
        gap in 0.0f64..20.0,
        extra in 0.001f64..5.0,
        tau1 in 0.1f64..2.0,
        ratio in 1.5f64..20.0,
        sigma in 0.0f64..0.5,
    ) {
        let rate = |d: f64| swap_probability(&SwapInputs {
            u1_at_theta1: base + d,
            u1_at_theta2: base,
            u2_at_theta1: base + d,
            u2_at_theta2: base,
            tau1,
            tau2: tau1 * ratio,
            a1: 0.5,
            a2: 0.5,
            sigma1: sigma,
            sigma2: sigma,
        }).unwrap();
        prop_assert!(rate(gap + extra) > rate(gap));
    }

    #[test]
    fn larger_variance_never_raises_swap_rate(gap in -10.0f64..10.0, s in 0.0f64..1.0, ds in 0.0f64..1.0) {
        let rate = |sigma: f64| swap_probability(&SwapInputs {
            u1_at_theta1: gap,
            u1_at_theta2: 0.0,
            u2_at_theta1: gap,
            u2_at_theta2: 0.0,
            tau1: 1.0,
            tau2: 4.0,
            a1: 0.3,
            a2: 0.7,
            sigma1: sigma,
            sigma2: sigma,
        }).unwrap();
        prop_assert!(rate(s + ds) <= rate(s));
    }

    #[test]
    fn relative_errors_are_scale_free(
        seed in 0u64..1000,
        len in 1usize..40,
        c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        let mut r = rng::stream(seed, 5);
        let truth: Vec<f64> = (0..len).map(|_| r.random_range(0.5..2.0)).collect();
        let pred: Vec<f64> = (0..len).map(|_| r.random_range(-2.0..2.0)).collect();
        let (a1, a2) = relative_errors(&pred, &truth).unwrap();
        let sp: Vec<f64> = pred.iter().map(|v| c * v).collect();
        let st: Vec<f64> = truth.iter().map(|v| c * v).collect();
        let (b1, b2) = relative_errors(&sp, &st).unwrap();
        prop_assert!((a1 - b1).abs() <= 1e-9 * a1.max(1.0));
        prop_assert!((a2 - b2).abs() <= 1e-9 * a2.max(1.0));
    }

    #[test]
    fn wider_band_covers_at_least_as_much(seed in 0u64..1000, k in 0.0f64..4.0, dk in 0.0f64..4.0) {
        let mut r = rng::stream(seed, 6);
        let p = 30;
        let members: Vec<Vec<f64>> = (0..5).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let truth: Vec<f64> = (0..p).map(|_| r.random_range(-1.5..1.5)).collect();
        let mesh = Mat::from_vec(p, 1, (0..p).map(|i| i as f64).collect());
        let narrow = PredictionBand::from_members(&members, mesh.clone(), truth.clone(), k).unwrap();
        let wide = PredictionBand::from_members(&members, mesh, truth, k + dk).unwrap();
        prop_assert!(coverage_ratio(&wide) >= coverage_ratio(&narrow));
    }

    #[test]
    fn band_mean_is_member_average(seed in 0u64..1000, m in 2usize..8) {
        let mut r = rng::stream(seed, 7);
        let p = 12;
        let members: Vec<Vec<f64>> = (0..m).map(|_| (0..p).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let mesh = Mat::from_vec(p, 1, vec![0.0; p]);
        let band = PredictionBand::from_members(&members, mesh, vec![1.0; p], 2.0).unwrap();
        for i in 0..p {
            let avg = members.iter().map(|v| v[i]).sum::<f64>() / m as f64;
            prop_assert!((band.mean[i] - avg).abs() < 1e-12);
            prop_assert!(band.lower[i] <= band.mean[i] && band.mean[i] <= band.upper[i]);
        }
    }

    #[test]
    fn minibatch_energy_averages_to_full_energy(seed in 0u64..200, total in 3usize..7) {
        let shape = small_shape();
        let theta = shape.glorot_init::<f64, _>(&mut rng::stream(seed, 0));
        let data = random_batch(seed, total, &shape);
        let spec = EnergySpec::new(0.3, Prior::Gaussian { sigma: 2.0 }, total, 2).unwrap();
        let full = energy(&shape, &theta, &data, &spec, true).unwrap();
        let mut sum = 0.0;
        let mut count = 0.0;
        for i in 0..total {
            for j in i + 1..total {
                sum += energy(&shape, &theta, &permute(&data, &[i, j]), &spec, false).unwrap();
                count += 1.0;
            }
        }
        prop_assert!((sum / count - full).abs() <= 1e-10 * full.abs().max(1.0));
    }
}
