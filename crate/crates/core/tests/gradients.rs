use bayes_deeponet::bayes::{energy, energy_grad, EnergySpec, Prior};
use bayes_deeponet::nn::finite_diff_grad;
use bayes_deeponet::{rng, Activation, Block, DeepOnetShape, Mat, TrainingBatch};
use rand::Rng;

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

/// Function-grouped batch: each sensor row is repeated for several queries,
/// and query points repeat across functions.
fn grouped_batch(seed: u64, shape: &DeepOnetShape, functions: usize, per: usize) -> TrainingBatch<f64> {
    let mut r = rng::stream(seed, 11);
    let m = shape.sensors();
    let grid: Vec<f64> = (0..per).map(|i| (i as f64 + 0.5) / per as f64).collect();
    let (mut u, mut y, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..functions {
        let f: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        for &g in &grid {
            u.extend_from_slice(&f);
            y.push(g);
            t.push(r.random_range(-0.5..0.5));
        }
    }
    let n = functions * per;
    TrainingBatch::new(Mat::from_vec(n, m, u), Mat::from_vec(n, 1, y), t).unwrap()
}

#[test]
fn repeated_rows_still_match_finite_differences() {
    for (seed, act) in [(1, Activation::Tanh), (2, Activation::Tanh), (3, Activation::Relu)] {
        let shape = DeepOnetShape::uniform(6, 1, 5, &[7, 6], act).unwrap();
        let theta = shape.glorot_init::<f64, _>(&mut rng::stream(seed, 0));
        let batch = grouped_batch(seed, &shape, 3, 4);
        let spec = EnergySpec::new(0.5, Prior::Gaussian { sigma: 3.0 }, 40, batch.len()).unwrap();
        let g = energy_grad(&shape, &theta, &batch, &spec).unwrap();
        let fd = finite_diff_grad(|p| energy(&shape, p, &batch, &spec, false).unwrap(), &theta, 1e-6).unwrap();
        let err = max_rel_err(&g, &fd);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn block_gradients_partition_the_full_gradient() {
    let shape = DeepOnetShape::uniform(5, 2, 4, &[6], Activation::Tanh).unwrap();
    let theta = shape.glorot_init::<f64, _>(&mut rng::stream(4, 0));
    let mut r = rng::stream(4, 1);
    let n = 9;
    let batch = TrainingBatch::new(
        Mat::from_vec(n, 5, (0..n * 5).map(|_| r.random_range(-1.0..1.0)).collect()),
        Mat::from_vec(n, 2, (0..n * 2).map(|_| r.random_range(0.0..1.0)).collect()),
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let mut all = vec![0.0; shape.num_params()];
    let mut br = vec![1.0; shape.num_params()];
    let mut tr = vec![1.0; shape.num_params()];
    shape.grad_into(&theta, &batch, 0.7, Block::All, None, &mut all).unwrap();
    shape.grad_into(&theta, &batch, 0.7, Block::Branch, None, &mut br).unwrap();
    shape.grad_into(&theta, &batch, 0.7, Block::Trunk, None, &mut tr).unwrap();
    for i in 0..all.len() {
        assert_eq!(all[i], br[i] + tr[i], "coordinate {i}");
    }
    assert!(br[shape.trunk_range()].iter().all(|&v| v == 0.0));
    assert!(tr[shape.branch_range()].iter().all(|&v| v == 0.0));
}

#[test]
fn single_precision_gradient_tracks_double() {
    let shape = DeepOnetShape::uniform(4, 1, 3, &[5], Activation::Tanh).unwrap();
    let theta = shape.glorot_init::<f64, _>(&mut rng::stream(8, 0));
    let batch = grouped_batch(8, &shape, 2, 3);
    let g64 = shape.grad(&theta, &batch, 1.0).unwrap();
    let theta32: Vec<f32> = theta.iter().map(|&v| v as f32).collect();
    let b32 = TrainingBatch::new(
        Mat::from_vec(batch.len(), 4, batch.u.as_slice().iter().map(|&v| v as f32).collect()),
        Mat::from_vec(batch.len(), 1, batch.y.as_slice().iter().map(|&v| v as f32).collect()),
        batch.targets.iter().map(|&v| v as f32).collect(),
    )
    .unwrap();
    let g32 = shape.grad(&theta32, &b32, 1.0).unwrap();
    let widened: Vec<f64> = g32.iter().map(|&v| v as f64).collect();
    assert!(max_rel_err(&widened, &g64) < 1e-4);
}
