use bayes_deeponet::bayes::{EnergySpec, Prior};
use bayes_deeponet::data_gen::{build_dataset, DatasetSpec, OperatorDataset, Problem};
use bayes_deeponet::metrics::{evaluate_ensemble, test_errors};
use bayes_deeponet::samplers::{
    adam_dropout_train, m_resgld_train, resgld_train, AdamConfig, Batching, SamplerConfig,
};
use bayes_deeponet::{rng, Activation, DeepOnetShape};

fn small_dataset(problem: Problem, seed: u64) -> OperatorDataset {
    let mut spec = DatasetSpec::new(problem);
    spec.problem.sensors = 20;
    spec.n_traj = 30;
    spec.p_queries = 10;
    spec.n_test = 4;
    spec.seed = seed;
    build_dataset(&spec).unwrap()
}

fn sampler_config(n: usize) -> SamplerConfig {
    let sigma: f64 = 0.01;
    SamplerConfig {
        epochs: 60,
        burn_in_epochs: 30,
        batch_size: 50,
        ensemble_size: 5,
        eval_every: 5,
        tau1: 0.01,
        tau2: 1.0,
        eta1: 0.02 * 2.0 * sigma * sigma / n as f64,
        eta2: 0.02 * 2.0 * sigma * sigma / n as f64,
        ..Default::default()
    }
}

#[test]
fn replica_runs_are_reproducible_and_evaluable() {
    let data = small_dataset(Problem::Antiderivative, 3);
    let train = data.train_set::<f64>();
    let tests = data.test_set::<f64>();
    let shape = DeepOnetShape::uniform(20, 1, 8, &[12], Activation::Tanh).unwrap();
    let init = shape.glorot_init::<f64, _>(&mut rng::stream(3, rng::ids::INIT));
    let config = sampler_config(train.len());
    let spec = EnergySpec::new(0.01, Prior::None, train.len(), config.batch_size).unwrap();
    for accelerated in [false, true] {
        let run = || {
            let mut eval = |p: &[f64]| test_errors(&shape, p, &tests);
            if accelerated {
                m_resgld_train(&shape, &init, &train, &config, &spec, Some(&mut eval)).unwrap()
            } else {
                resgld_train(&shape, &init, &train, &config, &spec, Some(&mut eval)).unwrap()
            }
        };
        let (ens_a, diag_a) = run();
        let (ens_b, diag_b) = run();
        assert_eq!(ens_a, ens_b);
        assert_eq!(diag_a.errors, diag_b.errors);
        assert_eq!(diag_a.swaps, diag_b.swaps);
        assert_eq!(ens_a.len(), 5);
        assert_eq!(diag_a.errors.len(), 12);
        assert_eq!(diag_a.swaps.len(), 60);
        let metrics = evaluate_ensemble(&ens_a, &shape, &tests).unwrap();
        assert_eq!(metrics.len(), 4);
        assert!(metrics.iter().all(|m| m.e1.is_finite() && (0.0..=100.0).contains(&m.e3)));
    }
}

#[test]
fn adam_baseline_lowers_the_test_error() {
    let data = small_dataset(Problem::Antiderivative, 4);
    let train = data.train_set::<f64>();
    let tests = data.test_set::<f64>();
    let shape = DeepOnetShape::uniform(20, 1, 8, &[12], Activation::Tanh).unwrap();
    let init = shape.glorot_init::<f64, _>(&mut rng::stream(4, rng::ids::INIT));
    let before = test_errors(&shape, &init, &tests).unwrap().0;
    let config = AdamConfig {
        epochs: 300,
        burn_in_epochs: 150,
        batch_size: 30,
        batching: Batching::Triplets,
        ensemble_size: 4,
        eval_every: 50,
        lr: 1e-2,
        ..Default::default()
    };
    let (theta, ens, diag) = adam_dropout_train(&shape, &init, &train, &config, None).unwrap();
    assert!(diag.errors.is_empty());
    assert_eq!(diag.iteration_seconds.len(), 300);
    let after = test_errors(&shape, &theta, &tests).unwrap().0;
    assert!(after < before, "{after} vs {before}");
    assert_eq!(evaluate_ensemble(&ens, &shape, &tests).unwrap().len(), 4);
}

#[test]
fn pde_dataset_trains_with_two_dimensional_queries() {
    let mut spec = DatasetSpec::new(Problem::DiffusionReaction);
    spec.problem.sensors = 20;
    spec.problem.query_dim = 2;
    spec.n_traj = 10;
    spec.p_queries = 10;
    spec.n_test = 2;
    let data = build_dataset(&spec).unwrap();
    let train = data.train_set::<f64>();
    let tests = data.test_set::<f64>();
    let shape = DeepOnetShape::uniform(20, 2, 6, &[8], Activation::Tanh).unwrap();
    let init = shape.glorot_init::<f64, _>(&mut rng::stream(0, rng::ids::INIT));
    let config = SamplerConfig { batch_size: 20, ..sampler_config(train.len()) };
    let spec = EnergySpec::new(0.01, Prior::None, train.len(), 20).unwrap();
    let (ens, _) = m_resgld_train(&shape, &init, &train, &config, &spec, None).unwrap();
    let metrics = evaluate_ensemble(&ens, &shape, &tests).unwrap();
    assert_eq!(metrics.len(), 2);
}

#[test]
fn text_round_trip_preserves_training_data() {
    let data = small_dataset(Problem::Pendulum, 9);
    let text = data.to_text().unwrap();
    let back = OperatorDataset::parse(&text).unwrap();
    assert_eq!(back.to_text().unwrap(), text);
    let (a, b) = (data.train_set::<f64>(), back.train_set::<f64>());
    assert_eq!(a.targets, b.targets);
}
