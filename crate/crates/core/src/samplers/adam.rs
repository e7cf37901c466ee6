use std::time::Instant;

use rand::Rng;

use super::{Batching, Diagnostics, EpochErrors, Evaluator, MinibatchSampler};
use crate::data_gen::TrainSet;
use crate::deeponet::{Block, DeepOnetShape};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::{MlpShape, ParamVector};
use crate::rng::{self, ids};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub epochs: usize,
    pub burn_in_epochs: usize,
    pub batch_size: usize,
    pub batching: Batching,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Probability of zeroing a hidden unit, in training and in the
    /// prediction ensemble.
    pub dropout: f64,
    pub ensemble_size: usize,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            epochs: 2000,
            burn_in_epochs: 1000,
            batch_size: 100,
            batching: Batching::Functions,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            dropout: 0.05,
            ensemble_size: 50,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0)
        {
            return Err(Error::Config("Adam needs lr > 0, betas in [0, 1) and eps > 0".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.ensemble_size == 0 {
            return Err(Error::Config("batch_size, eval_every and ensemble_size must be at least 1".into()));
        }
        if self.burn_in_epochs > self.epochs {
            return Err(Error::Config(format!("burn-in {} exceeds {} epochs", self.burn_in_epochs, self.epochs)));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, m: vec![T::zero(); dim], v: vec![T::zero(); dim], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [T], grad: &[T]) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t));
        let c2 = T::of(1.0 - self.beta2.powi(self.t));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

type MaskPair<T> = (Vec<Mat<T>>, Vec<Mat<T>>);

fn layer_masks<T: Real, R: Rng + ?Sized>(shape: &MlpShape, rows: usize, rate: f64, rng: &mut R) -> Vec<Mat<T>> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..shape.num_hidden())
        .map(|h| {
            let width = shape.dims()[h + 1];
            let data = (0..rows * width)
                .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                .collect();
            Mat::from_vec(rows, width, data)
        })
        .collect()
}

/// Inverted dropout masks for branch and trunk hidden layers, one row per
/// sample.
pub fn dropout_masks<T: Real, R: Rng + ?Sized>(
    shape: &DeepOnetShape,
    rows: usize,
    rate: f64,
    rng: &mut R,
) -> MaskPair<T> {
    (layer_masks(shape.branch(), rows, rate, rng), layer_masks(shape.trunk(), rows, rate, rng))
}

/// MC-dropout predictor: one fixed network with `M` sampled dropout masks.
/// Each member applies its mask to every mesh point of a trajectory.
#[derive(Clone, Debug)]
pub struct DropoutEnsemble<T> {
    pub params: ParamVector<T>,
    pub rate: f64,
    masks: Vec<Option<MaskPair<T>>>,
}

impl<T: Real> DropoutEnsemble<T> {
    pub fn new(shape: &DeepOnetShape, params: ParamVector<T>, rate: f64, members: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, ids::ENSEMBLE_DROPOUT);
        let masks = (0..members)
            .map(|_| if rate == 0.0 { None } else { Some(dropout_masks(shape, 1, rate, &mut r)) })
            .collect();
        DropoutEnsemble { params, rate, masks }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn member_masks(&self, k: usize) -> Option<&MaskPair<T>> {
        self.masks[k].as_ref()
    }
}

/// Minimises the mean squared residual with Adam, dropout active on hidden
/// layers. Returns the trained parameters and their MC-dropout ensemble.
pub fn adam_dropout_train<T: Real>(
    shape: &DeepOnetShape,
    init: &ParamVector<T>,
    data: &TrainSet<T>,
    config: &AdamConfig,
    mut eval: Option<&mut Evaluator<'_, T>>,
) -> Result<(ParamVector<T>, DropoutEnsemble<T>, Diagnostics)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    if init.len() != shape.num_params() {
        return Err(Error::Shape(format!("initial θ has {} entries, network {}", init.len(), shape.num_params())));
    }
    let mut theta = init.clone();
    let mut opt = Adam::new(theta.len(), config.lr, config.beta1, config.beta2, config.eps);
    let mut grad = vec![T::zero(); theta.len()];
    let mut sampler = MinibatchSampler::new(data, config.batching, config.batch_size, rng::stream(config.seed, ids::BATCH))?;
    let mut drop_rng = rng::stream(config.seed, ids::DROPOUT);
    let scale = T::of(1.0 / config.batch_size as f64);
    let mut diag = Diagnostics { burn_in_epochs: config.burn_in_epochs, ..Default::default() };
    for k in 0..config.epochs {
        let it = k + 1;
        let start = Instant::now();
        let idx = sampler.draw();
        let batch = data.gather(&idx);
        let masks =
            (config.dropout > 0.0).then(|| dropout_masks(shape, batch.len(), config.dropout, &mut drop_rng));
        shape.grad_into(&theta, &batch, scale, Block::All, masks, &mut grad)?;
        opt.step(&mut theta, &grad);
        if !theta.is_finite() {
            return Err(Error::Divergence { iteration: it, what: "Adam produced non-finite parameters".into() });
        }
        diag.iteration_seconds.push(start.elapsed().as_secs_f64());
        if let Some(f) = eval.as_deref_mut() {
            if it % config.eval_every == 0 {
                let (e1, e2) = f(&theta)?;
                diag.errors.push(EpochErrors { epoch: it, e1, e2 });
            }
        }
    }
    let ens = DropoutEnsemble::new(shape, theta.clone(), config.dropout, config.ensemble_size, config.seed);
    Ok((theta, ens, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_converges_on_quadratic() {
        let mut opt = Adam::<f64>::new(1, 1e-2, 0.9, 0.999, 1e-8);
        let mut theta = vec![0.0];
        for _ in 0..10_000 {
            let g = [2.0 * (theta[0] - 3.0)];
            opt.step(&mut theta, &g);
        }
        assert!((theta[0] - 3.0).abs() < 1e-6, "{}", theta[0]);
    }

    #[test]
    fn first_adam_step_has_magnitude_lr() {
        let mut opt = Adam::<f64>::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut theta = vec![0.0, 0.0];
        opt.step(&mut theta, &[5.0, -1e-3]);
        assert!((theta[0] + 0.1).abs() < 1e-8);
        assert!((theta[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn masks_are_binary_and_scaled() {
        let shape = DeepOnetShape::uniform(4, 1, 3, &[20, 20], crate::nn::Activation::Tanh).unwrap();
        let (b, t) = dropout_masks::<f64, _>(&shape, 50, 0.2, &mut rng::stream(1, 6));
        assert_eq!((b.len(), t.len()), (2, 2));
        let all: Vec<f64> = b.iter().chain(&t).flat_map(|m| m.as_slice().to_vec()).collect();
        assert!(all.iter().all(|&v| v == 0.0 || v == 1.25));
        let dropped = all.iter().filter(|&&v| v == 0.0).count() as f64 / all.len() as f64;
        assert!((dropped - 0.2).abs() < 0.03);
    }

    #[test]
    fn invalid_dropout_rate() {
        let c = AdamConfig { dropout: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
