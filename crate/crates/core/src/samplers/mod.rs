//! Langevin samplers, replica exchange and the Adam + dropout baseline.
//!
//! One epoch is one minibatch iteration throughout, so `epochs`,
//! `burn_in_epochs` and snapshot iterations share a single counter.

mod adam;
mod replica;

use std::io::Write;
use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

pub use adam::{adam_dropout_train, dropout_masks, Adam, AdamConfig, DropoutEnsemble};
pub use replica::{m_resgld_train, resgld_train, train_replica, ParticlePair, ReplicaTrainer, StepReport};

use crate::bayes::{energy_grad_into, EnergySpec};
use crate::data_gen::TrainSet;
use crate::deeponet::{Block, DeepOnetShape, TrainingBatch};
use crate::error::{Error, Result};
use crate::io::{parse_usize, TextReader};
use crate::nn::ParamVector;
use crate::rng::StreamRng;
use crate::scalar::Real;

/// `θ ← θ − η·g + √(2τη)·z` on every coordinate.
pub fn sgld_step<T: Real, R: Rng + ?Sized>(theta: &mut [T], grad: &[T], eta: T, tau: T, rng: &mut R) -> Result<()> {
    let n = theta.len();
    sgld_step_range(theta, grad, 0..n, eta, tau, rng)
}

/// Langevin step restricted to `range`. Coordinates outside it are left
/// untouched and consume no random numbers.
pub fn sgld_step_range<T: Real, R: Rng + ?Sized>(
    theta: &mut [T],
    grad: &[T],
    range: Range<usize>,
    eta: T,
    tau: T,
    rng: &mut R,
) -> Result<()> {
    if theta.len() != grad.len() {
        return Err(Error::Shape(format!("θ has {} entries, gradient {}", theta.len(), grad.len())));
    }
    if !(eta > T::zero()) || !(tau >= T::zero()) {
        return Err(Error::Precondition(format!("SGLD needs η > 0 and τ ≥ 0, got η={eta}, τ={tau}")));
    }
    let amp = (T::of(2.0) * tau * eta).sqrt();
    for i in range {
        let z: f64 = rng.sample(StandardNormal);
        let v = theta[i] - eta * grad[i] + amp * T::of(z);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("parameter {i} became non-finite")));
        }
        theta[i] = v;
    }
    Ok(())
}

/// Returns the stepped copy; see [`sgld_step`].
pub fn sgld_stepped<T: Real, R: Rng + ?Sized>(
    theta: &ParamVector<T>,
    grad: &[T],
    eta: T,
    tau: T,
    rng: &mut R,
) -> Result<ParamVector<T>> {
    let mut out = theta.clone();
    sgld_step(&mut out, grad, eta, tau, rng)?;
    Ok(out)
}

/// Energy landscape seen by the samplers.
pub trait Potential<T: Real> {
    fn dim(&self) -> usize;

    /// Coordinates belonging to `block`.
    fn block_range(&self, block: Block) -> Range<usize> {
        match block {
            Block::All => 0..self.dim(),
            _ => panic!("potential has no sub-network blocks"),
        }
    }

    /// Called once per iteration before any evaluation, e.g. to draw the
    /// minibatch both particles share.
    fn begin_iteration(&mut self) -> Result<()> {
        Ok(())
    }

    /// Writes the gradient restricted to `block` (zeros elsewhere) and
    /// returns the energy estimate at `theta`.
    fn energy_grad(&mut self, theta: &[T], block: Block, grad: &mut [T]) -> Result<T>;
}

/// How minibatches are drawn from the training triplets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Batching {
    /// `n` distinct triplets uniformly at random.
    Triplets,
    /// `n / P` distinct input functions with all `P` of their triplets.
    /// Every triplet is still included with probability `n / N`.
    Functions,
}

impl Batching {
    pub fn name(self) -> &'static str {
        match self {
            Batching::Triplets => "triplets",
            Batching::Functions => "functions",
        }
    }
}

impl std::str::FromStr for Batching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triplets" => Ok(Batching::Triplets),
            "functions" => Ok(Batching::Functions),
            other => Err(Error::Config(format!("unknown batching `{other}`"))),
        }
    }
}

/// Draws the triplet indices of successive minibatches.
pub struct MinibatchSampler {
    batching: Batching,
    n: usize,
    total: usize,
    groups: Vec<Range<usize>>,
    rng: StreamRng,
}

impl MinibatchSampler {
    pub fn new<T: Real>(data: &TrainSet<T>, batching: Batching, n: usize, rng: StreamRng) -> Result<Self> {
        if n == 0 || n > data.len() {
            return Err(Error::Config(format!("minibatch size {n} must lie in 1..={}", data.len())));
        }
        let groups = data.groups();
        if batching == Batching::Functions {
            let p = groups[0].len();
            if groups.iter().any(|g| g.len() != p) {
                return Err(Error::Config("function batching needs the same number of triplets per function".into()));
            }
            if n % p != 0 {
                return Err(Error::Config(format!("minibatch size {n} is not a multiple of {p} triplets per function")));
            }
        }
        Ok(MinibatchSampler { batching, n, total: data.len(), groups, rng })
    }

    /// Sorted triplet indices of the next minibatch.
    pub fn draw(&mut self) -> Vec<usize> {
        match self.batching {
            Batching::Triplets => draw_minibatch(&mut self.rng, self.total, self.n),
            Batching::Functions => {
                let k = self.n / self.groups[0].len();
                let mut picked = index::sample(&mut self.rng, self.groups.len(), k).into_vec();
                picked.sort_unstable();
                picked.into_iter().flat_map(|g| self.groups[g].clone()).collect()
            }
        }
    }
}

/// Minibatch energy of a DeepONet on a training set.
pub struct DeepOnetPotential<'a, T> {
    shape: &'a DeepOnetShape,
    data: &'a TrainSet<T>,
    spec: EnergySpec,
    sampler: MinibatchSampler,
    batch: Option<TrainingBatch<T>>,
}

impl<'a, T: Real> DeepOnetPotential<'a, T> {
    pub fn new(
        shape: &'a DeepOnetShape,
        data: &'a TrainSet<T>,
        spec: EnergySpec,
        batching: Batching,
        rng: StreamRng,
    ) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::Precondition("empty training set".into()));
        }
        if spec.n_total != data.len() {
            return Err(Error::Config(format!("energy spec expects {} samples, data has {}", spec.n_total, data.len())));
        }
        if data.sensors() != shape.sensors() || data.query_dim() != shape.query_dim() {
            return Err(Error::Shape(format!(
                "data has m={}, d={}; network expects m={}, d={}",
                data.sensors(),
                data.query_dim(),
                shape.sensors(),
                shape.query_dim()
            )));
        }
        let sampler = MinibatchSampler::new(data, batching, spec.batch_size, rng)?;
        Ok(DeepOnetPotential { shape, data, spec, sampler, batch: None })
    }
}

/// Draws `n` distinct indices out of `total`, sorted.
pub fn draw_minibatch<R: Rng + ?Sized>(rng: &mut R, total: usize, n: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, total, n).into_vec();
    idx.sort_unstable();
    idx
}

impl<T: Real> Potential<T> for DeepOnetPotential<'_, T> {
    fn dim(&self) -> usize {
        self.shape.num_params()
    }

    fn block_range(&self, block: Block) -> Range<usize> {
        self.shape.block_range(block)
    }

    fn begin_iteration(&mut self) -> Result<()> {
        let idx = self.sampler.draw();
        self.batch = Some(self.data.gather(&idx));
        Ok(())
    }

    fn energy_grad(&mut self, theta: &[T], block: Block, grad: &mut [T]) -> Result<T> {
        let batch = self
            .batch
            .as_ref()
            .ok_or_else(|| Error::Precondition("energy requested before a minibatch was drawn".into()))?;
        energy_grad_into(self.shape, theta, batch, &self.spec, block, None, grad)
    }
}

/// Source of the σ₁, σ₂ used in the swap-rate correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaCorrection {
    /// Exponential moving statistics of each particle's energy estimates,
    /// accumulated during burn-in and frozen afterwards.
    Ema { decay: f64 },
    Fixed { sigma1: f64, sigma2: f64 },
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub epochs: usize,
    pub burn_in_epochs: usize,
    pub batch_size: usize,
    pub batching: Batching,
    pub tau1: f64,
    pub tau2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub a1: f64,
    pub a2: f64,
    /// Probability that the high-temperature particle trains its branch net
    /// during an accelerated step.
    pub control_c: f64,
    pub ensemble_size: usize,
    /// Iterations between kept snapshots; 0 spreads the ensemble over the
    /// last tenth of training.
    pub thinning: usize,
    pub seed: u64,
    pub sigma_correction: SigmaCorrection,
    pub swaps: bool,
    /// Iterations between swap attempts.
    pub swap_every: usize,
    /// Epochs between test-error evaluations.
    pub eval_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            epochs: 2000,
            burn_in_epochs: 1000,
            batch_size: 100,
            batching: Batching::Functions,
            tau1: 0.01,
            tau2: 1.0,
            eta1: 1e-4,
            eta2: 1e-4,
            a1: 0.5,
            a2: 0.5,
            control_c: 0.75,
            ensemble_size: 50,
            thinning: 0,
            seed: 0,
            sigma_correction: SigmaCorrection::Ema { decay: 0.99 },
            swaps: true,
            swap_every: 1,
            eval_every: 10,
        }
    }
}

impl SamplerConfig {
    pub fn effective_thinning(&self) -> usize {
        if self.thinning > 0 {
            self.thinning
        } else {
            (self.epochs / 10 / self.ensemble_size.max(1)).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if !(self.tau1 > 0.0) || !(self.tau2 >= self.tau1) || !self.tau2.is_finite() {
            return cfg(format!("temperatures must satisfy 0 < tau1 <= tau2, got {} and {}", self.tau1, self.tau2));
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) || !self.eta1.is_finite() || !self.eta2.is_finite() {
            return cfg(format!("step sizes must be positive, got {} and {}", self.eta1, self.eta2));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0) || (self.a1 + self.a2 - 1.0).abs() > 1e-12 {
            return cfg(format!("a1, a2 must be positive and sum to 1, got {} and {}", self.a1, self.a2));
        }
        if !(0.0..=1.0).contains(&self.control_c) {
            return cfg(format!("control c must lie in [0, 1], got {}", self.control_c));
        }
        if self.burn_in_epochs > self.epochs {
            return cfg(format!("burn-in {} exceeds {} epochs", self.burn_in_epochs, self.epochs));
        }
        if self.batch_size == 0 || self.swap_every == 0 || self.eval_every == 0 {
            return cfg("batch_size, swap_every and eval_every must be at least 1".into());
        }
        if self.ensemble_size == 0 {
            return cfg("ensemble size must be at least 1".into());
        }
        match self.sigma_correction {
            SigmaCorrection::Ema { decay } if !(decay > 0.0 && decay < 1.0) => {
                return cfg(format!("EMA decay must lie in (0, 1), got {decay}"))
            }
            SigmaCorrection::Fixed { sigma1, sigma2 } if !(sigma1 >= 0.0 && sigma2 >= 0.0) => {
                return cfg(format!("fixed sigmas must be ≥ 0, got {sigma1} and {sigma2}"))
            }
            _ => {}
        }
        if self.epochs > 0 {
            ensemble_schedule(self.epochs, self.burn_in_epochs, self.ensemble_size, self.effective_thinning())?;
        }
        Ok(())
    }
}

/// Iterations (1-based, ascending) whose θ¹ enters the ensemble: the last
/// iteration and every `thinning`-th one before it.
pub fn ensemble_schedule(iterations: usize, burn_in: usize, m: usize, thinning: usize) -> Result<Vec<usize>> {
    if thinning == 0 || m == 0 {
        return Err(Error::Config("ensemble size and thinning must be at least 1".into()));
    }
    let span = (m - 1) * thinning;
    if iterations < burn_in + 1 + span {
        return Err(Error::Config(format!(
            "{m} snapshots every {thinning} iterations need {} post-burn-in iterations, have {}",
            span + 1,
            iterations.saturating_sub(burn_in)
        )));
    }
    Ok((0..m).rev().map(|j| iterations - j * thinning).collect())
}

/// Low-temperature snapshots retained for prediction, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorEnsemble<T> {
    pub samples: Vec<ParamVector<T>>,
    pub iterations: Vec<usize>,
}

impl<T: Real> PosteriorEnsemble<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Header `ensemble <M>` followed by one DeepONet checkpoint per member.
    /// Snapshot iterations are not stored.
    pub fn write<W: Write>(&self, shape: &DeepOnetShape, w: &mut W) -> Result<()> {
        writeln!(w, "ensemble {}", self.samples.len())?;
        for s in &self.samples {
            shape.write_checkpoint(s, w)?;
        }
        Ok(())
    }

    pub fn to_text(&self, shape: &DeepOnetShape) -> Result<String> {
        let mut buf = Vec::new();
        self.write(shape, &mut buf)?;
        Ok(String::from_utf8(buf).expect("checkpoints are ASCII"))
    }

    /// Parses [`PosteriorEnsemble::write`] output; all members must share one shape.
    pub fn parse(text: &str) -> Result<(DeepOnetShape, Self)> {
        let mut r = TextReader::new(text);
        let head = r.header("ensemble")?;
        let m = parse_usize(head.first(), "ensemble size", &r)?;
        if m == 0 {
            return Err(r.err("empty ensemble"));
        }
        let mut shape = None;
        let mut samples = Vec::with_capacity(m);
        for _ in 0..m {
            let line = r.line_number();
            let (s, p) = DeepOnetShape::read_checkpoint::<T>(&mut r)?;
            match &shape {
                Some(first) if *first != s => {
                    return Err(Error::Parse { line, msg: "ensemble members have different shapes".into() })
                }
                Some(_) => {}
                None => shape = Some(s),
            }
            samples.push(p);
        }
        r.finish()?;
        Ok((shape.expect("m > 0"), PosteriorEnsemble { samples, iterations: Vec::new() }))
    }
}

/// Picks the last `m` entries spaced `thinning` apart from a history of
/// `(iteration, θ¹)` pairs, newest last. Entries at or before `burn_in` are
/// never used.
pub fn collect_ensemble<T: Real>(
    history: &[(usize, ParamVector<T>)],
    m: usize,
    thinning: usize,
    burn_in: usize,
) -> Result<PosteriorEnsemble<T>> {
    if m == 0 || thinning == 0 {
        return Err(Error::Config("ensemble size and thinning must be at least 1".into()));
    }
    let eligible: Vec<&(usize, ParamVector<T>)> = history.iter().filter(|(it, _)| *it > burn_in).collect();
    if eligible.len() < (m - 1) * thinning + 1 {
        return Err(Error::Config(format!(
            "history holds {} post-burn-in snapshots, {m} spaced by {thinning} need {}",
            eligible.len(),
            (m - 1) * thinning + 1
        )));
    }
    let last = eligible.len() - 1;
    let picked: Vec<_> = (0..m).rev().map(|j| eligible[last - j * thinning]).collect();
    Ok(PosteriorEnsemble {
        iterations: picked.iter().map(|(it, _)| *it).collect(),
        samples: picked.into_iter().map(|(_, p)| p.clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochErrors {
    pub epoch: usize,
    pub e1: f64,
    pub e2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwapEvent {
    pub iteration: usize,
    pub rate: f64,
    pub swapped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub errors: Vec<EpochErrors>,
    pub swaps: Vec<SwapEvent>,
    /// Wall-clock seconds of every training iteration, evaluation excluded.
    pub iteration_seconds: Vec<f64>,
    pub burn_in_epochs: usize,
}

impl Diagnostics {
    /// Mean `(e1, e2)` over evaluations after burn-in.
    pub fn post_burn_in_mean(&self) -> Option<(f64, f64)> {
        let post: Vec<&EpochErrors> = self.errors.iter().filter(|e| e.epoch > self.burn_in_epochs).collect();
        if post.is_empty() {
            return None;
        }
        let n = post.len() as f64;
        Some((post.iter().map(|e| e.e1).sum::<f64>() / n, post.iter().map(|e| e.e2).sum::<f64>() / n))
    }

    pub fn mean_iteration_seconds(&self) -> Option<f64> {
        if self.iteration_seconds.is_empty() {
            None
        } else {
            Some(self.iteration_seconds.iter().sum::<f64>() / self.iteration_seconds.len() as f64)
        }
    }

    pub fn swap_count(&self) -> usize {
        self.swaps.iter().filter(|s| s.swapped).count()
    }
}

/// Test-error callback invoked on the current parameters every
/// `eval_every` epochs; returns `(e1, e2)`.
pub type Evaluator<'a, T> = dyn FnMut(&[T]) -> Result<(f64, f64)> + 'a;
