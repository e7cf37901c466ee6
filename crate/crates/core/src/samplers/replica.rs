use std::time::Instant;

use rand::Rng;

use super::{
    ensemble_schedule, sgld_step_range, DeepOnetPotential, Diagnostics, EpochErrors, Evaluator, PosteriorEnsemble,
    Potential, SamplerConfig, SigmaCorrection, SwapEvent,
};
use crate::bayes::{swap_probability, EnergySpec, SwapInputs, VarianceTracker};
use crate::data_gen::TrainSet;
use crate::deeponet::{Block, DeepOnetShape};
use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::rng::{self, ids, StreamRng};
use crate::scalar::Real;

/// Low-temperature (θ¹) and high-temperature (θ²) particles.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePair<T> {
    pub theta1: ParamVector<T>,
    pub theta2: ParamVector<T>,
    pub tau1: f64,
    pub tau2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub swap_count: usize,
    pub iteration: usize,
}

/// Outcome of one replica iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    /// Energy estimates at the pre-step parameters of θ¹ and θ².
    pub u1: f64,
    pub u2: f64,
    /// Sub-network θ² was trained on.
    pub block2: Block,
    pub swap: Option<SwapEvent>,
}

/// Steppable two-particle sampler. With `accelerated` set, θ² trains a
/// single randomly chosen sub-network per iteration after burn-in.
pub struct ReplicaTrainer<T, P> {
    potential: P,
    pair: ParticlePair<T>,
    config: SamplerConfig,
    accelerated: bool,
    noise1: StreamRng,
    noise2: StreamRng,
    swap_rng: StreamRng,
    block_rng: StreamRng,
    trackers: [VarianceTracker; 2],
    g1: Vec<T>,
    g2: Vec<T>,
}

impl<T: Real, P: Potential<T>> ReplicaTrainer<T, P> {
    /// Both particles start from `init`.
    pub fn new(potential: P, init: &ParamVector<T>, config: SamplerConfig, accelerated: bool) -> Result<Self> {
        config.validate()?;
        if init.len() != potential.dim() {
            return Err(Error::Shape(format!("initial θ has {} entries, potential {}", init.len(), potential.dim())));
        }
        if !init.is_finite() {
            return Err(Error::Precondition("initial parameters are not finite".into()));
        }
        let decay = match config.sigma_correction {
            SigmaCorrection::Ema { decay } => decay,
            _ => 0.99,
        };
        let dim = potential.dim();
        Ok(ReplicaTrainer {
            pair: ParticlePair {
                theta1: init.clone(),
                theta2: init.clone(),
                tau1: config.tau1,
                tau2: config.tau2,
                eta1: config.eta1,
                eta2: config.eta2,
                swap_count: 0,
                iteration: 0,
            },
            noise1: rng::stream(config.seed, ids::NOISE_LOW),
            noise2: rng::stream(config.seed, ids::NOISE_HIGH),
            swap_rng: rng::stream(config.seed, ids::SWAP),
            block_rng: rng::stream(config.seed, ids::BLOCK_CHOICE),
            trackers: [VarianceTracker::new(decay)?; 2],
            g1: vec![T::zero(); dim],
            g2: vec![T::zero(); dim],
            potential,
            config,
            accelerated,
        })
    }

    pub fn pair(&self) -> &ParticlePair<T> {
        &self.pair
    }

    pub fn into_pair(self) -> ParticlePair<T> {
        self.pair
    }

    /// σ₁, σ₂ currently fed to the swap rate.
    pub fn sigmas(&self) -> (f64, f64) {
        match self.config.sigma_correction {
            SigmaCorrection::Off => (0.0, 0.0),
            SigmaCorrection::Fixed { sigma1, sigma2 } => (sigma1, sigma2),
            SigmaCorrection::Ema { .. } => {
                let (s1, s2) = (self.trackers[0].sigma(), self.trackers[1].sigma());
                if self.accelerated {
                    (s1, s2)
                } else {
                    let s = 0.5 * (s1 + s2);
                    (s, s)
                }
            }
        }
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let k = self.pair.iteration;
        let it = k + 1;
        let burned_in = k >= self.config.burn_in_epochs;
        self.potential.begin_iteration()?;
        let block2 = if self.accelerated && burned_in {
            let gamma: f64 = self.block_rng.random();
            if gamma < self.config.control_c {
                Block::Branch
            } else {
                Block::Trunk
            }
        } else {
            Block::All
        };
        let u1 = self.potential.energy_grad(&self.pair.theta1, Block::All, &mut self.g1)?.as_f64();
        let u2 = self.potential.energy_grad(&self.pair.theta2, block2, &mut self.g2)?.as_f64();

        let all = self.potential.block_range(Block::All);
        let r2 = self.potential.block_range(block2);
        let (eta1, tau1) = (T::of(self.pair.eta1), T::of(self.pair.tau1));
        let (eta2, tau2) = (T::of(self.pair.eta2), T::of(self.pair.tau2));
        sgld_step_range(&mut self.pair.theta1, &self.g1, all, eta1, tau1, &mut self.noise1)
            .map_err(|e| divergence(it, "low-temperature particle", e))?;
        sgld_step_range(&mut self.pair.theta2, &self.g2, r2, eta2, tau2, &mut self.noise2)
            .map_err(|e| divergence(it, "high-temperature particle", e))?;

        if !burned_in {
            if let SigmaCorrection::Ema { .. } = self.config.sigma_correction {
                self.trackers[0] = self.trackers[0].update(u1);
                self.trackers[1] = self.trackers[1].update(u2);
            }
        }

        let mut swap = None;
        if self.config.swaps && it % self.config.swap_every == 0 {
            let (sigma1, sigma2) = self.sigmas();
            // both particles share the iteration's minibatch, so the two
            // estimators coincide
            let rate = swap_probability(&SwapInputs {
                u1_at_theta1: u1,
                u1_at_theta2: u2,
                u2_at_theta1: u1,
                u2_at_theta2: u2,
                tau1: self.pair.tau1,
                tau2: self.pair.tau2,
                a1: self.config.a1,
                a2: self.config.a2,
                sigma1,
                sigma2,
            })?;
            let draw: f64 = self.swap_rng.random();
            let swapped = draw < rate;
            if swapped {
                std::mem::swap(&mut self.pair.theta1, &mut self.pair.theta2);
                self.pair.swap_count += 1;
            }
            swap = Some(SwapEvent { iteration: it, rate, swapped });
        }
        self.pair.iteration = it;
        Ok(StepReport { iteration: it, u1, u2, block2, swap })
    }
}

fn divergence(iteration: usize, who: &str, e: Error) -> Error {
    Error::Divergence { iteration, what: format!("{who}: {e}") }
}

/// Runs a replica sampler for `config.epochs` iterations, collecting the
/// scheduled θ¹ snapshots and diagnostics.
pub fn train_replica<T: Real, P: Potential<T>>(
    potential: P,
    init: &ParamVector<T>,
    config: &SamplerConfig,
    accelerated: bool,
    mut eval: Option<&mut Evaluator<'_, T>>,
) -> Result<(PosteriorEnsemble<T>, Diagnostics, ParticlePair<T>)> {
    if config.epochs == 0 {
        return Err(Error::Config("no iterations to collect samples from".into()));
    }
    let schedule = ensemble_schedule(
        config.epochs,
        config.burn_in_epochs,
        config.ensemble_size,
        config.effective_thinning(),
    )?;
    let mut trainer = ReplicaTrainer::new(potential, init, config.clone(), accelerated)?;
    let mut diag = Diagnostics { burn_in_epochs: config.burn_in_epochs, ..Default::default() };
    diag.iteration_seconds.reserve(config.epochs);
    let mut ensemble = PosteriorEnsemble { samples: Vec::new(), iterations: Vec::new() };
    let mut next = 0;
    for _ in 0..config.epochs {
        let start = Instant::now();
        let report = trainer.step()?;
        if next < schedule.len() && schedule[next] == report.iteration {
            ensemble.samples.push(trainer.pair.theta1.clone());
            ensemble.iterations.push(report.iteration);
            next += 1;
        }
        diag.iteration_seconds.push(start.elapsed().as_secs_f64());
        if let Some(swap) = report.swap {
            diag.swaps.push(swap);
        }
        if let Some(f) = eval.as_deref_mut() {
            if report.iteration % config.eval_every == 0 {
                let (e1, e2) = f(&trainer.pair.theta1)?;
                diag.errors.push(EpochErrors { epoch: report.iteration, e1, e2 });
            }
        }
    }
    if ensemble.is_empty() {
        return Err(Error::Config("no posterior samples were recorded".into()));
    }
    Ok((ensemble, diag, trainer.into_pair()))
}

fn deeponet_run<T: Real>(
    shape: &DeepOnetShape,
    init: &ParamVector<T>,
    data: &TrainSet<T>,
    config: &SamplerConfig,
    spec: &EnergySpec,
    accelerated: bool,
    eval: Option<&mut Evaluator<'_, T>>,
) -> Result<(PosteriorEnsemble<T>, Diagnostics)> {
    let mut spec = *spec;
    spec.batch_size = config.batch_size;
    let potential = DeepOnetPotential::new(shape, data, spec, config.batching, rng::stream(config.seed, ids::BATCH))?;
    let (ens, diag, _) = train_replica(potential, init, config, accelerated, eval)?;
    Ok((ens, diag))
}

/// Replica-exchange SGLD: both particles always update every parameter.
pub fn resgld_train<T: Real>(
    shape: &DeepOnetShape,
    init: &ParamVector<T>,
    data: &TrainSet<T>,
    config: &SamplerConfig,
    spec: &EnergySpec,
    eval: Option<&mut Evaluator<'_, T>>,
) -> Result<(PosteriorEnsemble<T>, Diagnostics)> {
    deeponet_run(shape, init, data, config, spec, false, eval)
}

/// Multi-variance reSGLD: after burn-in θ² updates only its branch net with
/// probability `c`, otherwise only its trunk net.
pub fn m_resgld_train<T: Real>(
    shape: &DeepOnetShape,
    init: &ParamVector<T>,
    data: &TrainSet<T>,
    config: &SamplerConfig,
    spec: &EnergySpec,
    eval: Option<&mut Evaluator<'_, T>>,
) -> Result<(PosteriorEnsemble<T>, Diagnostics)> {
    deeponet_run(shape, init, data, config, spec, true, eval)
}
