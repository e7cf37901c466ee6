//! Posterior energy, its minibatch estimator, and the replica swap rate.
//!
//! `U(θ) = Σ (G_θ(uᵢ)(yᵢ) − G̃ᵢ)² / 2σ² + prior(θ)`, dropping the constant
//! `(N/2)·log 2πσ²`. The minibatch estimator scales the residual sum by `N/n`.

use crate::deeponet::{Block, DeepOnetShape, TrainingBatch};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::ParamVector;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    /// Improper flat prior; contributes nothing.
    None,
    Gaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySpec {
    pub noise_sigma: f64,
    pub prior: Prior,
    /// Size `N` of the full training set.
    pub n_total: usize,
    /// Minibatch size `n`.
    pub batch_size: usize,
}

impl EnergySpec {
    pub fn new(noise_sigma: f64, prior: Prior, n_total: usize, batch_size: usize) -> Result<Self> {
        let spec = EnergySpec { noise_sigma, prior, n_total, batch_size };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise sigma must be positive, got {}", self.noise_sigma)));
        }
        if let Prior::Gaussian { sigma } = self.prior {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::Config(format!("prior sigma must be positive, got {sigma}")));
            }
        }
        if self.batch_size == 0 || self.batch_size > self.n_total {
            return Err(Error::Config(format!(
                "minibatch size {} must lie in 1..={}",
                self.batch_size, self.n_total
            )));
        }
        Ok(())
    }

    /// Factor multiplying the residual sum of squares of a batch of `len` rows.
    pub fn residual_scale(&self, len: usize, full: bool) -> f64 {
        let base = 1.0 / (2.0 * self.noise_sigma * self.noise_sigma);
        if full {
            base
        } else {
            base * self.n_total as f64 / len as f64
        }
    }

    pub fn prior_term<T: Real>(&self, theta: &[T]) -> T {
        match self.prior {
            Prior::None => T::zero(),
            Prior::Gaussian { sigma } => {
                let sq: T = theta.iter().map(|&v| v * v).sum();
                sq / T::of(2.0 * sigma * sigma)
            }
        }
    }

    /// Adds `θ/σ_p²` to `grad` on `range`.
    pub fn add_prior_grad<T: Real>(&self, theta: &[T], grad: &mut [T], range: std::ops::Range<usize>) {
        if let Prior::Gaussian { sigma } = self.prior {
            let inv = T::of(1.0 / (sigma * sigma));
            for i in range {
                grad[i] += theta[i] * inv;
            }
        }
    }

    fn check_batch<T>(&self, batch: &TrainingBatch<T>, full: bool) -> Result<()> {
        if batch.targets.is_empty() {
            return Err(Error::Precondition("energy of an empty batch".into()));
        }
        if full && batch.targets.len() != self.n_total {
            return Err(Error::Precondition(format!(
                "full energy needs all {} samples, got {}",
                self.n_total,
                batch.targets.len()
            )));
        }
        if batch.targets.len() > self.n_total {
            return Err(Error::Precondition(format!(
                "batch of {} exceeds the dataset size {}",
                batch.targets.len(),
                self.n_total
            )));
        }
        Ok(())
    }
}

/// `U` when `full` (the batch must be the whole dataset), otherwise `Û`.
pub fn energy<T: Real>(
    shape: &DeepOnetShape,
    params: &[T],
    batch: &TrainingBatch<T>,
    spec: &EnergySpec,
    full: bool,
) -> Result<T> {
    spec.check_batch(batch, full)?;
    let out = shape.predict_batch(params, batch)?;
    let ss: T = out.iter().zip(&batch.targets).map(|(g, t)| (*g - *t) * (*g - *t)).sum();
    Ok(ss * T::of(spec.residual_scale(batch.len(), full)) + spec.prior_term(params))
}

/// Gradient of `Û`.
pub fn energy_grad<T: Real>(
    shape: &DeepOnetShape,
    params: &[T],
    batch: &TrainingBatch<T>,
    spec: &EnergySpec,
) -> Result<ParamVector<T>> {
    let mut g = ParamVector::zeros(shape.num_params());
    energy_grad_into(shape, params, batch, spec, Block::All, None, &mut g)?;
    Ok(g)
}

/// Writes the gradient of `Û` restricted to `block` into `grad` and returns
/// `Û(θ)` itself, which falls out of the same forward pass.
pub fn energy_grad_into<T: Real>(
    shape: &DeepOnetShape,
    params: &[T],
    batch: &TrainingBatch<T>,
    spec: &EnergySpec,
    block: Block,
    masks: Option<(Vec<Mat<T>>, Vec<Mat<T>>)>,
    grad: &mut [T],
) -> Result<T> {
    spec.check_batch(batch, false)?;
    let scale = T::of(spec.residual_scale(batch.len(), false));
    let ss = shape.grad_into(params, batch, scale, block, masks, grad)?;
    spec.add_prior_grad(params, grad, shape.block_range(block));
    Ok(ss * scale + spec.prior_term(params))
}

/// Energies and constants entering the swap-rate estimator.
///
/// `u{j}_at_theta{i}` is estimator `Û_j` evaluated at particle `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwapInputs {
    pub u1_at_theta1: f64,
    pub u1_at_theta2: f64,
    pub u2_at_theta1: f64,
    pub u2_at_theta2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub a1: f64,
    pub a2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Bias-corrected swap rate
/// `r̂ = exp(τδ·[a₁ΔÛ₁ + a₂ΔÛ₂ − (a₁σ₁ + a₂σ₂)²·τδ])`, `τδ = 1/τ₁ − 1/τ₂`.
///
/// Not clamped to 1: the caller swaps when a uniform draw falls below it.
/// Equal temperatures are accepted and give `r̂ = 1`.
pub fn swap_probability(s: &SwapInputs) -> Result<f64> {
    if !(s.tau1 > 0.0) || !(s.tau2 >= s.tau1) || !s.tau2.is_finite() {
        return Err(Error::Config(format!(
            "temperatures must satisfy 0 < tau1 <= tau2, got {} and {}",
            s.tau1, s.tau2
        )));
    }
    if !(s.a1 > 0.0 && s.a2 > 0.0) || ((s.a1 + s.a2) - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("a1, a2 must be positive and sum to 1, got {} and {}", s.a1, s.a2)));
    }
    if !(s.sigma1 >= 0.0 && s.sigma2 >= 0.0) {
        return Err(Error::Config(format!("estimator deviations must be ≥ 0, got {} and {}", s.sigma1, s.sigma2)));
    }
    let tau_delta = 1.0 / s.tau1 - 1.0 / s.tau2;
    let diff = s.a1 * (s.u1_at_theta1 - s.u1_at_theta2) + s.a2 * (s.u2_at_theta1 - s.u2_at_theta2);
    let sbar = s.a1 * s.sigma1 + s.a2 * s.sigma2;
    Ok((tau_delta * (diff - sbar * sbar * tau_delta)).exp())
}

/// Exponential moving mean and variance of a stream of energy estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceTracker {
    pub decay: f64,
    pub ema_mean: f64,
    pub ema_var: f64,
    pub count: u64,
}

impl VarianceTracker {
    pub fn new(decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!("EMA decay must lie in (0, 1), got {decay}")));
        }
        Ok(VarianceTracker { decay, ema_mean: 0.0, ema_var: 0.0, count: 0 })
    }

    /// The first observation seeds the mean; later ones follow
    /// `m ← m + (1−λ)(x−m)`, `v ← λ(v + (1−λ)(x−m_old)²)`.
    pub fn update(mut self, x: f64) -> Self {
        if self.count == 0 {
            self.ema_mean = x;
            self.ema_var = 0.0;
        } else {
            let diff = x - self.ema_mean;
            let incr = (1.0 - self.decay) * diff;
            self.ema_mean += incr;
            self.ema_var = self.decay * (self.ema_var + diff * incr);
        }
        self.count += 1;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.ema_var.max(0.0).sqrt()
    }
}
