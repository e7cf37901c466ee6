//! Bayesian DeepONet training with replica-exchange stochastic gradient
//! Langevin dynamics (reSGLD), its accelerated multi-variance variant
//! (m-reSGLD), and an Adam + MC-dropout baseline.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the 64-bit precision used for training and checks.

pub mod bayes;
pub mod data_gen;
pub mod deeponet;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod samplers;
pub mod scalar;

pub use deeponet::{Block, DeepOnet, DeepOnetShape, TrainingBatch};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use nn::{Activation, Mlp, MlpShape, ParamVector};
pub use scalar::Real;

pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type DeepOnet64 = deeponet::DeepOnet<f64>;
pub type DeepOnet32 = deeponet::DeepOnet<f32>;
pub type ParamVector64 = nn::ParamVector<f64>;
pub type TrainingBatch64 = deeponet::TrainingBatch<f64>;
pub type PosteriorEnsemble64 = samplers::PosteriorEnsemble<f64>;
pub type PredictionBand64 = metrics::PredictionBand<f64>;
