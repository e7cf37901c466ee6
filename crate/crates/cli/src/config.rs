//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use bayes_deeponet::bayes::{EnergySpec, Prior};
use bayes_deeponet::data_gen::{DatasetSpec, Problem, ProblemSpec};
use bayes_deeponet::samplers::{AdamConfig, Batching, SamplerConfig, SigmaCorrection};
use bayes_deeponet::{Activation, DeepOnetShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Adam,
    Resgld,
    MResgld,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adam => "adam",
            Method::Resgld => "resgld",
            Method::MResgld => "m-resgld",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Method::Adam),
            "resgld" => Ok(Method::Resgld),
            "m-resgld" => Ok(Method::MResgld),
            other => bail!("unknown method `{other}` (expected adam, resgld or m-resgld)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaMode {
    Ema,
    Fixed,
    Off,
}

impl SigmaMode {
    fn name(self) -> &'static str {
        match self {
            SigmaMode::Ema => "ema",
            SigmaMode::Fixed => "fixed",
            SigmaMode::Off => "off",
        }
    }
}

/// One experiment. Every field has a key of the same name in the config
/// file, except `dataset` (key `dataset`, default `<out>/dataset.txt`).
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub noise_sigma: f64,
    pub sensors: usize,
    pub length_scale: f64,
    pub jitter: f64,
    pub query_dim: usize,
    pub n_traj: usize,
    pub p_queries: usize,
    pub n_test: usize,
    pub pendulum_k: f64,
    pub pendulum_substeps: usize,
    pub dr_diffusion: f64,
    pub dr_reaction: f64,
    pub dr_t_final: f64,
    pub dr_nx: usize,
    pub dr_nt: usize,
    pub ad_diffusion: f64,
    pub ad_t_final: f64,
    pub ad_nx: usize,
    pub ad_nt: usize,

    pub activation: Activation,
    pub width: usize,
    pub hidden: Vec<usize>,

    pub method: Method,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,

    pub epochs: usize,
    /// `None` means half of `epochs`.
    pub burn_in_epochs: Option<usize>,
    pub batch_size: usize,
    pub batching: Batching,
    pub ensemble_size: usize,
    pub thinning: usize,
    pub eval_every: usize,

    pub tau1: f64,
    pub tau2: f64,
    /// Explicit Langevin step sizes; when unset they follow `step_lr`.
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    /// Step size expressed per unit of mean-squared-error gradient:
    /// `η = step_lr · 2σ² / N`.
    pub step_lr: f64,
    pub a1: f64,
    pub a2: f64,
    pub control_c: f64,
    pub sigma_correction: SigmaMode,
    pub ema_decay: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub swaps: bool,
    pub swap_every: usize,
    /// 0 disables the Gaussian prior.
    pub prior_sigma: f64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout: f64,

    pub bench_iterations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ps = ProblemSpec::new(Problem::Antiderivative);
        let ds = DatasetSpec::new(Problem::Antiderivative);
        let sc = SamplerConfig::default();
        let ac = AdamConfig::default();
        ExperimentConfig {
            problem: ps.problem,
            noise_sigma: ds.noise_sigma,
            sensors: ps.sensors,
            length_scale: ps.length_scale,
            jitter: ps.jitter,
            query_dim: ps.query_dim,
            n_traj: ds.n_traj,
            p_queries: ds.p_queries,
            n_test: ds.n_test,
            pendulum_k: ps.pendulum_k,
            pendulum_substeps: ps.pendulum_substeps,
            dr_diffusion: ps.diffusion_reaction.diffusion,
            dr_reaction: ps.diffusion_reaction.reaction,
            dr_t_final: ps.diffusion_reaction.t_final,
            dr_nx: ps.diffusion_reaction.nx,
            dr_nt: ps.diffusion_reaction.nt,
            ad_diffusion: ps.advection_diffusion.diffusion,
            ad_t_final: ps.advection_diffusion.t_final,
            ad_nx: ps.advection_diffusion.nx,
            ad_nt: ps.advection_diffusion.nt,
            activation: Activation::Tanh,
            width: 50,
            hidden: vec![50, 50],
            method: Method::Resgld,
            seed: 0,
            out: PathBuf::from("run"),
            dataset: None,
            epochs: sc.epochs,
            burn_in_epochs: None,
            batch_size: 1000,
            batching: sc.batching,
            ensemble_size: sc.ensemble_size,
            thinning: sc.thinning,
            eval_every: sc.eval_every,
            tau1: sc.tau1,
            tau2: sc.tau2,
            eta1: None,
            eta2: None,
            step_lr: 0.03,
            a1: sc.a1,
            a2: sc.a2,
            control_c: sc.control_c,
            sigma_correction: SigmaMode::Ema,
            ema_decay: 0.99,
            sigma1: 0.0,
            sigma2: 0.0,
            swaps: sc.swaps,
            swap_every: sc.swap_every,
            prior_sigma: 0.0,
            lr: ac.lr,
            beta1: ac.beta1,
            beta2: ac.beta2,
            eps: ac.eps,
            dropout: ac.dropout,
            bench_iterations: 500,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("invalid value `{value}` for `{key}`: expected true or false"),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), T::to_string)
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "problem" => self.problem = v.parse()?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "sensors" => self.sensors = parse(key, v)?,
            "length_scale" => self.length_scale = parse(key, v)?,
            "jitter" => self.jitter = parse(key, v)?,
            "query_dim" => self.query_dim = parse(key, v)?,
            "n_traj" => self.n_traj = parse(key, v)?,
            "p_queries" => self.p_queries = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "pendulum_k" => self.pendulum_k = parse(key, v)?,
            "pendulum_substeps" => self.pendulum_substeps = parse(key, v)?,
            "dr_diffusion" => self.dr_diffusion = parse(key, v)?,
            "dr_reaction" => self.dr_reaction = parse(key, v)?,
            "dr_t_final" => self.dr_t_final = parse(key, v)?,
            "dr_nx" => self.dr_nx = parse(key, v)?,
            "dr_nt" => self.dr_nt = parse(key, v)?,
            "ad_diffusion" => self.ad_diffusion = parse(key, v)?,
            "ad_t_final" => self.ad_t_final = parse(key, v)?,
            "ad_nx" => self.ad_nx = parse(key, v)?,
            "ad_nt" => self.ad_nt = parse(key, v)?,
            "activation" => self.activation = v.parse()?,
            "width" => self.width = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "method" => self.method = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "dataset" => self.dataset = (v != "auto").then(|| PathBuf::from(v)),
            "epochs" => self.epochs = parse(key, v)?,
            "burn_in_epochs" => self.burn_in_epochs = parse_optional(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "batching" => self.batching = v.parse()?,
            "ensemble_size" => self.ensemble_size = parse(key, v)?,
            "thinning" => self.thinning = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "tau1" => self.tau1 = parse(key, v)?,
            "tau2" => self.tau2 = parse(key, v)?,
            "eta1" => self.eta1 = parse_optional(key, v)?,
            "eta2" => self.eta2 = parse_optional(key, v)?,
            "step_lr" => self.step_lr = parse(key, v)?,
            "a1" => self.a1 = parse(key, v)?,
            "a2" => self.a2 = parse(key, v)?,
            "control_c" => self.control_c = parse(key, v)?,
            "sigma_correction" => {
                self.sigma_correction = match v {
                    "ema" => SigmaMode::Ema,
                    "fixed" => SigmaMode::Fixed,
                    "off" => SigmaMode::Off,
                    _ => bail!("invalid value `{v}` for `sigma_correction`: expected ema, fixed or off"),
                }
            }
            "ema_decay" => self.ema_decay = parse(key, v)?,
            "sigma1" => self.sigma1 = parse(key, v)?,
            "sigma2" => self.sigma2 = parse(key, v)?,
            "swaps" => self.swaps = parse_bool(key, v)?,
            "swap_every" => self.swap_every = parse(key, v)?,
            "prior_sigma" => self.prior_sigma = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "bench_iterations" => self.bench_iterations = parse(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies a `key = value` document on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            self.set(k, v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut c = ExperimentConfig::default();
        c.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        Ok(c)
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hidden = self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("problem", self.problem.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("sensors", self.sensors.to_string()),
            ("length_scale", self.length_scale.to_string()),
            ("jitter", self.jitter.to_string()),
            ("query_dim", self.query_dim.to_string()),
            ("n_traj", self.n_traj.to_string()),
            ("p_queries", self.p_queries.to_string()),
            ("n_test", self.n_test.to_string()),
            ("pendulum_k", self.pendulum_k.to_string()),
            ("pendulum_substeps", self.pendulum_substeps.to_string()),
            ("dr_diffusion", self.dr_diffusion.to_string()),
            ("dr_reaction", self.dr_reaction.to_string()),
            ("dr_t_final", self.dr_t_final.to_string()),
            ("dr_nx", self.dr_nx.to_string()),
            ("dr_nt", self.dr_nt.to_string()),
            ("ad_diffusion", self.ad_diffusion.to_string()),
            ("ad_t_final", self.ad_t_final.to_string()),
            ("ad_nx", self.ad_nx.to_string()),
            ("ad_nt", self.ad_nt.to_string()),
            ("activation", self.activation.to_string()),
            ("width", self.width.to_string()),
            ("hidden", hidden),
            ("method", self.method.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("dataset", self.dataset.as_ref().map_or("auto".into(), |p| p.display().to_string())),
            ("epochs", self.epochs.to_string()),
            ("burn_in_epochs", show_optional(&self.burn_in_epochs)),
            ("batch_size", self.batch_size.to_string()),
            ("batching", self.batching.name().to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("thinning", self.thinning.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("tau1", self.tau1.to_string()),
            ("tau2", self.tau2.to_string()),
            ("eta1", show_optional(&self.eta1)),
            ("eta2", show_optional(&self.eta2)),
            ("step_lr", self.step_lr.to_string()),
            ("a1", self.a1.to_string()),
            ("a2", self.a2.to_string()),
            ("control_c", self.control_c.to_string()),
            ("sigma_correction", self.sigma_correction.name().to_string()),
            ("ema_decay", self.ema_decay.to_string()),
            ("sigma1", self.sigma1.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("swaps", self.swaps.to_string()),
            ("swap_every", self.swap_every.to_string()),
            ("prior_sigma", self.prior_sigma.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("dropout", self.dropout.to_string()),
            ("bench_iterations", self.bench_iterations.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset.txt"))
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let mut ps = ProblemSpec::new(self.problem);
        ps.sensors = self.sensors;
        ps.length_scale = self.length_scale;
        ps.jitter = self.jitter;
        ps.query_dim = self.query_dim;
        ps.pendulum_k = self.pendulum_k;
        ps.pendulum_substeps = self.pendulum_substeps;
        ps.diffusion_reaction.diffusion = self.dr_diffusion;
        ps.diffusion_reaction.reaction = self.dr_reaction;
        ps.diffusion_reaction.t_final = self.dr_t_final;
        ps.diffusion_reaction.nx = self.dr_nx;
        ps.diffusion_reaction.nt = self.dr_nt;
        ps.advection_diffusion.diffusion = self.ad_diffusion;
        ps.advection_diffusion.t_final = self.ad_t_final;
        ps.advection_diffusion.nx = self.ad_nx;
        ps.advection_diffusion.nt = self.ad_nt;
        DatasetSpec {
            problem: ps,
            n_traj: self.n_traj,
            p_queries: self.p_queries,
            n_test: self.n_test,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn shape(&self) -> Result<DeepOnetShape> {
        Ok(DeepOnetShape::uniform(self.sensors, self.query_dim, self.width, &self.hidden, self.activation)?)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in_epochs.unwrap_or(self.epochs / 2)
    }

    /// Training triplet count implied by the dataset settings.
    pub fn n_total(&self) -> usize {
        self.n_traj * self.p_queries
    }

    /// Energy over a training set of `n_total` triplets.
    pub fn energy_spec(&self, n_total: usize) -> Result<EnergySpec> {
        let prior = if self.prior_sigma > 0.0 { Prior::Gaussian { sigma: self.prior_sigma } } else { Prior::None };
        Ok(EnergySpec::new(self.noise_sigma, prior, n_total, self.batch_size)?)
    }

    pub fn sampler_config(&self, n_total: usize) -> SamplerConfig {
        let default_eta = self.step_lr * 2.0 * self.noise_sigma * self.noise_sigma / n_total.max(1) as f64;
        SamplerConfig {
            epochs: self.epochs,
            burn_in_epochs: self.burn_in(),
            batch_size: self.batch_size,
            batching: self.batching,
            tau1: self.tau1,
            tau2: self.tau2,
            eta1: self.eta1.unwrap_or(default_eta),
            eta2: self.eta2.unwrap_or(default_eta),
            a1: self.a1,
            a2: self.a2,
            control_c: self.control_c,
            ensemble_size: self.ensemble_size,
            thinning: self.thinning,
            seed: self.seed,
            sigma_correction: match self.sigma_correction {
                SigmaMode::Ema => SigmaCorrection::Ema { decay: self.ema_decay },
                SigmaMode::Fixed => SigmaCorrection::Fixed { sigma1: self.sigma1, sigma2: self.sigma2 },
                SigmaMode::Off => SigmaCorrection::Off,
            },
            swaps: self.swaps,
            swap_every: self.swap_every,
            eval_every: self.eval_every,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            epochs: self.epochs,
            burn_in_epochs: self.burn_in(),
            batch_size: self.batch_size,
            batching: self.batching,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            dropout: self.dropout,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            eval_every: self.eval_every,
        }
    }

    /// Checks the data, network and method settings before any compute.
    pub fn validate(&self) -> Result<()> {
        self.dataset_spec().validate()?;
        self.shape()?;
        if self.batch_size > self.n_total() {
            bail!("batch_size {} exceeds the {} training triplets", self.batch_size, self.n_total());
        }
        if self.epochs == 0 {
            return Ok(());
        }
        match self.method {
            Method::Adam => self.adam_config().validate()?,
            Method::Resgld | Method::MResgld => {
                self.energy_spec(self.n_total())?;
                self.sampler_config(self.n_total()).validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.apply_text("problem = pendulum\nhidden = 20, 30 # two layers\n\n# comment\neta1 = 1e-9\nswaps = false\n")
            .unwrap();
        assert_eq!(c.problem, Problem::Pendulum);
        assert_eq!(c.hidden, vec![20, 30]);
        assert_eq!(c.eta1, Some(1e-9));
        let mut back = ExperimentConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_lines_name_their_position() {
        let mut c = ExperimentConfig::default();
        let err = c.apply_text("seed = 1\nwidth 5\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
        let err = c.apply_text("seed = 1\n\ncolour = red\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"));
        assert!(c.apply_text("epochs = -1").is_err());
    }

    #[test]
    fn derived_step_size_and_burn_in() {
        let c = ExperimentConfig { epochs: 300, ..Default::default() };
        let s = c.sampler_config(c.n_total());
        assert_eq!(s.burn_in_epochs, 150);
        let expected = 0.03 * 2.0 * 0.01 * 0.01 / 100_000.0;
        assert!((s.eta1 - expected).abs() < 1e-24);
        assert_eq!(s.eta1, s.eta2);
    }

    #[test]
    fn validation_catches_module_errors() {
        let c = ExperimentConfig { query_dim: 2, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { tau1: 2.0, tau2: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { method: Method::Adam, dropout: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        ExperimentConfig::default().validate().unwrap();
    }
}
