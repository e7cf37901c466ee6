//! The four subcommands as library functions returning their reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bayes_deeponet::data_gen::{build_dataset, OperatorDataset};
use bayes_deeponet::io::{write_atomic, TextReader};
use bayes_deeponet::metrics::{ensemble_band, evaluate_ensemble, test_errors, PredictionBand, TrajectoryEnsemble, TrajectoryMetrics};
use bayes_deeponet::rng::{self, ids};
use bayes_deeponet::samplers::{
    adam_dropout_train, m_resgld_train, resgld_train, Diagnostics, DropoutEnsemble, EpochErrors, PosteriorEnsemble,
    SwapEvent,
};
use bayes_deeponet::{DeepOnetShape, ParamVector};

use crate::config::{ExperimentConfig, Method};

pub const MANIFEST: &str = "manifest.txt";
pub const ERRORS_CSV: &str = "errors.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const SWAPS_CSV: &str = "swaps.csv";
pub const BAND_CSV: &str = "band.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const BENCH_CSV: &str = "bench.csv";
pub const ENSEMBLE: &str = "ensemble.txt";
pub const MODEL: &str = "model.txt";

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_atomic(path, &csv_bytes(header, rows)?).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let text = format!("# bdeeponet {command}\n{}", cfg.to_text());
    write_atomic(&cfg.out.join(MANIFEST), text.as_bytes())?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GenerateReport {
    pub path: PathBuf,
    pub n_total: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateReport> {
    let spec = cfg.dataset_spec();
    spec.validate()?;
    prepare_out(cfg, "generate")?;
    let data = build_dataset(&spec)?;
    let path = cfg.dataset_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&path, data.to_text()?.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(GenerateReport { path, n_total: data.len(), noise_sigma: spec.noise_sigma, seed: spec.seed })
}

/// Reads the configured dataset and checks it matches the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<OperatorDataset> {
    let path = cfg.dataset_path();
    if !path.exists() {
        bail!("dataset {} not found; run `bdeeponet generate` first", path.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let data = OperatorDataset::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    if data.problem != cfg.problem || data.sensors.len() != cfg.sensors || data.query_dim != cfg.query_dim {
        bail!(
            "dataset {} holds {} with m={}, d={}; config expects {} with m={}, d={}",
            path.display(),
            data.problem,
            data.sensors.len(),
            data.query_dim,
            cfg.problem,
            cfg.sensors,
            cfg.query_dim
        );
    }
    if data.noise_sigma != cfg.noise_sigma {
        bail!("dataset noise sigma {} differs from configured {}", data.noise_sigma, cfg.noise_sigma);
    }
    Ok(data)
}

fn initial_params(cfg: &ExperimentConfig, shape: &DeepOnetShape) -> ParamVector<f64> {
    shape.glorot_init(&mut rng::stream(cfg.seed, ids::INIT))
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub method: Method,
    pub post_burn_in: Option<(f64, f64)>,
    pub last: Option<EpochErrors>,
    pub mean_iteration_seconds: Option<f64>,
    pub swap_count: usize,
}

fn write_diagnostics(cfg: &ExperimentConfig, diag: &Diagnostics, replica: bool) -> Result<()> {
    write_csv(
        &cfg.out.join(ERRORS_CSV),
        &["epoch", "e1", "e2"],
        diag.errors.iter().map(|e| vec![e.epoch.to_string(), e.e1.to_string(), e.e2.to_string()]),
    )?;
    write_csv(
        &cfg.out.join(TIMING_CSV),
        &["iteration", "seconds"],
        diag.iteration_seconds.iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), s.to_string()]),
    )?;
    if replica {
        write_csv(&cfg.out.join(SWAPS_CSV), &["iteration", "rate", "swapped"], diag.swaps.iter().map(swap_row))?;
    }
    Ok(())
}

fn swap_row(s: &SwapEvent) -> Vec<String> {
    vec![s.iteration.to_string(), s.rate.to_string(), s.swapped.to_string()]
}

fn write_model(path: &Path, shape: &DeepOnetShape, params: &[f64]) -> Result<()> {
    let mut buf = Vec::new();
    shape.write_checkpoint(params, &mut buf)?;
    write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    prepare_out(cfg, "train")?;
    let shape = cfg.shape()?;
    let init = initial_params(cfg, &shape);
    let replica = cfg.method != Method::Adam;
    let mut report =
        TrainReport { method: cfg.method, post_burn_in: None, last: None, mean_iteration_seconds: None, swap_count: 0 };
    if cfg.epochs == 0 {
        write_model(&cfg.out.join(MODEL), &shape, &init)?;
        write_diagnostics(cfg, &Diagnostics::default(), replica)?;
        return Ok(report);
    }
    let train = data.train_set::<f64>();
    let tests = data.test_set::<f64>();
    let mut eval = |p: &[f64]| test_errors(&shape, p, &tests);
    let diag = match cfg.method {
        Method::Adam => {
            let (theta, _, diag) = adam_dropout_train(&shape, &init, &train, &cfg.adam_config(), Some(&mut eval))?;
            write_model(&cfg.out.join(MODEL), &shape, &theta)?;
            diag
        }
        Method::Resgld | Method::MResgld => {
            let sc = cfg.sampler_config(train.len());
            let spec = cfg.energy_spec(train.len())?;
            let (ens, diag) = if cfg.method == Method::Resgld {
                resgld_train(&shape, &init, &train, &sc, &spec, Some(&mut eval))?
            } else {
                m_resgld_train(&shape, &init, &train, &sc, &spec, Some(&mut eval))?
            };
            let path = cfg.out.join(ENSEMBLE);
            write_atomic(&path, ens.to_text(&shape)?.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            diag
        }
    };
    write_diagnostics(cfg, &diag, replica)?;
    report.post_burn_in = diag.post_burn_in_mean();
    report.last = diag.errors.last().copied();
    report.mean_iteration_seconds = diag.mean_iteration_seconds();
    report.swap_count = diag.swap_count();
    Ok(report)
}

/// Loads the predictor written by [`train`] as a band-producing ensemble.
pub fn load_ensemble(cfg: &ExperimentConfig) -> Result<(DeepOnetShape, Box<dyn TrajectoryEnsemble<f64>>)> {
    match cfg.method {
        Method::Adam => {
            let path = cfg.out.join(MODEL);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut r = TextReader::new(&text);
            let (shape, params) = DeepOnetShape::read_checkpoint::<f64>(&mut r)?;
            r.finish()?;
            let ens = DropoutEnsemble::new(&shape, params, cfg.dropout, cfg.ensemble_size, cfg.seed);
            Ok((shape, Box::new(ens)))
        }
        Method::Resgld | Method::MResgld => {
            let path = cfg.out.join(ENSEMBLE);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let (shape, ens) =
                PosteriorEnsemble::<f64>::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok((shape, Box::new(ens)))
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvaluateReport {
    pub trajectory: usize,
    pub band: PredictionBand<f64>,
    pub selected: TrajectoryMetrics,
    /// One entry per test trajectory.
    pub all: Vec<TrajectoryMetrics>,
}

impl EvaluateReport {
    pub fn mean(&self, f: impl Fn(&TrajectoryMetrics) -> f64) -> f64 {
        self.all.iter().map(f).sum::<f64>() / self.all.len() as f64
    }

    /// Trajectories whose band contains the truth at every mesh point.
    pub fn fully_covered(&self) -> usize {
        self.all.iter().filter(|m| m.e3 == 100.0).count()
    }
}

pub fn evaluate(cfg: &ExperimentConfig, trajectory: usize) -> Result<EvaluateReport> {
    let data = load_dataset(cfg)?;
    let (shape, ens) = load_ensemble(cfg)?;
    if shape.sensors() != data.sensors.len() || shape.query_dim() != data.query_dim {
        bail!("checkpoint network does not match the dataset dimensions");
    }
    let tests = data.test_set::<f64>();
    let Some(case) = tests.get(trajectory) else {
        bail!("trajectory {trajectory} out of range: the dataset has {} test trajectories", tests.len());
    };
    let band = ensemble_band(ens.as_ref(), &shape, &case.u, &case.mesh, &case.truth)?;
    let all = evaluate_ensemble(ens.as_ref(), &shape, &tests)?;
    prepare_out(cfg, "evaluate")?;
    let d = band.mesh.cols();
    let mut header: Vec<String> = if d == 1 { vec!["y".into()] } else { (1..=d).map(|i| format!("y{i}")).collect() };
    header.extend(["mean", "lower", "upper", "truth"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..band.len()).map(|i| {
        let mut r: Vec<String> = band.mesh.row(i).iter().map(f64::to_string).collect();
        r.extend([band.mean[i], band.lower[i], band.upper[i], band.truth[i]].map(|v| v.to_string()));
        r
    });
    write_csv(&cfg.out.join(BAND_CSV), &header_refs, rows)?;
    write_csv(
        &cfg.out.join(METRICS_CSV),
        &["trajectory", "e1", "e2", "e3", "band_width"],
        all.iter().enumerate().map(|(k, m)| {
            vec![k.to_string(), m.e1.to_string(), m.e2.to_string(), m.e3.to_string(), m.band_width.to_string()]
        }),
    )?;
    Ok(EvaluateReport { trajectory, band, selected: all[trajectory], all })
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub resgld_seconds: f64,
    pub m_resgld_seconds: f64,
    pub swaps_resgld: Vec<SwapEvent>,
    pub swaps_m_resgld: Vec<SwapEvent>,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.m_resgld_seconds / self.resgld_seconds
    }
}

/// Rounds alternate which method runs first, so slow drifts of the machine
/// load and warm-up effects hit both methods alike.
pub const BENCH_ROUNDS: usize = 4;

/// Times reSGLD and m-reSGLD over `bench_iterations` post-burn-in
/// iterations each (burn-in 0), without test evaluation.
pub fn bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    if cfg.bench_iterations == 0 {
        bail!("bench_iterations must be at least 1");
    }
    let mut run_cfg = cfg.clone();
    run_cfg.epochs = cfg.bench_iterations;
    run_cfg.burn_in_epochs = Some(0);
    run_cfg.ensemble_size = 1;
    run_cfg.thinning = 1;
    run_cfg.validate()?;
    let data = load_dataset(cfg)?;
    prepare_out(cfg, "bench")?;
    let shape = run_cfg.shape()?;
    let init = initial_params(&run_cfg, &shape);
    let train = data.train_set::<f64>();
    let sc = run_cfg.sampler_config(train.len());
    let spec = run_cfg.energy_spec(train.len())?;
    let mut times = [Vec::new(), Vec::new()];
    let mut swaps = [Vec::new(), Vec::new()];
    for round in 0..BENCH_ROUNDS {
        let order = if round % 2 == 0 { [false, true] } else { [true, false] };
        for accelerated in order {
            let k = accelerated as usize;
            let (_, diag) = if accelerated {
                m_resgld_train(&shape, &init, &train, &sc, &spec, None)?
            } else {
                resgld_train(&shape, &init, &train, &sc, &spec, None)?
            };
            times[k].extend(diag.iteration_seconds);
            swaps[k] = diag.swaps;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let [swaps_resgld, swaps_m_resgld] = swaps;
    let report = BenchReport {
        resgld_seconds: mean(&times[0]),
        m_resgld_seconds: mean(&times[1]),
        swaps_resgld,
        swaps_m_resgld,
    };
    write_csv(
        &cfg.out.join(BENCH_CSV),
        &["method", "iterations", "mean_seconds"],
        [
            vec!["resgld".into(), times[0].len().to_string(), report.resgld_seconds.to_string()],
            vec!["m-resgld".into(), times[1].len().to_string(), report.m_resgld_seconds.to_string()],
            vec!["ratio".into(), String::new(), report.ratio().to_string()],
        ],
    )?;
    Ok(report)
}
