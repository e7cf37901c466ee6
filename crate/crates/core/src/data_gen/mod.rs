//! Input-function sampling, reference solutions and noisy operator datasets.

pub mod grf;
pub mod solvers;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use grf::{cholesky, grf_sample, GrfSampler, GrfSpec};
pub use solvers::{
    interp_linear, solve_antiderivative, solve_pendulum, uniform_grid, AdvectionDiffusion, DiffusionReaction, Field,
};

use crate::deeponet::TrainingBatch;
use crate::error::{Error, Result};
use crate::io::{fmt_real, parse_f64, parse_usize, write_row, TextReader};
use crate::linalg::Mat;
use crate::rng::{self, ids};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Problem {
    Antiderivative,
    Pendulum,
    DiffusionReaction,
    AdvectionDiffusion,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Antiderivative => "antiderivative",
            Problem::Pendulum => "pendulum",
            Problem::DiffusionReaction => "diffusion_reaction",
            Problem::AdvectionDiffusion => "advection_diffusion",
        }
    }

    pub fn is_pde(self) -> bool {
        matches!(self, Problem::DiffusionReaction | Problem::AdvectionDiffusion)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antiderivative" => Ok(Problem::Antiderivative),
            "pendulum" => Ok(Problem::Pendulum),
            "diffusion_reaction" => Ok(Problem::DiffusionReaction),
            "advection_diffusion" => Ok(Problem::AdvectionDiffusion),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }
}

/// Everything needed to turn one input function into its reference solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub problem: Problem,
    /// Number of sensors `m`, uniformly spaced on `[0, 1]`.
    pub sensors: usize,
    pub length_scale: f64,
    pub jitter: f64,
    /// 1: queries along the output mesh; 2: `(x, t)` pairs (PDE problems only).
    pub query_dim: usize,
    pub pendulum_k: f64,
    pub pendulum_substeps: usize,
    pub diffusion_reaction: DiffusionReaction,
    pub advection_diffusion: AdvectionDiffusion,
}

/// Reference solution of one trajectory: candidate query points and values.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub mesh: Mat<f64>,
    pub values: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(problem: Problem) -> Self {
        ProblemSpec {
            problem,
            sensors: 100,
            length_scale: 0.2,
            jitter: 1e-10,
            query_dim: 1,
            pendulum_k: 1.0,
            pendulum_substeps: 10,
            diffusion_reaction: DiffusionReaction::default(),
            advection_diffusion: AdvectionDiffusion::default(),
        }
    }

    pub fn sensor_grid(&self) -> Vec<f64> {
        uniform_grid(self.sensors)
    }

    pub fn grf_spec(&self) -> Result<GrfSpec> {
        GrfSpec::new(self.length_scale, self.sensor_grid(), self.jitter)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors < 2 {
            return Err(Error::Config("at least two sensors are required".into()));
        }
        match (self.problem.is_pde(), self.query_dim) {
            (_, 1) | (true, 2) => {}
            (false, d) => return Err(Error::Config(format!("query_dim {d} unsupported for {}", self.problem))),
            (true, d) => return Err(Error::Config(format!("query_dim must be 1 or 2, got {d}"))),
        }
        self.grf_spec().map(|_| ())
    }

    /// Solves the problem for input `u` sampled at the sensors.
    pub fn solve(&self, u: &[f64]) -> Result<Reference> {
        if u.len() != self.sensors {
            return Err(Error::Shape(format!("{} input values for {} sensors", u.len(), self.sensors)));
        }
        let grid = self.sensor_grid();
        let on_line = |points: &[f64], values: Vec<f64>| Reference {
            mesh: Mat::from_vec(points.len(), 1, points.to_vec()),
            values,
        };
        match self.problem {
            Problem::Antiderivative => Ok(on_line(&grid, solve_antiderivative(u, &grid)?)),
            Problem::Pendulum => {
                Ok(on_line(&grid, solve_pendulum(u, self.pendulum_k, &grid, self.pendulum_substeps)?))
            }
            Problem::DiffusionReaction => Ok(self.field_reference(self.diffusion_reaction.solve(u, &grid)?)),
            Problem::AdvectionDiffusion => Ok(self.field_reference(self.advection_diffusion.solve(u, &grid)?)),
        }
    }

    fn field_reference(&self, field: Field) -> Reference {
        if self.query_dim == 1 {
            return Reference {
                mesh: Mat::from_vec(field.x.len(), 1, field.x.clone()),
                values: field.final_slice().to_vec(),
            };
        }
        let mut mesh = Vec::with_capacity(field.x.len() * field.t.len() * 2);
        let mut values = Vec::with_capacity(field.x.len() * field.t.len());
        for (n, &t) in field.t.iter().enumerate() {
            for (i, &x) in field.x.iter().enumerate() {
                mesh.push(x);
                mesh.push(t);
                values.push(field.values.row(n)[i]);
            }
        }
        Reference { mesh: Mat::from_vec(values.len(), 2, mesh), values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub problem: ProblemSpec,
    /// Training input functions.
    pub n_traj: usize,
    /// Query points drawn per training function.
    pub p_queries: usize,
    /// Held-out noise-free test trajectories.
    pub n_test: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(problem: Problem) -> Self {
        DatasetSpec {
            problem: ProblemSpec::new(problem),
            n_traj: 1000,
            p_queries: 100,
            n_test: 100,
            noise_sigma: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.n_traj == 0 || self.p_queries == 0 {
            return Err(Error::Config("n_traj and p_queries must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise sigma must be finite and ≥ 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestTrajectory {
    pub u: Vec<f64>,
    pub mesh: Mat<f64>,
    pub truth: Vec<f64>,
}

/// Noisy training triplets plus held-out test trajectories.
///
/// Training input functions are stored once; each triplet refers to its
/// function by index.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorDataset {
    pub problem: Problem,
    pub sensors: Vec<f64>,
    pub query_dim: usize,
    pub noise_sigma: f64,
    pub inputs: Vec<Vec<f64>>,
    pub input_of: Vec<usize>,
    /// Query points, `query_dim` values per triplet.
    pub queries: Vec<f64>,
    pub targets: Vec<f64>,
    pub test: Vec<TestTrajectory>,
}

/// Training samples drawn from a single input function.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySamples {
    pub queries: Vec<f64>,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

/// Draws `p` query points uniformly (with replacement) from the reference
/// mesh, then adds i.i.d. `N(0, σ²)` noise to the targets.
pub fn sample_trajectory<R: Rng + ?Sized>(
    reference: &Reference,
    p: usize,
    sigma: f64,
    rng: &mut R,
) -> TrajectorySamples {
    let points = reference.values.len();
    let idx: Vec<usize> = (0..p).map(|_| rng.random_range(0..points)).collect();
    let mut queries = Vec::with_capacity(p * reference.mesh.cols());
    let mut clean = Vec::with_capacity(p);
    for &k in &idx {
        queries.extend_from_slice(reference.mesh.row(k));
        clean.push(reference.values[k]);
    }
    let noisy = if sigma == 0.0 {
        clean.clone()
    } else {
        clean
            .iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + sigma * z
            })
            .collect()
    };
    TrajectorySamples { queries, clean, noisy }
}

/// Generates the dataset. Training function `i` consumes its own random
/// stream, as does test function `j`, so the result is a pure function of
/// the spec.
pub fn build_dataset(spec: &DatasetSpec) -> Result<OperatorDataset> {
    spec.validate()?;
    let ps = &spec.problem;
    let sampler = ps.grf_spec()?.sampler()?;
    let mut ds = OperatorDataset {
        problem: ps.problem,
        sensors: ps.sensor_grid(),
        query_dim: ps.query_dim,
        noise_sigma: spec.noise_sigma,
        inputs: Vec::with_capacity(spec.n_traj),
        input_of: Vec::with_capacity(spec.n_traj * spec.p_queries),
        queries: Vec::with_capacity(spec.n_traj * spec.p_queries * ps.query_dim),
        targets: Vec::with_capacity(spec.n_traj * spec.p_queries),
        test: Vec::with_capacity(spec.n_test),
    };
    for i in 0..spec.n_traj {
        let mut r = rng::stream(spec.seed, ids::TRAIN_BASE + i as u64);
        let u = sampler.sample(&mut r);
        let reference = ps.solve(&u)?;
        let s = sample_trajectory(&reference, spec.p_queries, spec.noise_sigma, &mut r);
        ds.inputs.push(u);
        ds.input_of.extend(std::iter::repeat(i).take(spec.p_queries));
        ds.queries.extend_from_slice(&s.queries);
        ds.targets.extend_from_slice(&s.noisy);
    }
    for j in 0..spec.n_test {
        let mut r = rng::stream(spec.seed, ids::TEST_BASE + j as u64);
        let u = sampler.sample(&mut r);
        let reference = ps.solve(&u)?;
        ds.test.push(TestTrajectory { u, mesh: reference.mesh, truth: reference.values });
    }
    Ok(ds)
}

/// Training triplets converted to the model's scalar type.
#[derive(Clone, Debug)]
pub struct TrainSet<T> {
    pub inputs: Mat<T>,
    pub input_of: Vec<usize>,
    pub queries: Mat<T>,
    pub targets: Vec<T>,
}

impl<T: Real> TrainSet<T> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn sensors(&self) -> usize {
        self.inputs.cols()
    }

    pub fn query_dim(&self) -> usize {
        self.queries.cols()
    }

    /// Index ranges of the triplets sharing one input function.
    pub fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.input_of.len() {
            if k == self.input_of.len() || self.input_of[k] != self.input_of[start] {
                out.push(start..k);
                start = k;
            }
        }
        out
    }

    /// Assembles the triplets at `indices` into a batch.
    pub fn gather(&self, indices: &[usize]) -> TrainingBatch<T> {
        let (m, d) = (self.sensors(), self.query_dim());
        let mut u = Vec::with_capacity(indices.len() * m);
        let mut y = Vec::with_capacity(indices.len() * d);
        let mut t = Vec::with_capacity(indices.len());
        for &k in indices {
            u.extend_from_slice(self.inputs.row(self.input_of[k]));
            y.extend_from_slice(self.queries.row(k));
            t.push(self.targets[k]);
        }
        TrainingBatch { u: Mat::from_vec(indices.len(), m, u), y: Mat::from_vec(indices.len(), d, y), targets: t }
    }

    pub fn full_batch(&self) -> TrainingBatch<T> {
        self.gather(&(0..self.len()).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug)]
pub struct TestCase<T> {
    pub u: Vec<T>,
    pub mesh: Mat<T>,
    pub truth: Vec<T>,
}

fn convert<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl OperatorDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn query(&self, k: usize) -> &[f64] {
        &self.queries[k * self.query_dim..(k + 1) * self.query_dim]
    }

    pub fn train_set<T: Real>(&self) -> TrainSet<T> {
        let m = self.sensors.len();
        let flat: Vec<T> = self.inputs.iter().flat_map(|u| u.iter().map(|&x| T::of(x))).collect();
        TrainSet {
            inputs: Mat::from_vec(self.inputs.len(), m, flat),
            input_of: self.input_of.clone(),
            queries: Mat::from_vec(self.len(), self.query_dim, convert(&self.queries)),
            targets: convert(&self.targets),
        }
    }

    pub fn test_set<T: Real>(&self) -> Vec<TestCase<T>> {
        self.test
            .iter()
            .map(|tr| TestCase {
                u: convert(&tr.u),
                mesh: Mat::from_vec(tr.mesh.rows(), tr.mesh.cols(), convert(tr.mesh.as_slice())),
                truth: convert(&tr.truth),
            })
            .collect()
    }

    /// Plain-text serialization:
    ///
    /// ```text
    /// dataset <problem> <m> <d> <N> <sigma>
    /// <sensor location>                  (m lines)
    /// u_1 … u_m y_1 … y_d target         (N lines)
    /// test <count>
    /// trajectory <P>                     (per test trajectory)
    /// u_1 … u_m
    /// y_1 … y_d truth                    (P lines)
    /// ```
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "dataset {} {} {} {} {}",
            self.problem,
            self.sensors.len(),
            self.query_dim,
            self.len(),
            fmt_real(self.noise_sigma)
        )?;
        for &x in &self.sensors {
            writeln!(w, "{}", fmt_real(x))?;
        }
        for k in 0..self.len() {
            let u = &self.inputs[self.input_of[k]];
            write_row(w, u.iter().copied().chain(self.query(k).iter().copied()).chain([self.targets[k]]))?;
        }
        writeln!(w, "test {}", self.test.len())?;
        for tr in &self.test {
            writeln!(w, "trajectory {}", tr.truth.len())?;
            write_row(w, tr.u.iter().copied())?;
            for (row, v) in tr.mesh.row_iter().zip(&tr.truth) {
                write_row(w, row.iter().copied().chain([*v]))?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf).expect("ASCII output"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = TextReader::new(text);
        let head = r.header("dataset")?;
        let problem: Problem = head
            .first()
            .ok_or_else(|| r.err("missing problem"))?
            .parse()
            .map_err(|_| r.err("unknown problem"))?;
        let m = parse_usize(head.get(1), "sensor count", &r)?;
        let d = parse_usize(head.get(2), "query dimension", &r)?;
        let n = parse_usize(head.get(3), "triplet count", &r)?;
        let noise_sigma = parse_f64(head.get(4), "noise sigma", &r)?;
        let sensors = r.values(m)?;
        let mut ds = OperatorDataset {
            problem,
            sensors,
            query_dim: d,
            noise_sigma,
            inputs: Vec::new(),
            input_of: Vec::with_capacity(n),
            queries: Vec::with_capacity(n * d),
            targets: Vec::with_capacity(n),
            test: Vec::new(),
        };
        for _ in 0..n {
            let line = r.line_number();
            let row = r.line_values()?;
            if row.len() != m + d + 1 {
                let msg = format!("triplet has {} values, expected {}", row.len(), m + d + 1);
                return Err(Error::Parse { line, msg });
            }
            let u = &row[..m];
            if ds.inputs.last().map(|prev| prev.as_slice() != u).unwrap_or(true) {
                ds.inputs.push(u.to_vec());
            }
            ds.input_of.push(ds.inputs.len() - 1);
            ds.queries.extend_from_slice(&row[m..m + d]);
            ds.targets.push(row[m + d]);
        }
        let head = r.header("test")?;
        let count = parse_usize(head.first(), "test count", &r)?;
        for _ in 0..count {
            let head = r.header("trajectory")?;
            let p = parse_usize(head.first(), "mesh size", &r)?;
            let line = r.line_number();
            let u = r.line_values()?;
            if u.len() != m {
                return Err(Error::Parse { line, msg: format!("test input has {} values, expected {m}", u.len()) });
            }
            let mut mesh = Vec::with_capacity(p * d);
            let mut truth = Vec::with_capacity(p);
            for _ in 0..p {
                let line = r.line_number();
                let row = r.line_values()?;
                if row.len() != d + 1 {
                    let msg = format!("mesh row has {} values, expected {}", row.len(), d + 1);
                    return Err(Error::Parse { line, msg });
                }
                mesh.extend_from_slice(&row[..d]);
                truth.push(row[d]);
            }
            ds.test.push(TestTrajectory { u, mesh: Mat::from_vec(p, d, mesh), truth });
        }
        r.finish()?;
        Ok(ds)
    }
}
