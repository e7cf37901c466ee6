//! Relative errors, ensemble prediction bands and their coverage.

use crate::data_gen::TestCase;
use crate::deeponet::DeepOnetShape;
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::samplers::{DropoutEnsemble, PosteriorEnsemble};
use crate::scalar::Real;

/// `(e1, e2)`: relative L1 and L2 errors of `pred` against `truth`, in percent.
pub fn relative_errors<T: Real>(pred: &[T], truth: &[T]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("prediction has {} points, truth {}", pred.len(), truth.len())));
    }
    let (mut d1, mut d2, mut n1, mut n2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (p.as_f64(), t.as_f64());
        let d = (p - t).abs();
        d1 += d;
        d2 += d * d;
        n1 += t.abs();
        n2 += t * t;
    }
    if !(n1 > 0.0) {
        return Err(Error::UndefinedMetric("relative error against an all-zero truth".into()));
    }
    Ok((100.0 * d1 / n1, 100.0 * (d2 / n2).sqrt()))
}

/// Ensemble mean ± 2 standard deviations along a mesh, with the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBand<T> {
    pub mesh: Mat<T>,
    pub mean: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub truth: Vec<T>,
}

impl<T: Real> PredictionBand<T> {
    /// Builds a band from member trajectories with `mean ± k·std`, using the
    /// unbiased (M − 1) standard deviation.
    pub fn from_members(members: &[Vec<T>], mesh: Mat<T>, truth: Vec<T>, k: f64) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(format!("a band needs at least 2 members, got {}", members.len())));
        }
        let p = mesh.rows();
        if truth.len() != p || members.iter().any(|m| m.len() != p) {
            return Err(Error::Shape(format!("band over {p} mesh points with mismatched member or truth lengths")));
        }
        let m = T::of(members.len() as f64);
        let kk = T::of(k);
        let mut mean = vec![T::zero(); p];
        let mut lower = vec![T::zero(); p];
        let mut upper = vec![T::zero(); p];
        for i in 0..p {
            let mu = members.iter().map(|v| v[i]).sum::<T>() / m;
            let var = members.iter().map(|v| (v[i] - mu) * (v[i] - mu)).sum::<T>() / (m - T::one());
            let half = kk * var.sqrt();
            mean[i] = mu;
            lower[i] = mu - half;
            upper[i] = mu + half;
        }
        Ok(PredictionBand { mesh, mean, lower, upper, truth })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Average of `upper − lower` over the mesh.
    pub fn mean_width(&self) -> f64 {
        let s: f64 = self.upper.iter().zip(&self.lower).map(|(u, l)| (*u - *l).as_f64()).sum();
        s / self.len() as f64
    }

    pub fn relative_errors(&self) -> Result<(f64, f64)> {
        relative_errors(&self.mean, &self.truth)
    }
}

/// `e3`: percentage of mesh points whose truth lies inside the band,
/// boundaries included.
pub fn coverage_ratio<T: Real>(band: &PredictionBand<T>) -> f64 {
    if band.is_empty() {
        return 0.0;
    }
    let inside = (0..band.len()).filter(|&i| band.lower[i] <= band.truth[i] && band.truth[i] <= band.upper[i]).count();
    100.0 * inside as f64 / band.len() as f64
}

/// A collection of predictors whose member trajectories form a band.
pub trait TrajectoryEnsemble<T: Real> {
    fn member_count(&self) -> usize;

    /// Branch coefficients of member `k` for input `u`.
    fn branch(&self, shape: &DeepOnetShape, k: usize, u: &[T]) -> Result<Vec<T>>;

    /// Trunk basis of member `k` on `mesh`, one row per point.
    fn trunk(&self, shape: &DeepOnetShape, k: usize, mesh: &Mat<T>) -> Result<Mat<T>>;
}

impl<T: Real> TrajectoryEnsemble<T> for PosteriorEnsemble<T> {
    fn member_count(&self) -> usize {
        self.samples.len()
    }

    fn branch(&self, shape: &DeepOnetShape, k: usize, u: &[T]) -> Result<Vec<T>> {
        let um = Mat::from_vec(1, u.len(), u.to_vec());
        Ok(shape.branch_features(&self.samples[k], &um)?.into_vec())
    }

    fn trunk(&self, shape: &DeepOnetShape, k: usize, mesh: &Mat<T>) -> Result<Mat<T>> {
        shape.trunk_features(&self.samples[k], mesh)
    }
}

impl<T: Real> TrajectoryEnsemble<T> for DropoutEnsemble<T> {
    fn member_count(&self) -> usize {
        self.len()
    }

    fn branch(&self, shape: &DeepOnetShape, k: usize, u: &[T]) -> Result<Vec<T>> {
        let um = Mat::from_vec(1, u.len(), u.to_vec());
        let masks = self.member_masks(k).map(|m| m.0.clone());
        Ok(shape.branch_features_masked(&self.params, &um, masks)?.into_vec())
    }

    fn trunk(&self, shape: &DeepOnetShape, k: usize, mesh: &Mat<T>) -> Result<Mat<T>> {
        let masks = self.member_masks(k).map(|m| m.1.clone());
        shape.trunk_features_masked(&self.params, mesh, masks)
    }
}

fn combine<T: Real>(b: &[T], trunk: &Mat<T>) -> Vec<T> {
    trunk.row_iter().map(|row| dot(b, row)).collect()
}

/// Per-member trajectories of `u` on `mesh`.
pub fn member_trajectories<T: Real, E: TrajectoryEnsemble<T> + ?Sized>(
    ens: &E,
    shape: &DeepOnetShape,
    u: &[T],
    mesh: &Mat<T>,
) -> Result<Vec<Vec<T>>> {
    (0..ens.member_count()).map(|k| Ok(combine(&ens.branch(shape, k, u)?, &ens.trunk(shape, k, mesh)?))).collect()
}

/// Mean ± 2·std band of the ensemble's predictions for one trajectory.
pub fn ensemble_band<T: Real, E: TrajectoryEnsemble<T> + ?Sized>(
    ens: &E,
    shape: &DeepOnetShape,
    u: &[T],
    mesh: &Mat<T>,
    truth: &[T],
) -> Result<PredictionBand<T>> {
    if ens.member_count() < 2 {
        return Err(Error::Config(format!("a band needs at least 2 members, got {}", ens.member_count())));
    }
    let members = member_trajectories(ens, shape, u, mesh)?;
    PredictionBand::from_members(&members, mesh.clone(), truth.to_vec(), 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryMetrics {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub band_width: f64,
}

/// Band metrics for every test trajectory. Trunk features are reused while
/// consecutive trajectories share a mesh.
pub fn evaluate_ensemble<T: Real, E: TrajectoryEnsemble<T> + ?Sized>(
    ens: &E,
    shape: &DeepOnetShape,
    tests: &[TestCase<T>],
) -> Result<Vec<TrajectoryMetrics>> {
    let m = ens.member_count();
    if m < 2 {
        return Err(Error::Config(format!("a band needs at least 2 members, got {m}")));
    }
    let mut cache: Option<(&Mat<T>, Vec<Mat<T>>)> = None;
    let mut out = Vec::with_capacity(tests.len());
    for case in tests {
        let hit = matches!(&cache, Some((mesh, _)) if *mesh == &case.mesh);
        if !hit {
            let trunks = (0..m).map(|k| ens.trunk(shape, k, &case.mesh)).collect::<Result<Vec<_>>>()?;
            cache = Some((&case.mesh, trunks));
        }
        let trunks = &cache.as_ref().expect("cache filled").1;
        let members =
            (0..m).map(|k| Ok(combine(&ens.branch(shape, k, &case.u)?, &trunks[k]))).collect::<Result<Vec<_>>>()?;
        let band = PredictionBand::from_members(&members, case.mesh.clone(), case.truth.clone(), 2.0)?;
        let (e1, e2) = band.relative_errors()?;
        out.push(TrajectoryMetrics { e1, e2, e3: coverage_ratio(&band), band_width: band.mean_width() });
    }
    Ok(out)
}

/// Mean `(e1, e2)` of a single parameter vector over the test set.
pub fn test_errors<T: Real>(shape: &DeepOnetShape, params: &[T], tests: &[TestCase<T>]) -> Result<(f64, f64)> {
    if tests.is_empty() {
        return Err(Error::UndefinedMetric("no test trajectories".into()));
    }
    let mut cache: Option<(&Mat<T>, Mat<T>)> = None;
    let (mut s1, mut s2) = (0.0, 0.0);
    for case in tests {
        let hit = matches!(&cache, Some((mesh, _)) if *mesh == &case.mesh);
        if !hit {
            cache = Some((&case.mesh, shape.trunk_features(params, &case.mesh)?));
        }
        let trunk = &cache.as_ref().expect("cache filled").1;
        let b = shape.branch_features(params, &Mat::from_vec(1, case.u.len(), case.u.clone()))?;
        let (e1, e2) = relative_errors(&combine(b.row(0), trunk), &case.truth)?;
        s1 += e1;
        s2 += e2;
    }
    let n = tests.len() as f64;
    Ok((s1 / n, s2 / n))
}
