//! Mean-zero Gaussian random fields with an RBF covariance kernel.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct GrfSpec {
    pub length_scale: f64,
    pub grid: Vec<f64>,
    pub jitter: f64,
}

impl GrfSpec {
    pub fn new(length_scale: f64, grid: Vec<f64>, jitter: f64) -> Result<Self> {
        if !(length_scale > 0.0) || !length_scale.is_finite() {
            return Err(Error::Config(format!("length scale must be positive, got {length_scale}")));
        }
        if !(jitter >= 0.0) {
            return Err(Error::Config(format!("jitter must be non-negative, got {jitter}")));
        }
        if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("GRF grid must be non-empty and strictly increasing".into()));
        }
        Ok(GrfSpec { length_scale, grid, jitter })
    }

    /// `k(x₁, x₂) = exp(−(x₁ − x₂)² / 2l²)`
    pub fn kernel(&self, x1: f64, x2: f64) -> f64 {
        let d = x1 - x2;
        (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Kernel Gram matrix on the grid, without jitter.
    pub fn covariance(&self) -> Mat<f64> {
        let m = self.grid.len();
        let mut k = Mat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                k.row_mut(i)[j] = self.kernel(self.grid[i], self.grid[j]);
            }
        }
        k
    }

    /// Factorises `K + jitter·I` once; the sampler can then draw many fields.
    pub fn sampler(&self) -> Result<GrfSampler> {
        let mut k = self.covariance();
        for i in 0..k.rows() {
            k.row_mut(i)[i] += self.jitter;
        }
        Ok(GrfSampler { chol: cholesky(&k)? })
    }
}

#[derive(Clone, Debug)]
pub struct GrfSampler {
    chol: Mat<f64>,
}

impl GrfSampler {
    /// `L·z` with `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.chol.rows();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        (0..m)
            .map(|i| {
                let row = self.chol.row(i);
                (0..=i).map(|j| row[j] * z[j]).sum()
            })
            .collect()
    }

    pub fn factor(&self) -> &Mat<f64> {
        &self.chol
    }
}

pub fn grf_sample<R: Rng + ?Sized>(spec: &GrfSpec, rng: &mut R) -> Result<Vec<f64>> {
    Ok(spec.sampler()?.sample(rng))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Mat<f64>) -> Result<Mat<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("Cholesky of a {}x{} matrix", n, a.cols())));
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.row(i)[j];
            for k in 0..j {
                s -= l.row(i)[k] * l.row(j)[k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::IllConditionedKernel { pivot: i });
                }
                l.row_mut(i)[i] = s.sqrt();
            } else {
                let v = s / l.row(j)[j];
                l.row_mut(i)[j] = v;
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn uniform_grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    #[test]
    fn kernel_values() {
        let s = GrfSpec::new(0.2, uniform_grid(10), 1e-10).unwrap();
        assert_eq!(s.kernel(0.3, 0.3), 1.0);
        assert!((s.kernel(0.1, 0.3) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((s.kernel(0.1, 0.3) - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(GrfSpec::new(0.0, uniform_grid(5), 1e-10).is_err());
        assert!(GrfSpec::new(0.2, vec![0.0, 0.5, 0.5], 1e-10).is_err());
        assert!(GrfSpec::new(0.2, vec![], 1e-10).is_err());
    }

    #[test]
    fn cholesky_reconstructs_matrix() {
        let a = Mat::from_rows(&[vec![4.0, 2.0, 0.4], vec![2.0, 5.0, 1.0], vec![0.4, 1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l.row(i)[k] * l.row(j)[k]).sum();
                assert!((v - a.row(i)[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_kernel_without_jitter_fails() {
        // duplicated-in-effect points: l huge makes K ≈ all-ones (rank one)
        let s = GrfSpec::new(1e6, uniform_grid(20), 0.0).unwrap();
        assert!(matches!(s.sampler(), Err(Error::IllConditionedKernel { .. })));
    }

    #[test]
    fn default_resolution_factorises() {
        let s = GrfSpec::new(0.2, uniform_grid(100), 1e-10).unwrap();
        let sampler = s.sampler().unwrap();
        let u = sampler.sample(&mut rng::stream(1, 0));
        assert_eq!(u.len(), 100);
        assert!(u.iter().all(|v| v.is_finite()));
    }
}
