//! DeepONet: `G_θ(u)(y) = ⟨branch(u), trunk(y)⟩`.
//!
//! θ is stored as one flat vector, branch parameters first, then trunk.

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::io::{parse_usize, TextReader};
use crate::linalg::{axpy, dot, Mat};
use crate::nn::{Activation, MlpShape, ParamVector};
use crate::scalar::Real;

/// Which sub-network a gradient or update touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    All,
    Branch,
    Trunk,
}

impl Block {
    pub fn includes_branch(self) -> bool {
        matches!(self, Block::All | Block::Branch)
    }

    pub fn includes_trunk(self) -> bool {
        matches!(self, Block::All | Block::Trunk)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeepOnetShape {
    branch: MlpShape,
    trunk: MlpShape,
}

/// Minibatch of `(u, y, target)` triplets stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch<T> {
    pub u: Mat<T>,
    pub y: Mat<T>,
    pub targets: Vec<T>,
}

impl<T: Real> TrainingBatch<T> {
    pub fn new(u: Mat<T>, y: Mat<T>, targets: Vec<T>) -> Result<Self> {
        if u.rows() != y.rows() || u.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "batch rows disagree: u {}, y {}, targets {}",
                u.rows(),
                y.rows(),
                targets.len()
            )));
        }
        let finite = u.as_slice().iter().chain(y.as_slice()).chain(&targets).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Precondition("batch contains non-finite entries".into()));
        }
        Ok(TrainingBatch { u, y, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Branch and trunk features of a batch, kept for the backward pass.
///
/// Without dropout, repeated input functions and repeated query points are
/// evaluated once; `b_of[i]` and `t_of[i]` map batch row `i` to its row in
/// the respective trace.
struct Features<T> {
    branch: crate::nn::Trace<T>,
    trunk: crate::nn::Trace<T>,
    b_of: Vec<usize>,
    t_of: Vec<usize>,
}

/// Distinct rows of `m` (first occurrence order) and the row map.
fn unique_rows<T: Real>(m: &Mat<T>) -> (Mat<T>, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(m.rows());
    let mut data = Vec::new();
    let mut map = Vec::with_capacity(m.rows());
    for row in m.row_iter() {
        let key: Vec<u64> = row.iter().map(|v| v.as_f64().to_bits()).collect();
        let next = seen.len();
        let idx = *seen.entry(key).or_insert_with(|| {
            data.extend_from_slice(row);
            next
        });
        map.push(idx);
    }
    (Mat::from_vec(seen.len(), m.cols(), data), map)
}

impl DeepOnetShape {
    /// Branch maps `m` sensor values to `q` features; trunk maps a
    /// `d`-dimensional query point to `q` features.
    pub fn new(branch: MlpShape, trunk: MlpShape) -> Result<Self> {
        if branch.output_dim() != trunk.output_dim() {
            return Err(Error::Config(format!(
                "branch width {} differs from trunk width {}",
                branch.output_dim(),
                trunk.output_dim()
            )));
        }
        Ok(DeepOnetShape { branch, trunk })
    }

    /// Convenience constructor with identical hidden layout for both nets.
    pub fn uniform(m: usize, d: usize, q: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let dims = |input: usize| {
            let mut v = Vec::with_capacity(hidden.len() + 2);
            v.push(input);
            v.extend_from_slice(hidden);
            v.push(q);
            v
        };
        Self::new(MlpShape::new(dims(m), activation)?, MlpShape::new(dims(d), activation)?)
    }

    pub fn branch(&self) -> &MlpShape {
        &self.branch
    }

    pub fn trunk(&self) -> &MlpShape {
        &self.trunk
    }

    /// Sensor count `m`.
    pub fn sensors(&self) -> usize {
        self.branch.input_dim()
    }

    /// Query dimension `d`.
    pub fn query_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Feature width `q`.
    pub fn width(&self) -> usize {
        self.branch.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.branch.num_params() + self.trunk.num_params()
    }

    pub fn branch_range(&self) -> Range<usize> {
        0..self.branch.num_params()
    }

    pub fn trunk_range(&self) -> Range<usize> {
        self.branch.num_params()..self.num_params()
    }

    pub fn block_range(&self, block: Block) -> Range<usize> {
        match block {
            Block::All => 0..self.num_params(),
            Block::Branch => self.branch_range(),
            Block::Trunk => self.trunk_range(),
        }
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(shape_err("DeepONet parameter length", self.num_params(), params.len()));
        }
        Ok(())
    }

    pub fn glorot_init<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector<T> {
        let mut v = self.branch.glorot_init::<T, _>(rng).into_vec();
        v.extend_from_slice(&self.trunk.glorot_init::<T, _>(rng));
        v.into()
    }

    pub fn forward<T: Real>(&self, params: &[T], u: &[T], y: &[T]) -> Result<T> {
        self.check_params(params)?;
        let b = self.branch.forward(&params[self.branch_range()], u)?;
        let t = self.trunk.forward(&params[self.trunk_range()], y)?;
        Ok(dot(&b, &t))
    }

    fn features<T: Real>(
        &self,
        params: &[T],
        batch: &TrainingBatch<T>,
        masks: Option<(Vec<Mat<T>>, Vec<Mat<T>>)>,
    ) -> Result<Features<T>> {
        self.check_params(params)?;
        let (bm, tm) = match masks {
            Some((b, t)) => (Some(b), Some(t)),
            None => (None, None),
        };
        let (u, b_of) = match bm {
            Some(_) => (batch.u.clone(), (0..batch.len()).collect()),
            None => unique_rows(&batch.u),
        };
        let (y, t_of) = match tm {
            Some(_) => (batch.y.clone(), (0..batch.len()).collect()),
            None => unique_rows(&batch.y),
        };
        let branch = self.branch.forward_batch(&params[self.branch_range()], u, bm)?;
        let trunk = self.trunk.forward_batch(&params[self.trunk_range()], y, tm)?;
        Ok(Features { branch, trunk, b_of, t_of })
    }

    /// Model outputs for every row of the batch.
    pub fn predict_batch<T: Real>(&self, params: &[T], batch: &TrainingBatch<T>) -> Result<Vec<T>> {
        let f = self.features(params, batch, None)?;
        Ok(outputs(&f))
    }

    /// Mean squared residual `(1/n) Σ (G_θ(uᵢ)(yᵢ) − targetᵢ)²`.
    pub fn loss<T: Real>(&self, params: &[T], batch: &TrainingBatch<T>) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::Precondition("loss of an empty batch".into()));
        }
        let out = self.predict_batch(params, batch)?;
        let ss: T = out.iter().zip(&batch.targets).map(|(g, t)| (*g - *t) * (*g - *t)).sum();
        Ok(ss / T::of(batch.len() as f64))
    }

    /// Gradient of `scale · Σ residual²` with respect to θ.
    pub fn grad<T: Real>(&self, params: &[T], batch: &TrainingBatch<T>, scale: T) -> Result<ParamVector<T>> {
        let mut g = ParamVector::zeros(self.num_params());
        self.grad_into(params, batch, scale, Block::All, None, &mut g)?;
        Ok(g)
    }

    /// Writes into `grad` the gradient of `scale · Σ residual²` restricted to
    /// `block` (other coordinates are zeroed; their backward pass is skipped).
    /// Optional dropout masks `(branch, trunk)` are applied to hidden layers.
    /// Returns the unscaled sum of squared residuals.
    pub fn grad_into<T: Real>(
        &self,
        params: &[T],
        batch: &TrainingBatch<T>,
        scale: T,
        block: Block,
        masks: Option<(Vec<Mat<T>>, Vec<Mat<T>>)>,
        grad: &mut [T],
    ) -> Result<T> {
        if grad.len() != self.num_params() {
            return Err(shape_err("gradient buffer length", self.num_params(), grad.len()));
        }
        if !scale.is_finite() {
            return Err(Error::Precondition(format!("gradient scale must be finite, got {scale}")));
        }
        let f = self.features(params, batch, masks)?;
        let out = outputs(&f);
        let n = batch.len();
        let q = self.width();
        let mut sum_sq = T::zero();
        let mut d_out = Vec::with_capacity(n);
        for (g, t) in out.iter().zip(&batch.targets) {
            let r = *g - *t;
            sum_sq += r * r;
            d_out.push((scale + scale) * r);
        }
        grad.iter_mut().for_each(|v| *v = T::zero());
        let b = f.branch.output();
        let t = f.trunk.output();
        if block.includes_branch() {
            let mut up = Mat::zeros(b.rows(), q);
            for i in 0..n {
                axpy(d_out[i], t.row(f.t_of[i]), up.row_mut(f.b_of[i]));
            }
            let r = self.branch_range();
            self.branch.backward_batch(&params[r.clone()], &f.branch, &up, &mut grad[r], false)?;
        }
        if block.includes_trunk() {
            let mut up = Mat::zeros(t.rows(), q);
            for i in 0..n {
                axpy(d_out[i], b.row(f.b_of[i]), up.row_mut(f.t_of[i]));
            }
            let r = self.trunk_range();
            self.trunk.backward_batch(&params[r.clone()], &f.trunk, &up, &mut grad[r], false)?;
        }
        Ok(sum_sq)
    }

    /// Predictions along a mesh of query points (one row per point). The
    /// branch is evaluated once and reused for every mesh point.
    pub fn predict_trajectory<T: Real>(&self, params: &[T], u: &[T], mesh: &Mat<T>) -> Result<Vec<T>> {
        self.check_params(params)?;
        if mesh.rows() == 0 {
            return Err(Error::Precondition("empty mesh".into()));
        }
        let b = self.branch.forward(&params[self.branch_range()], u)?;
        let t = self.trunk_features(params, mesh)?;
        Ok(t.row_iter().map(|row| dot(&b, row)).collect())
    }

    /// Trunk outputs (basis functions) at each mesh point.
    pub fn trunk_features<T: Real>(&self, params: &[T], mesh: &Mat<T>) -> Result<Mat<T>> {
        self.trunk_features_masked(params, mesh, None)
    }

    /// Branch outputs (coefficients) for each row of `u`.
    pub fn branch_features<T: Real>(&self, params: &[T], u: &Mat<T>) -> Result<Mat<T>> {
        self.branch_features_masked(params, u, None)
    }

    pub fn trunk_features_masked<T: Real>(
        &self,
        params: &[T],
        mesh: &Mat<T>,
        masks: Option<Vec<Mat<T>>>,
    ) -> Result<Mat<T>> {
        self.check_params(params)?;
        Ok(self.trunk.forward_batch(&params[self.trunk_range()], mesh.clone(), masks)?.into_output())
    }

    pub fn branch_features_masked<T: Real>(
        &self,
        params: &[T],
        u: &Mat<T>,
        masks: Option<Vec<Mat<T>>>,
    ) -> Result<Mat<T>> {
        self.check_params(params)?;
        Ok(self.branch.forward_batch(&params[self.branch_range()], u.clone(), masks)?.into_output())
    }

    /// Header `deeponet <m> <d> <q>` followed by the branch and trunk checkpoints.
    pub fn write_checkpoint<T: Real, W: Write>(&self, params: &[T], w: &mut W) -> Result<()> {
        self.check_params(params)?;
        writeln!(w, "deeponet {} {} {}", self.sensors(), self.query_dim(), self.width())?;
        self.branch.write_checkpoint(&params[self.branch_range()], w)?;
        self.trunk.write_checkpoint(&params[self.trunk_range()], w)?;
        Ok(())
    }

    pub fn read_checkpoint<T: Real>(reader: &mut TextReader<'_>) -> Result<(DeepOnetShape, ParamVector<T>)> {
        let head = reader.header("deeponet")?;
        let m = parse_usize(head.first(), "sensor count", reader)?;
        let d = parse_usize(head.get(1), "query dimension", reader)?;
        let q = parse_usize(head.get(2), "feature width", reader)?;
        let (branch, bp) = MlpShape::read_checkpoint::<T>(reader)?;
        let (trunk, tp) = MlpShape::read_checkpoint::<T>(reader)?;
        if branch.input_dim() != m || trunk.input_dim() != d || branch.output_dim() != q {
            return Err(reader.err("sub-network shapes disagree with the deeponet header"));
        }
        let shape = DeepOnetShape::new(branch, trunk).map_err(|e| reader.err(e.to_string()))?;
        let mut p = bp.into_vec();
        p.extend_from_slice(&tp);
        Ok((shape, p.into()))
    }
}

fn outputs<T: Real>(f: &Features<T>) -> Vec<T> {
    let b = f.branch.output();
    let t = f.trunk.output();
    f.b_of.iter().zip(&f.t_of).map(|(&i, &j)| dot(b.row(i), t.row(j))).collect()
}

/// Shape plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnet<T> {
    pub shape: DeepOnetShape,
    pub params: ParamVector<T>,
}

impl<T: Real> DeepOnet<T> {
    pub fn new(shape: DeepOnetShape, params: ParamVector<T>) -> Result<Self> {
        shape.check_params(&params)?;
        Ok(DeepOnet { shape, params })
    }

    pub fn glorot<R: Rng + ?Sized>(shape: DeepOnetShape, rng: &mut R) -> Self {
        let params = shape.glorot_init(rng);
        DeepOnet { shape, params }
    }

    pub fn forward(&self, u: &[T], y: &[T]) -> Result<T> {
        self.shape.forward(&self.params, u, y)
    }

    pub fn loss(&self, batch: &TrainingBatch<T>) -> Result<T> {
        self.shape.loss(&self.params, batch)
    }

    pub fn grad(&self, batch: &TrainingBatch<T>, scale: T) -> Result<ParamVector<T>> {
        self.shape.grad(&self.params, batch, scale)
    }

    pub fn predict_trajectory(&self, u: &[T], mesh: &Mat<T>) -> Result<Vec<T>> {
        self.shape.predict_trajectory(&self.params, u, mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> DeepOnet<f64> {
        let shape = DeepOnetShape::uniform(4, 1, 3, &[5, 5], Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DeepOnet::glorot(shape, &mut rng);
        for v in m.params.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        m
    }

    fn batch(seed: u64, n: usize) -> TrainingBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        TrainingBatch::new(Mat::from_vec(n, 4, u), Mat::from_vec(n, 1, y), t).unwrap()
    }

    #[test]
    fn zero_branch_gives_zero_output() {
        let mut m = model(1);
        let r = m.shape.branch_range();
        // zero the last branch layer so b ≡ 0
        let last = m.shape.branch().num_layers() - 1;
        for v in &mut m.params[r][m.shape.branch().weight_range(last).start..] {
            *v = 0.0;
        }
        assert_eq!(m.forward(&[0.1, 0.2, 0.3, 0.4], &[0.7]).unwrap(), 0.0);
        let mesh = Mat::from_vec(3, 1, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.predict_trajectory(&[1.0; 4], &mesh).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn scalar_product_of_stub_nets() {
        // q = 1, linear nets with zero weights and biases 2 and 3
        let b = MlpShape::new(vec![1, 1], Activation::Tanh).unwrap();
        let t = MlpShape::new(vec![1, 1], Activation::Tanh).unwrap();
        let shape = DeepOnetShape::new(b, t).unwrap();
        let p = vec![0.0, 2.0, 0.0, 3.0];
        assert_eq!(shape.forward(&p, &[5.0], &[9.0]).unwrap(), 6.0);
    }

    #[test]
    fn forward_equals_explicit_inner_product() {
        let m = model(2);
        let u = [0.3, -0.1, 0.8, 0.2];
        let y = [0.4];
        let b = m.shape.branch().forward(&m.params[m.shape.branch_range()], &u).unwrap();
        let t = m.shape.trunk().forward(&m.params[m.shape.trunk_range()], &y).unwrap();
        let mut s = 0.0;
        for i in 0..b.len() {
            s += b[i] * t[i];
        }
        assert!((m.forward(&u, &y).unwrap() - s).abs() < 1e-15);
    }

    #[test]
    fn loss_closed_forms() {
        let b = MlpShape::new(vec![1, 1], Activation::Tanh).unwrap();
        let t = MlpShape::new(vec![1, 1], Activation::Tanh).unwrap();
        let shape = DeepOnetShape::new(b, t).unwrap();
        let p = vec![0.0, 1.0, 0.0, 1.0];
        let one = TrainingBatch::new(Mat::from_vec(1, 1, vec![0.0]), Mat::from_vec(1, 1, vec![0.0]), vec![3.0]).unwrap();
        assert_eq!(shape.loss(&p, &one).unwrap(), 4.0);
        let fit = TrainingBatch::new(Mat::from_vec(1, 1, vec![0.0]), Mat::from_vec(1, 1, vec![0.0]), vec![1.0]).unwrap();
        assert_eq!(shape.loss(&p, &fit).unwrap(), 0.0);
        let empty = TrainingBatch::new(Mat::zeros(0, 1), Mat::zeros(0, 1), vec![]).unwrap();
        assert!(matches!(shape.loss(&p, &empty), Err(Error::Precondition(_))));
    }

    #[test]
    fn batch_rejects_mismatched_rows() {
        assert!(TrainingBatch::new(Mat::<f64>::zeros(2, 1), Mat::zeros(1, 1), vec![0.0]).is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let m = model(3);
        let b = batch(4, 7);
        let scale = 0.37;
        let g = m.grad(&b, scale).unwrap();
        let f = |p: &[f64]| {
            let out = m.shape.predict_batch(p, &b).unwrap();
            scale * out.iter().zip(&b.targets).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
        };
        let fd = finite_diff_grad(f, &m.params, 1e-6).unwrap();
        let max_rel = g
            .iter()
            .zip(fd.iter())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3))
            .fold(0.0, f64::max);
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn grad_zero_cases_and_linearity() {
        let m = model(5);
        let mut b = batch(6, 5);
        assert!(m.grad(&b, 0.0).unwrap().iter().all(|&v| v == 0.0));
        let g1 = m.grad(&b, 1.5).unwrap();
        let g2 = m.grad(&b, 3.0).unwrap();
        for (a, c) in g1.iter().zip(g2.iter()) {
            assert!((2.0 * a - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
        b.targets = m.shape.predict_batch(&m.params, &b).unwrap();
        assert!(m.grad(&b, 1.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_gradients_partition_the_full_gradient() {
        let m = model(7);
        let b = batch(8, 6);
        let full = m.grad(&b, 1.0).unwrap();
        for block in [Block::Branch, Block::Trunk] {
            let mut g = vec![1.0; m.shape.num_params()];
            m.shape.grad_into(&m.params, &b, 1.0, block, None, &mut g).unwrap();
            let r = m.shape.block_range(block);
            for i in 0..g.len() {
                if r.contains(&i) {
                    assert_eq!(g[i], full[i]);
                } else {
                    assert_eq!(g[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn trajectory_equals_pointwise_forward_bit_exactly() {
        let m = model(9);
        let u = [0.5, -0.4, 0.1, 0.9];
        let pts: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let mesh = Mat::from_vec(100, 1, pts.clone());
        let traj = m.predict_trajectory(&u, &mesh).unwrap();
        for (y, v) in pts.iter().zip(&traj) {
            assert_eq!(m.forward(&u, &[*y]).unwrap().to_bits(), v.to_bits());
        }
        let single = m.predict_trajectory(&u, &Mat::from_vec(1, 1, vec![0.3])).unwrap();
        assert_eq!(single, vec![m.forward(&u, &[0.3]).unwrap()]);
        assert!(m.predict_trajectory(&u, &Mat::zeros(0, 1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(10);
        let mut buf = Vec::new();
        m.shape.write_checkpoint(&m.params, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("deeponet 4 1 3\nmlp 3 tanh\n"));
        let mut r = TextReader::new(&text);
        let (shape, p) = DeepOnetShape::read_checkpoint::<f64>(&mut r).unwrap();
        assert_eq!(shape, m.shape);
        assert_eq!(p, m.params);
    }
}
