//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! A network is split into a [`MlpShape`] (layer widths and activation) and a
//! flat [`ParamVector`]. Keeping the parameters flat lets the samplers treat
//! θ as a single vector: Langevin steps, swaps and snapshots never need to
//! know about layers.
//!
//! Parameter layout is layer-major; within a layer the `out × in` weight
//! matrix comes first (row-major), followed by the `out` biases.

use std::fmt;
use std::io::Write;
use std::ops::{Deref, DerefMut, Range};
use std::str::FromStr;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::io::{parse_usize, write_row, TextReader};
use crate::linalg::{axpy, dot, Mat};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Flat parameter vector θ.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Real> ParamVector<T> {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![T::zero(); len])
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParamVector(v)
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParamVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Layer widths `[input, hidden..., output]` plus the hidden activation.
/// The output layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpShape {
    dims: Vec<usize>,
    activation: Activation,
    offsets: Vec<usize>,
}

/// Intermediate values of a batched forward pass, needed by the backward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Input of every layer (after dropout masking for hidden layers).
    inputs: Vec<Mat<T>>,
    /// Unmasked hidden activations, present only when masks were applied.
    unmasked: Vec<Option<Mat<T>>>,
    masks: Option<Vec<Mat<T>>>,
    output: Mat<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Mat<T> {
        &self.output
    }

    pub fn into_output(self) -> Mat<T> {
        self.output
    }
}

impl MlpShape {
    pub fn new(dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("layer widths must be positive, got {dims:?}")));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        offsets.push(0);
        for w in dims.windows(2) {
            acc += w[0] * w[1] + w[1];
            offsets.push(acc);
        }
        Ok(MlpShape { dims, activation, offsets })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Number of hidden layers (those followed by the activation).
    pub fn num_hidden(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn num_params(&self) -> usize {
        *self.offsets.last().expect("offsets non-empty")
    }

    /// Range of layer `l`'s weights within the parameter vector.
    pub fn weight_range(&self, l: usize) -> Range<usize> {
        let start = self.offsets[l];
        start..start + self.dims[l] * self.dims[l + 1]
    }

    pub fn bias_range(&self, l: usize) -> Range<usize> {
        let end = self.offsets[l + 1];
        end - self.dims[l + 1]..end
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(shape_err("parameter vector length", self.num_params(), params.len()));
        }
        Ok(())
    }

    /// Glorot-uniform weights with bound √(6/(fan_in+fan_out)), zero biases.
    pub fn glorot_init<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector<T> {
        let mut p = ParamVector::zeros(self.num_params());
        for l in 0..self.num_layers() {
            let bound = (6.0 / (self.dims[l] + self.dims[l + 1]) as f64).sqrt();
            for w in &mut p[self.weight_range(l)] {
                *w = T::of(rng.random_range(-bound..bound));
            }
        }
        p
    }

    /// Single-sample forward pass.
    pub fn forward<T: Real>(&self, params: &[T], x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(shape_err("MLP input width", self.input_dim(), x.len()));
        }
        let trace = self.forward_batch(params, Mat::from_vec(1, x.len(), x.to_vec()), None)?;
        Ok(trace.into_output().into_vec())
    }

    /// Batched forward pass over the rows of `x`.
    ///
    /// `masks`, when given, holds one matrix per hidden layer whose entries
    /// multiply that layer's activations (dropout). A mask with a single row
    /// is broadcast to every input row.
    pub fn forward_batch<T: Real>(
        &self,
        params: &[T],
        x: Mat<T>,
        masks: Option<Vec<Mat<T>>>,
    ) -> Result<Trace<T>> {
        self.check_params(params)?;
        if x.cols() != self.input_dim() {
            return Err(shape_err("MLP input width", self.input_dim(), x.cols()));
        }
        if let Some(ms) = &masks {
            if ms.len() != self.num_hidden() {
                return Err(shape_err("dropout mask count", self.num_hidden(), ms.len()));
            }
            for (h, m) in ms.iter().enumerate() {
                if m.cols() != self.dims[h + 1] || (m.rows() != 1 && m.rows() != x.rows()) {
                    return Err(Error::Shape(format!("dropout mask {h} has shape {}x{}", m.rows(), m.cols())));
                }
            }
        }
        let n = x.rows();
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut unmasked = Vec::with_capacity(layers);
        unmasked.push(None);
        let mut current = x;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &params[self.weight_range(l)];
            let b = &params[self.bias_range(l)];
            let hidden = l + 1 < layers;
            let mut z = Mat::zeros(n, fan_out);
            for i in 0..n {
                let a = current.row(i);
                let zi = z.row_mut(i);
                for j in 0..fan_out {
                    let v = dot(a, &w[j * fan_in..(j + 1) * fan_in]) + b[j];
                    zi[j] = if hidden { self.activation.apply(v) } else { v };
                }
            }
            inputs.push(current);
            if !hidden {
                current = z;
                break;
            }
            match &masks {
                Some(ms) => {
                    let m = &ms[l];
                    let mut masked = z.clone();
                    for i in 0..n {
                        let mrow = m.row(if m.rows() == 1 { 0 } else { i });
                        for (v, s) in masked.row_mut(i).iter_mut().zip(mrow) {
                            *v = *v * *s;
                        }
                    }
                    unmasked.push(Some(z));
                    current = masked;
                }
                None => {
                    unmasked.push(None);
                    current = z;
                }
            }
        }
        Ok(Trace { inputs, unmasked, masks, output: current })
    }

    /// Accumulates (`+=`) into `grad` the gradient of `Σ_i ⟨upstream_i, f(x_i)⟩`
    /// with respect to the parameters. Returns the gradient with respect to the
    /// inputs when `want_input_grad` is set.
    pub fn backward_batch<T: Real>(
        &self,
        params: &[T],
        trace: &Trace<T>,
        upstream: &Mat<T>,
        grad: &mut [T],
        want_input_grad: bool,
    ) -> Result<Option<Mat<T>>> {
        self.check_params(params)?;
        self.check_params(grad)?;
        let n = trace.output.rows();
        if upstream.rows() != n || upstream.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                n,
                self.output_dim()
            )));
        }
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let input = &trace.inputs[l];
            {
                let (gw, gb) = {
                    let wr = self.weight_range(l);
                    let br = self.bias_range(l);
                    let (head, tail) = grad.split_at_mut(br.start);
                    (&mut head[wr], &mut tail[..fan_out])
                };
                for i in 0..n {
                    let a = input.row(i);
                    for (j, &dj) in delta.row(i).iter().enumerate() {
                        if dj != T::zero() {
                            axpy(dj, a, &mut gw[j * fan_in..(j + 1) * fan_in]);
                        }
                        gb[j] += dj;
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            let w = &params[self.weight_range(l)];
            let mut prev = Mat::zeros(n, fan_in);
            for i in 0..n {
                let pi = prev.row_mut(i);
                for (j, &dj) in delta.row(i).iter().enumerate() {
                    if dj != T::zero() {
                        axpy(dj, &w[j * fan_in..(j + 1) * fan_in], pi);
                    }
                }
            }
            if l > 0 {
                let act_src = trace.unmasked[l].as_ref().unwrap_or(&trace.inputs[l]);
                let mask = trace.masks.as_ref().map(|ms| &ms[l - 1]);
                for i in 0..n {
                    let a = act_src.row(i);
                    let pi = prev.row_mut(i);
                    for (v, &ai) in pi.iter_mut().zip(a) {
                        *v = *v * self.activation.derivative_from_output(ai);
                    }
                    if let Some(m) = mask {
                        let mrow = m.row(if m.rows() == 1 { 0 } else { i });
                        for (v, s) in pi.iter_mut().zip(mrow) {
                            *v = *v * *s;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok(Some(delta))
    }

    /// Single-sample reverse pass: gradients of `⟨upstream, f(x)⟩` with
    /// respect to the parameters and to `x`.
    pub fn backward<T: Real>(&self, params: &[T], x: &[T], upstream: &[T]) -> Result<(ParamVector<T>, Vec<T>)> {
        if x.len() != self.input_dim() {
            return Err(shape_err("MLP input width", self.input_dim(), x.len()));
        }
        if upstream.len() != self.output_dim() {
            return Err(shape_err("upstream width", self.output_dim(), upstream.len()));
        }
        let trace = self.forward_batch(params, Mat::from_vec(1, x.len(), x.to_vec()), None)?;
        let up = Mat::from_vec(1, upstream.len(), upstream.to_vec());
        let mut g = ParamVector::zeros(self.num_params());
        let dx = self.backward_batch(params, &trace, &up, &mut g, true)?.expect("input grad requested");
        Ok((g, dx.into_vec()))
    }

    /// Splits a flat vector into per-layer weight matrices and bias vectors.
    pub fn unflatten<T: Real>(&self, params: &[T]) -> Result<(Vec<Mat<T>>, Vec<Vec<T>>)> {
        self.check_params(params)?;
        let mut ws = Vec::with_capacity(self.num_layers());
        let mut bs = Vec::with_capacity(self.num_layers());
        for l in 0..self.num_layers() {
            ws.push(Mat::from_vec(self.dims[l + 1], self.dims[l], params[self.weight_range(l)].to_vec()));
            bs.push(params[self.bias_range(l)].to_vec());
        }
        Ok((ws, bs))
    }

    pub fn flatten<T: Real>(&self, weights: &[Mat<T>], biases: &[Vec<T>]) -> Result<ParamVector<T>> {
        if weights.len() != self.num_layers() || biases.len() != self.num_layers() {
            return Err(shape_err("layer count", self.num_layers(), weights.len().min(biases.len())));
        }
        let mut out = Vec::with_capacity(self.num_params());
        for l in 0..self.num_layers() {
            let w = &weights[l];
            if w.rows() != self.dims[l + 1] || w.cols() != self.dims[l] {
                return Err(Error::Shape(format!("layer {l} weights are {}x{}", w.rows(), w.cols())));
            }
            if biases[l].len() != self.dims[l + 1] {
                return Err(shape_err("bias length", self.dims[l + 1], biases[l].len()));
            }
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(&biases[l]);
        }
        Ok(ParamVector(out))
    }

    pub fn write_checkpoint<T: Real, W: Write>(&self, params: &[T], w: &mut W) -> Result<()> {
        self.check_params(params)?;
        writeln!(w, "mlp {} {}", self.num_layers(), self.activation)?;
        for l in 0..self.num_layers() {
            writeln!(w, "layer {} {}", self.dims[l], self.dims[l + 1])?;
        }
        for l in 0..self.num_layers() {
            write_row(w, params[self.offsets[l]..self.offsets[l + 1]].iter().map(|v| v.as_f64()))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<T: Real>(reader: &mut TextReader<'_>) -> Result<(MlpShape, ParamVector<T>)> {
        let head = reader.header("mlp")?;
        let layers = parse_usize(head.first(), "layer count", reader)?;
        let activation: Activation = head
            .get(1)
            .ok_or_else(|| reader.err("missing activation"))?
            .parse()
            .map_err(|_| reader.err("invalid activation"))?;
        let mut dims = Vec::with_capacity(layers + 1);
        for l in 0..layers {
            let toks = reader.header("layer")?;
            let fan_in = parse_usize(toks.first(), "layer input width", reader)?;
            let fan_out = parse_usize(toks.get(1), "layer output width", reader)?;
            if l == 0 {
                dims.push(fan_in);
            } else if dims[l] != fan_in {
                return Err(reader.err(format!("layer {l} input width {fan_in} does not chain")));
            }
            dims.push(fan_out);
        }
        let shape = MlpShape::new(dims, activation).map_err(|e| reader.err(e.to_string()))?;
        let values = reader.values(shape.num_params())?;
        Ok((shape, ParamVector(values.into_iter().map(T::of).collect())))
    }
}

/// A shape together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub shape: MlpShape,
    pub params: ParamVector<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new(shape: MlpShape, params: ParamVector<T>) -> Result<Self> {
        shape.check_params(&params)?;
        Ok(Mlp { shape, params })
    }

    pub fn glorot<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let params = shape.glorot_init(rng);
        Mlp { shape, params }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.shape.forward(&self.params, x)
    }

    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<(ParamVector<T>, Vec<T>)> {
        self.shape.backward(&self.params, x, upstream)
    }
}

/// Central-difference gradient estimate `(f(θ+h eᵢ) − f(θ−h eᵢ)) / 2h`.
pub fn finite_diff_grad<T, F>(mut f: F, theta: &[T], h: T) -> Result<ParamVector<T>>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Precondition(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("objective not finite around coordinate {i}")));
        }
        out.push((plus - minus) / (h + h));
    }
    Ok(ParamVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(dims: &[usize]) -> MlpShape {
        MlpShape::new(dims.to_vec(), Activation::Tanh).unwrap()
    }

    #[test]
    fn param_count_matches_layout() {
        let s = shape(&[3, 5, 2]);
        assert_eq!(s.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(s.weight_range(1), 20..30);
        assert_eq!(s.bias_range(1), 30..32);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let s = shape(&[4, 7, 3]);
        let p = ParamVector::<f64>::zeros(s.num_params());
        assert_eq!(s.forward(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let s = shape(&[1, 1, 1]);
        let p: ParamVector<f64> = vec![1.0, 0.0, 1.0, 0.0].into();
        assert_eq!(s.forward(&p, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let s = shape(&[2, 3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p: ParamVector<f64> = s.glorot_init(&mut rng);
        let mut p = p;
        for b in &mut p[s.bias_range(0)] {
            *b = rng.random_range(-0.5..0.5);
        }
        p[s.bias_range(1)][0] = 0.25;
        let x = [0.3, -0.7];
        // straight-line evaluation: h_j = tanh(W1[j,0] x0 + W1[j,1] x1 + b1[j]); y = Σ W2[0,j] h_j + b2
        let w1 = &p[0..6];
        let b1 = &p[6..9];
        let w2 = &p[9..12];
        let b2 = p[12];
        let mut y = b2;
        for j in 0..3 {
            let h = (w1[2 * j] * x[0] + w1[2 * j + 1] * x[1] + b1[j]).tanh();
            y += w2[j] * h;
        }
        let got = s.forward(&p, &x).unwrap()[0];
        assert!((got - y).abs() < 1e-15, "{got} vs {y}");
    }

    #[test]
    fn input_shape_errors() {
        let s = shape(&[2, 3, 1]);
        let p = ParamVector::<f64>::zeros(s.num_params());
        assert!(matches!(s.forward(&p, &[1.0]), Err(Error::Shape(_))));
        assert!(matches!(s.backward(&p, &[1.0, 2.0], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let s = shape(&[2, 4, 2]);
        let p: ParamVector<f64> = s.glorot_init(&mut ChaCha8Rng::seed_from_u64(1));
        let (g, dx) = s.backward(&p, &[0.2, 0.1], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let s = shape(&[3, 2]);
        let p: ParamVector<f64> = s.glorot_init(&mut ChaCha8Rng::seed_from_u64(2));
        let x = [0.5, -1.0, 2.0];
        let up = [3.0, -0.5];
        let (g, _) = s.backward(&p, &x, &up).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g[i * 3 + j], up[i] * x[j]);
            }
            assert_eq!(g[6 + i], up[i]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::Tanh, Activation::Relu] {
            let s = MlpShape::new(vec![3, 6, 5, 2], act).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut p: ParamVector<f64> = s.glorot_init(&mut rng);
            for l in 0..s.num_layers() {
                for b in &mut p[s.bias_range(l)] {
                    *b = rng.random_range(-0.3..0.3);
                }
            }
            let x = [0.4, -0.2, 0.9];
            let up = [1.3, -0.7];
            let (g, dx) = s.backward(&p, &x, &up).unwrap();
            let obj = |q: &[f64]| dot(&s.forward(q, &x).unwrap(), &up);
            let fd = finite_diff_grad(obj, &p, 1e-6).unwrap();
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            }
            let objx = |xx: &[f64]| dot(&s.forward(&p, xx).unwrap(), &up);
            let fdx = finite_diff_grad(objx, &x, 1e-6).unwrap();
            for (a, b) in dx.iter().zip(fdx.iter()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn masked_backward_matches_finite_differences() {
        let s = shape(&[2, 5, 4, 1]);
        let p: ParamVector<f64> = s.glorot_init(&mut ChaCha8Rng::seed_from_u64(5));
        let masks = vec![
            Mat::from_vec(1, 5, vec![2.0, 0.0, 2.0, 2.0, 0.0]),
            Mat::from_vec(1, 4, vec![0.0, 2.0, 2.0, 2.0]),
        ];
        let x = Mat::from_vec(1, 2, vec![0.3, -0.8]);
        let trace = s.forward_batch(&p, x.clone(), Some(masks.clone())).unwrap();
        let mut g = ParamVector::zeros(s.num_params());
        s.backward_batch(&p, &trace, &Mat::from_vec(1, 1, vec![1.0]), &mut g, false).unwrap();
        let obj = |q: &[f64]| s.forward_batch(q, x.clone(), Some(masks.clone())).unwrap().output().row(0)[0];
        let fd = finite_diff_grad(obj, &p, 1e-6).unwrap();
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn finite_diff_of_constant_and_quadratic() {
        let z = finite_diff_grad(|_: &[f64]| 4.0, &[1.0, 2.0], 1e-3).unwrap();
        assert_eq!(&z[..], &[0.0, 0.0]);
        let q = finite_diff_grad(|t: &[f64]| 0.5 * (t[0] * t[0] + t[1] * t[1]), &[1.0, -2.0], 1e-4).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-9 && (q[1] + 2.0).abs() < 1e-9);
        assert!(matches!(finite_diff_grad(|_: &[f64]| 0.0, &[1.0], 0.0), Err(Error::Precondition(_))));
        assert!(matches!(
            finite_diff_grad(|t: &[f64]| if t[0] > 1.0 { f64::NAN } else { 0.0 }, &[1.0], 0.1),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let s = MlpShape::new(vec![3, 4, 2], Activation::Relu).unwrap();
        let p: ParamVector<f64> = s.glorot_init(&mut ChaCha8Rng::seed_from_u64(3));
        let mut buf = Vec::new();
        s.write_checkpoint(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mlp 2 relu\nlayer 3 4\nlayer 4 2\n"));
        let mut r = TextReader::new(&text);
        let (s2, p2) = MlpShape::read_checkpoint::<f64>(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(s2, s);
        assert_eq!(p2, p);
    }

    #[test]
    fn forward_is_generic_over_f32() {
        let s = shape(&[2, 3, 1]);
        let p: ParamVector<f32> = s.glorot_init(&mut ChaCha8Rng::seed_from_u64(9));
        let a = s.forward(&p, &[0.1f32, 0.2]).unwrap();
        let b = s.forward(&p, &[0.1f32, 0.2]).unwrap();
        assert_eq!(a, b);
    }
}
