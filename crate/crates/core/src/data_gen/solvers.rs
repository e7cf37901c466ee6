//! Reference solvers for the four benchmark operators.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Piecewise-linear interpolation of `(xs, ys)` at `x`, clamped to the ends.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

fn check_uniform(grid: &[f64], len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(Error::Shape(format!("grid has {} points, input has {len}", grid.len())));
    }
    if grid.len() < 2 {
        return Err(Error::Precondition("solver grid needs at least two points".into()));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::Precondition("solver grid must be uniform and increasing".into()));
    }
    Ok(())
}

/// `s(t) = ∫₀ᵗ u`, cumulative trapezoidal rule on the sensor grid.
pub fn solve_antiderivative(u: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    check_uniform(grid, u.len())?;
    let mut s = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    s.push(0.0);
    for i in 1..u.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (u[i] + u[i - 1]);
        s.push(acc);
    }
    Ok(s)
}

/// Forced gravity pendulum `s₁' = s₂, s₂' = −k sin s₁ + u(t)` from rest,
/// classical RK4 with `substeps` steps per grid interval. Returns `s₁` on the grid.
pub fn solve_pendulum(u: &[f64], k: f64, grid: &[f64], substeps: usize) -> Result<Vec<f64>> {
    check_uniform(grid, u.len())?;
    if substeps == 0 {
        return Err(Error::Config("pendulum substeps must be positive".into()));
    }
    let rhs = |s: [f64; 2], force: f64| [s[1], -k * s[0].sin() + force];
    let mut s = [0.0f64; 2];
    let mut out = Vec::with_capacity(u.len());
    out.push(0.0);
    for i in 1..u.len() {
        let (t0, t1) = (grid[i - 1], grid[i]);
        let h = (t1 - t0) / substeps as f64;
        // u is linear on [t0, t1]
        let force = |t: f64| u[i - 1] + (t - t0) / (t1 - t0) * (u[i] - u[i - 1]);
        for j in 0..substeps {
            let t = t0 + j as f64 * h;
            let k1 = rhs(s, force(t));
            let k2 = rhs([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]], force(t + 0.5 * h));
            let k3 = rhs([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]], force(t + 0.5 * h));
            let k4 = rhs([s[0] + h * k3[0], s[1] + h * k3[1]], force(t + h));
            for c in 0..2 {
                s[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        out.push(s[0]);
    }
    Ok(out)
}

/// Space-time solution on a uniform grid: row `n` holds `s(·, t_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Mat<f64>,
}

impl Field {
    pub fn final_slice(&self) -> &[f64] {
        self.values.row(self.values.rows() - 1)
    }
}

/// `∂s/∂t = D ∂²s/∂x² + k s² + u(x)` on `[0,1]`, zero Dirichlet boundary and
/// initial data. Crank–Nicolson for diffusion, explicit reaction and source.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionReaction {
    pub diffusion: f64,
    pub reaction: f64,
    pub t_final: f64,
    /// Grid points in space, boundaries included.
    pub nx: usize,
    /// Time steps.
    pub nt: usize,
}

impl Default for DiffusionReaction {
    fn default() -> Self {
        DiffusionReaction { diffusion: 0.01, reaction: -0.01, t_final: 1.0, nx: 100, nt: 100 }
    }
}

const BLOWUP: f64 = 1e6;

impl DiffusionReaction {
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.nx)
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nt == 0 {
            return Err(Error::Config(format!("diffusion-reaction grid {}x{} too small", self.nx, self.nt)));
        }
        if !(self.diffusion > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("diffusion coefficient and final time must be positive".into()));
        }
        Ok(())
    }

    /// Solves with the source sampled at `sensors` and interpolated to the grid.
    pub fn solve(&self, u: &[f64], sensors: &[f64]) -> Result<Field> {
        if u.len() != sensors.len() {
            return Err(Error::Shape(format!("{} sensor values for {} sensors", u.len(), sensors.len())));
        }
        let f: Vec<f64> = self.grid().iter().map(|&x| interp_linear(sensors, u, x)).collect();
        self.solve_on_grid(&f)
    }

    pub fn solve_on_grid(&self, source: &[f64]) -> Result<Field> {
        self.validate()?;
        if source.len() != self.nx {
            return Err(Error::Shape(format!("source has {} points, grid has {}", source.len(), self.nx)));
        }
        let x = self.grid();
        let h = 1.0 / (self.nx - 1) as f64;
        let dt = self.t_final / self.nt as f64;
        let r = self.diffusion * dt / (h * h);
        let interior = self.nx - 2;
        let mut values = Mat::zeros(self.nt + 1, self.nx);
        let mut s = vec![0.0; self.nx];
        let mut rhs = vec![0.0; interior];
        let mut sol = vec![0.0; interior];
        let (off, diag) = (-0.5 * r, 1.0 + r);
        for n in 1..=self.nt {
            for i in 1..=interior {
                let lap = s[i - 1] - 2.0 * s[i] + s[i + 1];
                rhs[i - 1] = s[i] + 0.5 * r * lap + dt * (self.reaction * s[i] * s[i] + source[i]);
            }
            solve_tridiagonal(off, diag, off, &rhs, &mut sol)?;
            s[1..=interior].copy_from_slice(&sol);
            let max_abs = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(max_abs <= BLOWUP) {
                return Err(Error::SolverInstability { step: n, max_abs });
            }
            values.row_mut(n).copy_from_slice(&s);
        }
        let t = (0..=self.nt).map(|n| n as f64 * dt).collect();
        Ok(Field { x, t, values })
    }
}

/// `∂s/∂t + ∂s/∂x − D ∂²s/∂x² = 0` on the periodic unit interval with
/// `s(x, 0) = u(x)`. Central differences, Crank–Nicolson in time.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvectionDiffusion {
    pub diffusion: f64,
    pub t_final: f64,
    /// Periodic grid points `x_i = i / nx`.
    pub nx: usize,
    pub nt: usize,
}

impl Default for AdvectionDiffusion {
    fn default() -> Self {
        AdvectionDiffusion { diffusion: 0.1, t_final: 1.0, nx: 100, nt: 100 }
    }
}

impl AdvectionDiffusion {
    pub fn grid(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 / self.nx as f64).collect()
    }

    pub fn solve(&self, u0: &[f64], sensors: &[f64]) -> Result<Field> {
        if u0.len() != sensors.len() {
            return Err(Error::Shape(format!("{} sensor values for {} sensors", u0.len(), sensors.len())));
        }
        let init: Vec<f64> = self.grid().iter().map(|&x| interp_linear(sensors, u0, x)).collect();
        self.solve_on_grid(&init)
    }

    pub fn solve_on_grid(&self, init: &[f64]) -> Result<Field> {
        if self.nx < 3 || self.nt == 0 {
            return Err(Error::Config(format!("advection-diffusion grid {}x{} too small", self.nx, self.nt)));
        }
        if !(self.diffusion >= 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("diffusion must be non-negative and final time positive".into()));
        }
        if init.len() != self.nx {
            return Err(Error::Shape(format!("initial condition has {} points, grid has {}", init.len(), self.nx)));
        }
        let n = self.nx;
        let h = 1.0 / n as f64;
        let dt = self.t_final / self.nt as f64;
        // (L s)_i = lo·s_{i−1} + mid·s_i + hi·s_{i+1}
        let lo = 1.0 / (2.0 * h) + self.diffusion / (h * h);
        let mid = -2.0 * self.diffusion / (h * h);
        let hi = -1.0 / (2.0 * h) + self.diffusion / (h * h);
        let (a, b, c) = (-0.5 * dt * lo, 1.0 - 0.5 * dt * mid, -0.5 * dt * hi);
        let mut values = Mat::zeros(self.nt + 1, n);
        values.row_mut(0).copy_from_slice(init);
        let mut s = init.to_vec();
        let mut rhs = vec![0.0; n];
        for step in 1..=self.nt {
            for i in 0..n {
                let (l, r) = (s[(i + n - 1) % n], s[(i + 1) % n]);
                rhs[i] = s[i] + 0.5 * dt * (lo * l + mid * s[i] + hi * r);
            }
            solve_cyclic_tridiagonal(a, b, c, &rhs, &mut s)?;
            values.row_mut(step).copy_from_slice(&s);
        }
        let t = (0..=self.nt).map(|k| k as f64 * dt).collect();
        Ok(Field { x: self.grid(), t, values })
    }
}

/// Thomas algorithm for a constant-coefficient tridiagonal system.
pub fn solve_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64], out: &mut [f64]) -> Result<()> {
    if rhs.is_empty() {
        return Ok(());
    }
    let x = general_tridiagonal(sub, &vec![diag; rhs.len()], sup, rhs)?;
    out.copy_from_slice(&x);
    Ok(())
}

/// Constant-coefficient cyclic tridiagonal solve (periodic corners `sub` at
/// `(0, n−1)` and `sup` at `(n−1, 0)`), via Sherman–Morrison.
pub fn solve_cyclic_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64], out: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    if n < 3 {
        return Err(Error::SingularSystem("cyclic system needs at least three unknowns".into()));
    }
    let alpha = sup; // A[n−1][0]
    let beta = sub; // A[0][n−1]
    let gamma = -diag;
    // modified diagonal: b0 − γ, b_{n−1} − αβ/γ
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - alpha * beta / gamma;
    let x = general_tridiagonal(sub, &d, sup, rhs)?;
    let mut uvec = vec![0.0; n];
    uvec[0] = gamma;
    uvec[n - 1] = alpha;
    let z = general_tridiagonal(sub, &d, sup, &uvec)?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularSystem("Sherman–Morrison denominator vanished".into()));
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
    for i in 0..n {
        out[i] = x[i] - fact * z[i];
    }
    Ok(())
}

fn general_tridiagonal(sub: f64, diag: &[f64], sup: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut cp = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::SingularSystem("zero leading pivot".into()));
    }
    out[0] = rhs[0] / beta;
    for i in 1..n {
        cp[i] = sup / beta;
        beta = diag[i] - sub * cp[i];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::SingularSystem(format!("zero pivot at row {i}")));
        }
        out[i] = (rhs[i] - sub * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] -= cp[i + 1] * next;
    }
    Ok(out)
}
