//! Uniform periodic grids on the cube `[-1/2, 1/2)^d`, identified with the flat
//! torus, together with nodal scalar/vector fields and the spectral calculus
//! used by every solver in the crate.
//!
//! Node `i` along an axis sits at `x_i = -1/2 + i h` with `h = 1/n`. Fields are
//! stored row-major (axis 0 slowest). All operators are pure: transforms are
//! internal and never stored on the field.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_finite, Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform grid with `n` points per axis on the `d`-dimensional torus.
#[derive(Clone)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    plans: Plans,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

impl Eq for TorusGrid {}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dimension {dim} outside 1..=3")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be a power of two >= 4, got {n}"
            )));
        }
        if (dim as u32) * n.trailing_zeros() > 30 {
            return Err(Error::InvalidParameter(format!("grid {n}^{dim} too large")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) };
        Ok(Self { dim, n, plans })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, axis_index: usize) -> f64 {
        -0.5 + axis_index as f64 * self.h()
    }

    /// Per-axis indices of the flat node index (unused trailing axes are 0).
    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.dim).fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    pub fn node(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.coordinate(idx[a]);
        }
        x
    }

    /// Stride (in flat index units) of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Flat index of the neighbour `offset` steps along `axis` (periodic).
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.n;
        let j = (i as isize + offset).rem_euclid(self.n as isize) as usize;
        flat - i * stride + j * stride
    }

    /// Signed wavenumber of FFT index `i`; the Nyquist index maps to `+n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..self.len()).map(|i| f(&self.node(i)[..self.dim])).collect();
        ScalarField { grid: self.clone(), values }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.plans.inverse } else { &self.plans.forward };
        let n = self.n;
        if self.dim == 1 {
            plan.process(data);
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.dim {
            let stride = self.stride(axis);
            for start in 0..data.len() {
                if !(start / stride).is_multiple_of(n) {
                    continue;
                }
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + k * stride];
                }
                plan.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub(crate) fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, true);
        let scale = 1.0 / data.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies a Fourier multiplier given as a function of the signed
    /// wavenumber vector and the per-axis FFT indices.
    pub(crate) fn apply_multiplier(
        &self,
        values: &[f64],
        multiplier: impl Fn(&[i64], &[usize]) -> Complex64,
    ) -> Vec<f64> {
        let mut spec = self.forward(values);
        let mut k = [0i64; MAX_DIM];
        for (flat, c) in spec.iter_mut().enumerate() {
            let idx = self.multi_index(flat);
            for a in 0..self.dim {
                k[a] = self.wavenumber(idx[a]);
            }
            *c *= multiplier(&k[..self.dim], &idx[..self.dim]);
        }
        self.inverse_real(spec)
    }

    fn check(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{}^{} vs {}^{}",
                self.n, self.dim, other.n, other.dim
            )));
        }
        Ok(())
    }
}

/// Real value per node of a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite("scalar field", &values)?;
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_raw(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: grid.clone(), values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖f‖²_{L²}` evaluated from the Fourier coefficients.
    pub fn spectral_l2_norm_sq(&self) -> f64 {
        let spec = self.grid.forward(&self.values);
        let total = spec.len() as f64;
        self.grid.cell_volume() * spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / total
    }

    /// Periodic multilinear interpolation at an arbitrary point.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..g.dim {
            let s = ((x[a] + 0.5) * n as f64).rem_euclid(n as f64);
            let i = (s.floor() as usize).min(n - 1);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << g.dim) {
            let mut w = 1.0;
            let mut idx = [0usize; MAX_DIM];
            for a in 0..g.dim {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    idx[a] = (base[a] + 1) % n;
                } else {
                    w *= 1.0 - frac[a];
                    idx[a] = base[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[g.flat_index(&idx[..g.dim])];
            }
        }
        acc
    }
}

/// `d` scalar components on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("vector field needs components".into()))?;
        let grid = first.grid.clone();
        if components.len() != grid.dim {
            return Err(Error::GridMismatch(format!(
                "{} components on a {}-dimensional grid",
                components.len(),
                grid.dim
            )));
        }
        for c in &components[1..] {
            grid.check(&c.grid)?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self { components: (0..grid.dim).map(|_| ScalarField::zeros(grid)).collect() }
    }

    pub fn constant(grid: &TorusGrid, c: &[f64]) -> Self {
        Self { components: (0..grid.dim).map(|a| ScalarField::constant(grid, c[a])).collect() }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.components[0].grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        let components =
            self.components.iter().zip(&other.components).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        let components =
            self.components.iter().zip(&other.components).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { components: self.components.iter().map(|f| f.scale(c)).collect() }
    }

    /// Multiplies every component by a scalar field.
    pub fn scale_by(&self, s: &ScalarField) -> Result<Self> {
        let components = self.components.iter().map(|c| c.mul(s)).collect::<Result<_>>()?;
        Ok(Self { components })
    }

    /// Euclidean norm per node.
    pub fn magnitude(&self) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|i| self.components.iter().map(|c| c.values[i] * c.values[i]).sum::<f64>().sqrt())
            .collect();
        ScalarField::from_raw(grid, values)
    }

    /// Nodal maximum of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.magnitude().max_abs()
    }

    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        self.grid().check(other.grid())?;
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|i| self.components.iter().zip(&other.components).map(|(a, b)| a.values[i] * b.values[i]).sum())
            .collect();
        Ok(ScalarField::from_raw(grid, values))
    }

    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.interpolate(x);
        }
    }
}

fn imag_unit_k(k: i64, idx: usize, n: usize) -> Complex64 {
    if idx == n / 2 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, 2.0 * PI * k as f64)
    }
}

fn k_squared(k: &[i64]) -> f64 {
    k.iter().map(|&v| (v * v) as f64).sum()
}

/// Spectral gradient. Odd derivatives drop the Nyquist mode.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    check_finite("gradient input", &f.values)?;
    let g = &f.grid;
    let components = (0..g.dim)
        .map(|axis| {
            let v = g.apply_multiplier(&f.values, |k, idx| imag_unit_k(k[axis], idx[axis], g.n));
            ScalarField::from_raw(g, v)
        })
        .collect();
    Ok(VectorField { components })
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    let g = v.grid().clone();
    let mut spec = vec![Complex64::new(0.0, 0.0); g.len()];
    for (axis, c) in v.components.iter().enumerate() {
        check_finite("divergence input", &c.values)?;
        let cs = g.forward(&c.values);
        for (flat, (acc, ci)) in spec.iter_mut().zip(cs).enumerate() {
            let idx = g.multi_index(flat);
            *acc += ci * imag_unit_k(g.wavenumber(idx[axis]), idx[axis], g.n);
        }
    }
    Ok(ScalarField::from_raw(&g, g.inverse_real(spec)))
}

pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    check_finite("laplacian input", &f.values)?;
    let g = &f.grid;
    let v = g.apply_multiplier(&f.values, |k, _| Complex64::new(-4.0 * PI * PI * k_squared(k), 0.0));
    Ok(ScalarField::from_raw(g, v))
}

/// Exact heat semigroup `e^{tΔ}` applied mode by mode.
pub fn heat_semigroup(f: &ScalarField, t: f64) -> ScalarField {
    let g = &f.grid;
    let v = g.apply_multiplier(&f.values, |k, _| Complex64::new((-4.0 * PI * PI * k_squared(k) * t).exp(), 0.0));
    ScalarField::from_raw(g, v)
}

/// Gaussian mollification with standard deviation `width`.
pub fn mollify(f: &ScalarField, width: f64) -> ScalarField {
    if width <= 0.0 {
        return f.clone();
    }
    let g = &f.grid;
    let v = g.apply_multiplier(&f.values, |k, _| {
        Complex64::new((-2.0 * PI * PI * width * width * k_squared(k)).exp(), 0.0)
    });
    ScalarField::from_raw(g, v)
}

/// `h^d Σ_j kernel(x_i − x_j) f(x_j)`, the node-sum approximation of
/// `∫ kernel(x − y) f(y) dy`. The kernel is sampled on the same nodes, so the
/// displacement `0` lives at axis index `n/2`.
pub fn convolve(kernel: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    kernel.grid.check(&f.grid)?;
    check_finite("convolution kernel", &kernel.values)?;
    check_finite("convolution input", &f.values)?;
    let g = &f.grid;
    let ks = g.forward(&kernel.values);
    let fs = g.forward(&f.values);
    let product: Vec<Complex64> = ks
        .iter()
        .zip(&fs)
        .enumerate()
        .map(|(flat, (a, b))| {
            let idx = g.multi_index(flat);
            // shift of n/2 per axis is the sign (-1)^(index sum)
            let parity = idx[..g.dim].iter().sum::<usize>() % 2;
            let p = a * b;
            if parity == 1 {
                -p
            } else {
                p
            }
        })
        .collect();
    let scale = g.cell_volume();
    Ok(ScalarField::from_raw(g, g.inverse_real(product).into_iter().map(|v| v * scale).collect()))
}

/// Componentwise convolution of a vector kernel with a scalar field.
pub fn convolve_vector(kernel: &VectorField, f: &ScalarField) -> Result<VectorField> {
    let components = kernel.components.iter().map(|k| convolve(k, f)).collect::<Result<_>>()?;
    Ok(VectorField { components })
}

/// `Σ_i k_i ⋆ f_i` for vector kernel and vector field.
pub fn convolve_dot(kernel: &VectorField, f: &VectorField) -> Result<ScalarField> {
    let g = f.grid().clone();
    let mut acc = ScalarField::zeros(&g);
    for (k, c) in kernel.components.iter().zip(&f.components) {
        acc = acc.add(&convolve(k, c)?)?;
    }
    Ok(acc)
}

/// Periodic midpoint/trapezoid quadrature `h^d Σ f`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// Second-order central-difference gradient, kept for cross-checks.
pub fn gradient_fd(f: &ScalarField) -> VectorField {
    let g = &f.grid;
    let inv = 0.5 / g.h();
    let components = (0..g.dim)
        .map(|axis| {
            let v = (0..g.len())
                .map(|i| (f.values[g.shift(i, axis, 1)] - f.values[g.shift(i, axis, -1)]) * inv)
                .collect();
            ScalarField::from_raw(g, v)
        })
        .collect();
    VectorField { components }
}

/// Second-order central-difference Laplacian.
pub fn laplacian_fd(f: &ScalarField) -> ScalarField {
    fd_laplacian_step(f, 1)
}

pub(crate) fn fd_laplacian_step(f: &ScalarField, step: usize) -> ScalarField {
    let g = &f.grid;
    let s = step as isize;
    let inv = 1.0 / (step as f64 * g.h()).powi(2);
    let v = (0..g.len())
        .map(|i| {
            (0..g.dim)
                .map(|axis| f.values[g.shift(i, axis, s)] - 2.0 * f.values[i] + f.values[g.shift(i, axis, -s)])
                .sum::<f64>()
                * inv
        })
        .collect();
    ScalarField::from_raw(g, v)
}

/// Nodal max of the Frobenius-free operator norm proxy `max_{a,b} |∂_a∂_b f|`
/// from central differences with spacing `step·h`.
pub(crate) fn fd_hessian_sup(f: &ScalarField, step: usize) -> f64 {
    let g = &f.grid;
    let s = step as isize;
    let hs = step as f64 * g.h();
    let mut sup: f64 = 0.0;
    for i in 0..g.len() {
        for a in 0..g.dim {
            for b in a..g.dim {
                let d = if a == b {
                    (f.values[g.shift(i, a, s)] - 2.0 * f.values[i] + f.values[g.shift(i, a, -s)]) / (hs * hs)
                } else {
                    let pp = g.shift(g.shift(i, a, s), b, s);
                    let pm = g.shift(g.shift(i, a, s), b, -s);
                    let mp = g.shift(g.shift(i, a, -s), b, s);
                    let mm = g.shift(g.shift(i, a, -s), b, -s);
                    (f.values[pp] - f.values[pm] - f.values[mp] + f.values[mm]) / (4.0 * hs * hs)
                };
                sup = sup.max(d.abs());
            }
        }
    }
    sup
}

/// Uniform time mesh `t_k = k·dt`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeMesh {
    horizon: f64,
    steps: usize,
}

impl TimeMesh {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("time mesh needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Nearest mesh index to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.steps)
    }

    pub(crate) fn check(&self, other: &TimeMesh) -> Result<()> {
        if self != other {
            return Err(Error::MeshMismatch(format!(
                "T={} nt={} vs T={} nt={}",
                self.horizon, self.steps, other.horizon, other.steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(0, 16).is_err());
        assert!(TorusGrid::new(4, 16).is_err());
        assert!(TorusGrid::new(1, 12).is_err());
        let g = grid1(64);
        assert_eq!(g.h() * g.n() as f64, 1.0);
        assert_eq!(g.coordinate(32), 0.0);
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid1(64);
        let f = g.sample(|x| (2.0 * PI * x[0]).cos());
        let df = gradient(&f).unwrap();
        let exact = g.sample(|x| -2.0 * PI * (2.0 * PI * x[0]).sin());
        assert!(max_diff(df.component(0), &exact) <= 1e-12);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = TorusGrid::new(2, 16).unwrap();
        let df = gradient(&ScalarField::constant(&g, 5.0)).unwrap();
        assert!(df.sup_norm() <= 1e-13);
    }

    #[test]
    fn gradient_of_two_modes() {
        let g = grid1(16);
        let f = g.sample(|x| (2.0 * PI * x[0]).cos() + (4.0 * PI * x[0]).cos());
        let exact =
            g.sample(|x| -2.0 * PI * (2.0 * PI * x[0]).sin() - 4.0 * PI * (4.0 * PI * x[0]).sin());
        assert!(max_diff(gradient(&f).unwrap().component(0), &exact) <= 1e-12);
    }

    #[test]
    fn gradient_rejects_non_finite() {
        let g = grid1(8);
        let f = ScalarField::from_raw(&g, vec![0.0, 1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(gradient(&f), Err(Error::NonFinite { index: 2, .. })));
    }

    #[test]
    fn divergence_examples() {
        let g = grid1(64);
        let f = g.sample(|x| (2.0 * PI * x[0]).cos());
        let div = divergence(&gradient(&f).unwrap()).unwrap();
        assert!(max_diff(&div, &f.scale(-4.0 * PI * PI)) <= 1e-10);
        let c = VectorField::constant(&g, &[1.0]);
        assert!(divergence(&c).unwrap().max_abs() <= 1e-14);
        let v = VectorField::new(vec![g.sample(|x| (x[0] * 7.0).sin().exp())]).unwrap();
        assert!(integrate(&divergence(&v).unwrap()).abs() <= 1e-13);
    }

    #[test]
    fn divergence_rejects_mismatched_grids() {
        let a = ScalarField::zeros(&TorusGrid::new(2, 8).unwrap());
        let b = ScalarField::zeros(&TorusGrid::new(2, 16).unwrap());
        assert!(VectorField::new(vec![a, b]).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let g = grid1(32);
        let f = g.sample(|x| (2.0 * PI * x[0]).cos() + 0.5 * (6.0 * PI * x[0]).sin());
        let exact = g.sample(|x| {
            -4.0 * PI * PI * (2.0 * PI * x[0]).cos() - 0.5 * 36.0 * PI * PI * (6.0 * PI * x[0]).sin()
        });
        assert!(max_diff(&laplacian(&f).unwrap(), &exact) <= 1e-10);
        assert!(laplacian(&ScalarField::constant(&g, 3.0)).unwrap().max_abs() <= 1e-12);
        assert!(integrate(&laplacian(&f).unwrap()).abs() <= 1e-13);
    }

    #[test]
    fn convolution_examples() {
        let g = grid1(64);
        let f = g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin());
        let c = convolve(&ScalarField::constant(&g, 2.5), &f).unwrap();
        assert!(max_diff(&c, &ScalarField::constant(&g, 2.5)) <= 1e-13);

        let mut delta = vec![0.0; g.len()];
        delta[g.n() / 2] = 1.0 / g.h();
        let delta = ScalarField::new(&g, delta).unwrap();
        assert!(max_diff(&convolve(&delta, &f).unwrap(), &f) <= 1e-13);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        // direct O(n^2) sum with explicit periodic displacement
        let g = grid1(32);
        let k = g.sample(|x| (2.0 * PI * x[0]).cos());
        let f = g.sample(|x| (2.0 * PI * x[0]).cos());
        let n = g.n();
        let direct: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let disp = (g.coordinate(i) - g.coordinate(j) + 0.5).rem_euclid(1.0) - 0.5;
                        (2.0 * PI * disp).cos() * f.values()[j]
                    })
                    .sum::<f64>()
                    * g.h()
            })
            .collect();
        let conv = convolve(&k, &f).unwrap();
        let half = f.scale(0.5);
        for i in 0..n {
            assert!((conv.values()[i] - direct[i]).abs() <= 1e-13);
            assert!((conv.values()[i] - half.values()[i]).abs() <= 1e-13);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid1(64);
        assert!((integrate(&ScalarField::constant(&g, 1.0)) - 1.0).abs() <= 1e-15);
        assert!(integrate(&g.sample(|x| (2.0 * PI * x[0]).sin())).abs() <= 1e-14);
        assert!((integrate(&g.sample(|x| (2.0 * PI * x[0]).cos().powi(2))) - 0.5).abs() <= 1e-14);
    }

    #[test]
    fn heat_semigroup_decays_single_mode() {
        let g = grid1(64);
        let f = g.sample(|x| 1.0 + (2.0 * PI * x[0]).cos());
        let t = 0.01;
        let exact = g.sample(|x| 1.0 + (-4.0 * PI * PI * t).exp() * (2.0 * PI * x[0]).cos());
        assert!(max_diff(&heat_semigroup(&f, t), &exact) <= 1e-14);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_linear_between() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = g.sample(|x| x[0] + 2.0 * x[1]);
        let node = g.node(19);
        assert!((f.interpolate(&node[..2]) - f.values()[19]).abs() < 1e-15);
        let v = f.interpolate(&[0.0625 + 0.01, 0.125]);
        assert!((v - (0.0725 + 0.25)).abs() < 1e-13);
        // periodic wrap between the last node and the first
        let w = f.interpolate(&[0.5 - 0.0625 + 0.03125, 0.0]);
        assert!((w - (0.25 * 0.375 - 0.75 * 0.5)).abs() < 1e-13);
    }

    #[test]
    fn fd_fallback_agrees_with_spectral() {
        let g = grid1(256);
        let f = g.sample(|x| (2.0 * PI * x[0]).sin());
        let fd = gradient_fd(&f);
        let sp = gradient(&f).unwrap();
        assert!(max_diff(fd.component(0), sp.component(0)) < 1e-3);
        assert!(max_diff(&laplacian_fd(&f), &laplacian(&f).unwrap()) < 1e-2);
    }

    #[test]
    fn time_mesh() {
        let m = TimeMesh::new(0.5, 512).unwrap();
        assert_eq!(m.time(512), 0.5);
        assert_eq!(m.dt() * 512.0, 0.5);
        assert_eq!(m.index_of(0.25), 256);
        assert!(TimeMesh::new(1.0, 0).is_err());
    }
}
