//! Periodic grid, Fourier layout and scalar/vector field containers.
//!
//! The domain is the torus `[0, L)^d`. Index `i` along an axis carries the
//! signed mode `m = i` for `i < n/2` and `m = i - n` otherwise, with
//! wavenumber `k = (2π/L) m`. Arrays are row-major with the last axis fastest.
//!
//! Normalization: the forward transform divides by `n^d`, so a field's
//! coefficients are the Fourier-series coefficients of its trigonometric
//! interpolant and `L^d Σ|c_k|² = ∫|f|²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("odd resolution {0}; points per axis must be even")]
    OddResolution(usize),
    #[error("resolution {0} too small; need at least 8 points per axis")]
    ResolutionTooSmall(usize),
    #[error("period must be finite and positive, got {0}")]
    InvalidPeriod(f64),
    #[error("size mismatch: grid holds {expected} values, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("fields live on different grids or spaces")]
    GridMismatch,
}

/// Whether a field is a function of Eulerian `x` or Lagrangian `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    #[default]
    Euler,
    Lagrange,
}

impl SpaceTag {
    pub fn code(self) -> u32 {
        match self {
            SpaceTag::Euler => 0,
            SpaceTag::Lagrange => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(SpaceTag::Euler),
            1 => Some(SpaceTag::Lagrange),
            _ => None,
        }
    }
}

/// Wavevector data for one lattice point.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    /// Signed integer mode per axis (unused axes are 0).
    pub m: [i64; 3],
    /// True wavevector `(2π/L) m`.
    pub k: [f64; 3],
    /// Wavevector with Nyquist components zeroed; used by odd symbols.
    pub k_odd: [f64; 3],
    /// `|k|` from the true wavevector.
    pub norm: f64,
}

impl Mode {
    pub fn norm_odd(&self) -> f64 {
        (self.k_odd[0] * self.k_odd[0] + self.k_odd[1] * self.k_odd[1] + self.k_odd[2] * self.k_odd[2])
            .sqrt()
    }
}

struct GridInner {
    dim: usize,
    n: usize,
    period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    modes: Vec<Mode>,
}

/// Immutable, cheaply clonable grid handle. Transform plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.inner.dim)
            .field("n", &self.inner.n)
            .field("period", &self.inner.period)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim
                && self.inner.n == other.inner.n
                && self.inner.period == other.inner.period)
    }
}

/// Builds a grid. `n` must be even and at least 8; powers of two are fastest
/// but any even size is accepted.
pub fn make_grid(dim: usize, n: usize, period: f64) -> Result<Grid, GridError> {
    if dim != 2 && dim != 3 {
        return Err(GridError::UnsupportedDimension(dim));
    }
    if n % 2 == 1 {
        return Err(GridError::OddResolution(n));
    }
    if n < 8 {
        return Err(GridError::ResolutionTooSmall(n));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(GridError::InvalidPeriod(period));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let k0 = 2.0 * PI / period;
    let total = n.pow(dim as u32);
    let half = (n / 2) as i64;
    let mut modes = Vec::with_capacity(total);
    for idx in 0..total {
        let mut m = [0i64; 3];
        let mut rem = idx;
        for axis in (0..dim).rev() {
            let i = (rem % n) as i64;
            rem /= n;
            m[axis] = if i < half { i } else { i - n as i64 };
        }
        let mut k = [0.0; 3];
        let mut k_odd = [0.0; 3];
        for axis in 0..dim {
            k[axis] = k0 * m[axis] as f64;
            k_odd[axis] = if m[axis] == -half { 0.0 } else { k[axis] };
        }
        let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        modes.push(Mode { m, k, k_odd, norm });
    }
    Ok(Grid {
        inner: Arc::new(GridInner {
            dim,
            n,
            period,
            fwd,
            inv,
            modes,
        }),
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn period(&self) -> f64 {
        self.inner.period
    }

    /// Total number of grid points `n^d`.
    pub fn len(&self) -> usize {
        self.inner.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `L/n`.
    pub fn dx(&self) -> f64 {
        self.inner.period / self.inner.n as f64
    }

    /// Fundamental wavenumber `2π/L`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.inner.period
    }

    /// Domain volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.inner.period.powi(self.inner.dim as i32)
    }

    /// Quadrature weight `L^d / n^d`.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Largest resolvable `|k|`, `(2π/L)(n/2)√d`.
    pub fn max_k(&self) -> f64 {
        self.k0() * (self.inner.n / 2) as f64 * (self.inner.dim as f64).sqrt()
    }

    /// Largest `|k|` actually present on the lattice.
    pub fn max_lattice_k(&self) -> f64 {
        self.max_k()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.inner.modes
    }

    pub fn mode(&self, idx: usize) -> &Mode {
        &self.inner.modes[idx]
    }

    /// Flat index of the signed integer mode `m`, wrapping periodically.
    pub fn index_of_mode(&self, m: &[i64]) -> usize {
        let n = self.inner.n as i64;
        let mut idx = 0usize;
        for axis in 0..self.inner.dim {
            let i = m[axis].rem_euclid(n) as usize;
            idx = idx * self.inner.n + i;
        }
        idx
    }

    /// Flat index of the mode `-m` for the mode stored at `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let m = self.inner.modes[idx].m;
        self.index_of_mode(&[-m[0], -m[1], -m[2]])
    }

    /// Integer grid coordinates of the flat index `idx`.
    pub fn point_index(&self, idx: usize) -> [usize; 3] {
        let n = self.inner.n;
        let mut out = [0usize; 3];
        let mut rem = idx;
        for axis in (0..self.inner.dim).rev() {
            out[axis] = rem % n;
            rem /= n;
        }
        out
    }

    /// Physical coordinates of the grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let p = self.point_index(idx);
        let h = self.dx();
        let mut x = [0.0; 3];
        for axis in 0..self.inner.dim {
            x[axis] = p[axis] as f64 * h;
        }
        x
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.inner.n.pow((self.inner.dim - 1 - axis) as u32)
    }

    /// Evaluates `f` at every grid point.
    pub fn sample<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        par::map_range(self.len(), |i| f(self.point(i)))
    }

    fn check_len(&self, len: usize) -> Result<(), GridError> {
        if len != self.len() {
            return Err(GridError::SizeMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Forward transform of complex grid values, normalized by `1/n^d`.
    pub fn forward(&self, values: &[Complex64]) -> Result<Vec<Complex64>, GridError> {
        self.check_len(values.len())?;
        let mut data = values.to_vec();
        for axis in 0..self.inner.dim {
            self.transform_axis(&mut data, axis, false);
        }
        let scale = 1.0 / self.len() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
        Ok(data)
    }

    /// Inverse transform (no normalization) back to grid values.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>, GridError> {
        self.check_len(coeffs.len())?;
        let mut data = coeffs.to_vec();
        for axis in 0..self.inner.dim {
            self.transform_axis(&mut data, axis, true);
        }
        Ok(data)
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let n = self.inner.n;
        let fft = if inverse {
            &self.inner.inv
        } else {
            &self.inner.fwd
        };
        let stride = self.stride(axis);
        if stride == 1 {
            // Contiguous lines: hand rustfft several lines at once.
            let lines_per_task = (4096 / n).max(1);
            par::for_each_chunk_mut(data, n * lines_per_task, |_, chunk| {
                fft.process(chunk);
            });
            return;
        }
        // Strided lines: each block of `n * stride` values holds `stride`
        // interleaved lines. Gather a batch of lines, transform, scatter.
        let block = n * stride;
        let blocks = data.len() / block;
        let batch = (4096 / n).clamp(1, stride);
        let batches_per_block = stride.div_ceil(batch);
        let tasks = blocks * batches_per_block;
        let src: &[Complex64] = data;
        let buffers = par::map_range(tasks, |t| {
            let b = t / batches_per_block;
            let j0 = (t % batches_per_block) * batch;
            let j1 = (j0 + batch).min(stride);
            let base = b * block;
            let mut buf = Vec::with_capacity((j1 - j0) * n);
            for j in j0..j1 {
                for i in 0..n {
                    buf.push(src[base + i * stride + j]);
                }
            }
            fft.process(&mut buf);
            buf
        });
        for (t, buf) in buffers.into_iter().enumerate() {
            let b = t / batches_per_block;
            let j0 = (t % batches_per_block) * batch;
            let base = b * block;
            for (line, chunk) in buf.chunks(n).enumerate() {
                let j = j0 + line;
                for (i, &c) in chunk.iter().enumerate() {
                    data[base + i * stride + j] = c;
                }
            }
        }
    }
}

/// One scalar unknown stored as Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
    tag: SpaceTag,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, tag: SpaceTag) -> Self {
        SpectralField {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
            tag,
        }
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>, tag: SpaceTag) -> Result<Self, GridError> {
        grid.check_len(coeffs.len())?;
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
            tag,
        })
    }

    /// Builds a field whose coefficient at `idx` is `f(mode)`.
    pub fn from_symbol<F>(grid: &Grid, tag: SpaceTag, f: F) -> Self
    where
        F: Fn(&Mode) -> Complex64 + Sync + Send,
    {
        let coeffs = par::map(grid.modes(), f);
        SpectralField {
            grid: grid.clone(),
            coeffs,
            tag,
        }
    }

    pub fn from_physical(grid: &Grid, values: &[f64], tag: SpaceTag) -> Result<Self, GridError> {
        grid.check_len(values.len())?;
        let c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_physical_complex(grid, &c, tag)
    }

    pub fn from_physical_complex(
        grid: &Grid,
        values: &[Complex64],
        tag: SpaceTag,
    ) -> Result<Self, GridError> {
        let coeffs = grid.forward(values)?;
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
            tag,
        })
    }

    /// Real part of the physical values.
    pub fn to_physical(&self) -> Vec<f64> {
        self.to_physical_complex().into_iter().map(|c| c.re).collect()
    }

    pub fn to_physical_complex(&self) -> Vec<Complex64> {
        self.grid.inverse(&self.coeffs).expect("coefficient length matches grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn with_tag(mut self, tag: SpaceTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at the signed integer mode `m`.
    pub fn coeff_at(&self, m: &[i64]) -> Complex64 {
        self.coeffs[self.grid.index_of_mode(m)]
    }

    pub fn set_coeff(&mut self, m: &[i64], value: Complex64) {
        let idx = self.grid.index_of_mode(m);
        self.coeffs[idx] = value;
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn same_space(&self, other: &SpectralField) -> bool {
        self.grid == other.grid && self.tag == other.tag
    }

    pub fn ensure_same_space(&self, other: &SpectralField) -> Result<(), GridError> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    /// `‖f‖_{L²}² = L^d Σ|c_k|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `L^d Σ a_k conj(b_k)`, the L² inner product.
    pub fn inner(&self, other: &SpectralField) -> Complex64 {
        let s: Complex64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum();
        s * self.grid.volume()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest `|c(−k) − conj c(k)|`; zero for real physical fields.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.coeffs.len() {
            let j = self.grid.conjugate_index(idx);
            worst = worst.max((self.coeffs[j] - self.coeffs[idx].conj()).norm());
        }
        worst
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.conjugate_symmetry_defect() <= tol * self.max_abs_coeff().max(1.0)
    }

    /// Replaces coefficients by the conjugate-symmetric part, i.e. takes the
    /// real part of the physical field.
    pub fn symmetrize(&mut self) {
        let old = self.coeffs.clone();
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let j = self.grid.conjugate_index(idx);
            *c = 0.5 * (old[idx] + old[j].conj());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.coeffs.iter_mut() {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert!(self.same_space(x));
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += a * d;
        }
    }

    /// `self += a * x` with complex `a`.
    pub fn axpy_c(&mut self, a: Complex64, x: &SpectralField) {
        debug_assert!(self.same_space(x));
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += a * d;
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiplies every coefficient by `f(mode)`.
    pub fn map_modes<F>(&self, f: F) -> SpectralField
    where
        F: Fn(&Mode, Complex64) -> Complex64 + Sync + Send,
    {
        let modes = self.grid.modes();
        let coeffs = par::map_range(self.coeffs.len(), |i| f(&modes[i], self.coeffs[i]));
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
            tag: self.tag,
        }
    }

    /// Spectral `∂_axis`, with the Nyquist component treated as zero.
    pub fn derivative(&self, axis: usize) -> SpectralField {
        self.map_modes(|m, c| Complex64::new(0.0, m.k_odd[axis]) * c)
    }

    /// Translate by the grid shift `s` (in points per axis): `f(· − s h)`.
    pub fn shift(&self, s: &[i64]) -> SpectralField {
        let h = self.grid.dx();
        self.map_modes(|m, c| {
            let mut phase = 0.0;
            for axis in 0..3 {
                phase += m.k[axis] * s.get(axis).copied().unwrap_or(0) as f64 * h;
            }
            c * Complex64::from_polar(1.0, -phase)
        })
    }
}

/// Inverse-transforms several fields, in parallel over fields.
pub fn to_physical_batch(fields: &[&SpectralField]) -> Vec<Vec<f64>> {
    par::map(fields, |f| f.to_physical())
}

/// Forward-transforms several real arrays, in parallel over arrays.
pub fn from_physical_batch(grid: &Grid, values: &[Vec<f64>], tag: SpaceTag) -> Vec<SpectralField> {
    par::map(values, |v| {
        SpectralField::from_physical(grid, v, tag).expect("array length matches grid")
    })
}

/// A vector of `d` scalar fields sharing one grid and space tag.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<SpectralField>,
}

impl VectorField {
    pub fn zeros(grid: &Grid, tag: SpaceTag) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| SpectralField::zeros(grid, tag)).collect(),
        }
    }

    pub fn new(components: Vec<SpectralField>) -> Result<Self, GridError> {
        let first = components.first().ok_or(GridError::GridMismatch)?;
        if components.len() != first.grid().dim() {
            return Err(GridError::GridMismatch);
        }
        for c in &components[1..] {
            first.ensure_same_space(c)?;
        }
        Ok(VectorField { components })
    }

    pub fn from_physical(grid: &Grid, values: &[Vec<f64>], tag: SpaceTag) -> Result<Self, GridError> {
        for v in values {
            grid.check_len(v.len())?;
        }
        VectorField::new(from_physical_batch(grid, values, tag))
    }

    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        let refs: Vec<&SpectralField> = self.components.iter().collect();
        to_physical_batch(&refs)
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn tag(&self) -> SpaceTag {
        self.components[0].tag()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [SpectralField] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<SpectralField> {
        self.components
    }

    pub fn component(&self, i: usize) -> &SpectralField {
        &self.components[i]
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.components.iter_mut() {
            c.scale(a);
        }
    }

    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        for (c, d) in self.components.iter_mut().zip(&x.components) {
            c.axpy(a, d);
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn with_tag(self, tag: SpaceTag) -> VectorField {
        VectorField {
            components: self.components.into_iter().map(|c| c.with_tag(tag)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn lattice_matches_definition() {
        let g = make_grid(2, 64, 2.0 * PI).unwrap();
        let ms: Vec<i64> = g.modes().iter().map(|m| m.m[1]).take(64).collect();
        assert_eq!(ms[0], 0);
        assert_eq!(ms[31], 31);
        assert_eq!(ms[32], -32);
        assert_eq!(ms[63], -1);
        assert!((g.mode(1).k[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_d_lattice() {
        let g = make_grid(3, 16, 2.0 * PI).unwrap();
        assert_eq!(g.len(), 4096);
        let max_axis = g.modes().iter().map(|m| m.m[0].abs()).max().unwrap();
        assert_eq!(max_axis, 8);
        assert!((g.max_k() - 8.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(make_grid(2, 7, 2.0 * PI).unwrap_err(), GridError::OddResolution(7));
        assert_eq!(make_grid(4, 8, 1.0).unwrap_err(), GridError::UnsupportedDimension(4));
        assert_eq!(make_grid(2, 6, 1.0).unwrap_err(), GridError::ResolutionTooSmall(6));
        assert!(matches!(make_grid(2, 8, -1.0), Err(GridError::InvalidPeriod(_))));
    }

    #[test]
    fn single_mode_transforms_to_unit_coefficient() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let vals: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                Complex64::from_polar(1.0, 3.0 * x[0] - 2.0 * x[1])
            })
            .collect();
        let f = SpectralField::from_physical_complex(&g, &vals, SpaceTag::Euler).unwrap();
        let target = g.index_of_mode(&[3, -2]);
        for (i, c) in f.coeffs().iter().enumerate() {
            let want = if i == target { 1.0 } else { 0.0 };
            assert!((c - Complex64::new(want, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let vals = corpus::white_noise(&g, 11);
        let f = SpectralField::from_physical(&g, &vals, SpaceTag::Euler).unwrap();
        let back = f.to_physical();
        let err = vals.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let direct: f64 = vals.iter().map(|x| x * x).sum::<f64>() * g.cell_volume();
        assert!((f.l2_norm_sq() - direct).abs() / direct < 1e-10);
        assert!(f.is_conjugate_symmetric(1e-13));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = make_grid(2, 8, 1.0).unwrap();
        let err = SpectralField::from_physical(&g, &[1.0; 10], SpaceTag::Euler).unwrap_err();
        assert_eq!(err, GridError::SizeMismatch { expected: 64, actual: 10 });
    }

    #[test]
    fn three_d_round_trip_non_power_of_two() {
        let g = make_grid(3, 12, 3.0).unwrap();
        let vals = corpus::white_noise(&g, 5);
        let f = SpectralField::from_physical(&g, &vals, SpaceTag::Euler).unwrap();
        let err = vals
            .iter()
            .zip(f.to_physical())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn grid_shift_multiplies_by_phase() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let vals = corpus::white_noise(&g, 3);
        let f = SpectralField::from_physical(&g, &vals, SpaceTag::Euler).unwrap();
        let shifted = f.shift(&[2, 5]);
        let phys = shifted.to_physical();
        let n = 16;
        for i in 0..n {
            for j in 0..n {
                let src = ((i + n - 2) % n) * n + (j + n - 5) % n;
                assert!((phys[i * n + j] - vals[src]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_sine() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_physical(&g, &g.sample(|x| (2.0 * x[1]).sin()), SpaceTag::Euler)
            .unwrap();
        let d = f.derivative(1).to_physical();
        let want = g.sample(|x| 2.0 * (2.0 * x[1]).cos());
        for (a, b) in d.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
