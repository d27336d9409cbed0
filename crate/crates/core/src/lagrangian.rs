//! Characteristics `x(t, ξ)`, the deformation gradient `F = ∂x/∂ξ`, and
//! Euler↔Lagrange transfer of fields.
//!
//! The map is stored on the ξ-grid as the periodic displacement `x − Aξ` and
//! the `d×d` entries of `F`, both as physical values. Off-grid evaluation uses
//! periodic cubic B-splines by default, or exact trigonometric sums on small
//! grids.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deformation::{self, Deformation};
use crate::dynamics::{self, DynamicsError, EvolutionConfig, StateBundle, UnimodularMatrix, VelocitySnapshot};
use crate::grid::{Grid, GridError, SpaceTag, SpectralField, VectorField};
use crate::lp::{self, NormRequest};
use crate::par;
use crate::vorticity::{self, VorticityBundle};

/// Largest `n` accepted for exact trigonometric evaluation.
pub const FOURIER_EVAL_MAX_N: usize = 32;

const NEWTON_MAX_ITER: usize = 20;
const NEWTON_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagrangianError {
    #[error("displacement {displacement} exceeds {limit} at t = {t}")]
    MapLeftDomainProxy { t: f64, displacement: f64, limit: f64 },
    #[error("map inversion did not converge at grid point {point} (residual {residual:e})")]
    InversionDiverged { point: usize, residual: f64 },
    #[error("exact Fourier evaluation needs n ≤ {FOURIER_EVAL_MAX_N}, got {0}")]
    FourierTooLarge(usize),
    #[error("field lives in the wrong space for this transfer")]
    WrongSpace,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Spline,
    Fourier,
}

fn spline_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (1.0 - u).powi(3) / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Off-grid evaluator for a set of real periodic fields.
#[derive(Debug, Clone)]
pub struct Interpolant {
    grid: Grid,
    kind: Interpolation,
    /// Spline coefficients on the grid, or Fourier coefficients.
    data: Vec<Vec<f64>>,
    coeffs: Vec<Vec<Complex64>>,
}

impl Interpolant {
    pub fn from_spectral(fields: &[&SpectralField], kind: Interpolation) -> Result<Self, LagrangianError> {
        let grid = fields.first().map(|f| f.grid().clone()).ok_or(LagrangianError::WrongSpace)?;
        match kind {
            Interpolation::Fourier => {
                if grid.n() > FOURIER_EVAL_MAX_N {
                    return Err(LagrangianError::FourierTooLarge(grid.n()));
                }
                Ok(Interpolant {
                    grid,
                    kind,
                    data: Vec::new(),
                    coeffs: fields.iter().map(|f| f.coeffs().to_vec()).collect(),
                })
            }
            Interpolation::Spline => {
                let n = grid.n() as f64;
                let prefilter = |f: &&SpectralField| {
                    f.map_modes(|m, c| {
                        let b: f64 = m.m[..grid.dim()]
                            .iter()
                            .map(|&mi| (4.0 + 2.0 * (2.0 * std::f64::consts::PI * mi as f64 / n).cos()) / 6.0)
                            .product();
                        c / b
                    })
                    .to_physical()
                };
                let data = par::map(fields, prefilter);
                Ok(Interpolant {
                    grid,
                    kind,
                    data,
                    coeffs: Vec::new(),
                })
            }
        }
    }

    pub fn from_physical(grid: &Grid, values: &[Vec<f64>], kind: Interpolation) -> Result<Self, LagrangianError> {
        let fields = values
            .iter()
            .map(|v| SpectralField::from_physical(grid, v, SpaceTag::Euler))
            .collect::<Result<Vec<_>, _>>()?;
        Interpolant::from_spectral(&fields.iter().collect::<Vec<_>>(), kind)
    }

    pub fn len(&self) -> usize {
        self.data.len().max(self.coeffs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of every field at `x`.
    pub fn eval(&self, x: &[f64; 3], out: &mut [f64]) {
        match self.kind {
            Interpolation::Spline => self.eval_spline(x, out),
            Interpolation::Fourier => self.eval_fourier(x, out),
        }
    }

    fn eval_spline(&self, x: &[f64; 3], out: &mut [f64]) {
        let d = self.grid.dim();
        let n = self.grid.n();
        let h = self.grid.dx();
        let mut idx = [[0usize; 4]; 3];
        let mut w = [[0.0; 4]; 3];
        for j in 0..d {
            let s = x[j] / h;
            let i = s.floor();
            w[j] = spline_weights(s - i);
            for (o, slot) in idx[j].iter_mut().enumerate() {
                *slot = (i as i64 - 1 + o as i64).rem_euclid(n as i64) as usize;
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        if d == 2 {
            for a in 0..4 {
                for b in 0..4 {
                    let wt = w[0][a] * w[1][b];
                    let p = idx[0][a] * n + idx[1][b];
                    for (o, f) in out.iter_mut().zip(&self.data) {
                        *o += wt * f[p];
                    }
                }
            }
        } else {
            for a in 0..4 {
                for b in 0..4 {
                    let wab = w[0][a] * w[1][b];
                    let base = (idx[0][a] * n + idx[1][b]) * n;
                    for c in 0..4 {
                        let wt = wab * w[2][c];
                        let p = base + idx[2][c];
                        for (o, f) in out.iter_mut().zip(&self.data) {
                            *o += wt * f[p];
                        }
                    }
                }
            }
        }
    }

    fn eval_fourier(&self, x: &[f64; 3], out: &mut [f64]) {
        let d = self.grid.dim();
        let n = self.grid.n();
        let k0 = self.grid.k0();
        let phases: Vec<Vec<Complex64>> = (0..d)
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                        Complex64::from_polar(1.0, m * k0 * x[j])
                    })
                    .collect()
            })
            .collect();
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            let mut acc = Complex64::new(0.0, 0.0);
            if d == 2 {
                for i0 in 0..n {
                    let mut row = Complex64::new(0.0, 0.0);
                    for i1 in 0..n {
                        row += c[i0 * n + i1] * phases[1][i1];
                    }
                    acc += row * phases[0][i0];
                }
            } else {
                for i0 in 0..n {
                    for i1 in 0..n {
                        let mut row = Complex64::new(0.0, 0.0);
                        let base = (i0 * n + i1) * n;
                        for i2 in 0..n {
                            row += c[base + i2] * phases[2][i2];
                        }
                        acc += row * phases[0][i0] * phases[1][i1];
                    }
                }
            }
            *o = acc.re;
        }
    }
}

/// A velocity field that can be sampled anywhere, with its gradient
/// `grad[i][k] = ∂_k v^i`.
pub trait VelocitySource: Sync {
    fn eval(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]);
}

/// Velocity given by a closure, e.g. a non-periodic analytic field.
pub struct AnalyticVelocity<F>(pub F);

impl<F> VelocitySource for AnalyticVelocity<F>
where
    F: Fn(&[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) + Sync,
{
    fn eval(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        (self.0)(x)
    }
}

/// Velocity interpolated from grid values of `v` and `∇v`.
#[derive(Debug, Clone)]
pub struct GridVelocity {
    dim: usize,
    interp: Interpolant,
}

impl GridVelocity {
    pub fn from_field(v: &VectorField, kind: Interpolation) -> Result<Self, LagrangianError> {
        let d = v.dim();
        let mut fields: Vec<SpectralField> = v.components().to_vec();
        for i in 0..d {
            for k in 0..d {
                fields.push(v.component(i).derivative(k));
            }
        }
        let interp = Interpolant::from_spectral(&fields.iter().collect::<Vec<_>>(), kind)?;
        Ok(GridVelocity { dim: d, interp })
    }

    pub fn from_snapshot(grid: &Grid, snap: &VelocitySnapshot, kind: Interpolation) -> Result<Self, LagrangianError> {
        let values: Vec<Vec<f64>> = snap.v.iter().chain(snap.grad.iter()).cloned().collect();
        let interp = Interpolant::from_physical(grid, &values, kind)?;
        Ok(GridVelocity { dim: snap.dim, interp })
    }
}

impl VelocitySource for GridVelocity {
    fn eval(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let d = self.dim;
        let mut buf = [0.0; 12];
        self.interp.eval(x, &mut buf[..d + d * d]);
        let mut v = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        v[..d].copy_from_slice(&buf[..d]);
        for i in 0..d {
            for k in 0..d {
                g[i][k] = buf[d + i * d + k];
            }
        }
        (v, g)
    }
}

/// `x(t, ξ)` and `F(t, ξ)` sampled on the ξ-grid.
#[derive(Debug, Clone)]
pub struct FlowMap {
    grid: Grid,
    a: UnimodularMatrix,
    disp: Vec<Vec<f64>>,
    jac: Vec<Vec<f64>>,
    t: f64,
    limit: f64,
}

impl FlowMap {
    /// `x = Aξ`, `F = A`.
    pub fn identity(grid: &Grid, a: UnimodularMatrix) -> Self {
        let d = grid.dim();
        let jac = (0..d * d).map(|ia| vec![a.get(ia / d, ia % d); grid.len()]).collect();
        FlowMap {
            grid: grid.clone(),
            a,
            disp: vec![vec![0.0; grid.len()]; d],
            jac,
            t: 0.0,
            limit: grid.period() / 4.0,
        }
    }

    /// The shear-composed reference map, with `A = I`.
    pub fn from_deformation(grid: &Grid, def: &Deformation) -> Result<Self, LagrangianError> {
        let d = grid.dim();
        def.validate(d).map_err(DynamicsError::InvalidInitialData)?;
        let defect = def.det_defect(grid);
        if defect > 1e-6 {
            return Err(DynamicsError::DeterminantNotOne(defect).into());
        }
        let k0 = grid.k0();
        let pts = par::map_range(grid.len(), |i| {
            let xi = grid.point(i);
            let (x, j) = def.apply(&xi, k0, d);
            let mut disp = [0.0; 3];
            for c in 0..d {
                disp[c] = x[c] - xi[c];
            }
            (disp, j)
        });
        let mut map = FlowMap::identity(grid, UnimodularMatrix::identity(d));
        for (p, (disp, j)) in pts.into_iter().enumerate() {
            for c in 0..d {
                map.disp[c][p] = disp[c];
                for a in 0..d {
                    map.jac[c * d + a][p] = j[c][a];
                }
            }
        }
        Ok(map)
    }

    /// Rebuilds a map from stored arrays (`jac[i*d + a] = ∂x^i/∂ξ^a`).
    pub fn from_parts(
        grid: &Grid,
        a: UnimodularMatrix,
        t: f64,
        disp: Vec<Vec<f64>>,
        jac: Vec<Vec<f64>>,
    ) -> Result<Self, LagrangianError> {
        let d = grid.dim();
        if disp.len() != d || jac.len() != d * d {
            return Err(GridError::SizeMismatch {
                expected: d + d * d,
                actual: disp.len() + jac.len(),
            }
            .into());
        }
        for arr in disp.iter().chain(jac.iter()) {
            if arr.len() != grid.len() {
                return Err(GridError::SizeMismatch {
                    expected: grid.len(),
                    actual: arr.len(),
                }
                .into());
            }
        }
        Ok(FlowMap {
            grid: grid.clone(),
            a,
            disp,
            jac,
            t,
            limit: grid.period() / 4.0,
        })
    }

    /// Sets the displacement bound beyond which `advect` fails.
    pub fn with_displacement_limit(mut self, limit: f64) -> Self {
        self.limit = limit;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &UnimodularMatrix {
        &self.a
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn displacement_limit(&self) -> f64 {
        self.limit
    }

    pub fn raw_displacement(&self) -> &[Vec<f64>] {
        &self.disp
    }

    pub fn raw_jacobian(&self) -> &[Vec<f64>] {
        &self.jac
    }

    /// `x(ξ_p)` for grid point `p`.
    pub fn position(&self, p: usize) -> [f64; 3] {
        let mut x = self.a.apply(&self.grid.point(p));
        for (c, xc) in x.iter_mut().enumerate().take(self.grid.dim()) {
            *xc += self.disp[c][p];
        }
        x
    }

    pub fn jacobian(&self, p: usize) -> [[f64; 3]; 3] {
        let d = self.grid.dim();
        let mut j = [[0.0; 3]; 3];
        for i in 0..d {
            for a in 0..d {
                j[i][a] = self.jac[i * d + a][p];
            }
        }
        j
    }

    /// `x − Aξ` as Lagrangian fields.
    pub fn displacement(&self) -> VectorField {
        VectorField::from_physical(&self.grid, &self.disp, SpaceTag::Lagrange).expect("grid-sized arrays")
    }

    /// Entries `∂x^i/∂ξ^a` at index `i*d + a`, as Lagrangian fields.
    pub fn deformation_gradient(&self) -> Vec<SpectralField> {
        self.jac
            .iter()
            .map(|v| SpectralField::from_physical(&self.grid, v, SpaceTag::Lagrange).expect("grid-sized array"))
            .collect()
    }

    /// Largest Euclidean displacement over the grid.
    pub fn max_displacement(&self) -> f64 {
        (0..self.grid.len())
            .map(|p| self.disp.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `(max_ξ |F|, max_ξ |F⁻¹|)` in the Frobenius norm.
    pub fn bi_lipschitz(&self) -> (f64, f64) {
        let d = self.grid.dim();
        let mut fwd: f64 = 0.0;
        let mut back: f64 = 0.0;
        for p in 0..self.grid.len() {
            let j = self.jacobian(p);
            let inv = deformation::inverse(&j, d);
            let fro = |m: &[[f64; 3]; 3]| m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            fwd = fwd.max(fro(&j));
            back = back.max(fro(&inv));
        }
        (fwd, back)
    }

    /// Max difference between the transported `F` and the spectral
    /// derivative of the stored displacement plus `A`.
    pub fn gradient_defect(&self) -> f64 {
        let d = self.grid.dim();
        let disp = self.displacement();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for a in 0..d {
                let fd = disp.component(i).derivative(a).to_physical();
                let aia = self.a.get(i, a);
                for p in 0..self.grid.len() {
                    worst = worst.max((fd[p] + aia - self.jac[i * d + a][p]).abs());
                }
            }
        }
        worst
    }
}

fn mat_mul(g: &[[f64; 3]; 3], f: &[[f64; 3]; 3], d: usize) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..d {
        for a in 0..d {
            out[i][a] = (0..d).map(|k| g[i][k] * f[k][a]).sum();
        }
    }
    out
}

/// One RK4 step of `ẋ = v(t, x)`, `Ḟ = ∇v(t, x) F`. The four sources are the
/// velocity at the RK stages `t, t+dt/2, t+dt/2, t+dt`.
pub fn advect(map: &FlowMap, stages: [&dyn VelocitySource; 4], dt: f64) -> Result<FlowMap, LagrangianError> {
    let grid = map.grid.clone();
    let d = grid.dim();
    let updated = par::map_range(grid.len(), |p| {
        let x0 = map.position(p);
        let f0 = map.jacobian(p);
        let mut kx = [[0.0; 3]; 4];
        let mut kf = [[[0.0; 3]; 3]; 4];
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let mut x = x0;
            let mut f = f0;
            if s > 0 {
                let h = offsets[s] * dt;
                for i in 0..d {
                    x[i] += h * kx[s - 1][i];
                    for a in 0..d {
                        f[i][a] += h * kf[s - 1][i][a];
                    }
                }
            }
            let (v, g) = stages[s].eval(&x);
            kx[s] = v;
            kf[s] = mat_mul(&g, &f, d);
        }
        let wts = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0];
        let mut dx = [0.0; 3];
        let mut f = f0;
        for s in 0..4 {
            for i in 0..d {
                dx[i] += wts[s] * kx[s][i];
                for a in 0..d {
                    f[i][a] += wts[s] * kf[s][i][a];
                }
            }
        }
        (dx, f)
    });
    let mut next = map.clone();
    next.t = map.t + dt;
    for (p, (dx, f)) in updated.into_iter().enumerate() {
        for i in 0..d {
            next.disp[i][p] += dx[i];
            for a in 0..d {
                next.jac[i * d + a][p] = f[i][a];
            }
        }
    }
    let disp = next.max_displacement();
    if !disp.is_finite() || disp > next.limit {
        return Err(LagrangianError::MapLeftDomainProxy {
            t: next.t,
            displacement: disp,
            limit: next.limit,
        });
    }
    Ok(next)
}

/// Advances the solver and the flow map together, feeding the map the
/// solver's own RK stage velocities.
pub fn coupled_step(
    state: &StateBundle,
    map: &FlowMap,
    cfg: &EvolutionConfig,
    kind: Interpolation,
) -> Result<(StateBundle, FlowMap), LagrangianError> {
    let (next, snaps) = dynamics::step_with_snapshots(state, cfg)?;
    let grid = state.grid();
    let sources = snaps
        .iter()
        .map(|s| GridVelocity::from_snapshot(grid, s, kind))
        .collect::<Result<Vec<_>, _>>()?;
    let stages: [&dyn VelocitySource; 4] = [&sources[0], &sources[1], &sources[2], &sources[3]];
    let map = advect(map, stages, cfg.dt)?;
    Ok((next, map))
}

/// `max_ξ |det F − 1|`.
pub fn volume_residual(map: &FlowMap) -> f64 {
    let d = map.grid.dim();
    (0..map.grid.len())
        .map(|p| (deformation::det(&map.jacobian(p), d) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `‖F_a − (A_a + u_a∘x)‖_{L²(dξ)}` summed over columns.
pub fn consistency_residual(map: &FlowMap, state: &StateBundle, kind: Interpolation) -> Result<f64, LagrangianError> {
    let d = map.grid.dim();
    let fields: Vec<&SpectralField> = state.u.iter().flat_map(|ua| ua.components().iter()).collect();
    let interp = Interpolant::from_spectral(&fields, kind)?;
    let per_point = par::map_range(map.grid.len(), |p| {
        let mut vals = [0.0; 9];
        interp.eval(&map.position(p), &mut vals[..d * d]);
        let j = map.jacobian(p);
        let mut s = 0.0;
        for a in 0..d {
            for i in 0..d {
                let diff = j[i][a] - (state.a.get(i, a) + vals[a * d + i]);
                s += diff * diff;
            }
        }
        s
    });
    Ok((per_point.iter().sum::<f64>() * map.grid.cell_volume()).sqrt())
}

/// `f^L(ξ) = f^E(x(ξ))`.
pub fn pull_back(f: &SpectralField, map: &FlowMap, kind: Interpolation) -> Result<SpectralField, LagrangianError> {
    Ok(pull_back_many(&[f], map, kind)?.pop().expect("one field"))
}

pub fn pull_back_many(
    fields: &[&SpectralField],
    map: &FlowMap,
    kind: Interpolation,
) -> Result<Vec<SpectralField>, LagrangianError> {
    if fields.iter().any(|f| f.tag() != SpaceTag::Euler) {
        return Err(LagrangianError::WrongSpace);
    }
    let interp = Interpolant::from_spectral(fields, kind)?;
    let nf = fields.len();
    let vals = par::map_range(map.grid.len(), |p| {
        let mut out = vec![0.0; nf];
        interp.eval(&map.position(p), &mut out);
        out
    });
    (0..nf)
        .map(|c| {
            let column: Vec<f64> = vals.iter().map(|v| v[c]).collect();
            SpectralField::from_physical(&map.grid, &column, SpaceTag::Lagrange).map_err(Into::into)
        })
        .collect()
}

fn wrap(x: f64, period: f64) -> f64 {
    x - period * (x / period).round()
}

/// `ξ(x)` at every x-grid point by damped Newton from `A⁻¹x`.
pub fn invert(map: &FlowMap, kind: Interpolation) -> Result<Vec<[f64; 3]>, LagrangianError> {
    let grid = &map.grid;
    let d = grid.dim();
    let l = grid.period();
    let values: Vec<Vec<f64>> = map.disp.iter().chain(map.jac.iter()).cloned().collect();
    let interp = Interpolant::from_physical(grid, &values, kind)?;
    let ainv = map.a.inverse();
    let eval = |xi: &[f64; 3], x: &[f64; 3]| {
        let mut buf = [0.0; 12];
        interp.eval(xi, &mut buf[..d + d * d]);
        let ax = map.a.apply(xi);
        let mut r = [0.0; 3];
        for i in 0..d {
            r[i] = wrap(ax[i] + buf[i] - x[i], l);
        }
        let mut j = [[0.0; 3]; 3];
        for i in 0..d {
            for a in 0..d {
                j[i][a] = buf[d + i * d + a];
            }
        }
        (r, j)
    };
    let norm = |r: &[f64; 3]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let results = par::map_range(grid.len(), |p| {
        let x = grid.point(p);
        let mut xi = [0.0; 3];
        for a in 0..d {
            xi[a] = (0..d).map(|i| ainv[a][i] * x[i]).sum();
        }
        let (mut r, mut j) = eval(&xi, &x);
        for _ in 0..NEWTON_MAX_ITER {
            if norm(&r) < NEWTON_TOL {
                return Ok(xi);
            }
            let jinv = deformation::inverse(&j, d);
            let mut delta = [0.0; 3];
            for a in 0..d {
                delta[a] = (0..d).map(|i| jinv[a][i] * r[i]).sum();
            }
            let mut lambda = 1.0;
            loop {
                let mut trial = xi;
                for a in 0..d {
                    trial[a] -= lambda * delta[a];
                }
                let (rt, jt) = eval(&trial, &x);
                if norm(&rt) < norm(&r) || lambda < 1.0 / 64.0 {
                    xi = trial;
                    r = rt;
                    j = jt;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if norm(&r) < NEWTON_TOL {
            Ok(xi)
        } else {
            Err(LagrangianError::InversionDiverged {
                point: p,
                residual: norm(&r),
            })
        }
    });
    results.into_iter().collect()
}

/// `f^E(x) = f^L(ξ(x))`.
pub fn push_forward(f: &SpectralField, map: &FlowMap, kind: Interpolation) -> Result<SpectralField, LagrangianError> {
    if f.tag() != SpaceTag::Lagrange {
        return Err(LagrangianError::WrongSpace);
    }
    let xi = invert(map, kind)?;
    let interp = Interpolant::from_spectral(&[f], kind)?;
    let vals = par::map(&xi, |p| {
        let mut out = [0.0];
        interp.eval(p, &mut out);
        out[0]
    });
    Ok(SpectralField::from_physical(&map.grid, &vals, SpaceTag::Euler)?)
}

/// Pulled-back vorticities and sources, `(Ω^L, F^L)`.
pub fn lagrangian_vorticity(
    state: &StateBundle,
    map: &FlowMap,
    eps: f64,
    dealias: bool,
    kind: Interpolation,
) -> Result<(VorticityBundle, VorticityBundle), LagrangianError> {
    let omega = vorticity::curl(state);
    let src = vorticity::vorticity_sources(state, eps, dealias);
    let pull = |b: &VorticityBundle| -> Result<VorticityBundle, LagrangianError> {
        let mut fields = pull_back_many(&b.fields(), map, kind)?.into_iter();
        let np = b.omega.len();
        let om: Vec<SpectralField> = fields.by_ref().take(np).collect();
        let oa = (0..b.dim).map(|_| fields.by_ref().take(np).collect()).collect();
        let mut out = VorticityBundle {
            dim: b.dim,
            omega: om,
            omega_a: oa,
        };
        for f in out.fields_mut() {
            f.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        }
        Ok(out)
    };
    Ok((pull(&omega)?, pull(&src)?))
}

/// Which Euler/Lagrange norm comparison to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransferKind {
    Besov { r: f64, p: f64 },
    HomSobolev { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    /// `‖v_a‖_∞`, the sup over ξ of the Frobenius norm of `F`.
    pub sup_va: f64,
    pub euler_norm: f64,
    pub lagrange_norm: f64,
    /// Lagrangian norm over its bound in terms of the Eulerian one.
    pub forward_ratio: f64,
    /// Eulerian norm over its bound in terms of the Lagrangian one; absent
    /// for `1 < θ < 2`.
    pub backward_ratio: Option<f64>,
}

/// Compares Eulerian and Lagrangian norms of `f` under `map`. For
/// `1 < θ < 2` the bound also involves `u` through `‖u_a‖_∞` and the
/// vorticity factor `‖ω_a‖_2` (d = 2) or `[ω_a]_{1/2}` (d = 3).
pub fn norm_transfer_check(
    f: &SpectralField,
    map: &FlowMap,
    u: &[VectorField],
    kind: TransferKind,
    interp: Interpolation,
) -> Result<TransferReport, LagrangianError> {
    let d = map.grid.dim();
    let mut fl = pull_back(f, map, interp)?;
    fl.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    let (fwd, _) = map.bi_lipschitz();
    let req = match kind {
        TransferKind::Besov { r, p } => NormRequest::HomBesov { r, p, q: p },
        TransferKind::HomSobolev { theta } => NormRequest::HomSobolev { theta },
    };
    let euler = lp::norm(f, &req).map_err(|_| LagrangianError::WrongSpace)?;
    let lagr = lp::norm(&fl, &req).map_err(|_| LagrangianError::WrongSpace)?;
    let (forward_ratio, backward_ratio) = match kind {
        TransferKind::Besov { r, .. } => (
            lagr / (fwd.powf(r) * euler),
            Some(euler / (fwd.powf((d - 1) as f64 * r) * lagr)),
        ),
        TransferKind::HomSobolev { theta } if theta <= 1.0 => (
            lagr / (fwd.powf(theta) * euler),
            Some(euler / (fwd.powf((d - 1) as f64 * theta) * lagr)),
        ),
        TransferKind::HomSobolev { theta } => {
            let ufields: Vec<&SpectralField> = u.iter().flat_map(|x| x.components().iter()).collect();
            let (sup_u, _) = lp::sup_norms(&ufields);
            let om: Vec<SpectralField> = u.iter().flat_map(vorticity::curl_vector).collect();
            let om_refs: Vec<&SpectralField> = om.iter().collect();
            let factor = if om_refs.is_empty() {
                0.0
            } else if d == 2 {
                lp::norm_of(&om_refs, &NormRequest::Lp { p: 2.0 }).unwrap_or(0.0)
            } else {
                lp::norm_of(&om_refs, &NormRequest::HomSobolev { theta: 0.5 }).unwrap_or(0.0)
            };
            let bound = fwd.powf(theta - 1.0) * (fwd + sup_u.powf(2.0 - theta) * factor.powf(theta - 1.0)) * euler;
            (lagr / bound, None)
        }
    };
    Ok(TransferReport {
        sup_va: fwd,
        euler_norm: euler,
        lagrange_norm: lagr,
        forward_ratio,
        backward_ratio,
    })
}
