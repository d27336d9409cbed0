//! Eulerian neo-Hookean evolution.
//!
//! Unknowns are `v` and the deformation columns `v_a = A_a + u_a`. The
//! truncated system integrated here is
//!
//! ```text
//! ∂t v   = −P ρε [ v·∇v − u_b·∇u_b − (A_b·∇) u_b ]
//! ∂t u_a = −ρε  [ v·∇u_a − u_a·∇v − (A_a·∇) v ]
//! ```
//!
//! with quadratic terms formed on the grid and truncated by the 2/3 rule.
//! Time stepping is classical RK4.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, SpectrumSpec};
use crate::deformation::{self, Deformation};
use crate::grid::{from_physical_batch, Grid, GridError, SpaceTag, SpectralField, VectorField};
use crate::lp::{self, NormRequest};
use crate::ops::{self, dealias_keeps};
use crate::par;
use crate::vorticity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite or runaway state at t = {t}: {reason}")]
    NonFinite { t: f64, reason: String },
    #[error("time step {dt} exceeds the CFL bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("deformation is not volume preserving: max |det − 1| = {0:e}")]
    DeterminantNotOne(f64),
    #[error("matrix determinant {0} is not 1")]
    MatrixNotUnimodular(f64),
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Runaway threshold on `‖V‖_∞`.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// Constant `d×d` matrix with unit determinant; entry `(i, a)` is `A^i_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnimodularMatrix {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl UnimodularMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        UnimodularMatrix { dim, m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DynamicsError> {
        let dim = rows.len();
        if !(dim == 2 || dim == 3) || rows.iter().any(|r| r.len() != dim) {
            return Err(DynamicsError::InvalidConfig(format!(
                "matrix must be 2×2 or 3×3, got {} rows",
                dim
            )));
        }
        let mut m = [[0.0; 3]; 3];
        for (i, r) in rows.iter().enumerate() {
            m[i][..dim].copy_from_slice(r);
        }
        let out = UnimodularMatrix { dim, m };
        let d = out.det();
        if (d - 1.0).abs() > 1e-12 {
            return Err(DynamicsError::MatrixNotUnimodular(d));
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, a: usize) -> f64 {
        self.m[i][a]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    pub fn raw(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        deformation::det(&self.m, self.dim)
    }

    pub fn inverse(&self) -> [[f64; 3]; 3] {
        deformation::inverse(&self.m, self.dim)
    }

    pub fn is_identity(&self) -> bool {
        *self == UnimodularMatrix::identity(self.dim)
    }

    /// `A ξ`.
    pub fn apply(&self, xi: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).map(|a| self.m[i][a] * xi[a]).sum();
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `V = (v, u_1..u_d)` together with `A` and the time.
#[derive(Debug, Clone)]
pub struct StateBundle {
    pub v: VectorField,
    pub u: Vec<VectorField>,
    pub a: UnimodularMatrix,
    pub t: f64,
}

/// Time derivative of the dynamical fields.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub dv: VectorField,
    pub du: Vec<VectorField>,
}

impl StateBundle {
    pub fn zeros(grid: &Grid, a: UnimodularMatrix) -> Self {
        let d = grid.dim();
        StateBundle {
            v: VectorField::zeros(grid, SpaceTag::Euler),
            u: (0..d).map(|_| VectorField::zeros(grid, SpaceTag::Euler)).collect(),
            a,
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.v.grid()
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    /// `v` components followed by `u_1`, …, `u_d` components.
    pub fn fields(&self) -> Vec<&SpectralField> {
        let mut out: Vec<&SpectralField> = self.v.components().iter().collect();
        for ua in &self.u {
            out.extend(ua.components().iter());
        }
        out
    }

    pub fn axpy(&mut self, h: f64, k: &Tendency) {
        self.v.axpy(h, &k.dv);
        for (ua, da) in self.u.iter_mut().zip(&k.du) {
            ua.axpy(h, da);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.u.iter().all(|x| x.is_finite())
    }

    /// `e(t) = ½ ∫ |v|² + Σ_a |u_a|²`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.v.l2_norm_sq() + self.u.iter().map(|x| x.l2_norm_sq()).sum::<f64>())
    }

    /// `(‖V‖_∞, ‖∇V‖_∞)`, max over components.
    pub fn sup_norms(&self) -> (f64, f64) {
        lp::sup_norms(&self.fields())
    }

    /// Largest spectral divergence over `v` and every `u_a`.
    pub fn div_residual(&self) -> f64 {
        std::iter::once(&self.v)
            .chain(self.u.iter())
            .map(ops::div_residual)
            .fold(0.0, f64::max)
    }

    /// `Σ_fields ‖f‖_{H^s}²` square-rooted.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        lp::norm_of(&self.fields(), &NormRequest::SobolevH { s }).expect("valid Sobolev index")
    }

    /// `‖self − other‖_{H^s}`.
    pub fn sobolev_distance(&self, other: &StateBundle, s: f64) -> f64 {
        let diff: Vec<SpectralField> = self
            .fields()
            .iter()
            .zip(other.fields())
            .map(|(a, b)| a.sub(b))
            .collect();
        let refs: Vec<&SpectralField> = diff.iter().collect();
        lp::norm_of(&refs, &NormRequest::SobolevH { s }).expect("valid Sobolev index")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub diagnostics_every: usize,
    /// Courant number bound `c` in `dt ≤ c / (k_max (‖v‖∞ + ‖u‖∞ + ‖A‖))`.
    pub cfl: f64,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidConfig(m.to_string()));
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0) {
            return bad("t_end must be non-negative");
        }
        if self.diagnostics_every == 0 {
            return bad("diagnostics_every must be at least 1");
        }
        if !(self.cfl > 0.0) {
            return bad("cfl must be positive");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Velocity and its gradient on the grid, as seen at one RK4 stage.
/// `grad[i * d + k]` holds `∂_k v^i`.
#[derive(Debug, Clone)]
pub struct VelocitySnapshot {
    pub dim: usize,
    pub v: Vec<Vec<f64>>,
    pub grad: Vec<Vec<f64>>,
}

struct RhsOutput {
    tendency: Tendency,
    sup: f64,
    snapshot: Option<VelocitySnapshot>,
}

/// Sharp cutoff `|k| ≤ 1/ε` followed by the optional 2/3 rule.
pub(crate) fn truncate(f: &mut SpectralField, eps: f64, dealias: bool) {
    let grid = f.grid().clone();
    let cut = 1.0 / eps;
    for (m, c) in grid.modes().iter().zip(f.coeffs_mut()) {
        if m.norm > cut || (dealias && !dealias_keeps(&grid, m)) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

fn rhs_full(state: &StateBundle, eps: f64, dealias: bool, keep_velocity: bool) -> RhsOutput {
    let grid = state.grid().clone();
    let d = grid.dim();
    let n_pts = grid.len();
    // Layout: v^i, ∂_k v^i, u_a^i, ∂_k u_a^i.
    let mut spectral: Vec<SpectralField> = Vec::with_capacity(d + d * d + d * d + d * d * d);
    for i in 0..d {
        spectral.push(state.v.component(i).clone());
    }
    for i in 0..d {
        for k in 0..d {
            spectral.push(state.v.component(i).derivative(k));
        }
    }
    for a in 0..d {
        for i in 0..d {
            spectral.push(state.u[a].component(i).clone());
        }
    }
    for a in 0..d {
        for i in 0..d {
            for k in 0..d {
                spectral.push(state.u[a].component(i).derivative(k));
            }
        }
    }
    let phys = par::map(&spectral, |f| f.to_physical());
    drop(spectral);
    let v = |i: usize| &phys[i];
    let gv = |i: usize, k: usize| &phys[d + i * d + k];
    let u = |a: usize, i: usize| &phys[d + d * d + a * d + i];
    let gu = |a: usize, i: usize, k: usize| &phys[d + 2 * d * d + (a * d + i) * d + k];

    let sup = phys[..d]
        .iter()
        .chain(phys[d + d * d..d + 2 * d * d].iter())
        .flat_map(|x| x.iter())
        .fold(0.0, |acc: f64, &x| if x.is_nan() { f64::NAN } else { acc.max(x.abs()) });

    // Output o < d: momentum component o. Otherwise u_a^i with o = d + a d + i.
    let products = par::map_range(d + d * d, |o| {
        let mut out = vec![0.0; n_pts];
        if o < d {
            let i = o;
            for j in 0..d {
                let (vj, g) = (v(j), gv(i, j));
                for p in 0..n_pts {
                    out[p] += vj[p] * g[p];
                }
            }
            for b in 0..d {
                for k in 0..d {
                    let (ub, g) = (u(b, k), gu(b, i, k));
                    for p in 0..n_pts {
                        out[p] -= ub[p] * g[p];
                    }
                }
            }
        } else {
            let a = (o - d) / d;
            let i = (o - d) % d;
            for k in 0..d {
                let (vk, g, uak, gvi) = (v(k), gu(a, i, k), u(a, k), gv(i, k));
                for p in 0..n_pts {
                    out[p] += vk[p] * g[p] - uak[p] * gvi[p];
                }
            }
        }
        out
    });
    let mut nonlin = from_physical_batch(&grid, &products, SpaceTag::Euler);
    drop(products);
    for f in nonlin.iter_mut() {
        truncate(f, eps, dealias);
    }

    // Linear terms: −(A_b·∇) u_b in the momentum equation, −(A_a·∇) v in u_a.
    let am = state.a.raw();
    let a_dot_k = |b: usize, k: &[f64; 3]| -> f64 { (0..d).map(|j| am[j][b] * k[j]).sum() };
    let modes = grid.modes();
    let cut = 1.0 / eps;
    let keep = |idx: usize| {
        let m = &modes[idx];
        m.norm <= cut && (!dealias || dealias_keeps(&grid, m))
    };
    let mut momentum: Vec<SpectralField> = nonlin.drain(..d).collect();
    for (i, f) in momentum.iter_mut().enumerate() {
        let coeffs = f.coeffs_mut();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            if !keep(idx) {
                continue;
            }
            let k = &modes[idx].k_odd;
            for b in 0..d {
                *c -= Complex64::new(0.0, a_dot_k(b, k)) * state.u[b].component(i).coeffs()[idx];
            }
            *c = -*c;
        }
    }
    let dv = ops::leray_project(&VectorField::new(momentum).expect("components share a grid"));
    let mut du = Vec::with_capacity(d);
    let mut rest = nonlin.into_iter();
    for a in 0..d {
        let mut comps = Vec::with_capacity(d);
        for i in 0..d {
            let mut f = rest.next().expect("d² deformation products");
            let coeffs = f.coeffs_mut();
            for (idx, c) in coeffs.iter_mut().enumerate() {
                if !keep(idx) {
                    continue;
                }
                let k = &modes[idx].k_odd;
                *c -= Complex64::new(0.0, a_dot_k(a, k)) * state.v.component(i).coeffs()[idx];
                *c = -*c;
            }
            comps.push(f);
        }
        du.push(VectorField::new(comps).expect("components share a grid"));
    }

    let snapshot = keep_velocity.then(|| {
        let mut it = phys.into_iter();
        let v: Vec<Vec<f64>> = it.by_ref().take(d).collect();
        let grad: Vec<Vec<f64>> = it.take(d * d).collect();
        VelocitySnapshot { dim: d, v, grad }
    });
    RhsOutput {
        tendency: Tendency { dv, du },
        sup,
        snapshot,
    }
}

/// Time derivative of the truncated system at `state`.
pub fn rhs(state: &StateBundle, eps: f64, dealias: bool) -> Tendency {
    rhs_full(state, eps, dealias, false).tendency
}

/// `c / (k_max (‖v‖∞ + ‖u‖∞ + ‖A‖))` with `k_max` capped by `1/ε`.
pub fn cfl_limit(state: &StateBundle, cfg: &EvolutionConfig) -> f64 {
    let (sup_v, _) = lp::sup_norms(&state.v.components().iter().collect::<Vec<_>>());
    let u_fields: Vec<&SpectralField> = state.u.iter().flat_map(|x| x.components().iter()).collect();
    let (sup_u, _) = lp::sup_norms(&u_fields);
    let k_max = state.grid().max_k().min(1.0 / cfg.eps);
    cfg.cfl / (k_max * (sup_v + sup_u + state.a.frobenius()))
}

pub fn check_cfl(state: &StateBundle, cfg: &EvolutionConfig) -> Result<(), DynamicsError> {
    let limit = cfl_limit(state, cfg);
    if cfg.dt > limit {
        Err(DynamicsError::CflViolation { dt: cfg.dt, limit })
    } else {
        Ok(())
    }
}

fn guard(t: f64, sup: f64) -> Result<(), DynamicsError> {
    if sup.is_nan() {
        return Err(DynamicsError::NonFinite {
            t,
            reason: "NaN in state".into(),
        });
    }
    if sup > BLOWUP_LIMIT {
        return Err(DynamicsError::NonFinite {
            t,
            reason: format!("‖V‖∞ = {sup:e} exceeds {BLOWUP_LIMIT:e}"),
        });
    }
    Ok(())
}

fn stage(state: &StateBundle, k: &Tendency, h: f64) -> StateBundle {
    let mut s = state.clone();
    s.axpy(h, k);
    s
}

/// One RK4 step; also returns the velocity snapshots at the four stages.
pub fn step_with_snapshots(
    state: &StateBundle,
    cfg: &EvolutionConfig,
) -> Result<(StateBundle, [VelocitySnapshot; 4]), DynamicsError> {
    let (next, snaps) = rk4(state, cfg, true)?;
    Ok((next, snaps.map(|s| s.expect("snapshot requested"))))
}

/// One RK4 step of size `cfg.dt`.
pub fn step(state: &StateBundle, cfg: &EvolutionConfig) -> Result<StateBundle, DynamicsError> {
    Ok(rk4(state, cfg, false)?.0)
}

fn rk4(
    state: &StateBundle,
    cfg: &EvolutionConfig,
    keep: bool,
) -> Result<(StateBundle, [Option<VelocitySnapshot>; 4]), DynamicsError> {
    let dt = cfg.dt;
    let r1 = rhs_full(state, cfg.eps, cfg.dealias, keep);
    guard(state.t, r1.sup)?;
    let s2 = stage(state, &r1.tendency, 0.5 * dt);
    let r2 = rhs_full(&s2, cfg.eps, cfg.dealias, keep);
    let s3 = stage(state, &r2.tendency, 0.5 * dt);
    let r3 = rhs_full(&s3, cfg.eps, cfg.dealias, keep);
    let s4 = stage(state, &r3.tendency, dt);
    let r4 = rhs_full(&s4, cfg.eps, cfg.dealias, keep);
    let mut next = state.clone();
    next.axpy(dt / 6.0, &r1.tendency);
    next.axpy(dt / 3.0, &r2.tendency);
    next.axpy(dt / 3.0, &r3.tendency);
    next.axpy(dt / 6.0, &r4.tendency);
    next.t = state.t + dt;
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite {
            t: next.t,
            reason: "non-finite coefficient after step".into(),
        });
    }
    Ok((next, [r1.snapshot, r2.snapshot, r3.snapshot, r4.snapshot]))
}

/// Random velocity part of an initial-data spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVelocity {
    pub seed: u64,
    pub rms: f64,
    pub spectrum: SpectrumSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `v = a(sin x cos y, −cos x sin y)` (times `cos z` in 3D), `u = 0`.
    TaylorGreen { amplitude: f64 },
    /// Exact linear solution `v = a cos(κt) sin(κx₁) e₂`, `u₁ = a sin(κt) cos(κx₁) e₂`.
    ShearWave { amplitude: f64, mode: i64 },
    /// Independent random divergence-free `v` and `u_a` (not compatible).
    Random {
        seed: u64,
        v_rms: f64,
        u_rms: f64,
        spectrum: SpectrumSpec,
    },
    /// Compatible data from a shear-composed reference map, plus an optional
    /// random velocity.
    Deformation {
        shears: Vec<deformation::Shear>,
        velocity: Option<RandomVelocity>,
    },
}

fn project_and_truncate(w: VectorField, eps: f64, dealias: bool) -> VectorField {
    let mut comps = w.into_components();
    for c in comps.iter_mut() {
        c.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        truncate(c, eps, dealias);
    }
    ops::leray_project(&VectorField::new(comps).expect("components share a grid"))
}

fn random_velocity(grid: &Grid, rv: &RandomVelocity) -> VectorField {
    let mut v = corpus::random_divfree(grid, &rv.spectrum, rv.seed);
    corpus::normalize_rms(&mut v, rv.rms);
    v
}

/// `u_a` fields for the deformation `x = S(ξ)`, evaluated on the x-grid.
pub fn deformation_fields(grid: &Grid, def: &Deformation) -> Result<Vec<VectorField>, DynamicsError> {
    let d = grid.dim();
    def.validate(d).map_err(DynamicsError::InvalidInitialData)?;
    let defect = def.det_defect(grid);
    if defect > 1e-6 {
        return Err(DynamicsError::DeterminantNotOne(defect));
    }
    let k0 = grid.k0();
    let jacs = par::map_range(grid.len(), |i| {
        let xi = def.invert(&grid.point(i), k0);
        def.apply(&xi, k0, d).1
    });
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let vals: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let delta = if i == a { 1.0 } else { 0.0 };
                jacs.iter().map(|j| j[i][a] - delta).collect()
            })
            .collect();
        out.push(VectorField::from_physical(grid, &vals, SpaceTag::Euler)?);
    }
    Ok(out)
}

/// Builds mollified, projected, mean-zero initial data.
pub fn make_initial_data(
    grid: &Grid,
    spec: &InitialData,
    a: UnimodularMatrix,
    eps: f64,
    dealias: bool,
) -> Result<StateBundle, DynamicsError> {
    let d = grid.dim();
    if a.dim() != d {
        return Err(DynamicsError::InvalidInitialData(format!(
            "matrix is {}×{} but the grid is {d}-dimensional",
            a.dim(),
            a.dim()
        )));
    }
    if !(eps > 0.0) {
        return Err(DynamicsError::InvalidConfig("eps must be positive".into()));
    }
    let mut state = StateBundle::zeros(grid, a);
    match spec {
        InitialData::Zero => return Ok(state),
        InitialData::TaylorGreen { amplitude } => {
            let amp = *amplitude;
            let vals: Vec<Vec<f64>> = if d == 2 {
                vec![
                    grid.sample(|x| amp * x[0].sin() * x[1].cos()),
                    grid.sample(|x| -amp * x[0].cos() * x[1].sin()),
                ]
            } else {
                vec![
                    grid.sample(|x| amp * x[0].sin() * x[1].cos() * x[2].cos()),
                    grid.sample(|x| -amp * x[0].cos() * x[1].sin() * x[2].cos()),
                    vec![0.0; grid.len()],
                ]
            };
            let k0 = grid.k0();
            if (k0 - 1.0).abs() > 1e-12 {
                return Err(DynamicsError::InvalidInitialData(
                    "taylor-green needs period 2π".into(),
                ));
            }
            state.v = VectorField::from_physical(grid, &vals, SpaceTag::Euler)?;
        }
        InitialData::ShearWave { amplitude, mode } => {
            let kap = *mode as f64 * grid.k0();
            let amp = *amplitude;
            let mut vals = vec![vec![0.0; grid.len()]; d];
            vals[1] = grid.sample(|x| amp * (kap * x[0]).sin());
            state.v = VectorField::from_physical(grid, &vals, SpaceTag::Euler)?;
        }
        InitialData::Random {
            seed,
            v_rms,
            u_rms,
            spectrum,
        } => {
            let mut v = corpus::random_divfree(grid, spectrum, *seed);
            corpus::normalize_rms(&mut v, *v_rms);
            state.v = v;
            for (a, ua) in state.u.iter_mut().enumerate() {
                let mut w = corpus::random_divfree(grid, spectrum, seed.wrapping_add(1 + a as u64));
                corpus::normalize_rms(&mut w, *u_rms);
                *ua = w;
            }
        }
        InitialData::Deformation { shears, velocity } => {
            if !state.a.is_identity() {
                return Err(DynamicsError::InvalidInitialData(
                    "deformation-based data requires A = I".into(),
                ));
            }
            state.u = deformation_fields(grid, &Deformation::new(shears.clone()))?;
            if let Some(rv) = velocity {
                state.v = random_velocity(grid, rv);
            }
        }
    }
    state.v = project_and_truncate(state.v, eps, dealias);
    state.u = state
        .u
        .into_iter()
        .map(|x| project_and_truncate(x, eps, dealias))
        .collect();
    Ok(state)
}

/// `p = −Σ_{ik} (k_i k_k/|k|²) FFT(v^i v^k − u^i_a u^k_a)`, solving
/// `−Δp = ∂_k v^i ∂_i v^k − ∂_k u^i_a ∂_i u^k_a`.
pub fn recover_pressure(state: &StateBundle, dealias: bool) -> SpectralField {
    let grid = state.grid().clone();
    let d = grid.dim();
    let mut fields: Vec<&SpectralField> = state.v.components().iter().collect();
    for ua in &state.u {
        fields.extend(ua.components().iter());
    }
    let phys = par::map(&fields, |f| f.to_physical());
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |k| (i, k))).collect();
    let stress: Vec<Vec<f64>> = par::map(&pairs, |&(i, k)| {
        (0..grid.len())
            .map(|p| {
                let mut s = phys[i][p] * phys[k][p];
                for a in 0..d {
                    s -= phys[d + a * d + i][p] * phys[d + a * d + k][p];
                }
                s
            })
            .collect()
    });
    let mut hats = from_physical_batch(&grid, &stress, SpaceTag::Euler);
    if dealias {
        for h in hats.iter_mut() {
            ops::dealias_in_place(h);
        }
    }
    let modes = grid.modes();
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            let k = &modes[idx].k_odd;
            let k2: f64 = k.iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (pi, &(i, kk)) in pairs.iter().enumerate() {
                let w = if i == kk { 1.0 } else { 2.0 };
                acc += w * k[i] * k[kk] / k2 * hats[pi].coeffs()[idx];
            }
            -acc
        })
        .collect();
    SpectralField::from_coeffs(&grid, coeffs, SpaceTag::Euler).expect("length matches")
}

/// `‖Δp + ∂_k v^i ∂_i v^k − ∂_k u^i_a ∂_i u^k_a‖_{L²}`, the spectral Poisson
/// residual of a recovered pressure.
pub fn pressure_residual(state: &StateBundle, p: &SpectralField, dealias: bool) -> f64 {
    let grid = state.grid().clone();
    let d = grid.dim();
    let grad_v: Vec<Vec<f64>> = (0..d * d)
        .map(|ik| state.v.component(ik / d).derivative(ik % d).to_physical())
        .collect();
    let grad_u: Vec<Vec<Vec<f64>>> = state
        .u
        .iter()
        .map(|ua| {
            (0..d * d)
                .map(|ik| ua.component(ik / d).derivative(ik % d).to_physical())
                .collect()
        })
        .collect();
    let src: Vec<f64> = (0..grid.len())
        .map(|pt| {
            let mut s = 0.0;
            for i in 0..d {
                for k in 0..d {
                    s += grad_v[i * d + k][pt] * grad_v[k * d + i][pt];
                    for gu in &grad_u {
                        s -= gu[i * d + k][pt] * gu[k * d + i][pt];
                    }
                }
            }
            s
        })
        .collect();
    let mut src_hat = SpectralField::from_physical(&grid, &src, SpaceTag::Euler).expect("length matches");
    if dealias {
        ops::dealias_in_place(&mut src_hat);
    }
    let lap = p.map_modes(|m, c| -m.norm_odd().powi(2) * c);
    lap.add(&src_hat).l2_norm()
}

/// Pointwise `q^i_{ab} = v^k_a ∂_k v^i_b − v^k_b ∂_k v^i_a`, combined L² norm
/// over all `a < b` and `i`.
pub fn compatibility_norm(state: &StateBundle) -> f64 {
    let grid = state.grid().clone();
    let d = grid.dim();
    let am = state.a.raw();
    let u_phys: Vec<Vec<Vec<f64>>> = state.u.iter().map(|x| x.to_physical()).collect();
    let grads: Vec<Vec<Vec<f64>>> = state
        .u
        .iter()
        .map(|ua| {
            (0..d * d)
                .map(|ik| ua.component(ik / d).derivative(ik % d).to_physical())
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for a in 0..d {
        for b in a + 1..d {
            for i in 0..d {
                for p in 0..grid.len() {
                    let mut q = 0.0;
                    for k in 0..d {
                        let va_k = am[k][a] + u_phys[a][k][p];
                        let vb_k = am[k][b] + u_phys[b][k][p];
                        q += va_k * grads[b][i * d + k][p] - vb_k * grads[a][i * d + k][p];
                    }
                    total += q * q;
                }
            }
        }
    }
    (total * grid.cell_volume()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovParams {
    pub r: f64,
    pub p: f64,
}

/// Which norms `monitor` records besides the fixed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Indices `s` for `‖V‖_{H^s}`.
    pub sobolev: Vec<f64>,
    /// `(r, p)` for `{Ω}_{r,p} = ‖Ω‖_{Ḃ^r_{p,p}}`.
    pub besov: Vec<BesovParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub q_ab_norm: f64,
    pub div_residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub q_ab: f64,
    pub div_res: f64,
    pub sup_v: f64,
    pub sup_grad_v: f64,
    pub sobolev: Vec<(f64, f64)>,
    pub besov: Vec<(BesovParams, f64)>,
}

pub fn monitor(state: &StateBundle, diag: &DiagnosticsConfig) -> (CompatibilityReport, DiagnosticsRecord) {
    let energy = state.energy();
    let q_ab = compatibility_norm(state);
    let div_res = state.div_residual();
    let (sup_v, sup_grad_v) = state.sup_norms();
    let sobolev = diag.sobolev.iter().map(|&s| (s, state.sobolev_norm(s))).collect();
    let besov = if diag.besov.is_empty() {
        Vec::new()
    } else {
        let omega = vorticity::curl(state);
        diag.besov
            .iter()
            .map(|bp| (*bp, omega.besov_norm(bp.r, bp.p)))
            .collect()
    };
    (
        CompatibilityReport {
            q_ab_norm: q_ab,
            div_residual: div_res,
            energy,
        },
        DiagnosticsRecord {
            t: state.t,
            energy,
            q_ab,
            div_res,
            sup_v,
            sup_grad_v,
            sobolev,
            besov,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn cfg(dt: f64) -> EvolutionConfig {
        EvolutionConfig {
            eps: 1e-3,
            dt,
            t_end: 1.0,
            dealias: true,
            diagnostics_every: 10,
            cfl: 1.0,
        }
    }

    fn random_state(grid: &Grid, seed: u64) -> StateBundle {
        let spec = InitialData::Random {
            seed,
            v_rms: 0.3,
            u_rms: 0.2,
            spectrum: SpectrumSpec::new(2.5, 1.0, 6.0),
        };
        make_initial_data(grid, &spec, UnimodularMatrix::identity(grid.dim()), 1e-3, true).unwrap()
    }

    #[test]
    fn zero_state_has_zero_rhs_and_stays_zero() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let s = make_initial_data(&g, &InitialData::Zero, UnimodularMatrix::identity(2), 0.1, true).unwrap();
        let k = rhs(&s, 0.1, true);
        assert_eq!(k.dv.l2_norm_sq(), 0.0);
        let next = step(&s, &cfg(0.01)).unwrap();
        assert_eq!(next.energy(), 0.0);
        assert!((next.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn pure_fluid_reduction_matches_hand_convolution() {
        // v = (sin y, 0) + (0, sin x) is a steady-ish two-mode field; with u = 0
        // the momentum RHS is −P[v·∇v] with v·∇v = (sin x cos y, sin y cos x).
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let mut s = StateBundle::zeros(&g, UnimodularMatrix::identity(2));
        s.v = VectorField::from_physical(
            &g,
            &[g.sample(|x| x[1].sin()), g.sample(|x| x[0].sin())],
            SpaceTag::Euler,
        )
        .unwrap();
        let k = rhs(&s, 1e-3, true);
        // v·∇v = (sin x cos y, cos x sin y) = ∇(−cos x cos y)... a pure gradient.
        assert!(k.dv.l2_norm_sq() < 1e-26);

        s.v = VectorField::from_physical(
            &g,
            &[g.sample(|x| x[1].sin()), g.sample(|x| 0.5 * (2.0 * x[0]).sin())],
            SpaceTag::Euler,
        )
        .unwrap();
        let k = rhs(&s, 1e-3, true);
        // v·∇v = (sin(2x) cos y / 1 · … ) computed by hand:
        // v1 ∂1 v1 + v2 ∂2 v1 = 0.5 sin(2x) cos y
        // v1 ∂1 v2 + v2 ∂2 v2 = sin y cos(2x)
        let n1 = g.sample(|x| 0.5 * (2.0 * x[0]).sin() * x[1].cos());
        let n2 = g.sample(|x| x[1].sin() * (2.0 * x[0]).cos());
        let nf = VectorField::from_physical(&g, &[n1, n2], SpaceTag::Euler).unwrap();
        let mut want = ops::leray_project(&nf);
        want.scale(-1.0);
        let diff = k.dv.sub(&want);
        assert!(diff.l2_norm_sq().sqrt() < 1e-13);
    }

    #[test]
    fn linear_modes_oscillate_at_wavenumber() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let spec = InitialData::ShearWave { amplitude: 1e-3, mode: 2 };
        let s0 = make_initial_data(&g, &spec, UnimodularMatrix::identity(2), 1e-3, true).unwrap();
        let period = 2.0 * PI / 2.0;
        let steps = 400;
        let c = EvolutionConfig { dt: period / steps as f64, ..cfg(0.0) };
        let mut s = s0.clone();
        for _ in 0..steps {
            s = step(&s, &c).unwrap();
        }
        let err = s.v.sub(&s0.v).l2_norm_sq().sqrt() + s.u[0].l2_norm_sq().sqrt();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rk4_error_has_fourth_order_slope() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let spec = InitialData::ShearWave { amplitude: 0.5, mode: 3 };
        let s0 = make_initial_data(&g, &spec, UnimodularMatrix::identity(2), 1e-3, true).unwrap();
        let err = |steps: usize| {
            let c = EvolutionConfig { dt: 1.0 / steps as f64, ..cfg(0.0) };
            let mut s = s0.clone();
            for _ in 0..steps {
                s = step(&s, &c).unwrap();
            }
            let v = s.v.to_physical();
            let x = g.point(5 * 16 + 3);
            (v[1][5 * 16 + 3] - 0.5 * 3f64.cos() * (3.0 * x[0]).sin()).abs()
        };
        let slope = (err(40) / err(80)).log2();
        assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn shear_wave_is_exact() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let amp = 0.4;
        let s0 = make_initial_data(
            &g,
            &InitialData::ShearWave { amplitude: amp, mode: 3 },
            UnimodularMatrix::identity(2),
            1e-3,
            true,
        )
        .unwrap();
        let c = EvolutionConfig { dt: 0.005, ..cfg(0.0) };
        let mut s = s0;
        for _ in 0..100 {
            s = step(&s, &c).unwrap();
        }
        let t = s.t;
        let v = s.v.to_physical();
        let u1 = s.u[0].to_physical();
        for i in (0..g.len()).step_by(13) {
            let x = g.point(i);
            assert!((v[1][i] - amp * (3.0 * t).cos() * (3.0 * x[0]).sin()).abs() < 1e-9);
            assert!((u1[1][i] - amp * (3.0 * t).sin() * (3.0 * x[0]).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn rhs_preserves_divergence_and_energy() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = random_state(&g, 1);
        let k = rhs(&s, 1e-3, true);
        assert!(ops::div_residual(&k.dv) < 1e-12);
        assert!(k.du.iter().all(|x| ops::div_residual(x) < 1e-12));
        let mut de = k.dv.components().iter().zip(s.v.components()).map(|(a, b)| a.inner(b).re).sum::<f64>();
        for (da, ua) in k.du.iter().zip(&s.u) {
            de += da.components().iter().zip(ua.components()).map(|(a, b)| a.inner(b).re).sum::<f64>();
        }
        assert!(de.abs() < 1e-13, "dE/dt = {de}");
    }

    #[test]
    fn general_unimodular_matrix_conserves_energy() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let mut s = random_state(&g, 2);
        s.a = UnimodularMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let k = rhs(&s, 1e-3, true);
        let mut de = k.dv.components().iter().zip(s.v.components()).map(|(a, b)| a.inner(b).re).sum::<f64>();
        for (da, ua) in k.du.iter().zip(&s.u) {
            de += da.components().iter().zip(ua.components()).map(|(a, b)| a.inner(b).re).sum::<f64>();
        }
        assert!(de.abs() < 1e-12);
        assert!(UnimodularMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn initial_data_examples() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = random_state(&g, 3);
        assert!(s.div_residual() < 1e-10);
        assert!(s.fields().iter().all(|f| f.mean().norm() == 0.0));

        let shear = InitialData::Deformation {
            shears: vec![deformation::Shear { target: 0, source: 1, amplitude: 0.1, mode: 1, phase: 0.0 }],
            velocity: None,
        };
        let s = make_initial_data(&g, &shear, UnimodularMatrix::identity(2), 1e-3, true).unwrap();
        assert!(s.div_residual() < 1e-10);
        // u_1 = (g'(ξ²), 0)∘ξ(x) = (0.1 cos x², 0): x² = ξ² for this shear.
        let u = s.u[1].to_physical();
        for i in (0..g.len()).step_by(7) {
            let x = g.point(i);
            assert!((u[0][i] - 0.1 * x[1].cos()).abs() < 1e-12);
            assert!(u[1][i].abs() < 1e-12);
        }
        assert!(compatibility_norm(&s) < 1e-10);

        let bad = InitialData::Deformation {
            shears: vec![deformation::Shear { target: 0, source: 0, amplitude: 0.1, mode: 1, phase: 0.0 }],
            velocity: None,
        };
        assert!(matches!(
            make_initial_data(&g, &bad, UnimodularMatrix::identity(2), 1e-3, true),
            Err(DynamicsError::DeterminantNotOne(_))
        ));
    }

    #[test]
    fn taylor_green_pressure() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = make_initial_data(
            &g,
            &InitialData::TaylorGreen { amplitude: 1.0 },
            UnimodularMatrix::identity(2),
            1e-3,
            true,
        )
        .unwrap();
        let p = recover_pressure(&s, true).to_physical();
        for (i, pv) in p.iter().enumerate() {
            let x = g.point(i);
            let want = 0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos());
            assert!((pv - want).abs() < 1e-13);
        }
        let zero = StateBundle::zeros(&g, UnimodularMatrix::identity(2));
        assert_eq!(recover_pressure(&zero, true).max_abs_coeff(), 0.0);
    }

    #[test]
    fn pressure_residual_vanishes_on_random_states() {
        for (d, n) in [(2, 32), (3, 12)] {
            let g = make_grid(d, n, 2.0 * PI).unwrap();
            let spec = InitialData::Random {
                seed: 5,
                v_rms: 0.5,
                u_rms: 0.3,
                spectrum: SpectrumSpec::new(2.0, 1.0, 3.0),
            };
            let s = make_initial_data(&g, &spec, UnimodularMatrix::identity(d), 1e-3, true).unwrap();
            let p = recover_pressure(&s, true);
            assert!(pressure_residual(&s, &p, true) < 1e-9);
        }
    }

    #[test]
    fn monitor_zero_state() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let s = StateBundle::zeros(&g, UnimodularMatrix::identity(2));
        let diag = DiagnosticsConfig {
            sobolev: vec![1.0],
            besov: vec![BesovParams { r: 0.5, p: 4.0 }],
        };
        let (c, r) = monitor(&s, &diag);
        assert_eq!(c.energy, 0.0);
        assert_eq!(c.q_ab_norm, 0.0);
        assert_eq!(r.sobolev[0].1, 0.0);
        assert_eq!(r.besov[0].1, 0.0);
    }

    #[test]
    fn blow_up_guard() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let mut s = make_initial_data(
            &g,
            &InitialData::TaylorGreen { amplitude: 1.0 },
            UnimodularMatrix::identity(2),
            1e-3,
            true,
        )
        .unwrap();
        s.v.scale(2e6);
        assert!(matches!(step(&s, &cfg(1e-3)), Err(DynamicsError::NonFinite { .. })));
        s.v.components_mut()[0].coeffs_mut()[1] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(step(&s, &cfg(1e-3)), Err(DynamicsError::NonFinite { .. })));
    }

    #[test]
    fn cfl_check() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = random_state(&g, 4);
        assert!(check_cfl(&s, &cfg(1e-3)).is_ok());
        assert!(matches!(check_cfl(&s, &cfg(1.0)), Err(DynamicsError::CflViolation { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1e-3).validate().is_ok());
        assert!(EvolutionConfig { eps: 0.0, ..cfg(1e-3) }.validate().is_err());
        assert!(EvolutionConfig { dt: -1.0, ..cfg(1e-3) }.validate().is_err());
        assert!(EvolutionConfig { diagnostics_every: 0, ..cfg(1e-3) }.validate().is_err());
    }
}
