//! Fourier multipliers: derivatives, Riesz and Bessel potentials, Riesz
//! transforms, the Leray projector, the sharp mollifier and dealiasing.
//!
//! Odd symbols (derivatives, `k_j/|k|`, the `k_i k_j` part of the projector)
//! use the wavevector with its Nyquist components set to zero so that real
//! fields stay real. Radial symbols use the true `|k|`. Homogeneous symbols
//! send the zero mode to zero.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::grid::{Grid, GridError, Mode, SpectralField, VectorField};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("negative Riesz power {0} applied to a field with nonzero mean")]
    NegativePowerAtZeroMode(f64),
    #[error("mollifier parameter must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

type Symbol = dyn Fn(&Mode) -> Complex64 + Send + Sync;

/// A Fourier multiplier with a human-readable label.
#[derive(Clone)]
pub struct MultiplierOp {
    label: String,
    at_zero: Complex64,
    symbol: Arc<Symbol>,
}

impl std::fmt::Debug for MultiplierOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiplierOp").field("label", &self.label).finish()
    }
}

impl MultiplierOp {
    /// `symbol` is evaluated on nonzero lattice points; `at_zero` is used for
    /// the zero mode.
    pub fn new<F>(label: impl Into<String>, at_zero: Complex64, symbol: F) -> Self
    where
        F: Fn(&Mode) -> Complex64 + Send + Sync + 'static,
    {
        MultiplierOp {
            label: label.into(),
            at_zero,
            symbol: Arc::new(symbol),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, mode: &Mode) -> Complex64 {
        if mode.norm == 0.0 {
            self.at_zero
        } else {
            (self.symbol)(mode)
        }
    }

    pub fn identity() -> Self {
        MultiplierOp::new("I", Complex64::new(1.0, 0.0), |_| Complex64::new(1.0, 0.0))
    }

    /// `D^s`, symbol `|k|^s`.
    pub fn riesz_potential(s: f64) -> Self {
        MultiplierOp::new(format!("D^{s}"), Complex64::new(0.0, 0.0), move |m| {
            Complex64::new(m.norm.powf(s), 0.0)
        })
    }

    /// `J^s`, symbol `(1+|k|²)^{s/2}`.
    pub fn bessel_potential(s: f64) -> Self {
        MultiplierOp::new(format!("J^{s}"), Complex64::new(1.0, 0.0), move |m| {
            Complex64::new((1.0 + m.norm * m.norm).powf(0.5 * s), 0.0)
        })
    }

    /// `R_j` with the plain symbol `k_j/|k|`.
    pub fn riesz(j: usize) -> Self {
        MultiplierOp::new(format!("R_{j}"), Complex64::new(0.0, 0.0), move |m| {
            let n = m.norm_odd();
            if n == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(m.k_odd[j] / n, 0.0)
            }
        })
    }

    /// Real-valued Riesz transform, symbol `−i k_j/|k|`.
    pub fn riesz_real(j: usize) -> Self {
        MultiplierOp::new(format!("R'_{j}"), Complex64::new(0.0, 0.0), move |m| {
            let n = m.norm_odd();
            if n == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -m.k_odd[j] / n)
            }
        })
    }

    /// Pointwise product of symbols.
    pub fn compose(&self, other: &MultiplierOp) -> Self {
        let a = self.clone();
        let b = other.clone();
        MultiplierOp {
            label: format!("{}∘{}", self.label, other.label),
            at_zero: self.at_zero * other.at_zero,
            symbol: Arc::new(move |m| a.eval(m) * b.eval(m)),
        }
    }
}

/// Multiplies every coefficient by the operator's symbol.
pub fn apply_multiplier(op: &MultiplierOp, f: &SpectralField) -> SpectralField {
    f.map_modes(|m, c| op.eval(m) * c)
}

/// Applies `op` to two fields checked to share a grid, returning `op f + g`.
pub fn apply_add(op: &MultiplierOp, f: &SpectralField, g: &SpectralField) -> Result<SpectralField, OpError> {
    f.ensure_same_space(g)?;
    Ok(f.map_modes(|m, c| op.eval(m) * c).add(g))
}

pub fn riesz_transform(j: usize, f: &SpectralField) -> SpectralField {
    apply_multiplier(&MultiplierOp::riesz(j), f)
}

/// `−i k_j/|k|` variant: maps real fields to real fields.
pub fn riesz_transform_real(j: usize, f: &SpectralField) -> SpectralField {
    apply_multiplier(&MultiplierOp::riesz_real(j), f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerKind {
    /// `D^s = (−Δ)^{s/2}`
    Riesz,
    /// `J^s = (1−Δ)^{s/2}`
    Bessel,
}

pub fn fractional_power(s: f64, kind: PowerKind, f: &SpectralField) -> Result<SpectralField, OpError> {
    match kind {
        PowerKind::Riesz => {
            if s < 0.0 && f.mean().norm() > 0.0 {
                return Err(OpError::NegativePowerAtZeroMode(s));
            }
            Ok(apply_multiplier(&MultiplierOp::riesz_potential(s), f))
        }
        PowerKind::Bessel => Ok(apply_multiplier(&MultiplierOp::bessel_potential(s), f)),
    }
}

/// Gradient of a scalar field.
pub fn gradient(f: &SpectralField) -> VectorField {
    let d = f.grid().dim();
    VectorField::new((0..d).map(|j| f.derivative(j)).collect()).expect("components share a grid")
}

pub fn divergence(w: &VectorField) -> SpectralField {
    let grid = w.grid();
    let comps = w.components();
    let coeffs = par::map_range(grid.len(), |idx| {
        let m = grid.mode(idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in comps.iter().enumerate() {
            acc += Complex64::new(0.0, m.k_odd[j]) * c.coeffs()[idx];
        }
        acc
    });
    SpectralField::from_coeffs(grid, coeffs, w.tag()).expect("length matches")
}

/// `max_k |Σ_j k_j ŵ_j(k)|`.
pub fn div_residual(w: &VectorField) -> f64 {
    divergence(w).max_abs_coeff()
}

/// Leray projector `δ_ij − k_i k_j/|k|²`, applied mode by mode.
pub fn leray_project(w: &VectorField) -> VectorField {
    let grid = w.grid().clone();
    let d = grid.dim();
    let comps = w.components();
    let projected: Vec<[Complex64; 3]> = par::map_range(grid.len(), |idx| {
        let m = grid.mode(idx);
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (j, o) in out.iter_mut().enumerate().take(d) {
            *o = comps[j].coeffs()[idx];
        }
        let k2 = m.k_odd[0] * m.k_odd[0] + m.k_odd[1] * m.k_odd[1] + m.k_odd[2] * m.k_odd[2];
        if m.norm == 0.0 {
            return [Complex64::new(0.0, 0.0); 3];
        }
        if k2 == 0.0 {
            return out;
        }
        let mut kw = Complex64::new(0.0, 0.0);
        for (j, o) in out.iter().enumerate().take(d) {
            kw += m.k_odd[j] * o;
        }
        for (j, o) in out.iter_mut().enumerate().take(d) {
            *o -= kw * (m.k_odd[j] / k2);
        }
        out
    });
    let tag = w.tag();
    let fields = (0..d)
        .map(|j| {
            SpectralField::from_coeffs(&grid, projected.iter().map(|p| p[j]).collect(), tag)
                .expect("length matches")
        })
        .collect();
    VectorField::new(fields).expect("components share a grid")
}

/// Sharp Friedrichs mollifier: keeps `|k| ≤ 1/ε`.
pub fn mollify(eps: f64, f: &SpectralField) -> Result<SpectralField, OpError> {
    if !(eps > 0.0) {
        return Err(OpError::InvalidEpsilon(eps));
    }
    let cut = 1.0 / eps;
    Ok(f.map_modes(|m, c| if m.norm <= cut { c } else { Complex64::new(0.0, 0.0) }))
}

pub fn mollify_vector(eps: f64, w: &VectorField) -> Result<VectorField, OpError> {
    let comps = w
        .components()
        .iter()
        .map(|c| mollify(eps, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorField::new(comps)?)
}

/// Whether the integer mode survives the 2/3 rule, `3|m_j| < n` on every axis.
pub fn dealias_keeps(grid: &Grid, m: &Mode) -> bool {
    let n = grid.n() as i64;
    m.m.iter().all(|x| 3 * x.abs() < n)
}

pub fn dealias(f: &SpectralField) -> SpectralField {
    let grid = f.grid().clone();
    f.map_modes(|m, c| if dealias_keeps(&grid, m) { c } else { Complex64::new(0.0, 0.0) })
}

pub fn dealias_in_place(f: &mut SpectralField) {
    let grid = f.grid().clone();
    for (m, c) in grid.modes().iter().zip(f.coeffs_mut()) {
        if !dealias_keeps(&grid, m) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Pseudo-spectral product of two real fields, dealiased.
pub fn product(a: &SpectralField, b: &SpectralField) -> Result<SpectralField, OpError> {
    a.ensure_same_space(b)?;
    let pa = a.to_physical();
    let pb = b.to_physical();
    let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let mut out = SpectralField::from_physical(a.grid(), &prod, a.tag())?;
    dealias_in_place(&mut out);
    Ok(out)
}
