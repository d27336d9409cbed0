//! Area/volume-preserving reference deformations built from periodic shears.
//!
//! A shear adds `a sin(m k0 y_s + φ)` to coordinate `t` using coordinate `s`;
//! with `t ≠ s` it has unit Jacobian determinant and an explicit inverse.
//! The composition `x = S_m ∘ … ∘ S_1(ξ)` gives compatible initial data
//! `u_a(x) = ∂x/∂ξ_a(ξ(x)) − e_a`.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shear {
    /// Displaced coordinate (0-based).
    pub target: usize,
    /// Coordinate the displacement depends on (0-based).
    pub source: usize,
    pub amplitude: f64,
    pub mode: i64,
    pub phase: f64,
}

impl Shear {
    fn arg(&self, y: &[f64; 3], k0: f64) -> f64 {
        self.mode as f64 * k0 * y[self.source] + self.phase
    }

    fn forward(&self, y: &mut [f64; 3], jac: &mut [[f64; 3]; 3], k0: f64, dim: usize) {
        let th = self.arg(y, k0);
        let slope = self.amplitude * self.mode as f64 * k0 * th.cos();
        // J ← (I + slope e_t e_sᵀ) J
        let row_s = jac[self.source];
        for c in 0..dim {
            jac[self.target][c] += slope * row_s[c];
        }
        y[self.target] += self.amplitude * th.sin();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Deformation {
    pub shears: Vec<Shear>,
}

impl Deformation {
    pub fn new(shears: Vec<Shear>) -> Self {
        Deformation { shears }
    }

    /// Checks axis indices against the dimension.
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        for (i, s) in self.shears.iter().enumerate() {
            if s.target >= dim || s.source >= dim {
                return Err(format!("shear {i} references an axis outside 0..{dim}"));
            }
            if !s.amplitude.is_finite() || !s.phase.is_finite() {
                return Err(format!("shear {i} has a non-finite parameter"));
            }
        }
        Ok(())
    }

    /// `(x(ξ), ∂x/∂ξ(ξ))`.
    pub fn apply(&self, xi: &[f64; 3], k0: f64, dim: usize) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut y = *xi;
        let mut jac = [[0.0; 3]; 3];
        for (i, row) in jac.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        for s in &self.shears {
            s.forward(&mut y, &mut jac, k0, dim);
        }
        (y, jac)
    }

    /// `ξ(x)`; exact when every shear has `target ≠ source`.
    pub fn invert(&self, x: &[f64; 3], k0: f64) -> [f64; 3] {
        let mut y = *x;
        for s in self.shears.iter().rev() {
            let th = s.arg(&y, k0);
            y[s.target] -= s.amplitude * th.sin();
        }
        y
    }

    /// `max_ξ |det ∂x/∂ξ − 1|` over the grid.
    pub fn det_defect(&self, grid: &Grid) -> f64 {
        let dim = grid.dim();
        let k0 = grid.k0();
        par::map_range(grid.len(), |i| {
            let (_, j) = self.apply(&grid.point(i), k0, dim);
            (det(&j, dim) - 1.0).abs()
        })
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn det(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    if dim == 2 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    } else {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Inverse of a 2×2 or 3×3 matrix via the cofactor formula.
pub fn inverse(m: &[[f64; 3]; 3], dim: usize) -> [[f64; 3]; 3] {
    let dt = det(m, dim);
    let mut out = [[0.0; 3]; 3];
    if dim == 2 {
        out[0][0] = m[1][1] / dt;
        out[0][1] = -m[0][1] / dt;
        out[1][0] = -m[1][0] / dt;
        out[1][1] = m[0][0] / dt;
    } else {
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                *o = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / dt;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn two_shears() -> Deformation {
        Deformation::new(vec![
            Shear { target: 0, source: 1, amplitude: 0.1, mode: 1, phase: 0.0 },
            Shear { target: 1, source: 0, amplitude: 0.07, mode: 2, phase: 0.3 },
        ])
    }

    #[test]
    fn shear_composition_is_volume_preserving_and_invertible() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let d = two_shears();
        assert!(d.det_defect(&g) < 1e-13);
        for i in (0..g.len()).step_by(37) {
            let xi = g.point(i);
            let (x, _) = d.apply(&xi, 1.0, 2);
            let back = d.invert(&x, 1.0);
            assert!((back[0] - xi[0]).abs() < 1e-14 && (back[1] - xi[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = two_shears();
        let xi = [0.4, 1.3, 0.0];
        let (_, j) = d.apply(&xi, 1.0, 2);
        let h = 1e-6;
        for c in 0..2 {
            let mut a = xi;
            let mut b = xi;
            a[c] += h;
            b[c] -= h;
            let (xa, _) = d.apply(&a, 1.0, 2);
            let (xb, _) = d.apply(&b, 1.0, 2);
            for r in 0..2 {
                assert!(((xa[r] - xb[r]) / (2.0 * h) - j[r][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn self_shear_is_not_volume_preserving() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let d = Deformation::new(vec![Shear { target: 0, source: 0, amplitude: 0.1, mode: 1, phase: 0.0 }]);
        assert!(d.det_defect(&g) > 0.05);
    }

    #[test]
    fn inverse_3x3() {
        let m = [[2.0, 1.0, 0.0], [0.5, 3.0, 1.0], [0.0, -1.0, 1.5]];
        let inv = inverse(&m, 3);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
