//! Seeded random and structured test fields.
//!
//! Random spectra are drawn mode by mode over the integer cube
//! `[-M, M]^d`, `M = ⌊k_max/k0⌋`, in a fixed order that does not depend on
//! the grid resolution, so the same seed yields the same band-limited
//! function on every grid that resolves it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, SpaceTag, SpectralField, VectorField};
use crate::lp::phi0;
use crate::ops;

/// Power-law spectrum `|f̂(k)| ∝ |k|^{-slope}` on `k_min ≤ |k| ≤ k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub slope: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl SpectrumSpec {
    pub fn new(slope: f64, k_min: f64, k_max: f64) -> Self {
        SpectrumSpec { slope, k_min, k_max }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform noise in `[-1, 1]` at every grid point.
pub fn white_noise(grid: &Grid, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..grid.len()).map(|_| r.random_range(-1.0..=1.0)).collect()
}

fn draw_spectrum(grid: &Grid, spec: &SpectrumSpec, r: &mut ChaCha8Rng) -> SpectralField {
    let d = grid.dim();
    let k0 = grid.k0();
    let cap = (grid.n() / 2 - 1) as i64;
    let m_max = (spec.k_max / k0).floor().max(0.0) as i64;
    let side = (2 * m_max + 1) as usize;
    let count = side.pow(d as u32);
    let mut f = SpectralField::zeros(grid, SpaceTag::Euler);
    for flat in 0..count {
        let mut m = [0i64; 3];
        let mut rem = flat;
        for axis in (0..d).rev() {
            m[axis] = (rem % side) as i64 - m_max;
            rem /= side;
        }
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        if m.iter().any(|x| x.abs() > cap) {
            continue;
        }
        let k = k0 * ((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).sqrt();
        if k == 0.0 || k < spec.k_min || k > spec.k_max {
            continue;
        }
        f.set_coeff(&m, Complex64::new(re, im) * k.powf(-spec.slope));
    }
    f.symmetrize();
    f
}

/// Real, mean-zero random scalar field with the given spectrum.
pub fn random_scalar(grid: &Grid, spec: &SpectrumSpec, seed: u64) -> SpectralField {
    draw_spectrum(grid, spec, &mut rng(seed))
}

/// Real, mean-zero, divergence-free random vector field.
pub fn random_divfree(grid: &Grid, spec: &SpectrumSpec, seed: u64) -> VectorField {
    let mut r = rng(seed);
    let comps: Vec<SpectralField> = (0..grid.dim()).map(|_| draw_spectrum(grid, spec, &mut r)).collect();
    ops::leray_project(&VectorField::new(comps).expect("components share a grid"))
}

/// Root-mean-square of the pointwise Euclidean magnitude.
pub fn rms(fields: &[SpectralField]) -> f64 {
    let grid = fields[0].grid();
    (fields.iter().map(|f| f.l2_norm_sq()).sum::<f64>() / grid.volume()).sqrt()
}

/// Rescales the vector field to the given root-mean-square magnitude.
pub fn normalize_rms(v: &mut VectorField, target: f64) {
    let r = rms(v.components());
    if r > 0.0 {
        v.scale(target / r);
    }
}

/// Minimal-image displacement `x − c` on the torus.
pub fn torus_delta(grid: &Grid, x: &[f64; 3], c: &[f64; 3]) -> [f64; 3] {
    let l = grid.period();
    let mut out = [0.0; 3];
    for axis in 0..grid.dim() {
        let mut dlt = x[axis] - c[axis];
        dlt -= l * (dlt / l).round();
        out[axis] = dlt;
    }
    out
}

/// Physical values of the periodized Gaussian `exp(−|x−c|²/(2σ²))`.
pub fn gaussian(grid: &Grid, center: [f64; 3], width: f64) -> Vec<f64> {
    grid.sample(|x| {
        let dl = torus_delta(grid, &x, &center);
        let r2 = dl[0] * dl[0] + dl[1] * dl[1] + dl[2] * dl[2];
        (-r2 / (2.0 * width * width)).exp()
    })
}

/// Real radial wave packet centered at `c` whose spectrum is the smooth
/// dyadic shell `φ_0(|k|/k_c)`, supported in `k_c/2 ≤ |k| ≤ 2k_c`.
/// Normalized to unit L² norm.
pub fn shell_packet(grid: &Grid, center: [f64; 3], k_c: f64) -> SpectralField {
    let mut f = SpectralField::from_symbol(grid, SpaceTag::Euler, |m| {
        let w = phi0(m.norm / k_c);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let phase = m.k[0] * center[0] + m.k[1] * center[1] + m.k[2] * center[2];
        Complex64::from_polar(w, -phase)
    });
    let nrm = f.l2_norm();
    if nrm > 0.0 {
        f.scale(1.0 / nrm);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn random_fields_are_real_mean_zero_and_band_limited() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let spec = SpectrumSpec::new(2.5, 1.0, 6.0);
        let f = random_scalar(&g, &spec, 4);
        assert!(f.is_conjugate_symmetric(1e-14));
        assert_eq!(f.mean(), Complex64::new(0.0, 0.0));
        for (m, c) in g.modes().iter().zip(f.coeffs()) {
            if m.norm > 6.0 {
                assert_eq!(c.norm(), 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_function_on_finer_grid() {
        let spec = SpectrumSpec::new(2.0, 1.0, 5.0);
        let g1 = make_grid(2, 16, 2.0 * PI).unwrap();
        let g2 = make_grid(2, 32, 2.0 * PI).unwrap();
        let a = random_scalar(&g1, &spec, 9);
        let b = random_scalar(&g2, &spec, 9);
        for m in g1.modes() {
            let m2 = [m.m[0], m.m[1]];
            assert!((a.coeff_at(&m2) - b.coeff_at(&m2)).norm() < 1e-15);
        }
        assert!((a.l2_norm() - b.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn divfree_fields_have_zero_divergence() {
        let g = make_grid(3, 16, 2.0 * PI).unwrap();
        let v = random_divfree(&g, &SpectrumSpec::new(2.5, 1.0, 5.0), 1);
        assert!(ops::div_residual(&v) < 1e-13);
    }

    #[test]
    fn packet_is_real_and_localized() {
        let g = make_grid(2, 64, 16.0).unwrap();
        let f = shell_packet(&g, [8.0, 8.0, 0.0], 3.0);
        assert!(f.is_conjugate_symmetric(1e-13));
        let vals = f.to_physical();
        let center = vals[g.index_of_mode(&[32, 32])].abs();
        let corner = vals[0].abs();
        assert!(corner < 1e-3 * center);
    }
}
