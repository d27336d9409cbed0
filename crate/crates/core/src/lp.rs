//! Littlewood–Paley blocks and the norms built from them.
//!
//! `ψ0` is 1 on `[0,1]`, 0 on `[2,∞)` and glued smoothly with `exp(−1/t)`.
//! `φ_n(t) = ψ0(2^{−n}t) − ψ0(2^{−n+1}t)` lives on `[2^{n−1}, 2^{n+1}]`.
//! The low index `N` is chosen so that `ψ_N(D)` keeps only the zero mode;
//! blocks then run from `N+1` up to the first `n` with `2^n ≥ max |k|`.
//!
//! Vector-valued arguments use the pointwise Euclidean magnitude inside every
//! `L^p` norm, which for `p = 2` is the ℓ² sum over components.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, SpectralField};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("homogeneous norm requested for a field with nonzero mean ({0:e})")]
    HomogeneousNormOnNonzeroMean(f64),
    #[error("invalid norm parameter: {0}")]
    InvalidParameter(String),
    #[error("grid with {points} points exceeds the double-sum cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },
    #[error("no fields supplied")]
    Empty,
}

/// Default point cap for the `O(N²)` two-point seminorms.
pub const PAIRWISE_POINT_CAP: usize = 4096;

fn glue(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth cutoff: 1 for `s ≤ 1`, 0 for `s ≥ 2`, monotone in between.
pub fn psi0(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let t = s - 1.0;
        let a = glue(1.0 - t);
        a / (a + glue(t))
    }
}

/// `ψ0(s) − ψ0(2s)`, supported in `[1/2, 2]`.
pub fn phi0(s: f64) -> f64 {
    psi0(s) - psi0(2.0 * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPartition {
    low_index: i32,
    max_index: i32,
}

impl DyadicPartition {
    /// `ψ_N(t) = ψ0(2^{−N} t)`.
    pub fn psi(&self, n: i32, t: f64) -> f64 {
        psi0(t * 2f64.powi(-n))
    }

    /// `φ_n(t) = φ0(2^{−n} t)`.
    pub fn phi(&self, n: i32, t: f64) -> f64 {
        phi0(t * 2f64.powi(-n))
    }

    pub fn low_index(&self) -> i32 {
        self.low_index
    }

    pub fn max_index(&self) -> i32 {
        self.max_index
    }

    pub fn blocks(&self) -> std::ops::RangeInclusive<i32> {
        self.low_index + 1..=self.max_index
    }

    /// `ψ_N(t) + Σ_{n>N} φ_n(t)`; equals 1 for every lattice radius.
    pub fn partition_sum(&self, t: f64) -> f64 {
        self.psi(self.low_index, t) + self.blocks().map(|n| self.phi(n, t)).sum::<f64>()
    }
}

pub fn build_partition(grid: &Grid) -> DyadicPartition {
    let k_min = grid.k0();
    let low_index = k_min.log2().floor() as i32 - 1;
    let max_index = grid.max_lattice_k().log2().ceil() as i32;
    DyadicPartition {
        low_index,
        max_index: max_index.max(low_index + 1),
    }
}

#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    pub low_index: i32,
    /// `ψ_N(D) f`, the mean mode.
    pub low: SpectralField,
    pub blocks: Vec<(i32, SpectralField)>,
}

impl DyadicDecomposition {
    pub fn reconstruct(&self) -> SpectralField {
        let mut out = self.low.clone();
        for (_, b) in &self.blocks {
            out.axpy(1.0, b);
        }
        out
    }
}

fn block_of(part: &DyadicPartition, n: i32, f: &SpectralField) -> SpectralField {
    f.map_modes(|m, c| c * part.phi(n, m.norm))
}

pub fn decompose(f: &SpectralField) -> DyadicDecomposition {
    let part = build_partition(f.grid());
    let low = f.map_modes(|m, c| c * part.psi(part.low_index, m.norm));
    let idx: Vec<i32> = part.blocks().collect();
    let blocks = par::map(&idx, |&n| (n, block_of(&part, n, f)));
    DyadicDecomposition {
        low_index: part.low_index,
        low,
        blocks,
    }
}

/// Exponent in `[1, ∞]`.
fn check_exponent(name: &str, p: f64) -> Result<(), NormError> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(NormError::InvalidParameter(format!("{name} = {p} must lie in [1, ∞]")))
    }
}

fn check_real(name: &str, x: f64) -> Result<(), NormError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(NormError::InvalidParameter(format!("{name} = {x} must be finite")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormRequest {
    Lp { p: f64 },
    SobolevH { s: f64 },
    HomSobolev { theta: f64 },
    Besov { r: f64, p: f64, q: f64 },
    HomBesov { r: f64, p: f64, q: f64 },
    HolderDot { r: f64 },
    GagliardoSeminorm { r: f64, p: f64 },
}

impl NormRequest {
    pub fn validate(&self) -> Result<(), NormError> {
        match *self {
            NormRequest::Lp { p } => check_exponent("p", p),
            NormRequest::SobolevH { s } => check_real("s", s),
            NormRequest::HomSobolev { theta } => check_real("theta", theta),
            NormRequest::Besov { r, p, q } | NormRequest::HomBesov { r, p, q } => {
                check_real("r", r)?;
                check_exponent("p", p)?;
                check_exponent("q", q)
            }
            NormRequest::HolderDot { r } => check_real("r", r),
            NormRequest::GagliardoSeminorm { r, p } => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(NormError::InvalidParameter(format!("r = {r} must lie in (0, 1)")));
                }
                if !(p >= 1.0 && p.is_finite()) {
                    return Err(NormError::InvalidParameter(format!("p = {p} must lie in [1, ∞)")));
                }
                Ok(())
            }
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(
            self,
            NormRequest::HomSobolev { .. }
                | NormRequest::HomBesov { .. }
                | NormRequest::HolderDot { .. }
        )
    }
}

/// `L^p` norm of pointwise values by uniform quadrature.
pub fn lp_of_values(magnitudes: &[f64], p: f64, cell_volume: f64) -> f64 {
    if p.is_infinite() {
        magnitudes.iter().fold(0.0, |a, &b| a.max(b))
    } else if p == 2.0 {
        (magnitudes.iter().map(|x| x * x).sum::<f64>() * cell_volume).sqrt()
    } else {
        (magnitudes.iter().map(|x| x.powf(p)).sum::<f64>() * cell_volume).powf(1.0 / p)
    }
}

/// Pointwise Euclidean magnitude of several (possibly complex) fields.
pub fn pointwise_magnitude(fields: &[&SpectralField]) -> Vec<f64> {
    let phys: Vec<Vec<Complex64>> = par::map(fields, |f| f.to_physical_complex());
    let len = phys[0].len();
    (0..len)
        .map(|i| phys.iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

fn lq_sum(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

fn spectral_weighted(fields: &[&SpectralField], weight: impl Fn(f64) -> f64 + Sync) -> f64 {
    let grid = fields[0].grid();
    let modes = grid.modes();
    let total: f64 = fields
        .iter()
        .map(|f| {
            f.coeffs()
                .iter()
                .zip(modes)
                .map(|(c, m)| weight(m.norm) * c.norm_sqr())
                .sum::<f64>()
        })
        .sum();
    (total * grid.volume()).sqrt()
}

/// `‖(φ_n(D) f)‖_p` for every block, the block index first.
pub fn block_lp_norms(fields: &[&SpectralField], p: f64) -> Vec<(i32, f64)> {
    let grid = fields[0].grid();
    let part = build_partition(grid);
    let idx: Vec<i32> = part.blocks().collect();
    let cell = grid.cell_volume();
    idx.iter()
        .map(|&n| {
            let has_content = fields.iter().any(|f| {
                f.coeffs()
                    .iter()
                    .zip(grid.modes())
                    .any(|(c, m)| c.norm_sqr() > 0.0 && part.phi(n, m.norm) > 0.0)
            });
            if !has_content {
                return (n, 0.0);
            }
            let blocks: Vec<SpectralField> = fields.iter().map(|f| block_of(&part, n, f)).collect();
            let refs: Vec<&SpectralField> = blocks.iter().collect();
            (n, lp_of_values(&pointwise_magnitude(&refs), p, cell))
        })
        .collect()
}

fn mean_defect(fields: &[&SpectralField]) -> f64 {
    fields.iter().map(|f| f.mean().norm()).fold(0.0, f64::max)
}

/// Norm of a scalar field.
pub fn norm(f: &SpectralField, req: &NormRequest) -> Result<f64, NormError> {
    norm_of(&[f], req)
}

/// Norm of a vector of fields with the pointwise Euclidean convention.
pub fn norm_of(fields: &[&SpectralField], req: &NormRequest) -> Result<f64, NormError> {
    req.validate()?;
    let first = fields.first().ok_or(NormError::Empty)?;
    let grid = first.grid();
    if req.is_homogeneous() {
        let scale = fields.iter().map(|f| f.max_abs_coeff()).fold(0.0, f64::max);
        let defect = mean_defect(fields);
        if defect > 1e-10 * scale.max(f64::MIN_POSITIVE) && defect > 1e-14 {
            return Err(NormError::HomogeneousNormOnNonzeroMean(defect));
        }
    }
    match *req {
        NormRequest::Lp { p } => Ok(lp_of_values(&pointwise_magnitude(fields), p, grid.cell_volume())),
        NormRequest::SobolevH { s } => Ok(spectral_weighted(fields, |k| (1.0 + k * k).powf(s))),
        NormRequest::HomSobolev { theta } => Ok(spectral_weighted(fields, |k| {
            if k == 0.0 {
                0.0
            } else {
                k.powf(2.0 * theta)
            }
        })),
        NormRequest::HomBesov { r, p, q } => {
            let blocks = block_lp_norms(fields, p);
            Ok(lq_sum(blocks.iter().map(|&(n, b)| 2f64.powf(r * n as f64) * b), q))
        }
        NormRequest::HolderDot { r } => norm_of(
            fields,
            &NormRequest::HomBesov {
                r,
                p: f64::INFINITY,
                q: f64::INFINITY,
            },
        ),
        NormRequest::Besov { r, p, q } => {
            let low: Vec<SpectralField> = fields.iter().map(|f| f.map_modes(|m, c| c * psi0(m.norm))).collect();
            let low_refs: Vec<&SpectralField> = low.iter().collect();
            let low_norm = lp_of_values(&pointwise_magnitude(&low_refs), p, grid.cell_volume());
            let blocks = block_lp_norms(fields, p);
            let high = lq_sum(
                blocks
                    .iter()
                    .filter(|(n, _)| *n >= 1)
                    .map(|&(n, b)| 2f64.powf(r * n as f64) * b),
                q,
            );
            // Blocks with n ≥ 1 are built from the same φ_n; lower ones are
            // folded into ψ0.
            Ok(low_norm + high)
        }
        NormRequest::GagliardoSeminorm { r, p } => gagliardo_seminorm_of(fields, r, p, PAIRWISE_POINT_CAP),
    }
}

fn pairwise_guard(grid: &Grid, cap: usize) -> Result<(), NormError> {
    if grid.len() > cap {
        return Err(NormError::GridTooLarge {
            points: grid.len(),
            cap,
        });
    }
    Ok(())
}

fn torus_distance(grid: &Grid, a: usize, b: usize) -> f64 {
    let pa = grid.point_index(a);
    let pb = grid.point_index(b);
    let n = grid.n() as i64;
    let h = grid.dx();
    let mut s = 0.0;
    for axis in 0..grid.dim() {
        let mut d = (pa[axis] as i64 - pb[axis] as i64).rem_euclid(n);
        if d > n / 2 {
            d = n - d;
        }
        let x = d as f64 * h;
        s += x * x;
    }
    s.sqrt()
}

fn real_values(fields: &[&SpectralField]) -> Vec<Vec<f64>> {
    par::map(fields, |f| f.to_physical())
}

/// Double-sum Gagliardo seminorm
/// `(∫∫ |f(x)−f(y)|^p / |x−y|^{d+rp})^{1/p}` with torus distances.
pub fn gagliardo_seminorm(f: &SpectralField, r: f64, p: f64) -> Result<f64, NormError> {
    gagliardo_seminorm_of(&[f], r, p, PAIRWISE_POINT_CAP)
}

pub fn gagliardo_seminorm_of(fields: &[&SpectralField], r: f64, p: f64, cap: usize) -> Result<f64, NormError> {
    NormRequest::GagliardoSeminorm { r, p }.validate()?;
    let grid = fields.first().ok_or(NormError::Empty)?.grid().clone();
    pairwise_guard(&grid, cap)?;
    let vals = real_values(fields);
    let d = grid.dim() as f64;
    let len = grid.len();
    let rows = par::map_range(len, |i| {
        let mut acc = 0.0;
        for j in 0..len {
            if i == j {
                continue;
            }
            let diff: f64 = vals.iter().map(|v| (v[i] - v[j]).powi(2)).sum::<f64>().sqrt();
            acc += diff.powf(p) / torus_distance(&grid, i, j).powf(d + r * p);
        }
        acc
    });
    let w = grid.cell_volume();
    Ok((rows.iter().sum::<f64>() * w * w).powf(1.0 / p))
}

/// Two-point Hölder quotient `sup |f(x)−f(y)|/|x−y|^r` over grid pairs.
pub fn holder_two_point(f: &SpectralField, r: f64, cap: usize) -> Result<f64, NormError> {
    pairwise_guard(f.grid(), cap)?;
    let grid = f.grid().clone();
    let vals = f.to_physical();
    let len = grid.len();
    let rows = par::map_range(len, |i| {
        let mut best: f64 = 0.0;
        for j in 0..len {
            if i != j {
                best = best.max((vals[i] - vals[j]).abs() / torus_distance(&grid, i, j).powf(r));
            }
        }
        best
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// `(max_i ‖f_i‖_∞, max_{i,j} ‖∂_j f_i‖_∞)`: max over components.
pub fn sup_norms(fields: &[&SpectralField]) -> (f64, f64) {
    if fields.is_empty() {
        return (0.0, 0.0);
    }
    let d = fields[0].grid().dim();
    let mut all: Vec<SpectralField> = Vec::with_capacity(fields.len() * (d + 1));
    for f in fields {
        all.push((*f).clone());
        for j in 0..d {
            all.push(f.derivative(j));
        }
    }
    let maxes = par::map(&all, |f| f.to_physical().iter().fold(0.0, |a: f64, &b| a.max(b.abs())));
    let mut sup: f64 = 0.0;
    let mut grad: f64 = 0.0;
    for (i, m) in maxes.into_iter().enumerate() {
        if i % (d + 1) == 0 {
            sup = sup.max(m);
        } else {
            grad = grad.max(m);
        }
    }
    (sup, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{random_scalar, white_noise, SpectrumSpec};
    use crate::grid::{make_grid, SpaceTag};
    use std::f64::consts::PI;

    #[test]
    fn cutoff_shape() {
        assert_eq!(psi0(0.3), 1.0);
        assert_eq!(psi0(1.0), 1.0);
        assert_eq!(psi0(2.0), 0.0);
        let mut prev = 1.0;
        for i in 1..100 {
            let v = psi0(1.0 + i as f64 / 100.0);
            assert!(v <= prev && v > 0.0);
            prev = v;
        }
        assert!((psi0(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_on_lattice() {
        for (d, n, l) in [(2, 64, 2.0 * PI), (3, 16, 2.0 * PI), (2, 128, 32.0)] {
            let g = make_grid(d, n, l).unwrap();
            let part = build_partition(&g);
            for m in g.modes() {
                assert!((part.partition_sum(m.norm) - 1.0).abs() < 1e-12);
            }
        }
        let g = make_grid(2, 64, 2.0 * PI).unwrap();
        assert!((build_partition(&g).partition_sum(5.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_support_and_overlap() {
        let g = make_grid(2, 64, 2.0 * PI).unwrap();
        let part = build_partition(&g);
        for i in 0..2000 {
            let t = i as f64 * 0.02;
            let v = part.phi(3, t);
            if !(4.0..=16.0).contains(&t) {
                assert_eq!(v, 0.0);
            }
            if v > 0.0 {
                let s = part.phi(2, t) + v + part.phi(4, t);
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_mode_lands_in_expected_blocks() {
        let g = make_grid(2, 64, 2.0 * PI).unwrap();
        let mut f = SpectralField::zeros(&g, SpaceTag::Euler);
        f.set_coeff(&[8, 0], Complex64::new(0.5, 0.0));
        f.set_coeff(&[-8, 0], Complex64::new(0.5, 0.0));
        let dec = decompose(&f);
        for (n, b) in &dec.blocks {
            if b.max_abs_coeff() > 0.0 {
                assert!((2..=4).contains(n));
            }
        }
        assert!(dec.reconstruct().sub(&f).max_abs_coeff() < 1e-14);
    }

    #[test]
    fn decomposition_reconstructs_and_is_almost_orthogonal() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let mut f = SpectralField::from_physical(&g, &white_noise(&g, 1), SpaceTag::Euler).unwrap();
        f.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        let dec = decompose(&f);
        assert!(dec.reconstruct().sub(&f).max_abs_coeff() < 1e-13);
        let total: f64 = dec.blocks.iter().map(|(_, b)| b.l2_norm_sq()).sum();
        let ratio = total / f.l2_norm_sq();
        assert!(ratio > 0.3 && ratio <= 1.0 + 1e-12, "ratio {ratio}");
    }

    #[test]
    fn zero_field_has_zero_blocks() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let dec = decompose(&SpectralField::zeros(&g, SpaceTag::Euler));
        assert!(dec.blocks.iter().all(|(_, b)| b.max_abs_coeff() == 0.0));
    }

    #[test]
    fn hom_sobolev_of_single_mode() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let mut f = SpectralField::zeros(&g, SpaceTag::Euler);
        f.set_coeff(&[3, 4], Complex64::new(1.0, 0.0));
        let l2 = f.l2_norm();
        let th = norm(&f, &NormRequest::HomSobolev { theta: 0.7 }).unwrap();
        assert!((th - 5f64.powf(0.7) * l2).abs() < 1e-12 * th);
    }

    #[test]
    fn hom_sobolev_of_gaussian_matches_radial_integral() {
        // f = exp(−|x|²/2) on a large box; f̂(ξ) = 2π exp(−|ξ|²/2) in 2D.
        // [f]_θ² = (2π)^{-2} ∫ |ξ|^{2θ} (2π)² e^{−|ξ|²} dξ = 2π ∫ ρ^{2θ+1} e^{−ρ²} dρ.
        let l = 40.0;
        let g = make_grid(2, 256, l).unwrap();
        let vals = crate::corpus::gaussian(&g, [l / 2.0, l / 2.0, 0.0], 1.0);
        let mut f = SpectralField::from_physical(&g, &vals, SpaceTag::Euler).unwrap();
        f.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        let theta = 0.75;
        let got = norm(&f, &NormRequest::HomSobolev { theta }).unwrap();
        let steps = 200_000;
        let h = 12.0 / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let r = (i as f64 + 0.5) * h;
                r.powf(2.0 * theta + 1.0) * (-r * r).exp()
            })
            .sum::<f64>()
            * h;
        let want = (2.0 * PI * integral).sqrt();
        assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn single_block_besov_bracket() {
        let g = make_grid(2, 64, 2.0 * PI).unwrap();
        let f = random_scalar(&g, &SpectrumSpec::new(0.0, 1.0, 30.0), 2);
        let dec = decompose(&f);
        let (n, fb) = dec.blocks.iter().find(|(n, _)| *n == 3).unwrap().clone();
        let r = 0.6;
        let p = 3.0;
        let b = norm(&fb, &NormRequest::HomBesov { r, p, q: 2.0 }).unwrap();
        let fp = norm(&fb, &NormRequest::Lp { p }).unwrap();
        let lo = 2f64.powf(r * (n - 1) as f64) * fp;
        let hi = 3f64.sqrt() * 2f64.powf(r * (n + 1) as f64) * fp;
        assert!(b >= lo * 0.5 && b <= hi, "{lo} {b} {hi}");
    }

    #[test]
    fn homogeneous_norm_rejects_mean() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_physical(&g, &vec![1.0; g.len()], SpaceTag::Euler).unwrap();
        assert!(matches!(
            norm(&f, &NormRequest::HomSobolev { theta: 1.0 }),
            Err(NormError::HomogeneousNormOnNonzeroMean(_))
        ));
        assert!(norm(&f, &NormRequest::Lp { p: 0.5 }).is_err());
    }

    #[test]
    fn gagliardo_basics() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let c = SpectralField::from_physical(&g, &vec![3.0; g.len()], SpaceTag::Euler).unwrap();
        assert_eq!(gagliardo_seminorm(&c, 0.5, 2.0).unwrap(), 0.0);
        let big = make_grid(2, 128, 2.0 * PI).unwrap();
        let z = SpectralField::zeros(&big, SpaceTag::Euler);
        assert!(matches!(
            gagliardo_seminorm(&z, 0.5, 2.0),
            Err(NormError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn sup_norms_of_sine() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = SpectralField::from_physical(&g, &g.sample(|x| x[0].sin()), SpaceTag::Euler).unwrap();
        let z = SpectralField::zeros(&g, SpaceTag::Euler);
        let (a, b) = sup_norms(&[&s, &z]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert_eq!(sup_norms(&[&z, &z]), (0.0, 0.0));
    }
}
