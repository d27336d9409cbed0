//! Vorticities `ω^{mn} = ∂_m v^n − ∂_n v^m`, `ω_a^{mn}` of the deformation
//! columns, their quadratic sources, the π-splitting and half-wave solution
//! formulas.
//!
//! Only pairs `m < n` are stored: `(0,1)` in 2D and `(0,1), (0,2), (1,2)` in
//! 3D. The π quantities use the same pair list for `ab`.

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{truncate, StateBundle};
use crate::grid::{from_physical_batch, Grid, SpaceTag, SpectralField, VectorField};
use crate::lp::{self, NormRequest};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VorticityError {
    #[error("vorticity is not the curl of a mean-zero divergence-free field (mismatch {0:e})")]
    InconsistentVorticity(f64),
    #[error("π-splitting needs Lagrangian fields")]
    WrongSpace,
    #[error("forcing has {got} samples, need {need}")]
    SampleCount { got: usize, need: usize },
}

/// Index pairs `m < n`.
pub fn pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|m| (m + 1..dim).map(move |n| (m, n))).collect()
}

fn pair_index(dim: usize, m: usize, n: usize) -> Option<(usize, f64)> {
    if m == n {
        return None;
    }
    let (lo, hi, sign) = if m < n { (m, n, 1.0) } else { (n, m, -1.0) };
    pairs(dim).iter().position(|&p| p == (lo, hi)).map(|i| (i, sign))
}

/// `Ω = (ω^{mn}, ω_a^{mn})`.
#[derive(Debug, Clone)]
pub struct VorticityBundle {
    pub dim: usize,
    pub omega: Vec<SpectralField>,
    /// `omega_a[a][pair]`.
    pub omega_a: Vec<Vec<SpectralField>>,
}

impl VorticityBundle {
    pub fn zeros(grid: &Grid, tag: SpaceTag) -> Self {
        let d = grid.dim();
        let np = pairs(d).len();
        VorticityBundle {
            dim: d,
            omega: (0..np).map(|_| SpectralField::zeros(grid, tag)).collect(),
            omega_a: (0..d)
                .map(|_| (0..np).map(|_| SpectralField::zeros(grid, tag)).collect())
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.omega[0].grid()
    }

    pub fn tag(&self) -> SpaceTag {
        self.omega[0].tag()
    }

    /// `ω` components then `ω_1`, …, `ω_d` components.
    pub fn fields(&self) -> Vec<&SpectralField> {
        let mut out: Vec<&SpectralField> = self.omega.iter().collect();
        for w in &self.omega_a {
            out.extend(w.iter());
        }
        out
    }

    pub fn fields_mut(&mut self) -> Vec<&mut SpectralField> {
        let mut out: Vec<&mut SpectralField> = self.omega.iter_mut().collect();
        for w in self.omega_a.iter_mut() {
            out.extend(w.iter_mut());
        }
        out
    }

    fn map_fields(&self, f: impl Fn(&SpectralField) -> SpectralField) -> VorticityBundle {
        VorticityBundle {
            dim: self.dim,
            omega: self.omega.iter().map(&f).collect(),
            omega_a: self.omega_a.iter().map(|w| w.iter().map(&f).collect()).collect(),
        }
    }

    fn zip_fields(&self, other: &VorticityBundle, f: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> Self {
        VorticityBundle {
            dim: self.dim,
            omega: self.omega.iter().zip(&other.omega).map(|(a, b)| f(a, b)).collect(),
            omega_a: self
                .omega_a
                .iter()
                .zip(&other.omega_a)
                .map(|(wa, wb)| wa.iter().zip(wb).map(|(a, b)| f(a, b)).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &VorticityBundle) -> VorticityBundle {
        self.zip_fields(other, |a, b| a.sub(b))
    }

    pub fn add(&self, other: &VorticityBundle) -> VorticityBundle {
        self.zip_fields(other, |a, b| a.add(b))
    }

    pub fn scaled(&self, s: f64) -> VorticityBundle {
        self.map_fields(|a| a.scaled(s))
    }

    pub fn with_tag(&self, tag: SpaceTag) -> VorticityBundle {
        self.map_fields(|a| a.clone().with_tag(tag))
    }

    pub fn l2_norm(&self) -> f64 {
        self.fields().iter().map(|f| f.l2_norm_sq()).sum::<f64>().sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.fields().iter().map(|f| f.max_abs_coeff()).fold(0.0, f64::max)
    }

    /// `{Ω}_{r,p} = ‖Ω‖_{Ḃ^r_{p,p}}`, Euclidean over components.
    pub fn besov_norm(&self, r: f64, p: f64) -> f64 {
        lp::norm_of(&self.fields(), &NormRequest::HomBesov { r, p, q: p }).unwrap_or(f64::NAN)
    }

    /// `{Ω}_r = ‖Ω‖_{Ḃ^r_{∞,∞}}`.
    pub fn holder_norm(&self, r: f64) -> f64 {
        self.besov_norm(r, f64::INFINITY)
    }

    /// `[Ω]_θ`, ℓ² over components.
    pub fn hom_sobolev(&self, theta: f64) -> f64 {
        lp::norm_of(&self.fields(), &NormRequest::HomSobolev { theta }).unwrap_or(f64::NAN)
    }

    /// `‖Ω‖_∞`, max over components.
    pub fn sup_norm(&self) -> f64 {
        lp::sup_norms(&self.fields()).0
    }
}

/// `ω^{mn}` for `m < n`.
pub fn curl_vector(w: &VectorField) -> Vec<SpectralField> {
    let d = w.dim();
    pairs(d)
        .into_iter()
        .map(|(m, n)| w.component(n).derivative(m).sub(&w.component(m).derivative(n)))
        .collect()
}

pub fn curl(state: &StateBundle) -> VorticityBundle {
    VorticityBundle {
        dim: state.dim(),
        omega: curl_vector(&state.v),
        omega_a: state.u.iter().map(curl_vector).collect(),
    }
}

/// `v̂^n = −i Σ_m k_m ω̂^{mn} / |k|²`.
fn invert_curl(omega: &[SpectralField], dim: usize) -> VectorField {
    let grid = omega[0].grid().clone();
    let tag = omega[0].tag();
    let comps = (0..dim)
        .map(|n| {
            let coeffs = par::map_range(grid.len(), |idx| {
                let m = grid.mode(idx);
                let k2: f64 = m.k_odd.iter().map(|x| x * x).sum();
                if k2 == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for mm in 0..dim {
                    if let Some((p, sign)) = pair_index(dim, mm, n) {
                        acc += sign * m.k_odd[mm] * omega[p].coeffs()[idx];
                    }
                }
                Complex64::new(0.0, -1.0) * acc / k2
            });
            SpectralField::from_coeffs(&grid, coeffs, tag).expect("length matches")
        })
        .collect();
    VectorField::new(comps).expect("components share a grid")
}

/// Recovers `(v, u_1..u_d)` from `Ω`; fails if `Ω` is not a curl.
pub fn biot_savart(omega: &VorticityBundle) -> Result<(VectorField, Vec<VectorField>), VorticityError> {
    let d = omega.dim;
    let v = invert_curl(&omega.omega, d);
    let u: Vec<VectorField> = omega.omega_a.iter().map(|w| invert_curl(w, d)).collect();
    let scale = omega.max_abs_coeff().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (src, field) in std::iter::once((&omega.omega, &v)).chain(omega.omega_a.iter().zip(u.iter())) {
        for (a, b) in curl_vector(field).iter().zip(src.iter()) {
            worst = worst.max(a.sub(b).max_abs_coeff());
        }
    }
    if worst > 1e-10 * scale {
        return Err(VorticityError::InconsistentVorticity(worst / scale));
    }
    Ok((v, u))
}

/// Physical-space gradients `∂_k v^i` and `∂_k u_a^i`, `[field][i*d+k]`.
/// Field 0 is `v`, field `1+a` is `u_a`.
fn physical_gradients(state: &StateBundle) -> Vec<Vec<Vec<f64>>> {
    let d = state.dim();
    let mut derivs: Vec<SpectralField> = Vec::with_capacity((d + 1) * d * d);
    for w in std::iter::once(&state.v).chain(state.u.iter()) {
        for ik in 0..d * d {
            derivs.push(w.component(ik / d).derivative(ik % d));
        }
    }
    let phys = par::map(&derivs, |f| f.to_physical());
    phys.chunks(d * d).map(|c| c.to_vec()).collect()
}

/// Quadratic sources `f^{mn}` and `f_b^{mn}` of the vorticity equations,
/// truncated like the solver's products (`|k| ≤ 1/ε`, optional 2/3 rule).
pub fn vorticity_sources(state: &StateBundle, eps: f64, dealias: bool) -> VorticityBundle {
    let grid = state.grid().clone();
    let d = grid.dim();
    let g = physical_gradients(state);
    let np = grid.len();
    let prs = pairs(d);
    // ω^{mj} pointwise from gradients; field 0 is v, 1+a is u_a.
    let omega_at = |field: usize, m: usize, j: usize, p: usize| g[field][m * d + j][p] - g[field][j * d + m][p];
    let grad = |field: usize, i: usize, k: usize, p: usize| g[field][i * d + k][p];
    // Output slot s: pair index for f, then (b, pair) for f_b.
    let slots = prs.len() * (1 + d);
    let values = par::map_range(slots, |s| {
        let (m, n) = prs[s % prs.len()];
        let b = s / prs.len();
        (0..np)
            .map(|p| {
                let mut acc = 0.0;
                if b == 0 {
                    for j in 0..d {
                        acc += -omega_at(0, m, j, p) * grad(0, n, j, p) + omega_at(0, n, j, p) * grad(0, m, j, p);
                        for a in 0..d {
                            acc += omega_at(1 + a, m, j, p) * grad(1 + a, n, j, p)
                                - omega_at(1 + a, n, j, p) * grad(1 + a, m, j, p);
                        }
                    }
                } else {
                    let fb = b; // field index of u_{b-1}
                    for j in 0..d {
                        acc -= grad(0, j, m, p) * grad(fb, n, j, p) - grad(0, j, n, p) * grad(fb, m, j, p);
                        acc += grad(fb, j, m, p) * grad(0, n, j, p) - grad(fb, j, n, p) * grad(0, m, j, p);
                    }
                }
                acc
            })
            .collect::<Vec<f64>>()
    });
    let mut fields = from_physical_batch(&grid, &values, SpaceTag::Euler);
    for f in fields.iter_mut() {
        truncate(f, eps, dealias);
    }
    let mut it = fields.into_iter();
    let omega: Vec<SpectralField> = it.by_ref().take(prs.len()).collect();
    let omega_a = (0..d).map(|_| it.by_ref().take(prs.len()).collect()).collect();
    VorticityBundle { dim: d, omega, omega_a }
}

/// Transport and stretching terms `v^j ∂_j ω − v_a^j ∂_j ω_a` and
/// `v^j ∂_j ω_b − v_b^j ∂_j ω`, truncated like the solver.
pub fn vorticity_transport(state: &StateBundle, omega: &VorticityBundle, eps: f64, dealias: bool) -> VorticityBundle {
    let grid = state.grid().clone();
    let d = grid.dim();
    let np = grid.len();
    let am = state.a.raw();
    let v = state.v.to_physical();
    let u: Vec<Vec<Vec<f64>>> = state.u.iter().map(|x| x.to_physical()).collect();
    let w_fields = omega.fields();
    let mut derivs: Vec<SpectralField> = Vec::with_capacity(w_fields.len() * d);
    for w in &w_fields {
        for j in 0..d {
            derivs.push(w.derivative(j));
        }
    }
    let dw = par::map(&derivs, |f| f.to_physical());
    let npairs = pairs(d).len();
    // dw[(field * d) + j]; field = pair for ω, (1+a)*npairs + pair for ω_a.
    let dfield = |group: usize, pair: usize, j: usize| &dw[(group * npairs + pair) * d + j];
    let slots = npairs * (1 + d);
    let values = par::map_range(slots, |s| {
        let pair = s % npairs;
        let group = s / npairs;
        (0..np)
            .map(|p| {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += v[j][p] * dfield(group, pair, j)[p];
                }
                if group == 0 {
                    for a in 0..d {
                        for j in 0..d {
                            let va = am[j][a] + u[a][j][p];
                            acc -= va * dfield(1 + a, pair, j)[p];
                        }
                    }
                } else {
                    let b = group - 1;
                    for j in 0..d {
                        let vb = am[j][b] + u[b][j][p];
                        acc -= vb * dfield(0, pair, j)[p];
                    }
                }
                acc
            })
            .collect::<Vec<f64>>()
    });
    let mut fields = from_physical_batch(&grid, &values, SpaceTag::Euler);
    for f in fields.iter_mut() {
        truncate(f, eps, dealias);
    }
    let mut it = fields.into_iter();
    let om: Vec<SpectralField> = it.by_ref().take(npairs).collect();
    let om_a = (0..d).map(|_| it.by_ref().take(npairs).collect()).collect();
    VorticityBundle { dim: d, omega: om, omega_a: om_a }
}

/// L² norm of the centered-in-time residual of the vorticity equations at
/// the middle state, `(Ω(t+h) − Ω(t−h))/2h + transport − F`.
pub fn vorticity_residual(
    prev: &StateBundle,
    mid: &StateBundle,
    next: &StateBundle,
    h: f64,
    eps: f64,
    dealias: bool,
) -> f64 {
    let dt_omega = curl(next).sub(&curl(prev)).scaled(0.5 / h);
    let omega = curl(mid);
    let transport = vorticity_transport(mid, &omega, eps, dealias);
    let src = vorticity_sources(mid, eps, dealias);
    dt_omega.add(&transport).sub(&src).l2_norm()
}

/// `(π_+, π_−, π_ab)` for every stored pair `mn`.
#[derive(Debug, Clone)]
pub struct PiBundle {
    pub dim: usize,
    pub pi_plus: Vec<SpectralField>,
    pub pi_minus: Vec<SpectralField>,
    /// `pi_ab[ab][pair]` with `ab` running over `pairs(dim)`.
    pub pi_ab: Vec<Vec<SpectralField>>,
}

fn unit_k(m: &crate::grid::Mode) -> [f64; 3] {
    if m.norm == 0.0 {
        [0.0; 3]
    } else {
        [m.k[0] / m.norm, m.k[1] / m.norm, m.k[2] / m.norm]
    }
}

/// `π̂± = ω̂ ± k̂^a ω̂_a`, `π̂_ab = k̂^a ω̂_b − k̂^b ω̂_a`.
pub fn pi_split(omega: &VorticityBundle) -> Result<PiBundle, VorticityError> {
    if omega.tag() != SpaceTag::Lagrange {
        return Err(VorticityError::WrongSpace);
    }
    Ok(pi_split_any(omega))
}

/// Same as `pi_split` without the space check; used for Eulerian spot tests.
pub fn pi_split_any(omega: &VorticityBundle) -> PiBundle {
    let d = omega.dim;
    let grid = omega.grid().clone();
    let tag = omega.tag();
    let np = pairs(d).len();
    let ab = pairs(d);
    let mut pi_plus = Vec::with_capacity(np);
    let mut pi_minus = Vec::with_capacity(np);
    let mut pi_ab: Vec<Vec<SpectralField>> = (0..ab.len()).map(|_| Vec::with_capacity(np)).collect();
    for p in 0..np {
        let w = omega.omega[p].coeffs();
        let wa: Vec<&[Complex64]> = (0..d).map(|a| omega.omega_a[a][p].coeffs()).collect();
        let kdot = |idx: usize| -> Complex64 {
            let kh = unit_k(grid.mode(idx));
            (0..d).map(|a| kh[a] * wa[a][idx]).sum()
        };
        let plus: Vec<Complex64> = (0..grid.len()).map(|i| w[i] + kdot(i)).collect();
        let minus: Vec<Complex64> = (0..grid.len()).map(|i| w[i] - kdot(i)).collect();
        pi_plus.push(SpectralField::from_coeffs(&grid, plus, tag).expect("length"));
        pi_minus.push(SpectralField::from_coeffs(&grid, minus, tag).expect("length"));
        for (q, &(a, b)) in ab.iter().enumerate() {
            let c: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let kh = unit_k(grid.mode(i));
                    kh[a] * wa[b][i] - kh[b] * wa[a][i]
                })
                .collect();
            pi_ab[q].push(SpectralField::from_coeffs(&grid, c, tag).expect("length"));
        }
    }
    PiBundle {
        dim: d,
        pi_plus,
        pi_minus,
        pi_ab,
    }
}

/// Inverse of the splitting:
/// `ω̂ = (π̂+ + π̂−)/2`, `ω̂_a = (π̂+ − π̂−) k̂^a / 2 − k̂^b π̂_ab`.
pub fn pi_merge(pi: &PiBundle) -> VorticityBundle {
    let d = pi.dim;
    let grid = pi.pi_plus[0].grid().clone();
    let tag = pi.pi_plus[0].tag();
    let np = pairs(d).len();
    let ab = pairs(d);
    let mut omega = Vec::with_capacity(np);
    let mut omega_a: Vec<Vec<SpectralField>> = (0..d).map(|_| Vec::with_capacity(np)).collect();
    for p in 0..np {
        let pp = pi.pi_plus[p].coeffs();
        let pm = pi.pi_minus[p].coeffs();
        let w: Vec<Complex64> = (0..grid.len()).map(|i| 0.5 * (pp[i] + pm[i])).collect();
        omega.push(SpectralField::from_coeffs(&grid, w, tag).expect("length"));
        for (a, slot) in omega_a.iter_mut().enumerate() {
            let c: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let kh = unit_k(grid.mode(i));
                    let mut acc = 0.5 * (pp[i] - pm[i]) * kh[a];
                    for b in 0..d {
                        // π_ab with antisymmetry for b < a.
                        if let Some((q, sign)) = pair_index(d, a, b) {
                            let _ = &ab;
                            acc -= kh[b] * sign * pi.pi_ab[q][p].coeffs()[i];
                        }
                    }
                    acc
                })
                .collect();
            slot.push(SpectralField::from_coeffs(&grid, c, tag).expect("length"));
        }
    }
    VorticityBundle { dim: d, omega, omega_a }
}

impl PiBundle {
    pub fn sub_norm(&self, other: &PiBundle) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.pi_plus.iter().zip(&other.pi_plus) {
            s += a.sub(b).l2_norm_sq();
        }
        for (a, b) in self.pi_minus.iter().zip(&other.pi_minus) {
            s += a.sub(b).l2_norm_sq();
        }
        for (wa, wb) in self.pi_ab.iter().zip(&other.pi_ab) {
            for (a, b) in wa.iter().zip(wb) {
                s += a.sub(b).l2_norm_sq();
            }
        }
        s.sqrt()
    }
}

/// The `(d+1)×(d+1)` symbol matrix of the Lagrangian vorticity system: first
/// row `[0, k^1, …, k^d]`, first column its transpose, zeros elsewhere.
pub fn symbol_matrix(k: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; dim + 1]; dim + 1];
    for a in 0..dim {
        m[0][a + 1] = k[a];
        m[a + 1][0] = k[a];
    }
    m
}

/// Which linear propagator a Duhamel formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    /// `∂t w = +i|D| w + F`
    Plus,
    /// `∂t w = −i|D| w + F`, equivalently `w_t + i√(−Δ) w = F`
    Minus,
    /// `∂t w = F`
    Transport,
}

impl Propagator {
    fn sign(self) -> f64 {
        match self {
            Propagator::Plus => 1.0,
            Propagator::Minus => -1.0,
            Propagator::Transport => 0.0,
        }
    }
}

/// Composite Newton–Cotes weights for `n` intervals of width `h`: Simpson,
/// closing with a 3/8 panel when `n` is odd; trapezoid for `n = 1`.
pub fn quadrature_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if n.is_multiple_of(2) { n } else { n - 3 };
            let mut i = 0;
            while i < simpson_end {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
                i += 2;
            }
            if n % 2 == 1 {
                let s = n - 3;
                let c = 3.0 * h / 8.0;
                w[s] += c;
                w[s + 1] += 3.0 * c;
                w[s + 2] += 3.0 * c;
                w[s + 3] += c;
            }
        }
    }
    w
}

/// `ŵ(t) = e^{σit|k|} ŵ0 + ∫_0^t e^{σi(t−τ)|k|} F̂(τ) dτ` with `F` sampled at
/// `τ_j = j t/(N)`, `j = 0..=N`. An empty forcing slice means `F = 0`.
pub fn half_wave_evolve(
    w0: &SpectralField,
    forcing: &[SpectralField],
    prop: Propagator,
    t: f64,
) -> SpectralField {
    let sigma = prop.sign();
    let mut out = w0.map_modes(|m, c| c * Complex64::from_polar(1.0, sigma * t * m.norm));
    if forcing.len() >= 2 {
        let n = forcing.len() - 1;
        let h = t / n as f64;
        let w = quadrature_weights(n, h);
        for (j, f) in forcing.iter().enumerate() {
            let lag = t - j as f64 * h;
            let wj = w[j];
            let term = f.map_modes(|m, c| c * Complex64::from_polar(wj, sigma * lag * m.norm));
            out.axpy(1.0, &term);
        }
    }
    out
}

/// `w` at the even sample times `τ_{2j}` by repeated Simpson panels. The
/// forcing is produced on demand (`None` for zero forcing) so that long
/// trajectories never hold every sample.
pub fn half_wave_trajectory<F>(
    w0: &SpectralField,
    forcing: Option<F>,
    samples: usize,
    h: f64,
    prop: Propagator,
) -> Vec<SpectralField>
where
    F: Fn(usize) -> SpectralField,
{
    let sigma = prop.sign();
    let steps = samples / 2;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(w0.clone());
    let phase = |f: &SpectralField, lag: f64, wgt: f64| {
        f.map_modes(|m, c| c * Complex64::from_polar(wgt, sigma * lag * m.norm))
    };
    let mut prev_force = forcing.as_ref().map(|f| f(0));
    for j in 0..steps {
        let cur = out.last().expect("non-empty");
        let mut next = phase(cur, 2.0 * h, 1.0);
        if let Some(fgen) = forcing.as_ref() {
            let f0 = prev_force.take().expect("forcing sample");
            let f1 = fgen(2 * j + 1);
            let f2 = fgen(2 * j + 2);
            next.axpy(1.0, &phase(&f0, 2.0 * h, h / 3.0));
            next.axpy(1.0, &phase(&f1, h, 4.0 * h / 3.0));
            next.axpy(1.0, &phase(&f2, 0.0, h / 3.0));
            prev_force = Some(f2);
        }
        out.push(next);
    }
    out
}

/// Per-sample quantities for the `[Ω]_θ` growth check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSample {
    pub t: f64,
    pub omega_theta: f64,
    /// `‖∇V‖_∞ + ‖Ω‖_∞`.
    pub sup_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// `log [Ω(T)]_θ − log [Ω(0)]_θ`.
    pub log_growth: f64,
    /// `∫_0^T ‖∇V‖_∞ + ‖Ω‖_∞`.
    pub integral: f64,
    /// Smallest `C` with `log growth(t) ≤ C ∫_0^t` at every sample.
    pub empirical_c: f64,
}

/// Checks `log [Ω(t)]_θ − log [Ω(0)]_θ ≤ C ∫_0^t (‖∇V‖_∞ + ‖Ω‖_∞)` along a
/// history, reporting the smallest admissible `C`.
pub fn vorticity_hs_monitor(history: &[GrowthSample]) -> GrowthReport {
    let mut integral = 0.0;
    let mut c: f64 = 0.0;
    let mut log_growth = 0.0;
    if let Some(first) = history.first() {
        for w in history.windows(2) {
            integral += 0.5 * (w[0].sup_sum + w[1].sup_sum) * (w[1].t - w[0].t);
            if first.omega_theta > 0.0 && w[1].omega_theta > 0.0 {
                log_growth = (w[1].omega_theta / first.omega_theta).ln();
                if integral > 0.0 {
                    c = c.max(log_growth / integral);
                }
            }
        }
    }
    GrowthReport {
        log_growth,
        integral,
        empirical_c: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{random_divfree, random_scalar, SpectrumSpec};
    use crate::dynamics::{make_initial_data, InitialData, UnimodularMatrix};
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn random_state(grid: &Grid, seed: u64) -> StateBundle {
        let spec = InitialData::Random {
            seed,
            v_rms: 0.3,
            u_rms: 0.2,
            spectrum: SpectrumSpec::new(2.0, 1.0, 6.0),
        };
        make_initial_data(grid, &spec, UnimodularMatrix::identity(grid.dim()), 1e-3, true).unwrap()
    }

    fn random_bundle(grid: &Grid, seed: u64) -> VorticityBundle {
        let d = grid.dim();
        let np = pairs(d).len();
        let spec = SpectrumSpec::new(1.0, 1.0, 10.0);
        let mut s = seed;
        let mut next = || {
            s += 1;
            random_scalar(grid, &spec, s).with_tag(SpaceTag::Lagrange)
        };
        VorticityBundle {
            dim: d,
            omega: (0..np).map(|_| next()).collect(),
            omega_a: (0..d).map(|_| (0..np).map(|_| next()).collect()).collect(),
        }
    }

    #[test]
    fn stream_function_vorticity_is_laplacian() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let psi = random_scalar(&g, &SpectrumSpec::new(2.0, 1.0, 8.0), 1);
        let v = VectorField::new(vec![psi.derivative(1).scaled(-1.0), psi.derivative(0)]).unwrap();
        let w = &curl_vector(&v)[0];
        let lap = psi.map_modes(|m, c| -m.norm_odd().powi(2) * c);
        assert!(w.sub(&lap).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn constant_matrix_has_zero_vorticity() {
        let g = make_grid(3, 8, 2.0 * PI).unwrap();
        let s = StateBundle::zeros(&g, UnimodularMatrix::identity(3));
        assert_eq!(curl(&s).max_abs_coeff(), 0.0);
    }

    #[test]
    fn biot_savart_round_trips() {
        for (d, n) in [(2, 32), (3, 12)] {
            let g = make_grid(d, n, 2.0 * PI).unwrap();
            let s = random_state(&g, 2);
            let om = curl(&s);
            let (v, u) = biot_savart(&om).unwrap();
            assert!(v.sub(&s.v).l2_norm_sq().sqrt() < 1e-12);
            for (a, b) in u.iter().zip(&s.u) {
                assert!(a.sub(b).l2_norm_sq().sqrt() < 1e-12);
            }
        }
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let zero = VorticityBundle::zeros(&g, SpaceTag::Euler);
        let (v, _) = biot_savart(&zero).unwrap();
        assert_eq!(v.l2_norm_sq(), 0.0);
    }

    #[test]
    fn biot_savart_rejects_non_curls() {
        let g = make_grid(3, 8, 2.0 * PI).unwrap();
        let b = random_bundle(&g, 3).with_tag(SpaceTag::Euler);
        assert!(matches!(biot_savart(&b), Err(VorticityError::InconsistentVorticity(_))));
    }

    #[test]
    fn gradient_is_riesz_riesz_of_vorticity() {
        // ∂_k v^n = R_k R_m ω^{mn} with the plain symbol k/|k|.
        let g = make_grid(3, 12, 2.0 * PI).unwrap();
        let v = random_divfree(&g, &SpectrumSpec::new(2.0, 1.0, 4.0), 4);
        let om = curl_vector(&v);
        for n in 0..3 {
            for k in 0..3 {
                let mut acc = SpectralField::zeros(&g, SpaceTag::Euler);
                for m in 0..3 {
                    if let Some((p, sign)) = pair_index(3, m, n) {
                        let rr = crate::ops::riesz_transform(k, &crate::ops::riesz_transform(m, &om[p]));
                        acc.axpy(sign, &rr);
                    }
                }
                assert!(acc.sub(&v.component(n).derivative(k)).max_abs_coeff() < 1e-13);
            }
        }
    }

    #[test]
    fn two_d_fluid_source_vanishes() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let s = random_state(&g, 5);
        let f = vorticity_sources(&s, 1e-3, true);
        assert!(f.omega[0].to_physical().iter().all(|x| x.abs() < 1e-12));
        let zero = StateBundle::zeros(&g, UnimodularMatrix::identity(2));
        assert_eq!(vorticity_sources(&zero, 1e-3, true).max_abs_coeff(), 0.0);
    }

    #[test]
    fn residual_is_second_order_in_sample_spacing() {
        use crate::dynamics::{step, EvolutionConfig};
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let mut s = random_state(&g, 7);
        let cfg = EvolutionConfig { eps: 1e-3, dt: 1e-3, t_end: 0.08, dealias: true, diagnostics_every: 1, cfl: 1.0 };
        let mut hist = vec![s.clone()];
        for _ in 0..80 {
            s = step(&s, &cfg).unwrap();
            hist.push(s.clone());
        }
        let res: Vec<f64> = [40usize, 20, 10]
            .iter()
            .map(|&j| vorticity_residual(&hist[40 - j], &hist[40], &hist[40 + j], j as f64 * 1e-3, 1e-3, true))
            .collect();
        for w in res.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{res:?}");
        }
    }

    #[test]
    fn split_merge_round_trip() {
        for (d, n) in [(2, 16), (3, 8)] {
            let g = make_grid(d, n, 2.0 * PI).unwrap();
            let b = random_bundle(&g, 10);
            let pi = pi_split(&b).unwrap();
            let back = pi_merge(&pi);
            assert!(back.sub(&b).max_abs_coeff() < 1e-13);
            let again = pi_split(&back).unwrap();
            assert!(again.sub_norm(&pi) < 1e-12);
        }
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let z = VorticityBundle::zeros(&g, SpaceTag::Lagrange);
        let pz = pi_split(&z).unwrap();
        assert_eq!(pz.pi_plus[0].max_abs_coeff(), 0.0);
        assert!(pi_split(&z.with_tag(SpaceTag::Euler)).is_err());
    }

    #[test]
    fn symbol_matrix_eigenvectors() {
        let k = [1.0, -2.0, 0.5];
        let nk = (1.0f64 + 4.0 + 0.25).sqrt();
        let m = symbol_matrix(&k, 3);
        let e1 = [1.0, k[0] / nk, k[1] / nk, k[2] / nk];
        let e2 = [1.0, -k[0] / nk, -k[1] / nk, -k[2] / nk];
        let e3 = [0.0, k[1] / nk, -k[0] / nk, 0.0];
        for (e, lam) in [(e1, nk), (e2, -nk), (e3, 0.0)] {
            for i in 0..4 {
                let me: f64 = (0..4).map(|j| m[i][j] * e[j]).sum();
                assert!((me - lam * e[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn half_wave_free_rotation() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let mut w0 = SpectralField::zeros(&g, SpaceTag::Lagrange);
        w0.set_coeff(&[3, 4], Complex64::new(1.0, 0.0));
        let w = half_wave_evolve(&w0, &[], Propagator::Plus, 0.7);
        assert!((w.coeff_at(&[3, 4]) - Complex64::from_polar(1.0, 3.5)).norm() < 1e-14);
        assert!((w.l2_norm() - w0.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn half_wave_constant_forcing_closed_form() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let w0 = SpectralField::zeros(&g, SpaceTag::Lagrange);
        let mut f = SpectralField::zeros(&g, SpaceTag::Lagrange);
        f.set_coeff(&[1, 1], Complex64::new(0.3, -0.2));
        let t = 1.3;
        let k = 2f64.sqrt();
        for (n, prop, sigma) in [(200, Propagator::Plus, 1.0), (201, Propagator::Minus, -1.0)] {
            let samples = vec![f.clone(); n + 1];
            let w = half_wave_evolve(&w0, &samples, prop, t);
            let want = (Complex64::from_polar(1.0, sigma * t * k) - 1.0) / Complex64::new(0.0, sigma * k)
                * Complex64::new(0.3, -0.2);
            assert!((w.coeff_at(&[1, 1]) - want).norm() < 1e-8);
        }
        let samples = vec![f.clone(); 11];
        let w = half_wave_evolve(&w0, &samples, Propagator::Transport, t);
        assert!((w.coeff_at(&[1, 1]) - t * Complex64::new(0.3, -0.2)).norm() < 1e-14);
    }

    #[test]
    fn trajectory_matches_single_shot() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let w0 = random_scalar(&g, &SpectrumSpec::new(1.0, 1.0, 5.0), 1);
        let fg = random_scalar(&g, &SpectrumSpec::new(1.0, 1.0, 5.0), 2);
        let h = 0.01;
        let samples: Vec<SpectralField> = (0..=40).map(|j| fg.scaled((-(j as f64) * h).exp())).collect();
        let traj = half_wave_trajectory(&w0, Some(|j: usize| samples[j].clone()), 40, h, Propagator::Minus);
        let direct = half_wave_evolve(&w0, &samples, Propagator::Minus, 0.4);
        assert!(traj[20].sub(&direct).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn quadrature_weights_integrate_cubics() {
        for n in 1..9 {
            let h = 1.0 / n as f64;
            let w = quadrature_weights(n, h);
            let s: f64 = w.iter().enumerate().map(|(j, wj)| wj * (j as f64 * h).powi(if n == 1 { 1 } else { 3 })).sum();
            let want = if n == 1 { 0.5 } else { 0.25 };
            assert!((s - want).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn growth_monitor_zero_history() {
        let h: Vec<GrowthSample> = (0..5)
            .map(|i| GrowthSample { t: i as f64, omega_theta: 0.0, sup_sum: 0.0 })
            .collect();
        let r = vorticity_hs_monitor(&h);
        assert_eq!(r.integral, 0.0);
        assert_eq!(r.empirical_c, 0.0);
    }
}
