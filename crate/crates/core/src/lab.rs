//! Empirical checks of the multiplicative, commutator, mollifier and
//! dispersive inequalities over seeded corpora.
//!
//! Every check produces a [`RatioReport`]: per-sample `lhs`, `rhs`, their
//! ratio, the corpus maximum and a refinement slope. Constants hidden in `≲`
//! are never asserted; only the mollifier bounds carry explicit constants.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{self, SpectrumSpec};
use crate::grid::{make_grid, Grid, GridError, SpectralField, VectorField};
use crate::lp::{self, NormError, NormRequest};
use crate::ops::{self, OpError, PowerKind};
use crate::par;
use crate::vorticity::{self, Propagator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("inadmissible parameters: {0}")]
    InadmissibleParameters(String),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Op(#[from] OpError),
}

fn inadmissible(msg: impl Into<String>) -> LabError {
    LabError::InadmissibleParameters(msg.into())
}

/// `(s₀, s₁, κ)` for the dimension.
pub fn regularity_constants(dim: usize) -> Option<(f64, f64, f64)> {
    match dim {
        2 => {
            let kappa = (65f64.sqrt() - 7.0) / 8.0;
            Some((1.75, 1.75 + kappa, kappa))
        }
        3 => {
            let kappa = 1.5f64.sqrt() - 1.0;
            Some((2.0, 1.0 + 1.5f64.sqrt(), kappa))
        }
        _ => None,
    }
}

/// `d/p` with `p = ∞` giving 0.
fn d_over_p(d: f64, p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        d / p
    }
}

/// `(p − 2)/p`, equal to 1 at `p = ∞`.
fn p_ratio(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        (p - 2.0) / p
    }
}

/// Exponent of `[f]_{-1}` in `‖𝔞f‖_∞ ≲ [f]_{-1}^γ ‖f‖_{Ḃ^r_{p,q}}^{1-γ}`.
pub fn gamma1(dim: usize, r: f64, p: f64) -> f64 {
    let d = dim as f64;
    (r - d_over_p(d, p)) / (r + 1.0 + 0.5 * d * p_ratio(p))
}

/// Exponent of `[f]_{-1}` in `‖D^{-1}𝔞f‖_∞ ≲ [f]_{-1}^γ ‖f‖_{Ḃ^r_{p,q}}^{1-γ}`.
pub fn gamma2(dim: usize, r: f64, p: f64) -> f64 {
    let d = dim as f64;
    (r + 1.0 - d_over_p(d, p)) / (r + 1.0 + 0.5 * d * p_ratio(p))
}

/// `max(1, |x|)`.
pub fn tropical(x: f64) -> f64 {
    x.abs().max(1.0)
}

/// Parameters derived from `(d, r, p)` and, optionally, a prescribed `θ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedParams {
    pub dim: usize,
    pub r: f64,
    pub p: f64,
    /// `θ = r + (d+1)(p−2)/(4p)`.
    pub theta: f64,
    /// `s = 1 + θ`.
    pub s: f64,
    /// Time exponent of the dispersive estimate, `4p/((d−1)(p−2))`.
    pub q: f64,
    /// Time exponent of the 3D `L^q` bound on `‖∇V‖_∞`; equal to `q` in 2D
    /// scaled by the interpolation exponent.
    pub q_sup: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub s0: f64,
    pub s1: f64,
    pub kappa: f64,
    /// `h = θ − 1 − 1/p` (3D only).
    pub h: Option<f64>,
}

impl DerivedParams {
    /// The dispersive estimate needs `p < 2(d−1)/(d−3)` when `d ≥ 3`.
    pub fn require_strichartz(&self) -> Result<(), LabError> {
        if self.dim >= 3 && self.p.is_infinite() {
            return Err(inadmissible("dispersive estimate in d = 3 needs p < ∞"));
        }
        Ok(())
    }

    /// The sup-norm interpolation needs `r > d/p`.
    pub fn require_gn(&self) -> Result<(), LabError> {
        if self.r <= d_over_p(self.dim as f64, self.p) {
            return Err(inadmissible(format!(
                "interpolation needs r > d/p (r = {}, d/p = {})",
                self.r,
                d_over_p(self.dim as f64, self.p)
            )));
        }
        Ok(())
    }

    /// The 3D bootstrap needs `h > 0`.
    pub fn require_apriori(&self) -> Result<(), LabError> {
        if let Some(h) = self.h {
            if h <= 0.0 {
                return Err(inadmissible(format!("3D bootstrap needs h = θ − 1 − 1/p > 0, got {h}")));
            }
        }
        Ok(())
    }
}

/// Validates `(d, r, p, θ)` and derives the dependent exponents.
pub fn param_check(dim: usize, r: f64, p: f64, theta: Option<f64>) -> Result<DerivedParams, LabError> {
    let (s0, s1, kappa) = regularity_constants(dim).ok_or_else(|| inadmissible(format!("d = {dim} is not 2 or 3")))?;
    if !r.is_finite() {
        return Err(inadmissible("r must be finite"));
    }
    if p.is_nan() || p < 2.0 {
        return Err(inadmissible(format!("p = {p} must lie in [2, ∞]")));
    }
    if p == 2.0 {
        return Err(inadmissible("p = 2 gives an infinite time exponent"));
    }
    if !(0.0 < r && r < 1.0) {
        return Err(inadmissible(format!("r = {r} must lie in (0, 1)")));
    }
    let d = dim as f64;
    let th = r + (d + 1.0) / 4.0 * p_ratio(p);
    if let Some(t) = theta {
        if (t - th).abs() > 1e-12 {
            return Err(inadmissible(format!("θ = {t} violates θ = r + (d+1)(p−2)/(4p) = {th}")));
        }
    }
    if dim == 2 && !(0.0..=1.0).contains(&th) {
        return Err(inadmissible(format!("d = 2 needs 0 ≤ θ ≤ 1, got θ = {th}")));
    }
    let q = 4.0 / ((d - 1.0) * p_ratio(p));
    let q_sup = if dim == 3 {
        q * (2.5 + r - 3.0 / p) / 2.5
    } else {
        4.0
    };
    let h = (dim == 3).then(|| th - 1.0 - 1.0 / p);
    Ok(DerivedParams {
        dim,
        r,
        p,
        theta: th,
        s: 1.0 + th,
        q,
        q_sup,
        gamma1: gamma1(dim, r, p),
        gamma2: gamma2(dim, r, p),
        s0,
        s1,
        kappa,
        h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl Sample {
    pub fn new(seed: u64, lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Sample { seed, lhs, rhs, ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub id: String,
    pub params: BTreeMap<String, Value>,
    pub samples: Vec<Sample>,
    pub max_ratio: f64,
    pub refinement_slope: Option<f64>,
}

impl RatioReport {
    fn new(id: &str, params: BTreeMap<String, Value>, mut samples: Vec<Sample>, refinement_slope: Option<f64>) -> Self {
        samples.sort_by_key(|s| s.seed);
        let max_ratio = max_ratio(&samples);
        RatioReport {
            id: id.to_string(),
            params,
            samples,
            max_ratio,
            refinement_slope,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.max_ratio.is_finite() && self.samples.iter().all(|s| s.lhs.is_finite() && s.rhs.is_finite() && s.ratio.is_finite())
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }
}

fn max_ratio(samples: &[Sample]) -> f64 {
    samples.iter().map(|s| s.ratio).fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Seeded corpus of random fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub size: usize,
    pub seed: u64,
    pub spectrum: SpectrumSpec,
}

impl CorpusSpec {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.size as u64).map(|i| self.seed.wrapping_add(1000 * i)).collect()
    }
}

/// Left-hand quantity of the multiplicative inequalities for a
/// divergence-free `v` with vorticity `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RieszQuantity {
    /// `‖∇v‖_∞ ≲ ‖v‖₂^{γ₁} {ω}_{r,p}^{1−γ₁}`
    GradV,
    /// `‖ω‖_∞ ≲ ‖v‖₂^{γ₁} {ω}_{r,p}^{1−γ₁}`
    Omega,
    /// `‖v‖_∞ ≲ ‖v‖₂^{γ₂} {ω}_{r,p}^{1−γ₂}`
    Velocity,
    /// `‖v‖_∞ ≲ ‖v‖₂^{γ} [ω]_θ^{1−γ}`, `γ = γ₂(d, θ, 2)`
    VelocitySobolev,
    /// `{R_j R_k ω}_{r,p} ≲ {ω}_{r,p}`, max over `j, k`
    RieszBesov,
}

fn grid_for(dim: usize, n: usize, period: f64) -> Result<Grid, LabError> {
    Ok(make_grid(dim, n, period)?)
}

fn besov_req(r: f64, p: f64) -> NormRequest {
    NormRequest::HomBesov { r, p, q: p }
}

/// `(lhs, rhs)` of one multiplicative inequality for `v`.
pub fn riesz_sides(v: &VectorField, quantity: RieszQuantity, r: f64, p: f64, theta: f64) -> Result<(f64, f64), LabError> {
    let d = v.dim();
    let om = vorticity::curl_vector(v);
    let om_refs: Vec<&SpectralField> = om.iter().collect();
    let comps: Vec<&SpectralField> = v.components().iter().collect();
    let l2 = v.l2_norm_sq().sqrt();
    let (sup_v, sup_grad) = lp::sup_norms(&comps);
    Ok(match quantity {
        RieszQuantity::GradV | RieszQuantity::Omega => {
            let g = gamma1(d, r, p);
            let b = lp::norm_of(&om_refs, &besov_req(r, p))?;
            let lhs = if quantity == RieszQuantity::GradV {
                sup_grad
            } else {
                lp::sup_norms(&om_refs).0
            };
            (lhs, l2.powf(g) * b.powf(1.0 - g))
        }
        RieszQuantity::Velocity => {
            let g = gamma2(d, r, p);
            let b = lp::norm_of(&om_refs, &besov_req(r, p))?;
            (sup_v, l2.powf(g) * b.powf(1.0 - g))
        }
        RieszQuantity::VelocitySobolev => {
            let g = gamma2(d, theta, 2.0);
            let h = lp::norm_of(&om_refs, &NormRequest::HomSobolev { theta })?;
            (sup_v, l2.powf(g) * h.powf(1.0 - g))
        }
        RieszQuantity::RieszBesov => {
            let b = lp::norm_of(&om_refs, &besov_req(r, p))?;
            let mut worst: f64 = 0.0;
            for j in 0..d {
                for k in j..d {
                    let rr: Vec<SpectralField> = om
                        .iter()
                        .map(|w| ops::riesz_transform_real(j, &ops::riesz_transform_real(k, w)))
                        .collect();
                    let refs: Vec<&SpectralField> = rr.iter().collect();
                    worst = worst.max(lp::norm_of(&refs, &besov_req(r, p))?);
                }
            }
            (worst, b)
        }
    })
}

/// Scaling-dimension mismatch of the two sides under `f ↦ f(λ·)`; zero
/// when the exponents are consistent.
pub fn riesz_scaling_defect(dim: usize, quantity: RieszQuantity, r: f64, p: f64, theta: f64) -> f64 {
    let d = dim as f64;
    let l2 = -d / 2.0;
    let besov = 1.0 + r - d_over_p(d, p);
    match quantity {
        RieszQuantity::GradV | RieszQuantity::Omega => {
            let g = gamma1(dim, r, p);
            (l2 * g + besov * (1.0 - g) - 1.0).abs()
        }
        RieszQuantity::Velocity => {
            let g = gamma2(dim, r, p);
            (l2 * g + besov * (1.0 - g)).abs()
        }
        RieszQuantity::VelocitySobolev => {
            let g = gamma2(dim, theta, 2.0);
            let sob = 1.0 + theta - d / 2.0;
            (l2 * g + sob * (1.0 - g)).abs()
        }
        RieszQuantity::RieszBesov => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieszCase {
    pub id: String,
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub quantity: RieszQuantity,
    pub r: f64,
    pub p: f64,
    pub theta: Option<f64>,
    pub corpus: CorpusSpec,
    pub refine: bool,
}

fn riesz_samples(case: &RieszCase, n: usize, theta: f64) -> Result<Vec<Sample>, LabError> {
    let grid = grid_for(case.dim, n, case.period)?;
    let seeds = case.corpus.seeds();
    par::map(&seeds, |&seed| {
        let v = corpus::random_divfree(&grid, &case.corpus.spectrum, seed);
        let (lhs, rhs) = riesz_sides(&v, case.quantity, case.r, case.p, theta)?;
        Ok(Sample::new(seed, lhs, rhs))
    })
    .into_iter()
    .collect()
}

/// Multiplicative (Gagliardo–Nirenberg type) and Riesz-boundedness check.
pub fn check_riesz_interpolation(case: &RieszCase) -> Result<RatioReport, LabError> {
    if case.quantity != RieszQuantity::RieszBesov && case.quantity != RieszQuantity::VelocitySobolev {
        let d = d_over_p(case.dim as f64, case.p);
        let need = if case.quantity == RieszQuantity::Velocity { d - 1.0 } else { d };
        if case.r <= need {
            return Err(inadmissible(format!("r = {} must exceed {need}", case.r)));
        }
    }
    let theta = case.theta.unwrap_or(case.r);
    if case.quantity == RieszQuantity::VelocitySobolev && theta <= case.dim as f64 / 2.0 - 1.0 {
        return Err(inadmissible(format!("θ = {theta} must exceed d/2 − 1")));
    }
    let samples = riesz_samples(case, case.n, theta)?;
    let slope = if case.refine {
        let fine = riesz_samples(case, 2 * case.n, theta)?;
        Some((max_ratio(&fine) / max_ratio(&samples)).log2())
    } else {
        None
    };
    // Amplitude homogeneity on the first sample.
    let grid = grid_for(case.dim, case.n, case.period)?;
    let seed = case.corpus.seeds()[0];
    let mut v = corpus::random_divfree(&grid, &case.corpus.spectrum, seed);
    let (l1, r1) = riesz_sides(&v, case.quantity, case.r, case.p, theta)?;
    v.scale(3.0);
    let (l3, r3) = riesz_sides(&v, case.quantity, case.r, case.p, theta)?;
    let amplitude_defect = ((l3 / r3) / (l1 / r1) - 1.0).abs();
    let mut params = BTreeMap::new();
    params.insert("dim".into(), json!(case.dim));
    params.insert("n".into(), json!(case.n));
    params.insert("r".into(), json!(case.r));
    params.insert("p".into(), json_f64(case.p));
    params.insert("theta".into(), json!(theta));
    params.insert("quantity".into(), json!(case.quantity));
    params.insert("gamma1".into(), json!(gamma1(case.dim, case.r, case.p)));
    params.insert("gamma2".into(), json!(gamma2(case.dim, case.r, case.p)));
    params.insert(
        "scaling_defect".into(),
        json!(riesz_scaling_defect(case.dim, case.quantity, case.r, case.p, theta)),
    );
    params.insert("amplitude_defect".into(), json!(amplitude_defect));
    Ok(RatioReport::new(&case.id, params, samples, slope))
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

/// Homogeneous (`D^θ`) or inhomogeneous (`J^θ`) commutator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommutatorKind {
    Homogeneous,
    Inhomogeneous,
}

fn power(kind: CommutatorKind, s: f64, f: &SpectralField) -> SpectralField {
    let k = match kind {
        CommutatorKind::Homogeneous => PowerKind::Riesz,
        CommutatorKind::Inhomogeneous => PowerKind::Bessel,
    };
    ops::fractional_power(s, k, f).expect("non-negative power")
}

fn advect_scalar(v: &VectorField, g: &SpectralField) -> SpectralField {
    let grid = g.grid();
    let d = grid.dim();
    let vp = v.to_physical();
    let mut out = vec![0.0; grid.len()];
    for k in 0..d {
        let dg = g.derivative(k).to_physical();
        for (o, (a, b)) in out.iter_mut().zip(vp[k].iter().zip(&dg)) {
            *o += a * b;
        }
    }
    SpectralField::from_physical(grid, &out, g.tag()).expect("grid-sized array")
}

/// `‖Λ^θ(v·∇g) − v·∇Λ^θ g‖₂` with `Λ = D` or `J`. The mean of `v` commutes
/// with every multiplier and is dropped before the pseudo-spectral products.
pub fn commutator_norm(v: &VectorField, g: &SpectralField, theta: f64, kind: CommutatorKind) -> f64 {
    let mut vf = v.clone();
    for c in vf.components_mut() {
        c.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    }
    if vf.l2_norm_sq() == 0.0 {
        return 0.0;
    }
    let a = power(kind, theta, &advect_scalar(&vf, g));
    let b = advect_scalar(&vf, &power(kind, theta, g));
    a.sub(&b).l2_norm()
}

/// `(lhs, rhs)` of the commutator estimate.
pub fn kato_ponce_sides(v: &VectorField, g: &SpectralField, theta: f64, kind: CommutatorKind) -> (f64, f64) {
    let lhs = commutator_norm(v, g, theta, kind);
    let comps: Vec<&SpectralField> = v.components().iter().collect();
    let (_, grad_v) = lp::sup_norms(&comps);
    let (sup_g, _) = lp::sup_norms(&[g]);
    let pg = power(kind, theta, g).l2_norm();
    let pv: f64 = v
        .components()
        .iter()
        .map(|c| power(kind, theta + 1.0, c).l2_norm_sq())
        .sum::<f64>()
        .sqrt();
    (lhs, grad_v * pg + pv * sup_g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KatoPonceCase {
    pub id: String,
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub theta: f64,
    pub kind: CommutatorKind,
    pub corpus: CorpusSpec,
    pub refine: bool,
}

fn kp_samples(case: &KatoPonceCase, n: usize) -> Result<Vec<Sample>, LabError> {
    let grid = grid_for(case.dim, n, case.period)?;
    if 4.0 * case.corpus.spectrum.k_max >= grid.k0() * n as f64 {
        return Err(inadmissible(format!(
            "corpus k_max = {} must stay below n k0 / 4 so products are alias-free",
            case.corpus.spectrum.k_max
        )));
    }
    let seeds = case.corpus.seeds();
    Ok(par::map(&seeds, |&seed| {
        let v = corpus::random_divfree(&grid, &case.corpus.spectrum, seed);
        let g = corpus::random_scalar(&grid, &case.corpus.spectrum, seed.wrapping_add(7));
        let (lhs, rhs) = kato_ponce_sides(&v, &g, case.theta, case.kind);
        Sample::new(seed, lhs, rhs)
    }))
}

/// Commutator estimate over a corpus of `(v, g)`.
pub fn check_kato_ponce(case: &KatoPonceCase) -> Result<RatioReport, LabError> {
    if case.theta <= 0.0 {
        return Err(inadmissible(format!("θ = {} must be positive", case.theta)));
    }
    let samples = kp_samples(case, case.n)?;
    let slope = if case.refine {
        let fine = kp_samples(case, 2 * case.n)?;
        Some((max_ratio(&fine) / max_ratio(&samples)).log2())
    } else {
        None
    };
    let mut params = BTreeMap::new();
    params.insert("dim".into(), json!(case.dim));
    params.insert("n".into(), json!(case.n));
    params.insert("theta".into(), json!(case.theta));
    params.insert("kind".into(), json!(case.kind));
    Ok(RatioReport::new(&case.id, params, samples, slope))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrichartzCase {
    pub id: String,
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub r: f64,
    pub p: f64,
    pub size: usize,
    pub seed: u64,
    /// Horizons `T`; the run goes to the largest.
    pub horizons: Vec<f64>,
    /// Spacing of the norm samples in time.
    pub sample_dt: f64,
    /// Packet radius range `[k_lo, k_hi]` of the data.
    pub k_range: [f64; 2],
    /// Add `e^{−t} g` forcing to every other sample.
    pub forcing: bool,
}

/// Time integral of uniformly spaced samples: Simpson, closing with 3/8.
fn integrate(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let w = vorticity::quadrature_weights(values.len() - 1, h);
    values.iter().zip(&w).map(|(v, w)| v * w).sum()
}

struct StrichartzRun {
    seed: u64,
    /// `(lhs, rhs)` per horizon.
    sides: Vec<(f64, f64)>,
}

fn strichartz_run(case: &StrichartzCase, grid: &Grid, dp: &DerivedParams, idx: usize, seed: u64) -> Result<StrichartzRun, LabError> {
    use rand::Rng;
    let mut rng = corpus::rng(seed);
    let l = grid.period();
    let d = grid.dim();
    let mut center = [0.0; 3];
    for c in center.iter_mut().take(d) {
        *c = rng.random_range(0.0..l);
    }
    let kc = rng.random_range(case.k_range[0]..=case.k_range[1]);
    let w0 = corpus::shell_packet(grid, center, kc);
    let forcing = if case.forcing && idx % 2 == 1 {
        let mut gc = [0.0; 3];
        for c in gc.iter_mut().take(d) {
            *c = rng.random_range(0.0..l);
        }
        let gk = rng.random_range(case.k_range[0]..=case.k_range[1]);
        let amp = rng.random_range(0.5..2.0);
        Some(corpus::shell_packet(grid, gc, gk).scaled(amp))
    } else {
        None
    };
    let t_max = case.horizons.iter().cloned().fold(0.0, f64::max);
    let h = case.sample_dt / 2.0;
    let steps = (t_max / case.sample_dt).round() as usize;
    let w0c = w0.clone();
    let traj = match &forcing {
        Some(g) => {
            let g = g.clone();
            vorticity::half_wave_trajectory(&w0c, Some(move |j: usize| g.scaled((-(j as f64) * h).exp())), 2 * steps, h, Propagator::Minus)
        }
        None => vorticity::half_wave_trajectory(&w0c, None::<fn(usize) -> SpectralField>, 2 * steps, h, Propagator::Minus),
    };
    let req = besov_req(dp.r, dp.p);
    let norms: Vec<f64> = traj
        .iter()
        .map(|w| lp::norm(w, &req).map(|b| b.powf(dp.q)))
        .collect::<Result<_, _>>()?;
    let w0_theta = lp::norm(&w0, &NormRequest::HomSobolev { theta: dp.theta })?;
    let g_theta = match &forcing {
        Some(g) => lp::norm(g, &NormRequest::HomSobolev { theta: dp.theta })?,
        None => 0.0,
    };
    let sides = case
        .horizons
        .iter()
        .map(|&t| {
            let j = (t / case.sample_dt).round() as usize;
            let lhs = integrate(&norms[..=j], case.sample_dt).powf(1.0 / dp.q);
            let rhs = w0_theta + (1.0 - (-t).exp()) * g_theta;
            (lhs, rhs)
        })
        .collect();
    Ok(StrichartzRun { seed, sides })
}

/// Least-squares slope of `y` against `x`.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Dispersive estimate for `w_t + i|D|w = f` over random shell packets.
/// Samples are reported at the largest horizon; `refinement_slope` is the
/// slope of `log max ratio` against `log T`.
pub fn check_strichartz(case: &StrichartzCase) -> Result<RatioReport, LabError> {
    let dp = param_check(case.dim, case.r, case.p, None)?;
    dp.require_strichartz()?;
    if case.horizons.len() < 2 || case.horizons.iter().any(|&t| t <= 0.0) {
        return Err(inadmissible("need at least two positive horizons"));
    }
    for &t in &case.horizons {
        let j = t / case.sample_dt;
        if (j - j.round()).abs() > 1e-9 {
            return Err(inadmissible(format!("horizon {t} is not a multiple of sample_dt")));
        }
    }
    let grid = grid_for(case.dim, case.n, case.period)?;
    let seeds: Vec<(usize, u64)> = (0..case.size).map(|i| (i, case.seed.wrapping_add(7919 * i as u64))).collect();
    let runs: Vec<StrichartzRun> = par::map(&seeds, |&(i, s)| strichartz_run(case, &grid, &dp, i, s))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let nh = case.horizons.len();
    let max_by_t: Vec<f64> = (0..nh)
        .map(|k| runs.iter().map(|r| r.sides[k].0 / r.sides[k].1).fold(0.0, f64::max))
        .collect();
    let log_t: Vec<f64> = case.horizons.iter().map(|t| t.ln()).collect();
    let slope = lsq_slope(&log_t, &max_by_t.iter().map(|r| r.ln()).collect::<Vec<_>>());
    let per_sample: Vec<f64> = runs
        .iter()
        .map(|r| lsq_slope(&log_t, &r.sides.iter().map(|(a, b)| (a / b).ln()).collect::<Vec<_>>()))
        .collect();
    let samples: Vec<Sample> = runs
        .iter()
        .map(|r| {
            let (lhs, rhs) = r.sides[nh - 1];
            Sample::new(r.seed, lhs, rhs)
        })
        .collect();
    let mut params = BTreeMap::new();
    params.insert("dim".into(), json!(case.dim));
    params.insert("n".into(), json!(case.n));
    params.insert("period".into(), json!(case.period));
    params.insert("r".into(), json!(case.r));
    params.insert("p".into(), json_f64(case.p));
    params.insert("theta".into(), json!(dp.theta));
    params.insert("q".into(), json!(dp.q));
    params.insert("horizons".into(), json!(case.horizons));
    params.insert("max_ratio_by_horizon".into(), json!(max_by_t));
    params.insert("median_sample_slope".into(), json!(median(per_sample)));
    Ok(RatioReport::new(&case.id, params, samples, Some(slope)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierCase {
    pub id: String,
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub s: f64,
    pub eps: Vec<f64>,
    pub orders: Vec<u32>,
    pub corpus: CorpusSpec,
}

fn sobolev(f: &SpectralField, s: f64) -> f64 {
    lp::norm(f, &NormRequest::SobolevH { s }).expect("inhomogeneous norm")
}

/// `‖ρ_ε φ‖_{H^{s+1}} / ((√2/ε)‖φ‖_{H^s})` for one field.
pub fn mollifier_gain_sides(phi: &SpectralField, eps: f64, s: f64) -> (f64, f64) {
    let m = ops::mollify(eps, phi).expect("positive ε");
    (sobolev(&m, s + 1.0), 2f64.sqrt() / eps * sobolev(phi, s))
}

/// `‖ρ_ε φ − φ‖_{H^{s−m}}` against `2^{−m/2} ε^m ‖φ‖_{H^s}`.
pub fn mollifier_error_sides(phi: &SpectralField, eps: f64, s: f64, m: u32) -> (f64, f64) {
    let diff = ops::mollify(eps, phi).expect("positive ε").sub(phi);
    let mf = m as f64;
    (sobolev(&diff, s - mf), 2f64.powf(-mf / 2.0) * eps.powf(mf) * sobolev(phi, s))
}

/// Sharp version of the error bound, `ε^m (1+ε²)^{−m/2}`.
pub fn mollifier_error_constant(eps: f64, m: u32) -> f64 {
    let mf = m as f64;
    eps.powf(mf) * (1.0 + eps * eps).powf(-mf / 2.0)
}

/// Both mollifier bounds with their explicit constants; each sample's seed
/// encodes `(field, ε index, bound)` as `seed·1000 + 10·i + b`.
pub fn check_mollifier(case: &MollifierCase) -> Result<RatioReport, LabError> {
    if case.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(inadmissible("ε must lie in (0, 1)"));
    }
    let grid = grid_for(case.dim, case.n, case.period)?;
    let seeds = case.corpus.seeds();
    let per_field: Vec<Vec<Sample>> = par::map(&seeds, |&seed| {
        let phi = corpus::random_scalar(&grid, &case.corpus.spectrum, seed);
        let mut out = Vec::new();
        for (i, &eps) in case.eps.iter().enumerate() {
            let (l, r) = mollifier_gain_sides(&phi, eps, case.s);
            out.push(Sample::new(seed * 1000 + 10 * i as u64, l, r));
            for &m in &case.orders {
                let (l, r) = mollifier_error_sides(&phi, eps, case.s, m);
                out.push(Sample::new(seed * 1000 + 10 * i as u64 + m as u64, l, r));
            }
        }
        out
    });
    let samples: Vec<Sample> = per_field.into_iter().flatten().collect();
    let mut params = BTreeMap::new();
    params.insert("dim".into(), json!(case.dim));
    params.insert("n".into(), json!(case.n));
    params.insert("s".into(), json!(case.s));
    params.insert("eps".into(), json!(case.eps));
    params.insert("orders".into(), json!(case.orders));
    Ok(RatioReport::new(&case.id, params, samples, None))
}

/// One lab case as read from a case-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum LabCase {
    Riesz(RieszCase),
    KatoPonce(KatoPonceCase),
    Strichartz(StrichartzCase),
    Mollifier(MollifierCase),
}

impl LabCase {
    pub fn id(&self) -> &str {
        match self {
            LabCase::Riesz(c) => &c.id,
            LabCase::KatoPonce(c) => &c.id,
            LabCase::Strichartz(c) => &c.id,
            LabCase::Mollifier(c) => &c.id,
        }
    }

    /// Parameter validation without running the case.
    pub fn validate(&self) -> Result<(), LabError> {
        match self {
            LabCase::Riesz(c) => {
                if c.quantity != RieszQuantity::RieszBesov && c.quantity != RieszQuantity::VelocitySobolev {
                    let dp = d_over_p(c.dim as f64, c.p);
                    let need = if c.quantity == RieszQuantity::Velocity { dp - 1.0 } else { dp };
                    if c.r <= need {
                        return Err(inadmissible(format!("{}: r = {} must exceed {need}", c.id, c.r)));
                    }
                }
                regularity_constants(c.dim).ok_or_else(|| inadmissible(format!("{}: d must be 2 or 3", c.id)))?;
                Ok(())
            }
            LabCase::KatoPonce(c) => {
                if c.theta <= 0.0 {
                    return Err(inadmissible(format!("{}: θ must be positive", c.id)));
                }
                Ok(())
            }
            LabCase::Strichartz(c) => param_check(c.dim, c.r, c.p, None)?.require_strichartz(),
            LabCase::Mollifier(c) => {
                if c.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                    return Err(inadmissible(format!("{}: ε must lie in (0, 1)", c.id)));
                }
                Ok(())
            }
        }
    }

    pub fn run(&self) -> Result<RatioReport, LabError> {
        match self {
            LabCase::Riesz(c) => check_riesz_interpolation(c),
            LabCase::KatoPonce(c) => check_kato_ponce(c),
            LabCase::Strichartz(c) => check_strichartz(c),
            LabCase::Mollifier(c) => check_mollifier(c),
        }
    }
}

/// Per-time quantities of a solver trajectory used by the a priori chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriSample {
    pub t: f64,
    pub sup_grad_v: f64,
    pub sup_omega: f64,
    /// `{Ω}_r` (2D, `p = ∞`) or `{Ω}_{r,p}` (3D).
    pub omega_besov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    /// 2D: `y(T) = (∫⟨{Ω}_r⟩^{8/(r+2)})^{1/4}`; 3D:
    /// `(∫{Ω}_{r,p}^{2p/(p−2)})^{(p−2)/(2p)}`.
    pub besov_integral: f64,
    /// `∫ ‖∇V‖_∞^q + ‖Ω‖_∞^q` with `q = 4` in 2D.
    pub sup_integral: f64,
    pub sup_exponent: f64,
    pub finite: bool,
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(tw, yw)| 0.5 * (yw[0] + yw[1]) * (tw[1] - tw[0])).sum()
}

/// Monitored integrals of the a priori bootstrap along a trajectory.
pub fn check_apriori_chain(history: &[AprioriSample], params: &DerivedParams) -> AprioriReport {
    let t: Vec<f64> = history.iter().map(|s| s.t).collect();
    let (besov_integral, q) = if params.dim == 2 {
        let e = 8.0 / (params.r + 2.0);
        let y: Vec<f64> = history.iter().map(|s| tropical(s.omega_besov).powf(e)).collect();
        (trapezoid(&t, &y).powf(0.25), 4.0)
    } else {
        let e = 2.0 * params.p / (params.p - 2.0);
        let y: Vec<f64> = history.iter().map(|s| s.omega_besov.powf(e)).collect();
        (trapezoid(&t, &y).powf(1.0 / e), params.q_sup)
    };
    let y: Vec<f64> = history.iter().map(|s| s.sup_grad_v.powf(q) + s.sup_omega.powf(q)).collect();
    let sup_integral = trapezoid(&t, &y);
    AprioriReport {
        besov_integral,
        sup_integral,
        sup_exponent: q,
        finite: besov_integral.is_finite() && sup_integral.is_finite(),
    }
}
