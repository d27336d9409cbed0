use std::path::Path;

use neohook_core::dynamics::InitialData;
use neohook_core::scenario::{self, Scenario};

fn scenario(name: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

/// `∫₀ᵀ max(|cos t|, |sin t|)⁴ dt`, using `2∫₀^{π/4} cos⁴ = 3π/16 + 1/2` per
/// quarter period.
fn max_trig_fourth(t: f64) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let per = 3.0 * std::f64::consts::PI / 16.0 + 0.5;
    let full = (t / quarter).floor();
    let rest = t - full * quarter;
    let cos4 = |s: f64| 3.0 * s / 8.0 + (2.0 * s).sin() / 4.0 + (4.0 * s).sin() / 32.0;
    let eighth = quarter / 2.0;
    let tail = if rest <= eighth {
        cos4(rest)
    } else {
        cos4(eighth) + (cos4(eighth) - cos4(quarter - rest))
    };
    full * per + tail
}

#[test]
fn oracle_quarter_period() {
    let q = std::f64::consts::FRAC_PI_2;
    assert!((max_trig_fourth(q) - (3.0 * std::f64::consts::PI / 16.0 + 0.5)).abs() < 1e-14);
    // Fine midpoint rule as a cross-check.
    let n = 200_000;
    let h = 2.0 / n as f64;
    let num: f64 = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            t.cos().abs().max(t.sin().abs()).powi(4) * h
        })
        .sum();
    assert!((num - max_trig_fourth(2.0)).abs() < 1e-9);
}

#[test]
fn linear_shear_wave_matches_closed_form() {
    let sc = scenario("shear-wave-2d.toml");
    let (a, k) = match sc.initial {
        InitialData::ShearWave { amplitude, mode } => (amplitude, mode as f64 * std::f64::consts::TAU / sc.grid.period),
        _ => panic!("shear-wave scenario"),
    };
    let dir = tempfile::tempdir().unwrap();
    let s = scenario::run(&sc, dir.path()).unwrap();
    let rep = s.apriori.unwrap();
    let t = s.final_state.t;
    let want = 2.0 * (a * k).powi(4) * max_trig_fourth(k * t) / k;
    assert!(((rep.sup_integral - want) / want).abs() < 0.05, "{} vs {want}", rep.sup_integral);
    // The bracket ⟨·⟩ saturates at 1 for small data, so y(T) = T^{1/4}.
    assert!((rep.besov_integral - t.powf(0.25)).abs() < 1e-12);
    assert!(dir.path().join("apriori.json").exists());
}

#[test]
fn nonlinear_run_has_finite_monitored_integrals() {
    let mut sc = scenario("deformation-2d.toml");
    sc.flow_map = None;
    sc.evolution.t_end = 0.2;
    let dir = tempfile::tempdir().unwrap();
    let s = scenario::run(&sc, dir.path()).unwrap();
    let rep = s.apriori.unwrap();
    assert!(rep.finite && rep.sup_integral > 0.0 && rep.besov_integral >= 0.2f64.powf(0.25));
}

#[test]
fn three_d_run_uses_bootstrap_exponent() {
    let mut sc = scenario("zero.toml");
    sc.grid.dim = 3;
    sc.grid.n = 8;
    sc.matrix = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    sc.initial = InitialData::TaylorGreen { amplitude: 0.1 };
    sc.evolution.t_end = 0.01;
    sc.diagnostics.besov.clear();
    sc.apriori = Some(scenario::AprioriSpec { r: 0.9, p: 4.0 });
    let dir = tempfile::tempdir().unwrap();
    let s = scenario::run(&sc, dir.path()).unwrap();
    let rep = s.apriori.unwrap();
    let q = 4.0 * (2.5 + 0.9 - 0.75) / 2.5;
    assert!((rep.sup_exponent - q).abs() < 1e-14);
    assert!(rep.finite);
}
