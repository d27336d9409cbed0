//! Parallel against sequential execution of the hot paths. With the
//! `parallel` feature off both groups run the same sequential code.

use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neohook_core::corpus::SpectrumSpec;
use neohook_core::dynamics::{self, make_initial_data, EvolutionConfig, InitialData, UnimodularMatrix};
use neohook_core::lab::{self, CorpusSpec, RieszCase, RieszQuantity};
use neohook_core::{make_grid, par};

fn solver_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    group.sample_size(10);
    for n in [32usize, 64] {
        let g = make_grid(2, n, TAU).unwrap();
        let data = InitialData::Random {
            seed: 1,
            v_rms: 0.5,
            u_rms: 0.2,
            spectrum: SpectrumSpec::new(2.0, 1.0, 8.0),
        };
        let s = make_initial_data(&g, &data, UnimodularMatrix::identity(2), 1e-3, true).unwrap();
        let cfg = EvolutionConfig {
            eps: 1e-3,
            dt: 1e-3,
            t_end: 1e-3,
            dealias: true,
            diagnostics_every: 1,
            cfl: 1.0,
        };
        group.bench_with_input(BenchmarkId::new("parallel", n), &s, |b, s| {
            b.iter(|| dynamics::step(black_box(s), &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &s, |b, s| {
            b.iter(|| par::run_sequential(|| dynamics::step(black_box(s), &cfg).unwrap()))
        });
    }
    group.finish();
}

fn lab_corpus(c: &mut Criterion) {
    let mut group = c.benchmark_group("riesz_corpus");
    group.sample_size(10);
    let case = RieszCase {
        id: "bench".into(),
        dim: 2,
        n: 32,
        period: TAU,
        quantity: RieszQuantity::GradV,
        r: 0.25,
        p: f64::INFINITY,
        theta: None,
        corpus: CorpusSpec {
            size: 8,
            seed: 1,
            spectrum: SpectrumSpec::new(2.5, 1.0, 8.0),
        },
        refine: false,
    };
    group.bench_function("parallel", |b| b.iter(|| lab::check_riesz_interpolation(black_box(&case)).unwrap()));
    group.bench_function("sequential", |b| {
        b.iter(|| par::run_sequential(|| lab::check_riesz_interpolation(black_box(&case)).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, solver_step, lab_corpus);
criterion_main!(benches);
