//! Benchmarks shared by the bench targets.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use rewire_core::ensemble::RunKey;
use rewire_core::{integrate, simulate, simulate_optimized, ModelSpec, RegularBipartiteGraph, SimOptions};

/// SIS from 10% infected, `T = 10`, `d = 2`, as in `rewire compare` defaults.
pub fn simulators(c: &mut Criterion) {
    let spec = ModelSpec::sis(1.0).unwrap();
    let mut group = c.benchmark_group("sis_T10");
    group.sample_size(20);
    for n in [100usize, 400, 1000] {
        let graph = RegularBipartiteGraph::generate(n, 2, 0).unwrap();
        let key = RunKey::new(0, n, 0);
        let init = key.initial_state(&[0.1, 0.9]);
        group.throughput(Throughput::Elements(n as u64));
        if n <= 400 {
            group.bench_with_input(BenchmarkId::new("naive", n), &n, |b, _| {
                b.iter(|| simulate(&spec, &graph, &init, 10.0, black_box(key.run_seed), SimOptions::default()).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("optimized", n), &n, |b, _| {
            b.iter(|| {
                simulate_optimized(&spec, &graph, &init, 10.0, black_box(key.run_seed), SimOptions::default()).unwrap()
            })
        });
    }
    group.finish();

    let voter = ModelSpec::voter(3, 1.0).unwrap();
    let graph = RegularBipartiteGraph::generate(1000, 3, 0).unwrap();
    let init = RunKey::new(0, 1000, 0).initial_state(&[0.3, 0.3, 0.4]);
    c.bench_function("voter3_N1000_T1_optimized", |b| {
        b.iter(|| simulate_optimized(&voter, &graph, &init, 1.0, black_box(1), SimOptions::default()).unwrap())
    });
}

pub fn integrator(c: &mut Criterion) {
    let sis = ModelSpec::sis(1.0).unwrap();
    c.bench_function("rk4_sis_T10_step1e-3", |b| {
        b.iter(|| integrate(&sis, 2.0, black_box(&[0.1, 0.9]), 10.0, 1e-3).unwrap())
    });
    let voter = ModelSpec::voter(4, 1.0).unwrap();
    c.bench_function("rk4_voter4_T10_step1e-3", |b| {
        b.iter(|| integrate(&voter, 2.0, black_box(&[0.1, 0.2, 0.3, 0.4]), 10.0, 1e-3).unwrap())
    });
}
