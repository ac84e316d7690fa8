//! Parallel-versus-sequential timing for the hot kernels: the chunked
//! reduction primitive and one full energy/gradient evaluation. The
//! chunked reductions return bitwise-identical results in both modes;
//! this suite quantifies what the parallel feature buys.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use trisphere::barrier::{barrier_field, BarrierSpec};
use trisphere::geometry::{build_grid, KAnnulus};
use trisphere::parallel::{indexed_sum, indexed_sum_sequential};
use trisphere::solver::{discrete_energy, energy_gradient};

fn bench_chunked_sum(c: &mut Criterion) {
    let xs: Vec<f64> = (0..4_000_000).map(|i| ((i % 997) as f64).sin()).collect();
    let mut group = c.benchmark_group("chunked_sum");
    group.bench_function("sequential", |b| {
        b.iter(|| indexed_sum_sequential(xs.len(), |i| black_box(xs[i])))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| indexed_sum(xs.len(), |i| black_box(xs[i])))
    });
    group.finish();
}

fn bench_energy(c: &mut Criterion) {
    let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
    let grid = build_grid(&ann, 192).unwrap();
    let spec = BarrierSpec::new(1.0, 2.0, 2, 2, 3.0).unwrap();
    let field = barrier_field(&spec, grid).unwrap().field;

    let mut group = c.benchmark_group("energy_and_gradient");
    for threads in [1usize, rayon::current_num_threads().max(2)] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        group.bench_with_input(BenchmarkId::new("energy", threads), &threads, |b, _| {
            b.iter(|| pool.install(|| discrete_energy(black_box(&field), 3.0, 1e-4)))
        });
        group.bench_with_input(BenchmarkId::new("gradient", threads), &threads, |b, _| {
            b.iter(|| pool.install(|| energy_gradient(black_box(&field), 3.0, 1e-4)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_chunked_sum, bench_energy);
criterion_main!(benches);
