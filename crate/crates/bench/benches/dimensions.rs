use std::hint::black_box;

use affdim_core::hausdorff::{dim_h, solve_t_fixed_point};
use affdim_core::lattice::empirical_census;
use affdim_core::minkowski::{dim_m, pattern_count_exact};
use affdim_core::oracle::brute_force_count;
use affdim_core::{AffineSystem, TransitionMatrix};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn golden() -> TransitionMatrix {
    TransitionMatrix::from_rows(&[vec![1u8, 1], vec![1, 0]]).unwrap()
}

fn system(p: i64, q: i64) -> AffineSystem {
    AffineSystem::new(p, q, 0, 0, golden()).unwrap()
}

fn census(c: &mut Criterion) {
    let sys = system(2, 3);
    let mut group = c.benchmark_group("census");
    group.sample_size(10);
    for n in [10_000u64, 1_000_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| empirical_census(black_box(n), &sys))
        });
    }
    group.finish();
}

fn pattern_count(c: &mut Criterion) {
    let sys = system(2, 3);
    let mut group = c.benchmark_group("pattern_count");
    for n in [1_000u64, 100_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| pattern_count_exact(black_box(n), &sys).unwrap())
        });
    }
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    let pair = system(2, 3);
    let classical = system(1, 2);
    c.bench_function("dim_m/divisible", |b| b.iter(|| dim_m(black_box(&pair), 1e-10).unwrap()));
    c.bench_function("dim_h/divisible", |b| b.iter(|| dim_h(black_box(&pair), 1e-8).unwrap()));
    c.bench_function("dim_h/classical", |b| b.iter(|| dim_h(black_box(&classical), 1e-10).unwrap()));
    c.bench_function("fixed_point/golden", |b| {
        b.iter(|| solve_t_fixed_point(black_box(&golden()), 2, 1e-12).unwrap())
    });
}

fn enumeration(c: &mut Criterion) {
    let sys = system(2, 3);
    let mut group = c.benchmark_group("brute_force");
    group.sample_size(10);
    for n in [12usize, 18, 22] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| brute_force_count(black_box(n), &sys, &[]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, census, pattern_count, closed_forms, enumeration);
criterion_main!(benches);
