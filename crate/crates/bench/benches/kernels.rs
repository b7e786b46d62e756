use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use truncsa::asymptotics::{eigh, lyapunov_solve};
use truncsa::solver::run_truncated;
use truncsa::verify::ks_normal_test;
use truncsa::RngStream;
use truncsa_bench::{linear_setup, spd};

fn linalg(c: &mut Criterion) {
    let mut group = c.benchmark_group("linalg");
    for d in [2usize, 8, 32] {
        let b = spd(d, 0.1, 1);
        let rhs = spd(d, 0.1, 2);
        group.bench_with_input(BenchmarkId::new("eigh", d), &b, |bench, b| {
            bench.iter(|| eigh(black_box(b)).unwrap())
        });
        group.bench_with_input(
            BenchmarkId::new("lyapunov", d),
            &(b, rhs),
            |bench, (b, c)| bench.iter(|| lyapunov_solve(black_box(b), black_box(c)).unwrap()),
        );
    }
    group.finish();
}

fn recursion(c: &mut Criterion) {
    let (problem, algorithm, x0) = linear_setup();
    let horizon = 10_000;
    let mut group = c.benchmark_group("run_truncated");
    group.throughput(Throughput::Elements(horizon));
    group.bench_function("linear_d2", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            let mut rng = RngStream::new(seed, 0);
            run_truncated(&problem, &algorithm, &x0, horizon, horizon, &mut rng).unwrap()
        })
    });
    group.finish();
}

fn ks(c: &mut Criterion) {
    let mut group = c.benchmark_group("ks_normal_test");
    for m in [100usize, 1000, 10_000] {
        let mut rng = RngStream::new(3, 0);
        let z: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        group.throughput(Throughput::Elements(m as u64));
        group.bench_with_input(BenchmarkId::from_parameter(m), &z, |b, z| {
            b.iter(|| ks_normal_test(black_box(z)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, linalg, recursion, ks);
criterion_main!(benches);
