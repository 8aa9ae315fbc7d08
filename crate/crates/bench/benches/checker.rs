use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use selfcontract::generators::{greedy_random, harmonic_staircase};
use selfcontract::norms::Gauge;
use selfcontract::polyline::{is_self_contracted, is_self_contracted_naive};

fn checkers(c: &mut Criterion) {
    let mut g = c.benchmark_group("self_contracted");
    for r in [10, 30, 60] {
        let gauge = Gauge::pnorm(3, 3.0).unwrap();
        let p = greedy_random(&gauge, 3, r, 1, 1.0).unwrap().poly;
        g.bench_with_input(BenchmarkId::new("rows", r), &p, |b, p| {
            b.iter(|| is_self_contracted(black_box(p), &gauge).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("naive", r), &p, |b, p| {
            b.iter(|| is_self_contracted_naive(black_box(p), &gauge).unwrap())
        });
    }
    let h = harmonic_staircase(200);
    let e = Gauge::euclidean(200);
    g.bench_function("harmonic_200", |b| b.iter(|| is_self_contracted(black_box(&h), &e).unwrap()));
    g.finish();
}

criterion_group!(benches, checkers);
criterion_main!(benches);
