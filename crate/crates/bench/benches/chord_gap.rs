use std::f64::consts::FRAC_PI_4;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use selfcontract::norms::{chord_gap, Gauge};
use selfcontract::partition::build_partition;

fn geometry(c: &mut Criterion) {
    let e2 = Gauge::euclidean(2);
    let p3 = Gauge::pnorm(3, 3.0).unwrap();
    c.bench_function("chord_gap_euclidean2", |b| b.iter(|| chord_gap(&e2, black_box(FRAC_PI_4), 16, 1).unwrap()));
    c.bench_function("chord_gap_p3_3d", |b| b.iter(|| chord_gap(&p3, black_box(FRAC_PI_4), 16, 1).unwrap()));
    let part = build_partition(&Gauge::euclidean(4), 0.1).unwrap();
    c.bench_function("classify_euclidean4", |b| {
        b.iter(|| part.classify_direction(black_box(&[0.3, -0.2, 0.9, 0.1])).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = geometry
}
criterion_main!(benches);
