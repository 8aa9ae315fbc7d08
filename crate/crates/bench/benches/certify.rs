use criterion::{black_box, criterion_group, criterion_main, Criterion};

use selfcontract::certify::{certify_easycase, check_certificate, GeneralSetup};
use selfcontract::generators::greedy_random;
use selfcontract::norms::Gauge;

fn certificates(c: &mut Criterion) {
    let max = Gauge::max_norm(2);
    let p = greedy_random(&max, 2, 40, 3, 1.0).unwrap().poly;
    c.bench_function("easy_r40", |b| b.iter(|| certify_easycase(black_box(&p)).unwrap()));

    let cert = certify_easycase(&p).unwrap();
    c.bench_function("check_easy_r40", |b| b.iter(|| check_certificate(black_box(&cert), cert.tol)));

    for (name, g) in [("general_max2_r40", max.clone()), ("general_euclidean4_r40", Gauge::euclidean(4))] {
        let setup = GeneralSetup::new(&g, 2000, 7).unwrap();
        let q = greedy_random(&g, g.dim(), 40, 3, 1.0).unwrap().poly;
        c.bench_function(name, |b| b.iter(|| setup.certify(black_box(&q), None).unwrap()));
    }
    c.bench_function("setup_euclidean3", |b| {
        b.iter(|| GeneralSetup::new(black_box(&Gauge::euclidean(3)), 2000, 7).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = certificates
}
criterion_main!(benches);
