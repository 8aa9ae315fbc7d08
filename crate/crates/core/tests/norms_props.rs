use proptest::prelude::*;

use selfcontract::linalg::{dot, norm2};
use selfcontract::norms::{mediatrix_point, Gauge, GaugeKind};

fn gauge(kind: u8, n: usize, p: f64, seed: u64) -> Gauge {
    match kind % 5 {
        0 => Gauge::euclidean(n),
        1 => Gauge::max_norm(n),
        2 => Gauge::pnorm(n, p).unwrap(),
        3 => Gauge::random_symmetric_polytope(n, 2, seed),
        _ => Gauge::cylinder(Gauge::pnorm(n, p).unwrap()),
    }
}

/// Unit-ball membership straight from the defining inequalities.
fn inside(g: &Gauge, x: &[f64]) -> bool {
    match g.kind() {
        GaugeKind::Euclidean => x.iter().map(|v| v * v).sum::<f64>() <= 1.0,
        GaugeKind::PNorm(p) if p.is_infinite() => x.iter().all(|v| v.abs() <= 1.0),
        GaugeKind::PNorm(p) => x.iter().map(|v| v.abs().powf(*p)).sum::<f64>() <= 1.0,
        GaugeKind::Polytope(hs) => hs.iter().all(|a| dot(a, x) <= 1.0),
        GaugeKind::Cylinder(base) => {
            let n = base.dim();
            inside(base, &x[..n]) && x[n].abs() <= 1.0
        }
        GaugeKind::Custom(_) => unreachable!(),
    }
}

/// Minkowski functional by bisection on the scale at which x/λ leaves the ball.
fn oracle_norm(g: &Gauge, x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let at = |l: f64| -> Vec<f64> { x.iter().map(|v| v / l).collect() };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while !inside(g, &at(hi)) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inside(g, &at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn vecs(n: usize, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn evaluate_matches_bisection(kind in 0u8..5, n in 1usize..5, p in 1.2f64..6.0, seed in 0u64..50,
                                  xs in vecs(5, 5)) {
        let g = gauge(kind, n, p, seed);
        for x in xs {
            let x = &x[..g.dim()];
            let want = oracle_norm(&g, x);
            let got = g.evaluate(x).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{got} vs {want}");
        }
    }

    #[test]
    fn boundary_normals_support_the_ball(kind in 0u8..5, n in 1usize..5, p in 1.2f64..6.0, seed in 0u64..50,
                                         d in prop::collection::vec(-1.0f64..1.0, 5),
                                         ys in vecs(5, 20), ts in prop::collection::vec(0.0f64..1.0, 20)) {
        let g = gauge(kind, n, p, seed);
        let d = &d[..g.dim()];
        prop_assume!(norm2(d) > 1e-6);
        let bp = g.boundary_point(d).unwrap();
        prop_assert!((g.norm(&bp.point) - 1.0).abs() <= 1e-9);
        prop_assert!(!bp.normals.is_empty());
        for (y, t) in ys.iter().zip(&ts) {
            let y = &y[..g.dim()];
            if norm2(y) == 0.0 {
                continue;
            }
            let q: Vec<f64> = y.iter().map(|v| v * t / g.norm(y)).collect();
            for nu in &bp.normals {
                prop_assert!((norm2(nu) - 1.0).abs() <= 1e-9);
                let gap: Vec<f64> = q.iter().zip(&bp.point).map(|(a, b)| a - b).collect();
                prop_assert!(dot(nu, &gap) <= 1e-9, "normal {nu:?} fails at {q:?}");
            }
        }
    }

    #[test]
    fn mediatrix_points_are_equidistant_both_ways(kind in 0u8..4, n in 2usize..4, p in 1.2f64..6.0, seed in 0u64..50,
                                                   pts in vecs(4, 4)) {
        let g = gauge(kind, n, p, seed);
        let (a, b, o, dir) = (&pts[0][..n], &pts[1][..n], &pts[2][..n], &pts[3][..n]);
        prop_assume!(norm2(dir) > 1e-6 && a != b);
        if let Some(z) = mediatrix_point(&g, a, b, o, dir).unwrap() {
            let (za, zb) = (g.dist(&z, a), g.dist(&z, b));
            prop_assert!((za - zb).abs() <= 1e-9 * za.max(1.0));
            if let Some(w) = mediatrix_point(&g, b, a, o, dir).unwrap() {
                prop_assert!((g.dist(&w, a) - g.dist(&w, b)).abs() <= 1e-9 * za.max(1.0));
            }
        }
    }
}
