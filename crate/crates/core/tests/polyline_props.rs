use proptest::prelude::*;

use selfcontract::generators::greedy_random;
use selfcontract::linalg::{dist2, dot, normalize, Subspace};
use selfcontract::norms::Gauge;
use selfcontract::polyline::{
    extract_alternating, is_self_contracted, is_self_contracted_naive, length, projected_length, Polyline,
};

fn gauge(kind: u8, n: usize, seed: u64) -> Gauge {
    match kind % 4 {
        0 => Gauge::euclidean(n),
        1 => Gauge::max_norm(n),
        2 => Gauge::pnorm(n, 3.0).unwrap(),
        _ => Gauge::random_symmetric_polytope(n, 2, seed),
    }
}

fn poly(n: usize, r: usize) -> impl Strategy<Value = Polyline> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), r).prop_map(|p| Polyline::new(p).unwrap())
}

fn reflect(v: &[f64], x: &[f64]) -> Vec<f64> {
    let c = 2.0 * dot(v, x);
    x.iter().zip(v).map(|(a, b)| a - c * b).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn fast_and_naive_checkers_agree(kind in 0u8..4, n in 1usize..5, r in 1usize..30, seed in 0u64..1000,
                                     random in any::<bool>()) {
        let g = gauge(kind, n, seed);
        let p = if random || r < 2 {
            let mut rng_pts = Vec::new();
            let mut s = seed;
            for _ in 0..r {
                rng_pts.push((0..n).map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                }).collect());
            }
            Polyline::new(rng_pts).unwrap()
        } else {
            greedy_random(&g, n, r, seed, 1.0).unwrap().poly
        };
        prop_assert_eq!(is_self_contracted(&p, &g).unwrap(), is_self_contracted_naive(&p, &g).unwrap());
    }

    #[test]
    fn subvectors_stay_self_contracted(kind in 0u8..4, n in 1usize..4, r in 2usize..25, seed in 0u64..1000,
                                       mask in any::<u32>()) {
        let g = gauge(kind, n, seed);
        let p = greedy_random(&g, n, r, seed, 1.0).unwrap().poly;
        let idx: Vec<usize> = (0..p.len()).filter(|&i| mask >> (i % 32) & 1 == 1).collect();
        prop_assume!(!idx.is_empty());
        let sub = p.subvector(&idx).unwrap();
        prop_assert!(is_self_contracted(&sub, &g).unwrap().holds());
    }

    #[test]
    fn spread_is_bounded_by_ball_diameter(kind in 0u8..4, n in 1usize..4, r in 2usize..25, seed in 0u64..1000) {
        let g = gauge(kind, n, seed);
        let p = greedy_random(&g, n, r, seed, 1.0).unwrap().poly;
        // every point lies in the gauge ball of radius d(A_r, A_1) around A_r
        let radius = g.dist(p.last(), p.first());
        let mut spread = 0.0f64;
        for a in p.points() {
            for b in p.points() {
                spread = spread.max(dist2(a, b));
            }
        }
        prop_assert!(spread <= g.diameter() * radius + 1e-9, "{spread} > {} · {radius}", g.diameter());
    }

    #[test]
    fn alternating_extraction_keeps_variation(n in 1usize..4, p in poly(3, 12),
                                              axis in prop::collection::vec(-1.0f64..1.0, 3)) {
        let pts: Vec<Vec<f64>> = p.points().iter().map(|q| q[..n].to_vec()).collect();
        let p = Polyline::new(pts).unwrap();
        let Some(axis) = normalize(&axis[..n]) else { return Ok(()) };
        let line = Subspace::line(&axis).unwrap();
        let out = extract_alternating(&p, &line).unwrap();
        let sub = p.subvector(&out).unwrap();
        prop_assert!((projected_length(&sub, &line) - projected_length(&p, &line)).abs() <= 1e-12);
        let x: Vec<f64> = out.iter().map(|&i| dot(&axis, p.point(i))).collect();
        for w in x.windows(3) {
            prop_assert!((w[1] - w[0]) * (w[2] - w[1]) < 0.0);
        }
    }

    #[test]
    fn length_is_isometry_invariant(p in poly(3, 10), shift in prop::collection::vec(-10.0f64..10.0, 3),
                                    v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let Some(v) = normalize(&v) else { return Ok(()) };
        let moved = Polyline::new(
            p.points().iter().map(|q| reflect(&v, q).iter().zip(&shift).map(|(a, b)| a + b).collect()).collect(),
        )
        .unwrap();
        prop_assert!((length(&moved) - length(&p)).abs() <= 1e-9 * length(&p).max(1.0));
        let e = Gauge::euclidean(3);
        prop_assert_eq!(
            is_self_contracted(&moved, &e).unwrap().holds(),
            is_self_contracted(&p, &e).unwrap().holds()
        );
    }
}
