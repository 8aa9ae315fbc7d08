use std::f64::consts::FRAC_PI_4;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use selfcontract::linalg::{angle, normalize, random_unit, Subspace};
use selfcontract::norms::Gauge;
use selfcontract::partition::{admissible_indices, build_partition, c_k, compute_constants, Estimates};

fn gauge(kind: u8, n: usize, seed: u64) -> Gauge {
    match kind % 4 {
        0 => Gauge::euclidean(n),
        1 => Gauge::max_norm(n),
        2 => Gauge::pnorm(n, 3.0).unwrap(),
        _ => Gauge::random_symmetric_polytope(n, 2, seed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn classified_patch_has_a_delta_close_normal(kind in 0u8..4, n in 1usize..5, seed in 0u64..100,
                                                 delta in 0.2f64..0.7, d in prop::collection::vec(-1.0f64..1.0, 4)) {
        let g = gauge(kind, n, seed);
        let Some(d) = normalize(&d[..n]) else { return Ok(()) };
        let part = build_partition(&g, delta).unwrap();
        let id = part.classify_direction(&d).unwrap();
        prop_assert!(part.in_cone(&id, &d).unwrap());
        let nu = part.normal(&id).unwrap();
        let bp = g.boundary_point(&d).unwrap();
        prop_assert!(bp.normals.iter().any(|m| angle(m, &nu) <= delta + 1e-9));
    }

    #[test]
    fn polytope_patch_count_is_facet_count(n in 1usize..5, extra in 0usize..4, seed in 0u64..100) {
        let g = Gauge::random_symmetric_polytope(n, extra, seed);
        let part = build_partition(&g, 0.3).unwrap();
        prop_assert_eq!(part.count_exact(), Some(g.facets().unwrap().len() as u128));
    }

    #[test]
    fn constants_follow_their_formulas(n in 1usize..7, eps0 in 0.05f64..1.2, xi_bar in 0.0f64..1.4,
                                       eps1 in 0.01f64..0.5, eps_bar in 0.01f64..0.7) {
        let g = Gauge::euclidean(n);
        let est = Estimates { eps0, xi_bar, eps1, eps_bar, seed: 0, budget: 0 };
        let c = compute_constants(&g, n, &est).unwrap();
        prop_assert_eq!(c.xi, xi_bar / 2.0 + FRAC_PI_4);
        prop_assert_eq!(c.delta_bar, FRAC_PI_4 - xi_bar / 2.0);
        // C_1 = 1 and C_{k+1} = (1 + tan ζ + sec ζ) C_k
        let step = 1.0 + c.xi.tan() + 1.0 / c.xi.cos();
        let mut ck = 1.0;
        for k in 1..=n {
            prop_assert!((c_k(k, c.xi) - ck).abs() <= 1e-12 * ck);
            ck *= step;
        }
        let want = if n == 1 {
            c.delta_bar
        } else {
            let m = 8.0 * (n as f64 - 1.0) * c.c_of_zeta(c.xi);
            c.delta_bar
                .min((eps0.sin() / m).atan())
                .min((1.0 / (m * (3.0 / eps1.tan() + 8.0 / eps1.sin()))).atan())
        };
        prop_assert!((c.delta0 - want).abs() <= 1e-15 * want.max(1e-300));
        prop_assert!(c.delta0 > 0.0 && c.delta0 <= c.delta_bar);
    }

    #[test]
    fn admissible_sets_are_nonempty(kind in 0u8..4, n in 2usize..5, k in 1usize..4, seed in 0u64..100) {
        let g = gauge(kind, n, seed);
        let part = build_partition(&g, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<Vec<f64>> = (0..k.min(n - 1)).map(|_| random_unit(&mut rng, n)).collect();
        let sub = Subspace::span(n, &vs).unwrap();
        prop_assume!(sub.dim() > 0);
        let ids = admissible_indices(&part, &sub, 0.1).unwrap();
        prop_assert!(!ids.is_empty());
        // the exit patch of any direction of the subspace is admissible
        let d = sub.basis[0].clone();
        prop_assert!(ids.contains(&part.classify_direction(&d).unwrap()));
    }
}
