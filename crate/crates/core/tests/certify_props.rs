use std::sync::OnceLock;

use proptest::prelude::*;

use selfcontract::certify::{
    certify_easycase, check_certificate, horizontal_block_split, Certificate, GeneralSetup, FALLBACK_TAG,
};
use selfcontract::generators::greedy_random;
use selfcontract::linalg::{normalize, Subspace};
use selfcontract::norms::Gauge;
use selfcontract::polyline::length;

fn setups() -> &'static Vec<GeneralSetup> {
    static S: OnceLock<Vec<GeneralSetup>> = OnceLock::new();
    S.get_or_init(|| {
        [
            Gauge::max_norm(2),
            Gauge::euclidean(3),
            Gauge::pnorm(2, 3.0).unwrap(),
            Gauge::random_symmetric_polytope(3, 2, 5),
        ]
        .iter()
        .map(|g| GeneralSetup::new(g, 2000, 7).unwrap())
        .collect()
    })
}

fn claim_holds(c: &Certificate) -> bool {
    c.root_claim.effective_c * c.root_claim.chord >= length(&c.polylines[0]) - 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn easy_certificates_are_sound_and_fallback_free(r in 2usize..40, seed in 0u64..10_000) {
        let p = greedy_random(&Gauge::max_norm(2), 2, r, seed, 1.0).unwrap().poly;
        let c = certify_easycase(&p).unwrap();
        prop_assert!(check_certificate(&c, c.tol).ok);
        prop_assert!(claim_holds(&c));
        let mut tags_ok = true;
        c.root.walk(&mut Vec::new(), &mut |_, s| tags_ok &= !s.lemma_tag.is_empty() && s.lemma_tag != FALLBACK_TAG);
        prop_assert!(tags_ok);
    }

    #[test]
    fn general_certificates_are_sound(which in 0usize..4, r in 2usize..30, seed in 0u64..10_000) {
        let setup = &setups()[which];
        let n = setup.gauge.dim();
        let p = greedy_random(&setup.gauge, n, r, seed, 1.0).unwrap().poly;
        prop_assume!(p.chord() > 0.0);
        let c = setup.certify(&p, None).unwrap();
        let rep = check_certificate(&c, c.tol);
        prop_assert!(rep.ok, "{:?}", rep.failures);
        prop_assert!(claim_holds(&c));
        if setup.gauge.is_max_norm_plane() {
            prop_assert_eq!(c.stats.fallback_nodes, 0);
        }
    }

    #[test]
    fn block_split_keeps_window_ends(n in 2usize..4, r in 2usize..30, seed in 0u64..10_000,
                                     axis in prop::collection::vec(-1.0f64..1.0, 3), eps in 0.05f64..0.6) {
        let g = Gauge::euclidean(n);
        let p = greedy_random(&g, n, r, seed, 1.0).unwrap().poly;
        let Some(axis) = normalize(&axis[..n]) else { return Ok(()) };
        let window: Vec<usize> = (0..p.len()).collect();
        let split = horizontal_block_split(&p, &window, &Subspace::line(&axis).unwrap(), eps).unwrap();
        prop_assert_eq!(split.lambda_tilde.first(), window.first());
        prop_assert_eq!(split.lambda_tilde.last(), window.last());
        prop_assert_eq!(split.lambda.first(), window.first());
        prop_assert_eq!(split.lambda.last(), window.last());
        let sub = p.subvector(&split.lambda_tilde).unwrap();
        prop_assert_eq!(sub.chord(), p.chord());
    }
}
