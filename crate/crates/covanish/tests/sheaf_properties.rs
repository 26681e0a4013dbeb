//! Randomized laws for sheafification, the site-morphism adjunction, and
//! direct images of sheaves.

use proptest::prelude::*;

use covanish::fincat::Functor;
use covanish::fixtures::{arrow_site, coev_arrow_parts, pt_site, s1_site};
use covanish::oriented::{build_covanishing_site, conearby_functor};
use covanish::samples::{seeded_presheaves, seeded_sheaves};
use covanish::sheaves::{
    adjunction_unit, direct_image, direct_image_mor, inverse_image, is_sheaf, presheaf_homs,
    sheafify,
};
use covanish::sites::Site;
use covanish::Guard;

fn g() -> Guard {
    Guard::new(1_000_000_000)
}

fn fixture_site(which: usize, guard: &Guard) -> Site {
    match which % 2 {
        0 => arrow_site(guard).unwrap(),
        _ => s1_site(guard).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sheafify_is_idempotent_on_seeded_presheaves(which in 0usize..2, seed in any::<u64>()) {
        let guard = g();
        let site = fixture_site(which, &guard);
        for p in seeded_presheaves(&site.cat, 3, seed, 3, &guard).unwrap() {
            let first = sheafify(&site, &p, &guard).unwrap();
            let second = sheafify(&site, &first.out, &guard).unwrap();
            prop_assert!(second.unit.is_iso());
        }
    }

    #[test]
    fn adjunction_hom_counts_match_on_seeded_pairs(seed in any::<u64>()) {
        let guard = g();
        let src = pt_site(&guard).unwrap();
        let tgt = arrow_site(&guard).unwrap();
        let at_a = Functor::new("at_a", vec![0], vec![0]);
        let gs = seeded_presheaves(&src.cat, 3, seed, 3, &guard).unwrap();
        let fs = seeded_sheaves(&tgt, 2, seed.wrapping_add(1), 3, &guard).unwrap();
        for gpre in &gs {
            let inv = inverse_image(&at_a, &src, &tgt, gpre, &guard).unwrap();
            let unit = adjunction_unit(&at_a, &tgt.cat, gpre, &inv);
            for fsh in &fs {
                let dir = direct_image(&at_a, &src.cat, &tgt.cat, fsh);
                let lhs = presheaf_homs(&tgt.cat, &inv.out, fsh, &guard).unwrap();
                let rhs = presheaf_homs(&src.cat, gpre, &dir, &guard).unwrap();
                prop_assert_eq!(lhs.len(), rhs.len());
                // Mates of distinct morphisms stay distinct.
                let mut mates: Vec<_> = lhs
                    .iter()
                    .map(|h| unit.then(&direct_image_mor(&at_a, &src.cat, h), "mate").comp)
                    .collect();
                mates.sort();
                mates.dedup();
                prop_assert_eq!(mates.len(), lhs.len());
            }
        }
    }

    #[test]
    fn direct_image_of_a_sheaf_is_a_sheaf_along_the_conearby_map(seed in any::<u64>()) {
        let guard = g();
        let (x, y, f_plus) = coev_arrow_parts(&guard).unwrap();
        let d = build_covanishing_site(&x, &y, &f_plus, &guard).unwrap();
        let psi = conearby_functor(&d, &guard).unwrap();
        for fsh in seeded_sheaves(&d.y, 3, seed, 4, &guard).unwrap() {
            let moved = psi.direct(&d.site, &d.y, &fsh);
            prop_assert!(is_sheaf(&d.site, &moved, &guard).unwrap().ok);
        }
    }
}
