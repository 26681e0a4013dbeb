//! Stalks at certified points preserve finite limits, re-verified on seeded
//! cospans of presheaf maps.

use proptest::prelude::*;

use covanish::fincat::{CatBuilder, FinCat, Functor, SetMap};
use covanish::fixtures::arrow_site;
use covanish::points::{point, stalk_fiber_product_check, stalk_terminal_check, Point};
use covanish::samples::{coproduct_presheaf, seeded_presheaves};
use covanish::sheaves::{presheaf_homs, Presheaf, PsMor};
use covanish::sites::Site;
use covanish::Guard;

fn g() -> Guard {
    Guard::new(1_000_000_000)
}

fn single_shape(guard: &Guard) -> FinCat {
    let mut b = CatBuilder::new("N1");
    b.obj("n");
    b.build(&[], guard).unwrap()
}

fn points_of(site: &Site, guard: &Guard) -> Vec<Point> {
    vec![
        point(
            "generic",
            site.cat.clone(),
            Functor::identity(&site.cat, "nbhd"),
            site,
            guard,
        )
        .unwrap(),
        point(
            "at-b",
            single_shape(guard),
            Functor::new("nbhd", vec![1], vec![site.cat.identity(1)]),
            site,
            guard,
        )
        .unwrap(),
    ]
}

/// A cospan into the coproduct by the two inclusions: always available as a
/// fallback when no maps into a seeded target exist.
fn inclusion_cospan(cat: &FinCat, a: &Presheaf, b: &Presheaf) -> (Presheaf, PsMor, PsMor) {
    let c = coproduct_presheaf(cat, a, b, "a+b");
    let left = PsMor {
        name: "inl".to_string(),
        comp: (0..cat.n_obj())
            .map(|o| SetMap::new(a.card(o), c.card(o), (0..a.card(o)).collect()))
            .collect(),
    };
    let right = PsMor {
        name: "inr".to_string(),
        comp: (0..cat.n_obj())
            .map(|o| SetMap::new(b.card(o), c.card(o), (0..b.card(o)).map(|x| a.card(o) + x).collect()))
            .collect(),
    };
    (c, left, right)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stalks_preserve_terminals_and_fiber_products(seed in any::<u64>(), pick in 0usize..4) {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        let ps = seeded_presheaves(&site.cat, 2, seed, 3, &guard).unwrap();
        let (a, b, c0) = (&ps[0], &ps[1], &ps[2]);
        let into_c0 = (
            presheaf_homs(&site.cat, a, c0, &guard).unwrap(),
            presheaf_homs(&site.cat, b, c0, &guard).unwrap(),
        );
        let (c, f, gm) = if !into_c0.0.is_empty() && !into_c0.1.is_empty() {
            let f = into_c0.0[pick % into_c0.0.len()].clone();
            let gm = into_c0.1[pick % into_c0.1.len()].clone();
            (c0.clone(), f, gm)
        } else {
            inclusion_cospan(&site.cat, a, b)
        };
        for pt in points_of(&site, &guard) {
            prop_assert!(stalk_terminal_check(&site, &pt, &guard).unwrap());
            prop_assert!(stalk_fiber_product_check(&site, &pt, a, b, &c, &f, &gm, &guard).unwrap());
        }
    }
}
