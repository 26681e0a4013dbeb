//! Properties of total sites of split fibered sites: existence and
//! projection of fiber products, the fiberwise sheaf criterion on seeded
//! presheaves, and fiber components of finite limits.

use proptest::prelude::*;

use covanish::fibered::{build_total_site, fiberwise_sheaf_check, to_family, TotalSite};
use covanish::fincat::{fiber_product, FinCat, FinSet, MorId, ObjId, SetMap};
use covanish::fixtures::{fibarrow, fibemptycover};
use covanish::samples::{product_presheaf, seeded_presheaves, seeded_sheaves};
use covanish::sheaves::{is_sheaf, presheaf_homs, Presheaf, PsMor};
use covanish::Guard;

fn g() -> Guard {
    Guard::new(1_000_000_000)
}

fn totals(guard: &Guard) -> Vec<(covanish::fibered::SplitFiberedSite, TotalSite)> {
    [fibarrow(guard).unwrap(), fibemptycover(guard).unwrap()]
        .into_iter()
        .map(|s| {
            let total = build_total_site(&s, guard).unwrap();
            (s, total)
        })
        .collect()
}

/// Independent limiting-cone oracle: the cone commutes and every commuting
/// cone factors through it by exactly one morphism.
fn is_limiting(cat: &FinCat, f: MorId, g: MorId, apex: ObjId, p: MorId, q: MorId) -> bool {
    let through = cat.try_compose(f, p);
    if through.is_none() || through != cat.try_compose(g, q) {
        return false;
    }
    for x in 0..cat.n_obj() {
        for a in cat.hom(x, cat.dom(f)) {
            for b in cat.hom(x, cat.dom(g)) {
                if cat.try_compose(f, a) != cat.try_compose(g, b)
                    || cat.try_compose(f, a).is_none()
                {
                    continue;
                }
                let mediators = cat
                    .hom(x, apex)
                    .into_iter()
                    .filter(|&h| {
                        cat.try_compose(p, h) == Some(a) && cat.try_compose(q, h) == Some(b)
                    })
                    .count();
                if mediators != 1 {
                    return false;
                }
            }
        }
    }
    true
}

/// Pointwise equalizer of two parallel presheaf maps, as a subpresheaf of
/// the source.
fn equalizer(cat: &FinCat, f: &Presheaf, h1: &PsMor, h2: &PsMor) -> Presheaf {
    let members: Vec<Vec<usize>> = (0..cat.n_obj())
        .map(|o| {
            (0..f.card(o)).filter(|&x| h1.comp[o].apply(x) == h2.comp[o].apply(x)).collect()
        })
        .collect();
    let res = (0..cat.n_mor())
        .map(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let table = members[cod]
                .iter()
                .map(|&x| members[dom].binary_search(&f.res[m].apply(x)).unwrap())
                .collect();
            SetMap::new(members[cod].len(), members[dom].len(), table)
        })
        .collect();
    Presheaf {
        name: "eq".to_string(),
        value: members.iter().map(|m| FinSet { n: m.len() }).collect(),
        res,
    }
}

#[test]
fn total_sites_have_all_fiber_products_and_the_projection_preserves_them() {
    let guard = g();
    for (s, total) in totals(&guard) {
        let cat = &total.site.cat;
        for f in 0..cat.n_mor() {
            for gm in 0..cat.n_mor() {
                if cat.cod(f) != cat.cod(gm) {
                    continue;
                }
                let fp = fiber_product(cat, f, gm, &guard).unwrap();
                assert!(is_limiting(cat, f, gm, fp.apex, fp.p, fp.q));
                let proj = &total.proj;
                assert!(is_limiting(
                    &s.base.cat,
                    proj.mo(f),
                    proj.mo(gm),
                    proj.ob(fp.apex),
                    proj.mo(fp.p),
                    proj.mo(fp.q),
                ));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn covanishing_sheafhood_matches_the_fiberwise_criterion(seed in any::<u64>(), fixture in 0usize..2) {
        let guard = g();
        let items = totals(&guard);
        let (s, total) = &items[fixture];
        for p in seeded_presheaves(&total.site.cat, 3, seed, 4, &guard).unwrap() {
            let direct = is_sheaf(&total.site, &p, &guard).unwrap().ok;
            let fam = to_family(s, total, &p);
            let fiberwise = fiberwise_sheaf_check(s, &fam, &guard).unwrap().ok;
            prop_assert_eq!(direct, fiberwise);
        }
    }

    #[test]
    fn fiber_components_of_products_and_equalizers_are_computed_fiberwise(seed in any::<u64>(), fixture in 0usize..2) {
        let guard = g();
        let items = totals(&guard);
        let (s, total) = &items[fixture];
        let cat = &total.site.cat;
        let shs = seeded_sheaves(&total.site, 2, seed, 2, &guard).unwrap();
        let (f, q) = (&shs[0], &shs[1]);

        let prod = product_presheaf(cat, f, q, "fxq");
        let prod_fam = to_family(s, total, &prod);
        let f_fam = to_family(s, total, f);
        let q_fam = to_family(s, total, q);
        for i in 0..s.base.cat.n_obj() {
            let pointwise =
                product_presheaf(&s.fibers[i].cat, &f_fam.fibers[i], &q_fam.fibers[i], "fib");
            prop_assert!(prod_fam.fibers[i].same_tables(&pointwise));
        }

        let homs = presheaf_homs(cat, f, q, &guard).unwrap();
        if homs.len() >= 2 {
            let eq = equalizer(cat, f, &homs[0], &homs[1]);
            let eq_fam = to_family(s, total, &eq);
            for i in 0..s.base.cat.n_obj() {
                let incl = &total.fiber_incl[i];
                let h1 = PsMor {
                    name: "h1".to_string(),
                    comp: incl.obj_map.iter().map(|&o| homs[0].comp[o].clone()).collect(),
                };
                let h2 = PsMor {
                    name: "h2".to_string(),
                    comp: incl.obj_map.iter().map(|&o| homs[1].comp[o].clone()).collect(),
                };
                let pointwise = equalizer(&s.fibers[i].cat, &f_fam.fibers[i], &h1, &h2);
                prop_assert!(eq_fam.fibers[i].same_tables(&pointwise));
            }
        }
    }
}
