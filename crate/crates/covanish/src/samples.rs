//! Seeded presheaf and sheaf samples on small sites.
//!
//! Random restriction tables are almost never functorial, so the generators
//! draw from constructions that are functorial by construction:
//! representables, constants, and finite products and coproducts of them.
//! The seed only chooses shapes, which keeps every sample lawful and makes
//! runs with equal seeds byte identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fibered::{to_family, SheafFamily, SplitFiberedSite, TotalSite};
use crate::fincat::{FinCat, FinSet, SetMap};
use crate::guard::Guard;
use crate::sheaves::{sheafify, Presheaf};
use crate::sites::Site;
use crate::Result;

/// Pointwise product of two presheaves. Pairs are encoded with the first
/// factor as the major index.
pub fn product_presheaf(cat: &FinCat, f: &Presheaf, g: &Presheaf, name: &str) -> Presheaf {
    let value: Vec<FinSet> =
        (0..cat.n_obj()).map(|o| FinSet { n: f.card(o) * g.card(o) }).collect();
    let res = (0..cat.n_mor())
        .map(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let table = (0..value[cod].n)
                .map(|idx| {
                    let a = idx / g.card(cod);
                    let b = idx % g.card(cod);
                    f.res[m].apply(a) * g.card(dom) + g.res[m].apply(b)
                })
                .collect();
            SetMap::new(value[cod].n, value[dom].n, table)
        })
        .collect();
    Presheaf { name: name.to_string(), value, res }
}

/// Pointwise disjoint union of two presheaves; elements of `f` come first.
pub fn coproduct_presheaf(cat: &FinCat, f: &Presheaf, g: &Presheaf, name: &str) -> Presheaf {
    let value: Vec<FinSet> =
        (0..cat.n_obj()).map(|o| FinSet { n: f.card(o) + g.card(o) }).collect();
    let res = (0..cat.n_mor())
        .map(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let table = (0..value[cod].n)
                .map(|x| {
                    if x < f.card(cod) {
                        f.res[m].apply(x)
                    } else {
                        f.card(dom) + g.res[m].apply(x - f.card(cod))
                    }
                })
                .collect();
            SetMap::new(value[cod].n, value[dom].n, table)
        })
        .collect();
    Presheaf { name: name.to_string(), value, res }
}

fn max_card(p: &Presheaf) -> usize {
    p.value.iter().map(|v| v.n).max().unwrap_or(0)
}

/// Seeded functorial presheaves with all value cardinalities at most
/// `cap`. Shapes that land over the cap are redrawn a bounded number of
/// times and then replaced by a constant, so the output always has exactly
/// `count` entries.
pub fn seeded_presheaves(
    cat: &FinCat,
    cap: usize,
    seed: u64,
    count: usize,
    guard: &Guard,
) -> Result<Vec<Presheaf>> {
    if cap == 0 {
        return Err(crate::Error::malformed("samples", &cat.name, "cap must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let mut chosen = None;
        for _ in 0..64 {
            guard.spend(1)?;
            let cand = draw(cat, cap, &mut rng);
            if max_card(&cand) <= cap {
                chosen = Some(cand);
                break;
            }
        }
        let mut p = chosen.unwrap_or_else(|| Presheaf::constant(cat, 1));
        p.name = format!("sample-{}({})", idx, p.name);
        p.validate(cat, guard)?;
        out.push(p);
    }
    Ok(out)
}

fn draw(cat: &FinCat, cap: usize, rng: &mut ChaCha8Rng) -> Presheaf {
    let rand_obj = |rng: &mut ChaCha8Rng| rng.gen_range(0..cat.n_obj());
    match rng.gen_range(0..5) {
        0 => Presheaf::representable(cat, rand_obj(rng)),
        1 => Presheaf::constant(cat, rng.gen_range(1..=cap)),
        2 => {
            let f = Presheaf::representable(cat, rand_obj(rng));
            let g = Presheaf::representable(cat, rand_obj(rng));
            let name = format!("{}x{}", f.name, g.name);
            product_presheaf(cat, &f, &g, &name)
        }
        3 => {
            let f = Presheaf::representable(cat, rand_obj(rng));
            let g = Presheaf::representable(cat, rand_obj(rng));
            let name = format!("{}+{}", f.name, g.name);
            coproduct_presheaf(cat, &f, &g, &name)
        }
        _ => {
            let f = Presheaf::representable(cat, rand_obj(rng));
            let g = Presheaf::constant(cat, rng.gen_range(1..=cap));
            let name = format!("{}+{}", f.name, g.name);
            coproduct_presheaf(cat, &f, &g, &name)
        }
    }
}

/// Sheafifications of the seeded presheaves on `site`. The cap applies to
/// the presheaves before sheafification.
pub fn seeded_sheaves(
    site: &Site,
    cap: usize,
    seed: u64,
    count: usize,
    guard: &Guard,
) -> Result<Vec<Presheaf>> {
    seeded_presheaves(&site.cat, cap, seed, count, guard)?
        .into_iter()
        .map(|p| Ok(sheafify(site, &p, guard)?.out))
        .collect()
}

/// Seeded presheaves on the total site of a split fibered site, split into
/// their fiber families.
pub fn seeded_families(
    s: &SplitFiberedSite,
    total: &TotalSite,
    cap: usize,
    seed: u64,
    count: usize,
    guard: &Guard,
) -> Result<Vec<SheafFamily>> {
    Ok(seeded_presheaves(&total.site.cat, cap, seed, count, guard)?
        .iter()
        .map(|p| to_family(s, total, p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibered::build_total_site;
    use crate::fixtures::{arrow_site, fibarrow, s1_site};
    use crate::sheaves::is_sheaf;

    fn g() -> Guard {
        Guard::new(1_000_000_000)
    }

    #[test]
    fn product_and_coproduct_cards_on_the_arrow() {
        let site = arrow_site(&g()).unwrap();
        let ya = Presheaf::representable(&site.cat, 0);
        let yb = Presheaf::representable(&site.cat, 1);
        let prod = product_presheaf(&site.cat, &ya, &yb, "p");
        assert_eq!(prod.card(0), 0);
        assert_eq!(prod.card(1), 1);
        prod.validate(&site.cat, &g()).unwrap();
        let cop = coproduct_presheaf(&site.cat, &ya, &yb, "c");
        assert_eq!(cop.card(0), 1);
        assert_eq!(cop.card(1), 2);
        cop.validate(&site.cat, &g()).unwrap();
    }

    #[test]
    fn seeded_presheaves_are_lawful_capped_and_deterministic() {
        let site = s1_site(&g()).unwrap();
        let a = seeded_presheaves(&site.cat, 3, 99, 12, &g()).unwrap();
        let b = seeded_presheaves(&site.cat, 3, 99, 12, &g()).unwrap();
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert!(x.same_tables(y));
            assert!(x.value.iter().all(|v| v.n <= 3));
        }
        let c = seeded_presheaves(&site.cat, 3, 100, 12, &g()).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| !x.same_tables(y)));
    }

    #[test]
    fn seeded_sheaves_pass_the_sheaf_check() {
        let s = fibarrow(&g()).unwrap();
        let total = build_total_site(&s, &g()).unwrap();
        for sh in seeded_sheaves(&total.site, 3, 7, 10, &g()).unwrap() {
            assert!(is_sheaf(&total.site, &sh, &g()).unwrap().ok);
        }
        let fams = seeded_families(&s, &total, 3, 7, 10, &g()).unwrap();
        assert_eq!(fams.len(), 10);
        for fam in &fams {
            fam.validate(&s, &g()).unwrap();
        }
    }
}
