//! Canonical small sites and fibered sites used across the test suites and
//! shipped as CLI workspace fixtures. Each constructor builds and validates
//! from scratch so tests can rely on the exact object and morphism ids
//! documented here.

use crate::fibered::SplitFiberedSite;
use crate::fincat::{CatBuilder, FinCat, Functor};
use crate::guard::Guard;
use crate::sites::{Coverage, Site};
use crate::Result;

/// One object, one identity, chaotic topology.
pub fn pt_site(guard: &Guard) -> Result<Site> {
    let mut b = CatBuilder::new("PT");
    b.obj("e");
    let cat = b.build(&[], guard)?;
    Site::chaotic(cat, guard)
}

/// One object whose empty family covers: only the empty sheaf condition,
/// forcing every sheaf value to a single point.
pub fn pt_empty_site(guard: &Guard) -> Result<Site> {
    let mut b = CatBuilder::new("PTE");
    b.obj("e");
    let cat = b.build(&[], guard)?;
    let mut cov = Coverage::new(1);
    cov.add_family(0, vec![]);
    Site::from_coverage(cat, &cov, guard)
}

/// Objects a, b with one arrow `u: b -> a`. Object ids: a = 0, b = 1;
/// morphism ids: id_a = 0, id_b = 1, u = 2.
pub fn arrow_cat(guard: &Guard) -> Result<FinCat> {
    let mut b = CatBuilder::new("ARROW");
    let a = b.obj("a");
    let bb = b.obj("b");
    b.arrow("u", bb, a);
    b.build(&[], guard)
}

/// The arrow category where `{u}` covers a.
pub fn arrow_site(guard: &Guard) -> Result<Site> {
    let cat = arrow_cat(guard)?;
    let mut cov = Coverage::new(2);
    cov.add_family(0, vec![2]);
    Site::from_coverage(cat, &cov, guard)
}

/// The arrow category with the chaotic topology.
pub fn arrow_chaotic_site(guard: &Guard) -> Result<Site> {
    Site::chaotic(arrow_cat(guard)?, guard)
}

/// Cospan shape `b -> a <- c` with `{b -> a, c -> a}` covering a. The two
/// legs have no fiber product; negative control for constructions that
/// require one. Object ids: a = 0, b = 1, c = 2; morphism ids: identities
/// 0..3, `p: b -> a` = 3, `q: c -> a` = 4.
pub fn vee_site(guard: &Guard) -> Result<Site> {
    let mut b = CatBuilder::new("VEE");
    let a = b.obj("a");
    let bb = b.obj("b");
    let c = b.obj("c");
    b.arrow("p", bb, a);
    b.arrow("q", c, a);
    let cat = b.build(&[], guard)?;
    let mut cov = Coverage::new(3);
    cov.add_family(0, vec![3, 4]);
    Site::from_coverage(cat, &cov, guard)
}

/// Six open sets of a circle: the whole space t, two big arcs u0 and u1
/// covering it, their intersection u01, and its two components e and w
/// covering it. A poset under inclusion.
///
/// Object ids: t = 0, u0 = 1, u1 = 2, u01 = 3, e = 4, w = 5. The covers are
/// `{u0, u1}` over t and `{e, w}` over u01; u01 is the fiber product
/// `u0 x_t u1`, while e and w have no intersection object.
pub fn s1_site(guard: &Guard) -> Result<Site> {
    let mut b = CatBuilder::new("S1");
    let t = b.obj("t");
    let u0 = b.obj("u0");
    let u1 = b.obj("u1");
    let u01 = b.obj("u01");
    let e = b.obj("e");
    let w = b.obj("w");
    let m_u0_t = b.arrow("u0<t", u0, t);
    let m_u1_t = b.arrow("u1<t", u1, t);
    b.arrow("u01<t", u01, t);
    b.arrow("e<t", e, t);
    b.arrow("w<t", w, t);
    b.arrow("u01<u0", u01, u0);
    b.arrow("e<u0", e, u0);
    b.arrow("w<u0", w, u0);
    b.arrow("u01<u1", u01, u1);
    b.arrow("e<u1", e, u1);
    b.arrow("w<u1", w, u1);
    let m_e_u01 = b.arrow("e<u01", e, u01);
    let m_w_u01 = b.arrow("w<u01", w, u01);
    let cat = b.build_thin(guard)?;
    let mut cov = Coverage::new(6);
    cov.add_family(t, vec![6 + m_u0_t, 6 + m_u1_t]);
    cov.add_family(u01, vec![6 + m_e_u01, 6 + m_w_u01]);
    Site::from_coverage(cat, &cov, guard)
}

/// Fibered site over the arrow: the fiber over a is a one-arrow site
/// (`v: A1 -> A0`, `{v}` covers A0), the fiber over b is a chaotic point,
/// and the pullback along u collapses everything onto that point.
///
/// Total category ids: objects a/A0 = 0, a/A1 = 1, b/B0 = 2; morphisms
/// identities 0..3, the vertical `v` = 3, `c0: b/B0 -> a/A0` = 4,
/// `c1: b/B0 -> a/A1` = 5, with `c0 = v . c1`.
pub fn fibarrow(guard: &Guard) -> Result<SplitFiberedSite> {
    let base = arrow_site(guard)?;
    let mut b = CatBuilder::new("Ea");
    let a0 = b.obj("A0");
    let a1 = b.obj("A1");
    b.arrow("v", a1, a0);
    let ea_cat = b.build(&[], guard)?;
    let mut cov = Coverage::new(2);
    cov.add_family(a0, vec![2]);
    let ea = Site::from_coverage(ea_cat, &cov, guard)?;
    let mut b = CatBuilder::new("Eb");
    b.obj("B0");
    let eb = Site::chaotic(b.build(&[], guard)?, guard)?;
    let pullback = vec![
        Functor::identity(&ea.cat, "id_a^+"),
        Functor::identity(&eb.cat, "id_b^+"),
        Functor::new("u^+", vec![0, 0], vec![0, 0, 0]),
    ];
    let s = SplitFiberedSite { name: "FIBARROW".to_string(), base, fibers: vec![ea, eb], pullback };
    s.validate(guard)?;
    Ok(s)
}

/// Fibered site over the chaotic arrow whose fibers are points covered by
/// the empty family. The covanishing topology makes every sieve covering,
/// so the only sheaves are the singleton-valued ones.
pub fn fibemptycover(guard: &Guard) -> Result<SplitFiberedSite> {
    let base = arrow_chaotic_site(guard)?;
    let ea = pt_empty_site(guard)?;
    let eb = pt_empty_site(guard)?;
    let pullback = vec![
        Functor::identity(&ea.cat, "id_a^+"),
        Functor::identity(&eb.cat, "id_b^+"),
        Functor::new("u^+", vec![0], vec![0]),
    ];
    let s = SplitFiberedSite {
        name: "FIBEMPTYCOVER".to_string(),
        base,
        fibers: vec![ea, eb],
        pullback,
    };
    s.validate(guard)?;
    Ok(s)
}

/// Cospan of sites for the oriented construction: X and S are chaotic
/// points, Y is the arrow site, the left leg is the identity and the right
/// leg picks the codomain object a.
///
/// Returns `(x, y, s, f_plus, g_plus)` with `f_plus: S -> X` and
/// `g_plus: S -> Y`.
pub fn cospan_parts(guard: &Guard) -> Result<(Site, Site, Site, Functor, Functor)> {
    let x = pt_site(guard)?;
    let y = arrow_site(guard)?;
    let s = pt_site(guard)?;
    let f_plus = Functor::identity(&s.cat, "f^+");
    let g_plus = Functor::new("g^+", vec![0], vec![0]);
    Ok((x, y, s, f_plus, g_plus))
}

/// Cospan with all three legs on the arrow site: the left leg is constant
/// at a, the right leg is the identity. Its oriented site has six objects.
pub fn triple_parts(guard: &Guard) -> Result<(Site, Site, Site, Functor, Functor)> {
    let x = arrow_site(guard)?;
    let y = arrow_site(guard)?;
    let s = arrow_site(guard)?;
    let f_plus = Functor::new("f^+", vec![0, 0], vec![0, 0, 0]);
    let g_plus = Functor::identity(&s.cat, "g^+");
    Ok((x, y, s, f_plus, g_plus))
}

/// Identity cospan on the arrow site, used for the pair construction whose
/// covering types are both nondegenerate.
pub fn coev_arrow_parts(guard: &Guard) -> Result<(Site, Site, Functor)> {
    let x = arrow_site(guard)?;
    let y = arrow_site(guard)?;
    let f_plus = Functor::identity(&x.cat, "f^+");
    Ok((x, y, f_plus))
}

/// Comparison functor from the total category of [`fibarrow`] onto the
/// arrow site that sends each fiber object to its underlying base object in
/// the slice picture: a/A0 is the whole base, a/A1 and b/B0 sit over b.
/// Every fiber unit along it is an isomorphism.
pub fn fibarrow_psi_good(total_cat: &FinCat, guard: &Guard) -> Result<(Site, Functor)> {
    let x = arrow_site(guard)?;
    let psi = Functor::new("psi", vec![0, 1, 1], vec![0, 1, 1, 2, 2, 1]);
    crate::fincat::validate_functor(total_cat, &x.cat, &psi, guard)?;
    Ok((x, psi))
}

/// The base projection of [`fibarrow`] as a comparison functor. The fiber
/// unit over a fails to be an isomorphism, so hypothesis-guarded theorems
/// must report not-applicable rather than run on it.
pub fn fibarrow_psi_bad(total_cat: &FinCat, guard: &Guard) -> Result<(Site, Functor)> {
    let x = arrow_site(guard)?;
    let psi = Functor::new("psi-proj", vec![0, 0, 1], vec![0, 0, 1, 0, 2, 2]);
    crate::fincat::validate_functor(total_cat, &x.cat, &psi, guard)?;
    Ok((x, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibered::{build_total_site, total_topology};
    use crate::sites::{compare_topologies, Comparison};
    use std::collections::BTreeSet;

    fn g() -> Guard {
        Guard::default()
    }

    fn sieves(site: &Site, o: usize) -> Vec<Vec<usize>> {
        site.top.covering[o].iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn fixtures_validate() {
        let g = g();
        pt_site(&g).unwrap();
        pt_empty_site(&g).unwrap();
        arrow_site(&g).unwrap();
        arrow_chaotic_site(&g).unwrap();
        vee_site(&g).unwrap();
        s1_site(&g).unwrap();
        fibarrow(&g).unwrap();
        fibemptycover(&g).unwrap();
        cospan_parts(&g).unwrap();
        triple_parts(&g).unwrap();
        coev_arrow_parts(&g).unwrap();
    }

    #[test]
    fn s1_shape() {
        let g = g();
        let s = s1_site(&g).unwrap();
        assert_eq!(s.cat.n_obj(), 6);
        assert_eq!(s.cat.n_mor(), 19);
        // u01 is the fiber product of the two big arcs over t.
        let fp = crate::fincat::try_fiber_product(&s.cat, 6, 7, &g).unwrap().unwrap();
        assert_eq!(fp.apex, 3);
        // e and w have no fiber product over u01.
        assert!(crate::fincat::try_fiber_product(&s.cat, 17, 18, &g).unwrap().is_none());
    }

    #[test]
    fn vee_has_no_fiber_product() {
        let g = g();
        let s = vee_site(&g).unwrap();
        assert!(crate::fincat::try_fiber_product(&s.cat, 3, 4, &g).unwrap().is_none());
    }

    #[test]
    fn fibarrow_total_structure() {
        let g = g();
        let s = fibarrow(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        let cat = &total.site.cat;
        assert_eq!(cat.n_obj(), 3);
        assert_eq!(cat.n_mor(), 6);
        assert_eq!(cat.obj_name(0), "a/A0");
        assert_eq!(cat.obj_name(1), "a/A1");
        assert_eq!(cat.obj_name(2), "b/B0");
        // v = 3, c0 = 4, c1 = 5, with c0 = v . c1.
        assert_eq!(cat.dom(3), 1);
        assert_eq!(cat.cod(3), 0);
        assert_eq!(cat.dom(4), 2);
        assert_eq!(cat.cod(4), 0);
        assert_eq!(cat.dom(5), 2);
        assert_eq!(cat.cod(5), 1);
        assert_eq!(cat.compose(3, 5).unwrap(), 4);
        // Projection sends the verticals to identities and the rest to u.
        assert_eq!(total.proj.mor_map, vec![0, 0, 1, 0, 2, 2]);
    }

    #[test]
    fn fibarrow_covanishing_oracle() {
        let g = g();
        let s = fibarrow(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        assert_eq!(
            sieves(&total.site, 0),
            vec![vec![0, 3, 4], vec![3, 4], vec![4]]
        );
        assert_eq!(sieves(&total.site, 1), vec![vec![1, 5], vec![5]]);
        assert_eq!(sieves(&total.site, 2), vec![vec![2]]);
    }

    #[test]
    fn fibarrow_total_topology_strictly_coarser() {
        let g = g();
        let s = fibarrow(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        let tt = total_topology(&s, &total, &g).unwrap();
        let expected: Vec<Vec<Vec<usize>>> =
            vec![vec![vec![0, 3, 4], vec![3, 4]], vec![vec![1, 5]], vec![vec![2]]];
        let got: Vec<Vec<Vec<usize>>> = tt
            .covering
            .iter()
            .map(|s| s.iter().map(|x| x.iter().copied().collect()).collect())
            .collect();
        assert_eq!(got, expected);
        let cmp =
            compare_topologies(&total.site.cat, &total.site.top, &total.site.cat, &tt, &g).unwrap();
        assert_eq!(cmp, Comparison::FirstFiner);
    }

    #[test]
    fn fibemptycover_covanishing_is_everything() {
        let g = g();
        let s = fibemptycover(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        let cat = &total.site.cat;
        assert_eq!(cat.n_obj(), 2);
        assert_eq!(cat.n_mor(), 3);
        for o in 0..cat.n_obj() {
            let all: BTreeSet<BTreeSet<usize>> =
                crate::sites::all_sieves(cat, o, &g).unwrap().into_iter().collect();
            let have: BTreeSet<BTreeSet<usize>> =
                total.site.top.covering[o].iter().cloned().collect();
            assert_eq!(have, all);
        }
        // Vertical generators alone already give everything: the total
        // topology agrees with the covanishing one here.
        let tt = total_topology(&s, &total, &g).unwrap();
        let cmp = compare_topologies(cat, &total.site.top, cat, &tt, &g).unwrap();
        assert_eq!(cmp, Comparison::Equal);
    }

    #[test]
    fn fibarrow_psi_functors_validate() {
        let g = g();
        let s = fibarrow(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        fibarrow_psi_good(&total.site.cat, &g).unwrap();
        fibarrow_psi_bad(&total.site.cat, &g).unwrap();
    }
}
