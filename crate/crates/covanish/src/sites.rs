//! Sieves, coverages, and Grothendieck topologies on finite categories.
//!
//! A topology is stored fully saturated: `covering[u]` is the literal set of
//! covering sieves on `u`, so membership, comparison, and transport along
//! functors are all decidable by direct scan. [`saturate_topology`] closes a
//! generating coverage under the three topology axioms by fixed point.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Error;
use crate::fincat::{FinCat, Functor, MorId, ObjId, SliceCat};
use crate::guard::Guard;
use crate::Result;

/// A sieve on `base`: a set of morphisms with codomain `base` that is closed
/// under precomposition with arbitrary morphisms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sieve {
    pub base: ObjId,
    pub mors: BTreeSet<MorId>,
}

impl Sieve {
    /// The empty sieve on `base`.
    pub fn empty(base: ObjId) -> Self {
        Sieve { base, mors: BTreeSet::new() }
    }

    /// The maximal sieve on `base`: every morphism with codomain `base`.
    pub fn maximal(cat: &FinCat, base: ObjId) -> Self {
        Sieve { base, mors: cat.mors_into(base).into_iter().collect() }
    }

    pub fn contains(&self, m: MorId) -> bool {
        self.mors.contains(&m)
    }

    /// Checks codomains (shape) and closure under precomposition (axiom).
    pub fn validate(&self, cat: &FinCat, guard: &Guard) -> Result<()> {
        if self.base >= cat.n_obj() {
            return Err(Error::malformed(
                "sieve",
                format!("sieve on object {}", self.base),
                "base object id out of range",
            ));
        }
        for &m in &self.mors {
            guard.spend(1)?;
            if m >= cat.n_mor() {
                return Err(Error::malformed(
                    "sieve",
                    format!("sieve on {}", cat.obj_name(self.base)),
                    format!("morphism id {m} out of range"),
                ));
            }
            if cat.cod(m) != self.base {
                return Err(Error::malformed(
                    "sieve",
                    format!("sieve on {}", cat.obj_name(self.base)),
                    format!("member {} has codomain {}", cat.mor_name(m), cat.obj_name(cat.cod(m))),
                ));
            }
        }
        for &m in &self.mors {
            for g in cat.mors_into(cat.dom(m)) {
                guard.spend(1)?;
                let mg = cat.compose(m, g)?;
                if !self.mors.contains(&mg) {
                    return Err(Error::axiom(
                        format!("sieve on {}", cat.obj_name(self.base)),
                        format!(
                            "not closed under precomposition: {} in sieve, {} missing",
                            cat.mor_name(m),
                            cat.mor_name(mg)
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The smallest sieve on `base` containing every morphism of `family`.
///
/// Every family member must have codomain `base`; mixed codomains are
/// rejected. A single closure pass suffices: `{f.g}` is itself closed.
pub fn generate_sieve(
    cat: &FinCat,
    base: ObjId,
    family: &[MorId],
    guard: &Guard,
) -> Result<Sieve> {
    let mut mors = BTreeSet::new();
    for &f in family {
        if f >= cat.n_mor() {
            return Err(Error::malformed(
                "family",
                format!("family on {}", cat.obj_name(base)),
                format!("morphism id {f} out of range"),
            ));
        }
        if cat.cod(f) != base {
            return Err(Error::malformed(
                "family",
                format!("family on {}", cat.obj_name(base)),
                format!(
                    "member {} has codomain {}, not {}",
                    cat.mor_name(f),
                    cat.obj_name(cat.cod(f)),
                    cat.obj_name(base)
                ),
            ));
        }
        for g in cat.mors_into(cat.dom(f)) {
            guard.spend(1)?;
            mors.insert(cat.compose(f, g)?);
        }
    }
    Ok(Sieve { base, mors })
}

/// Pullback of a sieve along `f: V -> U`: all `g` into `V` with `f.g` in the
/// sieve. Always a sieve on `V`.
pub fn pullback_sieve(cat: &FinCat, f: MorId, sieve: &Sieve, guard: &Guard) -> Result<Sieve> {
    if cat.cod(f) != sieve.base {
        return Err(Error::malformed(
            "pullback",
            format!("pullback along {}", cat.mor_name(f)),
            format!(
                "codomain {} does not match sieve base {}",
                cat.obj_name(cat.cod(f)),
                cat.obj_name(sieve.base)
            ),
        ));
    }
    let v = cat.dom(f);
    let mut mors = BTreeSet::new();
    for g in cat.mors_into(v) {
        guard.spend(1)?;
        if sieve.mors.contains(&cat.compose(f, g)?) {
            mors.insert(g);
        }
    }
    Ok(Sieve { base: v, mors })
}

fn pull_set(cat: &FinCat, f: MorId, mors: &BTreeSet<MorId>, guard: &Guard) -> Result<BTreeSet<MorId>> {
    let mut out = BTreeSet::new();
    for g in cat.mors_into(cat.dom(f)) {
        guard.spend(1)?;
        if mors.contains(&cat.compose(f, g)?) {
            out.insert(g);
        }
    }
    Ok(out)
}

/// Enumerates every sieve on `u`, in ascending bitmask order over the
/// ascending list of morphisms into `u`. Cost is `2^k` for `k` incoming
/// morphisms, charged to the guard up front.
pub fn all_sieves(cat: &FinCat, u: ObjId, guard: &Guard) -> Result<Vec<BTreeSet<MorId>>> {
    let ms = cat.mors_into(u);
    let k = ms.len();
    if k >= 63 {
        return Err(Error::Resource { limit: guard.limit() });
    }
    guard.spend(1u64 << k)?;
    let mut out = Vec::new();
    'mask: for mask in 0u64..(1u64 << k) {
        let set: BTreeSet<MorId> =
            ms.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &m)| m).collect();
        for &m in &set {
            for g in cat.mors_into(cat.dom(m)) {
                guard.spend(1)?;
                if !set.contains(&cat.compose(m, g)?) {
                    continue 'mask;
                }
            }
        }
        out.push(set);
    }
    Ok(out)
}

/// A generating coverage: per object, a list of covering families.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Coverage {
    pub families: Vec<Vec<Vec<MorId>>>,
}

impl Coverage {
    pub fn new(n_obj: usize) -> Self {
        Coverage { families: vec![Vec::new(); n_obj] }
    }

    pub fn add_family(&mut self, obj: ObjId, family: Vec<MorId>) {
        self.families[obj].push(family);
    }

    /// The coverage with no generating families; saturation yields the
    /// chaotic topology.
    pub fn chaotic(n_obj: usize) -> Self {
        Coverage::new(n_obj)
    }
}

/// A saturated Grothendieck topology: the full set of covering sieves per
/// object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub covering: Vec<BTreeSet<BTreeSet<MorId>>>,
}

impl Topology {
    /// Only maximal sieves cover.
    pub fn chaotic(cat: &FinCat) -> Self {
        let covering = (0..cat.n_obj())
            .map(|u| {
                let mut s = BTreeSet::new();
                s.insert(Sieve::maximal(cat, u).mors);
                s
            })
            .collect();
        Topology { covering }
    }

    pub fn n_obj(&self) -> usize {
        self.covering.len()
    }

    pub fn covers(&self, u: ObjId, sieve: &BTreeSet<MorId>) -> bool {
        self.covering[u].contains(sieve)
    }

    /// Intersection of all covering sieves on `u`. For a saturated topology
    /// on a finite category this is itself covering (covering sieves are
    /// closed under pairwise intersection), so it is the unique smallest
    /// covering sieve.
    pub fn min_covering_sieve(&self, u: ObjId) -> BTreeSet<MorId> {
        let mut iter = self.covering[u].iter();
        let mut acc = iter.next().cloned().unwrap_or_default();
        for s in iter {
            acc = acc.intersection(s).cloned().collect();
        }
        acc
    }
}

/// Checks the three topology axioms plus sieve shape for every member.
///
/// Shape problems (wrong codomain, unclosed set) are malformed-data errors;
/// failures of maximality, stability, or local character are axiom errors.
pub fn validate_topology(cat: &FinCat, top: &Topology, guard: &Guard) -> Result<()> {
    if top.covering.len() != cat.n_obj() {
        return Err(Error::malformed(
            "topology",
            format!("topology on {}", cat.name()),
            format!("{} objects but {} covering sets", cat.n_obj(), top.covering.len()),
        ));
    }
    for u in 0..cat.n_obj() {
        for mors in &top.covering[u] {
            let sieve = Sieve { base: u, mors: mors.clone() };
            sieve.validate(cat, guard)?;
        }
    }
    for u in 0..cat.n_obj() {
        let maximal = Sieve::maximal(cat, u).mors;
        if !top.covers(u, &maximal) {
            return Err(Error::axiom(
                format!("topology on {}", cat.name()),
                format!("maximal sieve on {} does not cover", cat.obj_name(u)),
            ));
        }
        for mors in &top.covering[u] {
            for f in cat.mors_into(u) {
                guard.spend(1)?;
                let pulled = pull_set(cat, f, mors, guard)?;
                if !top.covers(cat.dom(f), &pulled) {
                    return Err(Error::axiom(
                        format!("topology on {}", cat.name()),
                        format!(
                            "stability fails: pullback of a covering sieve on {} along {} does not cover",
                            cat.obj_name(u),
                            cat.mor_name(f)
                        ),
                    ));
                }
            }
        }
        for candidate in all_sieves(cat, u, guard)? {
            if top.covers(u, &candidate) {
                continue;
            }
            for mors in &top.covering[u] {
                let mut local = true;
                for &f in mors {
                    guard.spend(1)?;
                    let pulled = pull_set(cat, f, &candidate, guard)?;
                    if !top.covers(cat.dom(f), &pulled) {
                        local = false;
                        break;
                    }
                }
                if local {
                    return Err(Error::axiom(
                        format!("topology on {}", cat.name()),
                        format!(
                            "local character fails: a sieve on {} covers locally on a covering sieve but is not covering",
                            cat.obj_name(u)
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Saturates a coverage into a topology: the least saturated set of sieves
/// containing the generated sieves of every family, closed under maximality,
/// stability, and local character. Monotone fixed point, so idempotent.
pub fn saturate_topology(cat: &FinCat, coverage: &Coverage, guard: &Guard) -> Result<Topology> {
    if coverage.families.len() != cat.n_obj() {
        return Err(Error::malformed(
            "coverage",
            format!("coverage on {}", cat.name()),
            format!("{} objects but {} family lists", cat.n_obj(), coverage.families.len()),
        ));
    }
    let mut j: Vec<BTreeSet<BTreeSet<MorId>>> = vec![BTreeSet::new(); cat.n_obj()];
    for u in 0..cat.n_obj() {
        j[u].insert(Sieve::maximal(cat, u).mors);
        for family in &coverage.families[u] {
            j[u].insert(generate_sieve(cat, u, family, guard)?.mors);
        }
    }
    let sieves: Vec<Vec<BTreeSet<MorId>>> =
        (0..cat.n_obj()).map(|u| all_sieves(cat, u, guard)).collect::<Result<_>>()?;
    loop {
        let mut changed = false;
        // Stability: pull every covering sieve back along every morphism.
        for u in 0..cat.n_obj() {
            for mors in j[u].clone() {
                for f in cat.mors_into(u) {
                    guard.spend(1)?;
                    let pulled = pull_set(cat, f, &mors, guard)?;
                    changed |= j[cat.dom(f)].insert(pulled);
                }
            }
        }
        // Local character: a sieve covering locally on a covering sieve covers.
        for u in 0..cat.n_obj() {
            for candidate in &sieves[u] {
                if j[u].contains(candidate) {
                    continue;
                }
                let witnessed = j[u].iter().any(|mors| {
                    mors.iter().all(|&f| match pull_set(cat, f, candidate, guard) {
                        Ok(pulled) => j[cat.dom(f)].contains(&pulled),
                        Err(_) => false,
                    })
                });
                guard.spend(1)?;
                if witnessed {
                    j[u].insert(candidate.clone());
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Topology { covering: j })
}

/// A finite category together with a saturated topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub cat: FinCat,
    pub top: Topology,
}

impl Site {
    /// Validates the category and the topology axioms before assembly.
    pub fn new(cat: FinCat, top: Topology, guard: &Guard) -> Result<Self> {
        cat.validate(guard)?;
        validate_topology(&cat, &top, guard)?;
        Ok(Site { cat, top })
    }

    /// Assembles and saturates in one step.
    pub fn from_coverage(cat: FinCat, coverage: &Coverage, guard: &Guard) -> Result<Self> {
        cat.validate(guard)?;
        let top = saturate_topology(&cat, coverage, guard)?;
        Ok(Site { cat, top })
    }

    pub fn chaotic(cat: FinCat, guard: &Guard) -> Result<Self> {
        cat.validate(guard)?;
        let top = Topology::chaotic(&cat);
        Ok(Site { cat, top })
    }

    pub fn covers(&self, u: ObjId, sieve: &BTreeSet<MorId>) -> bool {
        self.top.covers(u, sieve)
    }
}

/// Verdict of a per-object inclusion test between two topologies on the same
/// category. "Finer" means more covering sieves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Equal,
    FirstFiner,
    SecondFiner,
    Incomparable,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Comparison::Equal => "equal",
            Comparison::FirstFiner => "first-finer",
            Comparison::SecondFiner => "second-finer",
            Comparison::Incomparable => "incomparable",
        };
        f.write_str(s)
    }
}

/// Compares two topologies on the same category by per-object inclusion of
/// covering-sieve sets. Distinct underlying categories are rejected.
pub fn compare_topologies(
    cat1: &FinCat,
    top1: &Topology,
    cat2: &FinCat,
    top2: &Topology,
    guard: &Guard,
) -> Result<Comparison> {
    if cat1 != cat2 {
        return Err(Error::malformed(
            "comparison",
            format!("{} vs {}", cat1.name(), cat2.name()),
            "topologies live on different categories",
        ));
    }
    let mut first_extra = false;
    let mut second_extra = false;
    for u in 0..cat1.n_obj() {
        guard.spend(1)?;
        if !top1.covering[u].is_subset(&top2.covering[u]) {
            first_extra = true;
        }
        if !top2.covering[u].is_subset(&top1.covering[u]) {
            second_extra = true;
        }
    }
    Ok(match (first_extra, second_extra) {
        (false, false) => Comparison::Equal,
        (true, false) => Comparison::FirstFiner,
        (false, true) => Comparison::SecondFiner,
        (true, true) => Comparison::Incomparable,
    })
}

/// Transports a topology backwards along a fully faithful functor `u` into a
/// site: a sieve `R'` on `U'` covers exactly when the sieve generated by its
/// image pulls back to a covering sieve along every morphism into `u(U')`.
///
/// Functors that are not fully faithful are rejected.
pub fn induce_topology(
    u: &Functor,
    src: &FinCat,
    tgt: &Site,
    guard: &Guard,
) -> Result<Topology> {
    crate::fincat::validate_functor(src, &tgt.cat, u, guard)?;
    if !u.is_fully_faithful(src, &tgt.cat) {
        return Err(Error::unsupported(
            "induce_topology",
            format!("functor {} is not fully faithful", u.name()),
        ));
    }
    let mut covering: Vec<BTreeSet<BTreeSet<MorId>>> = vec![BTreeSet::new(); src.n_obj()];
    for up in 0..src.n_obj() {
        let image_obj = u.ob(up);
        for candidate in all_sieves(src, up, guard)? {
            let image: Vec<MorId> = candidate.iter().map(|&m| u.mo(m)).collect();
            let gen = generate_sieve(&tgt.cat, image_obj, &image, guard)?;
            let mut covers = true;
            'outer: for t in 0..tgt.cat.n_obj() {
                for h in tgt.cat.hom(t, image_obj) {
                    guard.spend(1)?;
                    let pulled = pull_set(&tgt.cat, h, &gen.mors, guard)?;
                    if !tgt.top.covers(t, &pulled) {
                        covers = false;
                        break 'outer;
                    }
                }
            }
            if covers {
                covering[up].insert(candidate);
            }
        }
    }
    Ok(Topology { covering })
}

/// Slice of a site at `c`: the slice category wears the topology where a
/// sieve covers a slice object exactly when its underlying morphisms generate
/// a covering sieve of the underlying object.
pub fn slice_site(parent: &Site, c: ObjId, guard: &Guard) -> Result<(SliceCat, Site)> {
    let slice = crate::fincat::slice_category(&parent.cat, c, guard)?;
    let cat = slice.cat.clone();
    let mut covering: Vec<BTreeSet<BTreeSet<MorId>>> = vec![BTreeSet::new(); cat.n_obj()];
    for s in 0..cat.n_obj() {
        let under_obj = parent.cat.dom(slice.obj_mor[s]);
        for candidate in all_sieves(&cat, s, guard)? {
            let image: Vec<MorId> = candidate.iter().map(|&m| slice.proj.mo(m)).collect();
            let gen = generate_sieve(&parent.cat, under_obj, &image, guard)?;
            if parent.top.covers(under_obj, &gen.mors) {
                covering[s].insert(candidate);
            }
        }
    }
    let site = Site::new(cat, Topology { covering }, guard)?;
    Ok((slice, site))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fincat::CatBuilder;

    fn arrow() -> FinCat {
        let mut b = CatBuilder::new("ARROW");
        let a = b.obj("a");
        let bb = b.obj("b");
        b.arrow("u", bb, a);
        b.build(&[], &Guard::default()).unwrap()
    }

    fn pt() -> FinCat {
        let mut b = CatBuilder::new("PT");
        b.obj("e");
        b.build(&[], &Guard::default()).unwrap()
    }

    // ARROW morphism ids: id_a = 0, id_b = 1, u = 2.

    #[test]
    fn generate_sieve_examples() {
        let g = Guard::default();
        let c = arrow();
        let s = generate_sieve(&c, 0, &[2], &g).unwrap();
        assert_eq!(s.mors, BTreeSet::from([2]));
        let s = generate_sieve(&c, 0, &[], &g).unwrap();
        assert!(s.mors.is_empty());
        let s = generate_sieve(&c, 0, &[0], &g).unwrap();
        assert_eq!(s.mors, BTreeSet::from([0, 2]));
        assert_eq!(s, Sieve::maximal(&c, 0));
    }

    #[test]
    fn generate_sieve_rejects_mixed_codomains() {
        let g = Guard::default();
        let c = arrow();
        let err = generate_sieve(&c, 0, &[2, 1], &g).unwrap_err();
        assert!(matches!(err, Error::Malformed { .. }), "{err}");
    }

    #[test]
    fn pullback_examples() {
        let g = Guard::default();
        let c = arrow();
        let s = generate_sieve(&c, 0, &[2], &g).unwrap();
        let pulled = pullback_sieve(&c, 2, &s, &g).unwrap();
        assert_eq!(pulled, Sieve::maximal(&c, 1));
        let pulled = pullback_sieve(&c, 0, &s, &g).unwrap();
        assert_eq!(pulled, s);
        let empty = Sieve::empty(0);
        let pulled = pullback_sieve(&c, 2, &empty, &g).unwrap();
        assert!(pulled.mors.is_empty());
    }

    #[test]
    fn all_sieves_on_arrow() {
        let g = Guard::default();
        let c = arrow();
        let on_a = all_sieves(&c, 0, &g).unwrap();
        assert_eq!(
            on_a,
            vec![BTreeSet::new(), BTreeSet::from([2]), BTreeSet::from([0, 2])]
        );
        let on_b = all_sieves(&c, 1, &g).unwrap();
        assert_eq!(on_b, vec![BTreeSet::new(), BTreeSet::from([1])]);
    }

    #[test]
    fn saturate_chaotic_coverage() {
        let g = Guard::default();
        let c = arrow();
        let top = saturate_topology(&c, &Coverage::chaotic(2), &g).unwrap();
        assert_eq!(top, Topology::chaotic(&c));
        validate_topology(&c, &top, &g).unwrap();
    }

    #[test]
    fn saturate_arrow_singleton_cover() {
        let g = Guard::default();
        let c = arrow();
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        let top = saturate_topology(&c, &cov, &g).unwrap();
        assert_eq!(
            top.covering[0],
            BTreeSet::from([BTreeSet::from([2]), BTreeSet::from([0, 2])])
        );
        assert_eq!(top.covering[1], BTreeSet::from([BTreeSet::from([1])]));
        validate_topology(&c, &top, &g).unwrap();
        assert_eq!(top.min_covering_sieve(0), BTreeSet::from([2]));
        // Idempotent: re-saturating the result as a coverage changes nothing.
        let mut cov2 = Coverage::new(2);
        for u in 0..2 {
            for s in &top.covering[u] {
                cov2.add_family(u, s.iter().copied().collect());
            }
        }
        assert_eq!(saturate_topology(&c, &cov2, &g).unwrap(), top);
    }

    #[test]
    fn saturate_point_with_empty_cover() {
        let g = Guard::default();
        let c = pt();
        let mut cov = Coverage::new(1);
        cov.add_family(0, vec![]);
        let top = saturate_topology(&c, &cov, &g).unwrap();
        assert_eq!(
            top.covering[0],
            BTreeSet::from([BTreeSet::new(), BTreeSet::from([0])])
        );
        validate_topology(&c, &top, &g).unwrap();
    }

    #[test]
    fn validate_rejects_missing_maximal() {
        let g = Guard::default();
        let c = arrow();
        let mut top = Topology::chaotic(&c);
        top.covering[0] = BTreeSet::from([BTreeSet::from([2])]);
        let err = validate_topology(&c, &top, &g).unwrap_err();
        assert!(matches!(err, Error::Axiom { .. }), "{err}");
    }

    #[test]
    fn compare_verdicts() {
        let g = Guard::default();
        let c = arrow();
        let chaotic = Topology::chaotic(&c);
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        let fine = saturate_topology(&c, &cov, &g).unwrap();
        assert_eq!(
            compare_topologies(&c, &fine, &c, &chaotic, &g).unwrap(),
            Comparison::FirstFiner
        );
        assert_eq!(
            compare_topologies(&c, &chaotic, &c, &fine, &g).unwrap(),
            Comparison::SecondFiner
        );
        assert_eq!(
            compare_topologies(&c, &fine, &c, &fine, &g).unwrap(),
            Comparison::Equal
        );
        // Covering sieves only on a vs only on b: neither refines the other.
        let mut cov_b = Coverage::new(2);
        cov_b.add_family(1, vec![]);
        let other = saturate_topology(&c, &cov_b, &g).unwrap();
        assert_eq!(
            compare_topologies(&c, &fine, &c, &other, &g).unwrap(),
            Comparison::Incomparable
        );
        let err = compare_topologies(&c, &fine, &pt(), &Topology::chaotic(&pt()), &g).unwrap_err();
        assert!(matches!(err, Error::Malformed { .. }), "{err}");
    }

    #[test]
    fn induce_along_identity_is_identity() {
        let g = Guard::default();
        let c = arrow();
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        let site = Site::from_coverage(c.clone(), &cov, &g).unwrap();
        let id = Functor::identity(&c, "id");
        let induced = induce_topology(&id, &c, &site, &g).unwrap();
        assert_eq!(induced, site.top);
    }

    #[test]
    fn induce_point_into_arrow_at_b_is_chaotic() {
        let g = Guard::default();
        let c = arrow();
        let p = pt();
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        let site = Site::from_coverage(c, &cov, &g).unwrap();
        let incl = Functor::new("at_b", vec![1], vec![1]);
        let induced = induce_topology(&incl, &p, &site, &g).unwrap();
        assert_eq!(induced, Topology::chaotic(&p));
        validate_topology(&p, &induced, &g).unwrap();
    }

    #[test]
    fn induce_rejects_non_fully_faithful() {
        let g = Guard::default();
        let c = arrow();
        let p = pt();
        let site = Site::chaotic(p.clone(), &g).unwrap();
        // Collapse functor ARROW -> PT: not faithful on hom(b, a).
        let collapse = Functor::new("collapse", vec![0, 0], vec![0, 0, 0]);
        let err = induce_topology(&collapse, &c, &site, &g).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }), "{err}");
    }

    #[test]
    fn slice_site_of_arrow_at_a() {
        let g = Guard::default();
        let c = arrow();
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        let parent = Site::from_coverage(c, &cov, &g).unwrap();
        let (slice, site) = slice_site(&parent, 0, &g).unwrap();
        // Objects: [id_a] and [u]; the sieve generated by the lift of u covers [id_a].
        assert_eq!(site.cat.n_obj(), 2);
        let lift = site.cat.mors_into(0).into_iter().find(|&m| !site.cat.is_identity(m)).unwrap();
        assert!(site.top.covers(0, &BTreeSet::from([lift])));
        // Induced topology along the projection agrees (projection is fully
        // faithful because ARROW is thin).
        let induced = induce_topology(&slice.proj, &site.cat, &parent, &g).unwrap();
        assert_eq!(induced, site.top);
    }
}
