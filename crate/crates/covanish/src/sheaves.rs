//! Presheaves of finite sets, the sheaf condition, sheafification by the
//! double plus-construction, and direct/inverse images along site morphisms.
//!
//! Everything is table-driven: a presheaf stores one finite set per object
//! and one map per morphism, so the sheaf condition, sheafification, and Kan
//! extensions are all computed by exhaustive enumeration under the guard.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::fincat::{
    comma_category, finset_colimit, preserves_finite_limits, validate_functor, CatBuilder,
    ColimitResult, CommaCat, FinCat, FinSet, Functor, MorId, ObjId, SetDiagram, SetMap,
};
use crate::guard::Guard;
use crate::sites::{generate_sieve, pullback_sieve, Site, Sieve};
use crate::Result;

/// Cap on value-set sizes used by exhaustive morphism enumerations.
pub const DEFAULT_VALUE_CAP: usize = 4;

/// Contravariant presheaf of finite sets: `res[m]` maps the value at
/// `cod(m)` to the value at `dom(m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presheaf {
    pub name: String,
    pub value: Vec<FinSet>,
    pub res: Vec<SetMap>,
}

impl Presheaf {
    pub fn card(&self, o: ObjId) -> usize {
        self.value[o].n
    }

    pub fn restrict(&self, m: MorId, x: usize) -> usize {
        self.res[m].apply(x)
    }

    /// Tables agree exactly; names are ignored.
    pub fn same_tables(&self, other: &Presheaf) -> bool {
        self.value == other.value && self.res == other.res
    }

    /// Shape first (sizes and endpoints), then identity and composition laws.
    pub fn validate(&self, cat: &FinCat, guard: &Guard) -> Result<()> {
        let ctx = self.name.clone();
        if self.value.len() != cat.n_obj() || self.res.len() != cat.n_mor() {
            return Err(Error::malformed("presheaf", &ctx, "table lengths do not match the category"));
        }
        for m in 0..cat.n_mor() {
            let map = &self.res[m];
            map.validate(&ctx)?;
            if map.src_n != self.card(cat.cod(m)) || map.tgt_n != self.card(cat.dom(m)) {
                return Err(Error::malformed(
                    "presheaf",
                    &ctx,
                    format!("restriction along {} has wrong endpoints", cat.mor_name(m)),
                ));
            }
        }
        for o in 0..cat.n_obj() {
            if self.res[cat.identity(o)] != SetMap::identity(self.card(o)) {
                return Err(Error::axiom(
                    &ctx,
                    format!("restriction along the identity of {} is not the identity", cat.obj_name(o)),
                ));
            }
        }
        guard.spend((cat.n_mor() as u64) * (cat.n_mor() as u64))?;
        for g in 0..cat.n_mor() {
            for f in 0..cat.n_mor() {
                if let Some(c) = cat.try_compose(g, f) {
                    // Contravariance: res[g . f] = res[f] after res[g].
                    if self.res[g].then(&self.res[f]) != self.res[c] {
                        return Err(Error::axiom(
                            &ctx,
                            format!(
                                "restriction breaks composition at {} . {}",
                                cat.mor_name(g),
                                cat.mor_name(f)
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The representable presheaf of `u`: hom sets into `u`, restriction by
    /// precomposition. Hom sets are indexed ascending by morphism id.
    pub fn representable(cat: &FinCat, u: ObjId) -> Presheaf {
        let homs: Vec<Vec<MorId>> = (0..cat.n_obj()).map(|o| cat.hom(o, u)).collect();
        let value = homs.iter().map(|h| FinSet { n: h.len() }).collect();
        let res = (0..cat.n_mor())
            .map(|m| {
                let (a, b) = (cat.dom(m), cat.cod(m));
                let table = homs[b]
                    .iter()
                    .map(|&h| {
                        let hm = cat.try_compose(h, m).expect("composition is total in a valid category");
                        homs[a].iter().position(|&k| k == hm).unwrap()
                    })
                    .collect();
                SetMap::new(homs[b].len(), homs[a].len(), table)
            })
            .collect();
        Presheaf { name: format!("y({})", cat.obj_name(u)), value, res }
    }

    /// Constant presheaf with an `n`-element value and identity restrictions.
    pub fn constant(cat: &FinCat, n: usize) -> Presheaf {
        Presheaf {
            name: format!("const{n}"),
            value: vec![FinSet { n }; cat.n_obj()],
            res: vec![SetMap::identity(n); cat.n_mor()],
        }
    }

    pub fn terminal(cat: &FinCat) -> Presheaf {
        let mut p = Presheaf::constant(cat, 1);
        p.name = "terminal".to_string();
        p
    }

    /// Pointwise product; the pair `(x, y)` at `o` is indexed `x * |G(o)| + y`.
    pub fn product(cat: &FinCat, f: &Presheaf, g: &Presheaf) -> Presheaf {
        let value: Vec<FinSet> =
            (0..cat.n_obj()).map(|o| FinSet { n: f.card(o) * g.card(o) }).collect();
        let res = (0..cat.n_mor())
            .map(|m| {
                let (a, b) = (cat.dom(m), cat.cod(m));
                let mut table = Vec::with_capacity(value[b].n);
                for x in 0..f.card(b) {
                    for y in 0..g.card(b) {
                        table.push(f.restrict(m, x) * g.card(a) + g.restrict(m, y));
                    }
                }
                SetMap::new(value[b].n, value[a].n, table)
            })
            .collect();
        Presheaf { name: format!("({})x({})", f.name, g.name), value, res }
    }
}

/// Morphism of presheaves: one component map per object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsMor {
    pub name: String,
    pub comp: Vec<SetMap>,
}

impl PsMor {
    pub fn identity(f: &Presheaf) -> PsMor {
        PsMor {
            name: format!("id({})", f.name),
            comp: f.value.iter().map(|v| SetMap::identity(v.n)).collect(),
        }
    }

    /// `self: F -> G` followed by `other: G -> H`.
    pub fn then(&self, other: &PsMor, name: &str) -> PsMor {
        PsMor {
            name: name.to_string(),
            comp: self.comp.iter().zip(&other.comp).map(|(a, b)| a.then(b)).collect(),
        }
    }

    pub fn is_iso(&self) -> bool {
        self.comp.iter().all(|c| c.is_bijective())
    }

    /// Componentwise inverse; `None` when any component is not bijective.
    pub fn inverse(&self, name: &str) -> Option<PsMor> {
        let mut comp = Vec::with_capacity(self.comp.len());
        for c in &self.comp {
            if !c.is_bijective() {
                return None;
            }
            let mut table = vec![0usize; c.tgt_n];
            for x in 0..c.src_n {
                table[c.apply(x)] = x;
            }
            comp.push(SetMap::new(c.tgt_n, c.src_n, table));
        }
        Some(PsMor { name: name.to_string(), comp })
    }

    pub fn validate(&self, cat: &FinCat, f: &Presheaf, g: &Presheaf, guard: &Guard) -> Result<()> {
        let ctx = self.name.clone();
        if self.comp.len() != cat.n_obj() {
            return Err(Error::malformed("presheaf morphism", &ctx, "component count mismatch"));
        }
        for o in 0..cat.n_obj() {
            let c = &self.comp[o];
            c.validate(&ctx)?;
            if c.src_n != f.card(o) || c.tgt_n != g.card(o) {
                return Err(Error::malformed(
                    "presheaf morphism",
                    &ctx,
                    format!("component at {} has wrong endpoints", cat.obj_name(o)),
                ));
            }
        }
        for m in 0..cat.n_mor() {
            guard.spend(1)?;
            let (a, b) = (cat.dom(m), cat.cod(m));
            for x in 0..f.card(b) {
                if self.comp[a].apply(f.restrict(m, x)) != g.restrict(m, self.comp[b].apply(x)) {
                    return Err(Error::axiom(
                        &ctx,
                        format!("naturality fails along {}", cat.mor_name(m)),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A matching family over a sieve: one value per sieve morphism, compatible
/// under all precompositions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingFamily {
    pub base: ObjId,
    /// Sieve morphisms, ascending.
    pub mors: Vec<MorId>,
    /// Value at `mors[i]`, an element of the presheaf at its domain.
    pub values: Vec<usize>,
}

/// All matching families of `f` over the sieve, ascending lexicographically
/// in the value vector (aligned to the ascending sieve morphisms).
pub fn matching_families(
    cat: &FinCat,
    f: &Presheaf,
    sieve: &BTreeSet<MorId>,
    guard: &Guard,
) -> Result<Vec<Vec<usize>>> {
    let ms: Vec<MorId> = sieve.iter().copied().collect();
    let k = ms.len();
    // links[i][j]: morphisms g with ms[i] . g == ms[j].
    let mut links: Vec<Vec<Vec<MorId>>> = vec![vec![Vec::new(); k]; k];
    for i in 0..k {
        for g in cat.mors_into(cat.dom(ms[i])) {
            guard.spend(1)?;
            let c = cat.compose(ms[i], g)?;
            if let Some(j) = ms.iter().position(|&m| m == c) {
                links[i][j].push(g);
            }
        }
    }
    fn rec(
        cat: &FinCat,
        f: &Presheaf,
        ms: &[MorId],
        links: &[Vec<Vec<MorId>>],
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        guard: &Guard,
    ) -> Result<()> {
        let i = cur.len();
        if i == ms.len() {
            out.push(cur.clone());
            return Ok(());
        }
        'next: for v in 0..f.card(cat.dom(ms[i])) {
            guard.spend(1)?;
            for j in 0..=i {
                let vj = if j == i { v } else { cur[j] };
                for &g in &links[i][j] {
                    if f.restrict(g, v) != vj {
                        continue 'next;
                    }
                }
                if j < i {
                    for &g in &links[j][i] {
                        if f.restrict(g, cur[j]) != v {
                            continue 'next;
                        }
                    }
                }
            }
            cur.push(v);
            rec(cat, f, ms, links, cur, out, guard)?;
            cur.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(cat, f, &ms, &links, &mut Vec::new(), &mut out, guard)?;
    Ok(out)
}

/// Restriction family of a section: the value at each sieve morphism is the
/// restriction of `x` along it.
pub fn restriction_family(f: &Presheaf, ms: &[MorId], x: usize) -> Vec<usize> {
    ms.iter().map(|&m| f.restrict(m, x)).collect()
}

/// First failure of the sheaf condition: the sieve plus either an ambiguous
/// or an unamalgamated matching family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheafFailure {
    pub base: ObjId,
    pub sieve: BTreeSet<MorId>,
    pub family: MatchingFamily,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheafReport {
    pub ok: bool,
    pub failure: Option<SheafFailure>,
}

/// Sheaf condition: sections biject with matching families over every
/// covering sieve. Deterministic first failing sieve as witness.
pub fn is_sheaf(site: &Site, f: &Presheaf, guard: &Guard) -> Result<SheafReport> {
    let cat = &site.cat;
    for u in 0..cat.n_obj() {
        for sieve in &site.top.covering[u] {
            let ms: Vec<MorId> = sieve.iter().copied().collect();
            let fams = matching_families(cat, f, sieve, guard)?;
            let restr: Vec<Vec<usize>> =
                (0..f.card(u)).map(|x| restriction_family(f, &ms, x)).collect();
            for x1 in 0..restr.len() {
                for x2 in x1 + 1..restr.len() {
                    guard.spend(1)?;
                    if restr[x1] == restr[x2] {
                        return Ok(SheafReport {
                            ok: false,
                            failure: Some(SheafFailure {
                                base: u,
                                sieve: sieve.clone(),
                                family: MatchingFamily {
                                    base: u,
                                    mors: ms.clone(),
                                    values: restr[x1].clone(),
                                },
                                detail: format!(
                                    "sections {x1} and {x2} at {} restrict to the same family",
                                    cat.obj_name(u)
                                ),
                            }),
                        });
                    }
                }
            }
            for fam in &fams {
                guard.spend(1)?;
                if !restr.contains(fam) {
                    return Ok(SheafReport {
                        ok: false,
                        failure: Some(SheafFailure {
                            base: u,
                            sieve: sieve.clone(),
                            family: MatchingFamily { base: u, mors: ms.clone(), values: fam.clone() },
                            detail: format!(
                                "matching family at {} has no amalgamation",
                                cat.obj_name(u)
                            ),
                        }),
                    });
                }
            }
        }
    }
    Ok(SheafReport { ok: true, failure: None })
}

/// Per-object data of one plus-construction step.
#[derive(Debug, Clone)]
pub struct PlusObj {
    /// Covering sieves, ascending.
    pub sieves: Vec<BTreeSet<MorId>>,
    /// Matching families per sieve, ascending lexicographically.
    pub families: Vec<Vec<Vec<usize>>>,
    /// Colimit over the reverse-inclusion poset of covering sieves.
    pub colim: ColimitResult,
}

impl PlusObj {
    /// Class of a (sieve, family) pair, if the pair is present.
    pub fn class_of(&self, sieve: &BTreeSet<MorId>, family: &[usize]) -> Option<usize> {
        let si = self.sieves.iter().position(|s| s == sieve)?;
        let fi = self.families[si].binary_search(&family.to_vec()).ok()?;
        Some(self.colim.inj[si].apply(fi))
    }

    /// Canonical representative of a class: (sieve index, family index).
    pub fn rep(&self, class: usize) -> (usize, usize) {
        self.colim.reps[class]
    }
}

/// One plus-construction step: output presheaf, unit, and the per-object
/// colimit data.
#[derive(Debug, Clone)]
pub struct PlusConstruction {
    pub out: Presheaf,
    pub unit: PsMor,
    pub data: Vec<PlusObj>,
}

/// The plus-construction: at each object, the colimit of matching-family
/// sets over all covering sieves ordered by reverse inclusion.
pub fn plus_construction(site: &Site, f: &Presheaf, guard: &Guard) -> Result<PlusConstruction> {
    let cat = &site.cat;
    let mut data: Vec<PlusObj> = Vec::with_capacity(cat.n_obj());
    for u in 0..cat.n_obj() {
        let sieves: Vec<BTreeSet<MorId>> = site.top.covering[u].iter().cloned().collect();
        let mut families = Vec::with_capacity(sieves.len());
        for s in &sieves {
            families.push(matching_families(cat, f, s, guard)?);
        }
        // Shape: thin poset, arrow i -> j exactly when sieves[j] refines (is
        // contained in) sieves[i].
        let mut b = CatBuilder::new(&format!("covers({})", cat.obj_name(u)));
        for i in 0..sieves.len() {
            b.obj(&format!("R{i}"));
        }
        let mut arrows: Vec<(usize, usize)> = Vec::new();
        for i in 0..sieves.len() {
            for j in 0..sieves.len() {
                if i != j && sieves[j].is_subset(&sieves[i]) {
                    b.arrow(&format!("r{i}_{j}"), i, j);
                    arrows.push((i, j));
                }
            }
        }
        let shape = b.build_thin(guard)?;
        let obs: Vec<FinSet> = families.iter().map(|f| FinSet { n: f.len() }).collect();
        let mut maps: Vec<SetMap> = (0..shape.n_mor())
            .map(|m| SetMap::identity(obs[shape.dom(m)].n))
            .collect();
        for (k, &(i, j)) in arrows.iter().enumerate() {
            let m = sieves.len() + k;
            let ms_j: Vec<MorId> = sieves[j].iter().copied().collect();
            let pos_i: Vec<usize> = {
                let ms_i: Vec<MorId> = sieves[i].iter().copied().collect();
                ms_j.iter().map(|mj| ms_i.iter().position(|mi| mi == mj).unwrap()).collect()
            };
            let table = families[i]
                .iter()
                .map(|fam| {
                    guard.spend(1).ok();
                    let forgotten: Vec<usize> = pos_i.iter().map(|&p| fam[p]).collect();
                    families[j].binary_search(&forgotten).expect("forgetting preserves matching")
                })
                .collect();
            maps[m] = SetMap::new(families[i].len(), families[j].len(), table);
        }
        let diagram = SetDiagram { obs, maps };
        let colim = finset_colimit(&shape, &diagram, guard)?;
        data.push(PlusObj { sieves, families, colim });
    }

    let value: Vec<FinSet> = data.iter().map(|d| d.colim.apex).collect();
    let mut res: Vec<SetMap> = (0..cat.n_mor()).map(|m| SetMap::identity(value[cat.dom(m)].n)).collect();
    for m in 0..cat.n_mor() {
        if cat.is_identity(m) {
            continue;
        }
        let (v, u) = (cat.dom(m), cat.cod(m));
        let mut table = Vec::with_capacity(value[u].n);
        for class in 0..value[u].n {
            guard.spend(1)?;
            let (si, fi) = data[u].rep(class);
            let sieve = &data[u].sieves[si];
            let fam = &data[u].families[si][fi];
            let ms: Vec<MorId> = sieve.iter().copied().collect();
            let pulled = pullback_sieve(cat, m, &Sieve { base: u, mors: sieve.clone() }, guard)?;
            let pulled_ms: Vec<MorId> = pulled.mors.iter().copied().collect();
            let pulled_fam: Vec<usize> = pulled_ms
                .iter()
                .map(|&g| {
                    let mg = cat.try_compose(m, g).expect("sieve member");
                    fam[ms.iter().position(|&x| x == mg).unwrap()]
                })
                .collect();
            let cls = data[v]
                .class_of(&pulled.mors, &pulled_fam)
                .expect("stability keeps pulled-back covers covering");
            table.push(cls);
        }
        res[m] = SetMap::new(value[u].n, value[v].n, table);
    }
    let out = Presheaf { name: format!("{}+", f.name), value, res };

    let comp: Vec<SetMap> = (0..cat.n_obj())
        .map(|u| {
            let maximal = Sieve::maximal(cat, u).mors;
            let ms: Vec<MorId> = maximal.iter().copied().collect();
            let table = (0..f.card(u))
                .map(|x| {
                    let fam = restriction_family(f, &ms, x);
                    data[u].class_of(&maximal, &fam).expect("maximal sieve always covers")
                })
                .collect();
            SetMap::new(f.card(u), out.card(u), table)
        })
        .collect();
    let unit = PsMor { name: format!("plus-unit({})", f.name), comp };
    Ok(PlusConstruction { out, unit, data })
}

/// Sheafification: the plus-construction applied twice.
#[derive(Debug, Clone)]
pub struct Sheafification {
    pub out: Presheaf,
    pub unit: PsMor,
    pub p1: PlusConstruction,
    pub p2: PlusConstruction,
}

pub fn sheafify(site: &Site, f: &Presheaf, guard: &Guard) -> Result<Sheafification> {
    let p1 = plus_construction(site, f, guard)?;
    let p2 = plus_construction(site, &p1.out, guard)?;
    let out = p2.out.clone();
    let unit = p1.unit.then(&p2.unit, &format!("unit({})", f.name));
    Ok(Sheafification { out, unit, p1, p2 })
}

/// Factors `given: F -> T` (T a sheaf) uniquely through one plus step of F.
///
/// Each class is sent to the unique amalgamation in T of the pushed family;
/// no amalgamation is a missing-data error, two is an axiom error (T not
/// separated).
pub fn factor_through_plus(
    site: &Site,
    plus: &PlusConstruction,
    tgt: &Presheaf,
    given: &PsMor,
    guard: &Guard,
) -> Result<PsMor> {
    let cat = &site.cat;
    let mut comp = Vec::with_capacity(cat.n_obj());
    for u in 0..cat.n_obj() {
        let mut table = Vec::with_capacity(plus.out.card(u));
        for class in 0..plus.out.card(u) {
            guard.spend(1)?;
            let (si, fi) = plus.data[u].rep(class);
            let ms: Vec<MorId> = plus.data[u].sieves[si].iter().copied().collect();
            let fam = &plus.data[u].families[si][fi];
            let pushed: Vec<usize> = ms
                .iter()
                .zip(fam)
                .map(|(&m, &v)| given.comp[cat.dom(m)].apply(v))
                .collect();
            let hits: Vec<usize> = (0..tgt.card(u))
                .filter(|&t| restriction_family(tgt, &ms, t) == pushed)
                .collect();
            match hits.as_slice() {
                [t] => table.push(*t),
                [] => {
                    return Err(Error::missing(
                        format!("factorization of {}", given.name),
                        format!("family at {} has no amalgamation in {}", cat.obj_name(u), tgt.name),
                    ))
                }
                _ => {
                    return Err(Error::axiom(
                        format!("factorization of {}", given.name),
                        format!("{} is not separated at {}", tgt.name, cat.obj_name(u)),
                    ))
                }
            }
        }
        comp.push(SetMap::new(plus.out.card(u), tgt.card(u), table));
    }
    Ok(PsMor { name: format!("factor({})", given.name), comp })
}

/// Factors `given: F -> T` (T a sheaf) through the sheafification unit.
pub fn factor_through_sheafify(
    site: &Site,
    sh: &Sheafification,
    tgt: &Presheaf,
    given: &PsMor,
    guard: &Guard,
) -> Result<PsMor> {
    let h1 = factor_through_plus(site, &sh.p1, tgt, given, guard)?;
    factor_through_plus(site, &sh.p2, tgt, &h1, guard)
}

/// Pushes `k: F -> G` through the sheafifications of both sides: the unique
/// morphism between them commuting with the units.
pub fn sheafify_mor(
    site: &Site,
    sh_src: &Sheafification,
    sh_tgt: &Sheafification,
    k: &PsMor,
    guard: &Guard,
) -> Result<PsMor> {
    let given = k.then(&sh_tgt.unit, &format!("{}+unit", k.name));
    factor_through_sheafify(site, sh_src, &sh_tgt.out, &given, guard)
}

/// All presheaf morphisms F -> G, ascending lexicographically in the
/// flattened component tables.
pub fn presheaf_homs(
    cat: &FinCat,
    f: &Presheaf,
    g: &Presheaf,
    guard: &Guard,
) -> Result<Vec<PsMor>> {
    let n = cat.n_obj();
    let mut out = Vec::new();
    let mut comp: Vec<SetMap> = Vec::new();
    fn natural_so_far(cat: &FinCat, f: &Presheaf, g: &Presheaf, comp: &[SetMap]) -> bool {
        let k = comp.len();
        for m in 0..cat.n_mor() {
            let (a, b) = (cat.dom(m), cat.cod(m));
            if a < k && b < k && (a == k - 1 || b == k - 1) {
                for x in 0..f.card(b) {
                    if comp[a].apply(f.restrict(m, x)) != g.restrict(m, comp[b].apply(x)) {
                        return false;
                    }
                }
            }
        }
        true
    }
    fn rec(
        cat: &FinCat,
        f: &Presheaf,
        g: &Presheaf,
        comp: &mut Vec<SetMap>,
        out: &mut Vec<PsMor>,
        guard: &Guard,
    ) -> Result<()> {
        let u = comp.len();
        if u == cat.n_obj() {
            out.push(PsMor { name: format!("h{}", out.len()), comp: comp.clone() });
            return Ok(());
        }
        let (src, tgt) = (f.card(u), g.card(u));
        if src > 0 && tgt == 0 {
            return Ok(());
        }
        let mut table = vec![0usize; src];
        loop {
            guard.spend(1)?;
            comp.push(SetMap::new(src, tgt, table.clone()));
            if natural_so_far(cat, f, g, comp) {
                rec(cat, f, g, comp, out, guard)?;
            }
            comp.pop();
            // Odometer over the table, rightmost fastest.
            let mut i = src;
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                table[i] += 1;
                if table[i] < tgt {
                    break;
                }
                table[i] = 0;
            }
        }
    }
    if n == 0 {
        return Ok(vec![PsMor { name: "h0".to_string(), comp: vec![] }]);
    }
    rec(cat, f, g, &mut comp, &mut out, guard)?;
    Ok(out)
}

/// Searches for a natural isomorphism F -> G by element-level backtracking
/// with forward propagation along restrictions. Returns the first found in
/// the deterministic search order.
pub fn presheaf_iso_search(
    cat: &FinCat,
    f: &Presheaf,
    g: &Presheaf,
    guard: &Guard,
) -> Result<Option<PsMor>> {
    let n = cat.n_obj();
    if (0..n).any(|o| f.card(o) != g.card(o)) {
        return Ok(None);
    }

    #[derive(Clone)]
    struct State {
        assign: Vec<Vec<Option<usize>>>,
        used: Vec<Vec<bool>>,
    }

    // Assign f-element (u, x) to g-element y and propagate along every
    // morphism into u; detects conflicts with existing assignments.
    fn set(
        cat: &FinCat,
        f: &Presheaf,
        g: &Presheaf,
        st: &mut State,
        u: ObjId,
        x: usize,
        y: usize,
        guard: &Guard,
    ) -> Result<bool> {
        let mut queue = vec![(u, x, y)];
        while let Some((u, x, y)) = queue.pop() {
            guard.spend(1)?;
            match st.assign[u][x] {
                Some(prev) => {
                    if prev != y {
                        return Ok(false);
                    }
                    continue;
                }
                None => {
                    if st.used[u][y] {
                        return Ok(false);
                    }
                    st.assign[u][x] = Some(y);
                    st.used[u][y] = true;
                }
            }
            for m in cat.mors_into(u) {
                if cat.is_identity(m) {
                    continue;
                }
                queue.push((cat.dom(m), f.restrict(m, x), g.restrict(m, y)));
            }
        }
        Ok(true)
    }

    fn rec(
        cat: &FinCat,
        f: &Presheaf,
        g: &Presheaf,
        st: &State,
        guard: &Guard,
    ) -> Result<Option<State>> {
        let next = (0..cat.n_obj())
            .flat_map(|u| (0..f.card(u)).map(move |x| (u, x)))
            .find(|&(u, x)| st.assign[u][x].is_none());
        let (u, x) = match next {
            None => return Ok(Some(st.clone())),
            Some(p) => p,
        };
        for y in 0..g.card(u) {
            if st.used[u][y] {
                continue;
            }
            let mut candidate = st.clone();
            if set(cat, f, g, &mut candidate, u, x, y, guard)? {
                if let Some(done) = rec(cat, f, g, &candidate, guard)? {
                    return Ok(Some(done));
                }
            }
        }
        Ok(None)
    }

    let st = State {
        assign: (0..n).map(|u| vec![None; f.card(u)]).collect(),
        used: (0..n).map(|u| vec![false; g.card(u)]).collect(),
    };
    match rec(cat, f, g, &st, guard)? {
        None => Ok(None),
        Some(done) => {
            let comp = (0..n)
                .map(|u| {
                    let table = (0..f.card(u)).map(|x| done.assign[u][x].unwrap()).collect();
                    SetMap::new(f.card(u), g.card(u), table)
                })
                .collect();
            let iso = PsMor { name: format!("iso({}~{})", f.name, g.name), comp };
            iso.validate(cat, f, g, guard)?;
            Ok(Some(iso))
        }
    }
}

/// All presheaves with value sets of size at most `max_size`, deterministic:
/// size tuples ascend lexicographically, then restriction tables ascend.
pub fn enumerate_presheaves(
    cat: &FinCat,
    max_size: usize,
    guard: &Guard,
) -> Result<Vec<Presheaf>> {
    let n = cat.n_obj();
    let non_id: Vec<MorId> = (0..cat.n_mor()).filter(|&m| !cat.is_identity(m)).collect();
    let mut out: Vec<Presheaf> = Vec::new();
    let mut sizes = vec![0usize; n];
    loop {
        // Enumerate restriction tables for this size tuple.
        let mut res: Vec<Option<SetMap>> = (0..cat.n_mor())
            .map(|m| cat.is_identity(m).then(|| SetMap::identity(sizes[cat.dom(m)])))
            .collect();
        fn rec(
            cat: &FinCat,
            sizes: &[usize],
            non_id: &[MorId],
            depth: usize,
            res: &mut Vec<Option<SetMap>>,
            out: &mut Vec<Presheaf>,
            guard: &Guard,
        ) -> Result<()> {
            if depth == non_id.len() {
                let value = sizes.iter().map(|&s| FinSet { n: s }).collect();
                let table = res.iter().map(|r| r.clone().unwrap()).collect();
                out.push(Presheaf { name: format!("P{}", out.len()), value, res: table });
                return Ok(());
            }
            let m = non_id[depth];
            let (src, tgt) = (sizes[cat.cod(m)], sizes[cat.dom(m)]);
            if src > 0 && tgt == 0 {
                return Ok(());
            }
            let mut table = vec![0usize; src];
            loop {
                guard.spend(1)?;
                res[m] = Some(SetMap::new(src, tgt, table.clone()));
                // Composition closure over pairs whose tables are all known.
                let mut ok = true;
                'pairs: for g in 0..cat.n_mor() {
                    for fm in 0..cat.n_mor() {
                        if let Some(c) = cat.try_compose(g, fm) {
                            if let (Some(rg), Some(rf), Some(rc)) = (&res[g], &res[fm], &res[c]) {
                                if (g == m || fm == m || c == m) && rg.then(rf) != *rc {
                                    ok = false;
                                    break 'pairs;
                                }
                            }
                        }
                    }
                }
                if ok {
                    rec(cat, sizes, non_id, depth + 1, res, out, guard)?;
                }
                res[m] = None;
                let mut i = src;
                loop {
                    if i == 0 {
                        return Ok(());
                    }
                    i -= 1;
                    table[i] += 1;
                    if table[i] < tgt {
                        break;
                    }
                    table[i] = 0;
                }
            }
        }
        rec(cat, &sizes, &non_id, 0, &mut res, &mut out, guard)?;
        // Next size tuple, rightmost fastest.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            sizes[i] += 1;
            if sizes[i] <= max_size {
                break;
            }
            sizes[i] = 0;
        }
    }
}

/// All sheaves with value sets of size at most `max_size`.
pub fn enumerate_sheaves(site: &Site, max_size: usize, guard: &Guard) -> Result<Vec<Presheaf>> {
    let mut out = Vec::new();
    for p in enumerate_presheaves(&site.cat, max_size, guard)? {
        if is_sheaf(site, &p, guard)?.ok {
            out.push(p);
        }
    }
    Ok(out)
}

/// Continuity verdict for a functor between sites. `ok` holds exactly when
/// the functor is left exact and the image of every covering sieve generates
/// a covering sieve; at this scale that matches "precomposition preserves
/// sheaves" (cross-checked by brute force in tests).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuityReport {
    pub ok: bool,
    pub left_exact: bool,
    pub covers_preserved: bool,
    pub witness: Option<String>,
}

pub fn check_continuity(
    src: &Site,
    tgt: &Site,
    u: &Functor,
    guard: &Guard,
) -> Result<ContinuityReport> {
    validate_functor(&src.cat, &tgt.cat, u, guard)?;
    let lex = preserves_finite_limits(u, &src.cat, &tgt.cat, guard)?;
    let mut covers_preserved = true;
    let mut witness = lex.witness.clone();
    'outer: for a in 0..src.cat.n_obj() {
        for sieve in &src.top.covering[a] {
            guard.spend(1)?;
            let image: Vec<MorId> = sieve.iter().map(|&m| u.mo(m)).collect();
            let gen = generate_sieve(&tgt.cat, u.ob(a), &image, guard)?;
            if !tgt.top.covers(u.ob(a), &gen.mors) {
                covers_preserved = false;
                if witness.is_none() {
                    witness = Some(format!(
                        "image of a covering sieve on {} does not cover {}",
                        src.cat.obj_name(a),
                        tgt.cat.obj_name(u.ob(a))
                    ));
                }
                break 'outer;
            }
        }
    }
    Ok(ContinuityReport { ok: lex.ok && covers_preserved, left_exact: lex.ok, covers_preserved, witness })
}

/// Brute-force continuity: precomposition is tested on every sheaf of the
/// target side with value sets of size at most `max_size`. Returns the first
/// witness sheaf whose composite fails the sheaf condition.
pub fn continuity_brute_force(
    src: &Site,
    tgt: &Site,
    u: &Functor,
    max_size: usize,
    guard: &Guard,
) -> Result<(bool, Option<Presheaf>)> {
    for g in enumerate_sheaves(tgt, max_size, guard)? {
        let pulled = direct_image(u, &src.cat, &tgt.cat, &g);
        if !is_sheaf(src, &pulled, guard)?.ok {
            return Ok((false, Some(g)));
        }
    }
    Ok((true, None))
}

/// Precomposition with `u: C -> D`: a presheaf on D becomes a presheaf on C.
/// Sheaves stay sheaves when `u` is continuous.
pub fn direct_image(u: &Functor, src: &FinCat, _tgt: &FinCat, f: &Presheaf) -> Presheaf {
    Presheaf {
        name: format!("{}_*({})", u.name, f.name),
        value: (0..src.n_obj()).map(|o| f.value[u.ob(o)]).collect(),
        res: (0..src.n_mor()).map(|m| f.res[u.mo(m)].clone()).collect(),
    }
}

/// Precomposition applied to a presheaf morphism on the target side.
pub fn direct_image_mor(u: &Functor, src: &FinCat, h: &PsMor) -> PsMor {
    PsMor {
        name: format!("{}_*({})", u.name, h.name),
        comp: (0..src.n_obj()).map(|o| h.comp[u.ob(o)].clone()).collect(),
    }
}

/// Pointwise left Kan extension of a presheaf along `u: C -> D`, with the
/// comma-category colimit data retained so classes can be produced and
/// inspected.
#[derive(Debug, Clone)]
pub struct LanConstruction {
    pub out: Presheaf,
    pub commas: Vec<CommaCat>,
    pub colims: Vec<ColimitResult>,
}

impl LanConstruction {
    /// Class of `(c, alpha: d -> u(c), x in G(c))` at `d`.
    pub fn class_of(&self, d: ObjId, c: ObjId, alpha: MorId, x: usize) -> Option<usize> {
        let comma = &self.commas[d];
        let k = (0..comma.cat.n_obj())
            .find(|&k| comma.obj_c[k] == c && comma.obj_alpha[k] == alpha)?;
        Some(self.colims[d].inj[k].apply(x))
    }

    /// Canonical representative `(c, alpha, x)` of a class at `d`.
    pub fn rep(&self, d: ObjId, class: usize) -> (ObjId, MorId, usize) {
        let (k, x) = self.colims[d].reps[class];
        (self.commas[d].obj_c[k], self.commas[d].obj_alpha[k], x)
    }
}

/// Left Kan extension along `u: C -> D` of a presheaf `g` on C: the value at
/// `d` is the colimit of `g` over the opposite of the comma category
/// `(u | d)`; restriction precomposes the anchoring morphism.
pub fn lan_extend(
    u: &Functor,
    src: &FinCat,
    tgt: &FinCat,
    g: &Presheaf,
    guard: &Guard,
) -> Result<LanConstruction> {
    let mut commas = Vec::with_capacity(tgt.n_obj());
    let mut colims = Vec::with_capacity(tgt.n_obj());
    for d in 0..tgt.n_obj() {
        let comma = comma_category(u, src, tgt, d, guard)?;
        let shape = comma.cat.opposite();
        let obs: Vec<FinSet> = (0..shape.n_obj()).map(|k| g.value[comma.obj_c[k]]).collect();
        let maps: Vec<SetMap> = (0..shape.n_mor())
            .map(|m| {
                if comma.cat.is_identity(m) {
                    SetMap::identity(obs[shape.dom(m)].n)
                } else {
                    g.res[comma.mor_gamma[m]].clone()
                }
            })
            .collect();
        let colim = finset_colimit(&shape, &SetDiagram { obs, maps }, guard)?;
        commas.push(comma);
        colims.push(colim);
    }
    let value: Vec<FinSet> = colims.iter().map(|c| c.apex).collect();
    let mut res: Vec<SetMap> = (0..tgt.n_mor()).map(|m| SetMap::identity(value[tgt.dom(m)].n)).collect();
    let lan = LanConstruction { out: Presheaf { name: String::new(), value, res: Vec::new() }, commas, colims };
    for m in 0..tgt.n_mor() {
        if tgt.is_identity(m) {
            continue;
        }
        let (dp, d) = (tgt.dom(m), tgt.cod(m));
        let mut table = Vec::with_capacity(lan.out.value[d].n);
        for class in 0..lan.out.value[d].n {
            guard.spend(1)?;
            let (c, alpha, x) = lan.rep(d, class);
            let moved = tgt.compose(alpha, m)?;
            let cls = lan
                .class_of(dp, c, moved, x)
                .expect("precomposed anchor stays in the comma category");
            table.push(cls);
        }
        res[m] = SetMap::new(lan.out.value[d].n, lan.out.value[dp].n, table);
    }
    let out = Presheaf { name: format!("lan_{}({})", u.name, g.name), value: lan.out.value.clone(), res };
    Ok(LanConstruction { out, commas: lan.commas, colims: lan.colims })
}

/// Inverse image along a continuous left exact `u: C -> D`: left Kan
/// extension followed by sheafification on the D side.
#[derive(Debug, Clone)]
pub struct InverseImage {
    pub lan: LanConstruction,
    pub sh: Sheafification,
    pub out: Presheaf,
}

pub fn inverse_image(
    u: &Functor,
    src: &Site,
    tgt: &Site,
    g: &Presheaf,
    guard: &Guard,
) -> Result<InverseImage> {
    let report = check_continuity(src, tgt, u, guard)?;
    if !report.ok {
        return Err(Error::unsupported(
            "inverse_image",
            format!(
                "functor {} is not a continuous left exact site morphism: {}",
                u.name(),
                report.witness.unwrap_or_default()
            ),
        ));
    }
    let lan = lan_extend(u, &src.cat, &tgt.cat, g, guard)?;
    let sh = sheafify(tgt, &lan.out, guard)?;
    let mut out = sh.out.clone();
    out.name = format!("{}^*({})", u.name, g.name);
    Ok(InverseImage { lan, sh, out })
}

/// Adjunction unit `G -> direct_image(inverse_image(G))`: a section maps to
/// the class of its identity anchor, then into the sheafification.
pub fn adjunction_unit(
    u: &Functor,
    tgt_cat: &FinCat,
    g: &Presheaf,
    inv: &InverseImage,
) -> PsMor {
    let comp = (0..g.value.len())
        .map(|c| {
            let d = u.ob(c);
            let table = (0..g.card(c))
                .map(|x| {
                    let class = inv
                        .lan
                        .class_of(d, c, tgt_cat.identity(d), x)
                        .expect("identity anchor exists");
                    inv.sh.unit.comp[d].apply(class)
                })
                .collect();
            SetMap::new(g.card(c), inv.out.card(d), table)
        })
        .collect();
    PsMor { name: format!("adj-unit({})", g.name), comp }
}

/// Functorial action of the inverse image on a presheaf morphism
/// `h: G1 -> G2` over the source site: Kan classes are re-anchored through
/// `h`, then the result is pushed through both sheafifications.
pub fn inverse_image_mor(
    tgt: &Site,
    inv1: &InverseImage,
    inv2: &InverseImage,
    h: &PsMor,
    guard: &Guard,
) -> Result<PsMor> {
    let cat = &tgt.cat;
    let mut comp = Vec::with_capacity(cat.n_obj());
    for d in 0..cat.n_obj() {
        let mut table = Vec::with_capacity(inv1.lan.out.card(d));
        for class in 0..inv1.lan.out.card(d) {
            guard.spend(1)?;
            let (c, alpha, x) = inv1.lan.rep(d, class);
            let cls = inv2
                .lan
                .class_of(d, c, alpha, h.comp[c].apply(x))
                .expect("both Kan extensions share their comma categories");
            table.push(cls);
        }
        comp.push(SetMap::new(inv1.lan.out.card(d), inv2.lan.out.card(d), table));
    }
    let lan_map = PsMor { name: format!("lan({})", h.name), comp };
    sheafify_mor(tgt, &inv1.sh, &inv2.sh, &lan_map, guard)
}

/// Postcomposition between representables: `y(m): y(dom m) -> y(cod m)`.
pub fn yoneda_mor(cat: &FinCat, m: MorId) -> PsMor {
    let (a, b) = (cat.dom(m), cat.cod(m));
    let comp = (0..cat.n_obj())
        .map(|o| {
            let src = cat.hom(o, a);
            let tgt = cat.hom(o, b);
            let table = src
                .iter()
                .map(|&t| {
                    let c = cat.try_compose(m, t).expect("composition is total in a valid category");
                    tgt.iter().position(|&k| k == c).unwrap()
                })
                .collect();
            SetMap::new(src.len(), tgt.len(), table)
        })
        .collect();
    PsMor { name: format!("y({})", cat.mor_name(m)), comp }
}

/// Pointwise fiber product of presheaves over the cospan `f: A -> M <- B: g`,
/// with its two projections. Pairs at each object are ordered
/// lexicographically.
pub fn presheaf_fiber_product(
    cat: &FinCat,
    a: &Presheaf,
    b: &Presheaf,
    f: &PsMor,
    g: &PsMor,
) -> (Presheaf, PsMor, PsMor) {
    let n = cat.n_obj();
    let pairs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|o| {
            let mut v = Vec::new();
            for x in 0..a.card(o) {
                for y in 0..b.card(o) {
                    if f.comp[o].apply(x) == g.comp[o].apply(y) {
                        v.push((x, y));
                    }
                }
            }
            v
        })
        .collect();
    let value: Vec<FinSet> = pairs.iter().map(|p| FinSet { n: p.len() }).collect();
    let res = (0..cat.n_mor())
        .map(|m| {
            let (s, t) = (cat.dom(m), cat.cod(m));
            let table = pairs[t]
                .iter()
                .map(|&(x, y)| {
                    let moved = (a.restrict(m, x), b.restrict(m, y));
                    pairs[s]
                        .binary_search(&moved)
                        .expect("restriction preserves the cospan equation")
                })
                .collect();
            SetMap::new(pairs[t].len(), pairs[s].len(), table)
        })
        .collect();
    let out = Presheaf { name: format!("fp({},{})", a.name, b.name), value, res };
    let pr1 = PsMor {
        name: format!("pr1({})", out.name),
        comp: (0..n)
            .map(|o| SetMap::new(pairs[o].len(), a.card(o), pairs[o].iter().map(|p| p.0).collect()))
            .collect(),
    };
    let pr2 = PsMor {
        name: format!("pr2({})", out.name),
        comp: (0..n)
            .map(|o| SetMap::new(pairs[o].len(), b.card(o), pairs[o].iter().map(|p| p.1).collect()))
            .collect(),
    };
    (out, pr1, pr2)
}

/// Pointwise right Kan extension of a presheaf along `u: C -> D`, with the
/// anchor and tuple data retained.
///
/// The value at `d` is the set of tuples, one entry per anchor
/// `(c, h: u(c) -> d)`, compatible under every source morphism; restriction
/// postcomposes the anchor.
#[derive(Debug, Clone)]
pub struct RanConstruction {
    pub out: Presheaf,
    /// Anchors per target object: `(c, h: u(c) -> d)` ascending.
    pub anchors: Vec<Vec<(ObjId, MorId)>>,
    /// Limit tuples per target object, lexicographic over the anchors.
    pub tuples: Vec<Vec<Vec<usize>>>,
}

pub fn ran_extend(
    u: &Functor,
    src: &FinCat,
    tgt: &FinCat,
    f: &Presheaf,
    guard: &Guard,
) -> Result<RanConstruction> {
    let mut anchors: Vec<Vec<(ObjId, MorId)>> = Vec::with_capacity(tgt.n_obj());
    let mut tuples: Vec<Vec<Vec<usize>>> = Vec::with_capacity(tgt.n_obj());
    for d in 0..tgt.n_obj() {
        let anc: Vec<(ObjId, MorId)> = (0..src.n_obj())
            .flat_map(|c| tgt.hom(u.ob(c), d).into_iter().map(move |h| (c, h)))
            .collect();
        // One compatibility edge per (source morphism, anchor at its codomain):
        // the entry at the precomposed anchor is the restricted entry.
        let mut edges: Vec<(usize, usize, MorId)> = Vec::new();
        for g in 0..src.n_mor() {
            let (ga, gb) = (src.dom(g), src.cod(g));
            for (i, &(c, h)) in anc.iter().enumerate() {
                if c != gb {
                    continue;
                }
                guard.spend(1)?;
                let moved = tgt.compose(h, u.mo(g))?;
                let j = anc
                    .iter()
                    .position(|&(cc, hh)| cc == ga && hh == moved)
                    .expect("precomposed anchor exists");
                edges.push((i, j, g));
            }
        }
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut cur: Vec<usize> = Vec::new();
        fn rec(
            f: &Presheaf,
            anc: &[(ObjId, MorId)],
            edges: &[(usize, usize, MorId)],
            cur: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
            guard: &Guard,
        ) -> Result<()> {
            let k = cur.len();
            if k == anc.len() {
                out.push(cur.clone());
                return Ok(());
            }
            'cand: for x in 0..f.card(anc[k].0) {
                guard.spend(1)?;
                cur.push(x);
                for &(i, j, g) in edges {
                    if i <= k && j <= k && (i == k || j == k) && cur[j] != f.restrict(g, cur[i]) {
                        cur.pop();
                        continue 'cand;
                    }
                }
                rec(f, anc, edges, cur, out, guard)?;
                cur.pop();
            }
            Ok(())
        }
        rec(f, &anc, &edges, &mut cur, &mut out, guard)?;
        if anc.is_empty() {
            out = vec![vec![]];
        }
        anchors.push(anc);
        tuples.push(out);
    }
    let value: Vec<FinSet> = tuples.iter().map(|t| FinSet { n: t.len() }).collect();
    let mut res: Vec<SetMap> = Vec::with_capacity(tgt.n_mor());
    for m in 0..tgt.n_mor() {
        let (dp, d) = (tgt.dom(m), tgt.cod(m));
        let mut table = Vec::with_capacity(value[d].n);
        for x in &tuples[d] {
            guard.spend(1)?;
            let moved: Vec<usize> = anchors[dp]
                .iter()
                .map(|&(c, h)| {
                    let back = tgt.try_compose(m, h).expect("anchors compose with restrictions");
                    let i = anchors[d]
                        .iter()
                        .position(|&(cc, hh)| cc == c && hh == back)
                        .expect("postcomposed anchor exists");
                    x[i]
                })
                .collect();
            table.push(
                tuples[dp]
                    .binary_search(&moved)
                    .expect("restricted tuple stays compatible"),
            );
        }
        res.push(SetMap::new(value[d].n, value[dp].n, table));
    }
    let out = Presheaf { name: format!("ran_{}({})", u.name, f.name), value, res };
    Ok(RanConstruction { out, anchors, tuples })
}

/// Canonical map `g -> ran(g o u)`: a section maps to the tuple of its
/// anchor restrictions.
pub fn ran_unit(tgt: &FinCat, g: &Presheaf, ran: &RanConstruction) -> PsMor {
    let comp = (0..tgt.n_obj())
        .map(|d| {
            let table = (0..g.card(d))
                .map(|y| {
                    let t: Vec<usize> =
                        ran.anchors[d].iter().map(|&(_c, h)| g.restrict(h, y)).collect();
                    ran.tuples[d]
                        .binary_search(&t)
                        .expect("anchor restrictions form a compatible tuple")
                })
                .collect();
            SetMap::new(g.card(d), ran.out.card(d), table)
        })
        .collect();
    PsMor { name: format!("ran-unit({})", g.name), comp }
}

/// Adjunction counit `inverse_image(direct_image(F)) -> F` for a sheaf `F`:
/// the anchor restriction map on Kan classes, factored through the
/// sheafification.
pub fn adjunction_counit(
    tgt: &Site,
    f: &Presheaf,
    inv: &InverseImage,
    guard: &Guard,
) -> Result<PsMor> {
    let comp = (0..tgt.cat.n_obj())
        .map(|d| {
            let table = (0..inv.lan.out.card(d))
                .map(|class| {
                    let (_c, alpha, x) = inv.lan.rep(d, class);
                    f.restrict(alpha, x)
                })
                .collect();
            SetMap::new(inv.lan.out.card(d), f.card(d), table)
        })
        .collect();
    let eval = PsMor { name: format!("eval({})", f.name), comp };
    factor_through_sheafify(tgt, &inv.sh, f, &eval, guard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fincat::CatBuilder;
    use crate::sites::Coverage;

    fn arrow_cat() -> FinCat {
        let mut b = CatBuilder::new("ARROW");
        let a = b.obj("a");
        let bb = b.obj("b");
        b.arrow("u", bb, a);
        b.build(&[], &Guard::default()).unwrap()
    }

    fn arrow_site() -> Site {
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![2]);
        Site::from_coverage(arrow_cat(), &cov, &Guard::default()).unwrap()
    }

    fn pt_cat() -> FinCat {
        let mut b = CatBuilder::new("PT");
        b.obj("e");
        b.build(&[], &Guard::default()).unwrap()
    }

    fn pt_empty_cover_site() -> Site {
        let mut cov = Coverage::new(1);
        cov.add_family(0, vec![]);
        Site::from_coverage(pt_cat(), &cov, &Guard::default()).unwrap()
    }

    #[test]
    fn representables_on_arrow_site() {
        let g = Guard::default();
        let site = arrow_site();
        let ya = Presheaf::representable(&site.cat, 0);
        ya.validate(&site.cat, &g).unwrap();
        assert!(is_sheaf(&site, &ya, &g).unwrap().ok);
        let yb = Presheaf::representable(&site.cat, 1);
        let rep = is_sheaf(&site, &yb, &g).unwrap();
        assert!(!rep.ok);
        let failure = rep.failure.unwrap();
        assert_eq!(failure.base, 0);
        assert_eq!(failure.sieve, BTreeSet::from([2]));
    }

    #[test]
    fn sheafify_representable_of_source() {
        let g = Guard::default();
        let site = arrow_site();
        let yb = Presheaf::representable(&site.cat, 1);
        let sh = sheafify(&site, &yb, &g).unwrap();
        assert_eq!(sh.out.value, vec![FinSet { n: 1 }, FinSet { n: 1 }]);
        assert!(is_sheaf(&site, &sh.out, &g).unwrap().ok);
        sh.out.validate(&site.cat, &g).unwrap();
        sh.unit.validate(&site.cat, &yb, &sh.out, &g).unwrap();
    }

    #[test]
    fn constant_two_over_empty_cover_collapses() {
        let g = Guard::default();
        let site = pt_empty_cover_site();
        let c2 = Presheaf::constant(&site.cat, 2);
        let rep = is_sheaf(&site, &c2, &g).unwrap();
        assert!(!rep.ok);
        assert!(rep.failure.unwrap().sieve.is_empty());
        let sh = sheafify(&site, &c2, &g).unwrap();
        assert_eq!(sh.out.value, vec![FinSet { n: 1 }]);
        assert!(is_sheaf(&site, &sh.out, &g).unwrap().ok);
    }

    #[test]
    fn chaotic_topology_makes_everything_a_sheaf() {
        let g = Guard::default();
        let site = Site::chaotic(arrow_cat(), &g).unwrap();
        for p in enumerate_presheaves(&site.cat, 2, &g).unwrap() {
            assert!(is_sheaf(&site, &p, &g).unwrap().ok, "{}", p.name);
        }
    }

    // Independent oracle: the plus value at u must biject with the matching
    // families over the smallest covering sieve.
    #[test]
    fn plus_agrees_with_min_sieve_families() {
        let g = Guard::default();
        let site = arrow_site();
        for p in [
            Presheaf::representable(&site.cat, 0),
            Presheaf::representable(&site.cat, 1),
            Presheaf::constant(&site.cat, 2),
        ] {
            let plus = plus_construction(&site, &p, &g).unwrap();
            plus.out.validate(&site.cat, &g).unwrap();
            plus.unit.validate(&site.cat, &p, &plus.out, &g).unwrap();
            for u in 0..site.cat.n_obj() {
                let min = site.top.min_covering_sieve(u);
                let fams = matching_families(&site.cat, &p, &min, &g).unwrap();
                assert_eq!(plus.out.card(u), fams.len(), "{} at {}", p.name, u);
                let mut seen = BTreeSet::new();
                for fam in &fams {
                    seen.insert(plus.data[u].class_of(&min, fam).unwrap());
                }
                assert_eq!(seen.len(), fams.len());
            }
        }
    }

    #[test]
    fn sheafify_is_idempotent() {
        let g = Guard::default();
        let site = arrow_site();
        for p in [Presheaf::representable(&site.cat, 1), Presheaf::constant(&site.cat, 2)] {
            let sh = sheafify(&site, &p, &g).unwrap();
            let again = sheafify(&site, &sh.out, &g).unwrap();
            assert!(again.unit.is_iso(), "{}", p.name);
        }
    }

    #[test]
    fn unit_is_universal_among_maps_to_sheaves() {
        let g = Guard::default();
        let site = arrow_site();
        let p = Presheaf::representable(&site.cat, 1);
        let sh = sheafify(&site, &p, &g).unwrap();
        let t = Presheaf::constant(&site.cat, 2);
        assert!(is_sheaf(&site, &t, &g).unwrap().ok);
        for h in presheaf_homs(&site.cat, &p, &t, &g).unwrap() {
            let f = factor_through_sheafify(&site, &sh, &t, &h, &g).unwrap();
            f.validate(&site.cat, &sh.out, &t, &g).unwrap();
            assert_eq!(sh.unit.then(&f, "roundtrip").comp, h.comp);
            // Uniqueness among all morphisms out of the sheafification.
            let agreeing: Vec<_> = presheaf_homs(&site.cat, &sh.out, &t, &g)
                .unwrap()
                .into_iter()
                .filter(|k| sh.unit.then(k, "candidate").comp == h.comp)
                .collect();
            assert_eq!(agreeing.len(), 1);
        }
    }

    #[test]
    fn hom_enumeration_counts() {
        let g = Guard::default();
        let cat = arrow_cat();
        let c1 = Presheaf::constant(&cat, 1);
        let c2 = Presheaf::constant(&cat, 2);
        assert_eq!(presheaf_homs(&cat, &c1, &c2, &g).unwrap().len(), 2);
        let ya = Presheaf::representable(&cat, 0);
        assert_eq!(presheaf_homs(&cat, &ya, &ya, &g).unwrap().len(), 1);
    }

    #[test]
    fn iso_search_finds_and_rejects() {
        let g = Guard::default();
        let cat = arrow_cat();
        let ya = Presheaf::representable(&cat, 0);
        let iso = presheaf_iso_search(&cat, &ya, &ya, &g).unwrap().unwrap();
        assert!(iso.is_iso());
        let c2 = Presheaf::constant(&cat, 2);
        assert!(presheaf_iso_search(&cat, &ya, &c2, &g).unwrap().is_none());
        // Same sizes, incompatible restrictions: y(b) has an empty value at a.
        let yb = Presheaf::representable(&cat, 1);
        let skew = Presheaf {
            name: "skew".to_string(),
            value: yb.value.clone(),
            res: yb.res.clone(),
        };
        assert!(presheaf_iso_search(&cat, &yb, &skew, &g).unwrap().is_some());
    }

    #[test]
    fn presheaf_enumeration_count_on_arrow() {
        let g = Guard::default();
        let cat = arrow_cat();
        let all = enumerate_presheaves(&cat, 2, &g).unwrap();
        // Hand count over size pairs (a, b): maps F(a) -> F(b) give
        // 1+1+1+0+1+2+0+1+4 = 11.
        assert_eq!(all.len(), 11);
        for p in &all {
            p.validate(&cat, &g).unwrap();
        }
        let sheaves = enumerate_sheaves(&arrow_site(), 2, &g).unwrap();
        assert_eq!(sheaves.len(), 4);
    }

    #[test]
    fn continuity_of_identity_and_of_collapse() {
        let g = Guard::default();
        let site = arrow_site();
        let id = Functor::identity(&site.cat, "id");
        let rep = check_continuity(&site, &site, &id, &g).unwrap();
        assert!(rep.ok && rep.left_exact && rep.covers_preserved);

        // Source with the empty sieve covering a, target the chaotic point:
        // the image of the empty sieve does not cover, and a 2-element sheaf
        // on the point pulls back to a non-sheaf.
        let mut cov = Coverage::new(2);
        cov.add_family(0, vec![]);
        let src = Site::from_coverage(arrow_cat(), &cov, &g).unwrap();
        let tgt = Site::chaotic(pt_cat(), &g).unwrap();
        let collapse = Functor::new("collapse", vec![0, 0], vec![0, 0, 0]);
        let rep = check_continuity(&src, &tgt, &collapse, &g).unwrap();
        assert!(!rep.ok && rep.left_exact && !rep.covers_preserved);
        let (ok, witness) = continuity_brute_force(&src, &tgt, &collapse, 2, &g).unwrap();
        assert!(!ok);
        // First witness in enumeration order is the empty sheaf; the
        // 2-element sheaf fails too.
        assert_eq!(witness.unwrap().card(0), 0);
        let c2 = Presheaf::constant(&pt_cat(), 2);
        assert!(is_sheaf(&tgt, &c2, &g).unwrap().ok);
        let pulled = direct_image(&collapse, &src.cat, &tgt.cat, &c2);
        assert!(!is_sheaf(&src, &pulled, &g).unwrap().ok);
    }

    #[test]
    fn direct_image_examples() {
        let g = Guard::default();
        let cat = arrow_cat();
        let pt = pt_cat();
        let ya = Presheaf::representable(&cat, 0);
        let id = Functor::identity(&cat, "id");
        assert!(direct_image(&id, &cat, &cat, &ya).same_tables(&ya));
        let at_a = Functor::new("at_a", vec![0], vec![0]);
        let pulled = direct_image(&at_a, &pt, &cat, &ya);
        assert_eq!(pulled.value, vec![FinSet { n: 1 }]);
        pulled.validate(&pt, &g).unwrap();
    }

    #[test]
    fn inverse_image_along_identity_is_sheafification() {
        let g = Guard::default();
        let site = arrow_site();
        let id = Functor::identity(&site.cat, "id");
        let yb = Presheaf::representable(&site.cat, 1);
        let inv = inverse_image(&id, &site, &site, &yb, &g).unwrap();
        let sh = sheafify(&site, &yb, &g).unwrap();
        assert!(inv.out.same_tables(&sh.out));
    }

    // Adjunction between sheaves on the chaotic point and sheaves on the
    // arrow site, along e -> a: hom sets biject via the mate construction.
    #[test]
    fn adjunction_hom_counts_match() {
        let g = Guard::default();
        let src = Site::chaotic(pt_cat(), &g).unwrap();
        let tgt = arrow_site();
        let at_a = Functor::new("at_a", vec![0], vec![0]);
        assert!(check_continuity(&src, &tgt, &at_a, &g).unwrap().ok);
        let sheaves_src = enumerate_sheaves(&src, 2, &g).unwrap();
        let sheaves_tgt = enumerate_sheaves(&tgt, 2, &g).unwrap();
        for gpre in &sheaves_src {
            let inv = inverse_image(&at_a, &src, &tgt, gpre, &g).unwrap();
            let unit = adjunction_unit(&at_a, &tgt.cat, gpre, &inv);
            for fsh in &sheaves_tgt {
                let dir = direct_image(&at_a, &src.cat, &tgt.cat, fsh);
                let lhs = presheaf_homs(&tgt.cat, &inv.out, fsh, &g).unwrap();
                let rhs = presheaf_homs(&src.cat, gpre, &dir, &g).unwrap();
                assert_eq!(lhs.len(), rhs.len(), "{} vs {}", gpre.name, fsh.name);
                // The mate of h is the unit followed by the pushed h;
                // distinct morphisms must have distinct mates.
                let mut mates: Vec<Vec<SetMap>> = Vec::new();
                for h in &lhs {
                    let mate = unit.then(&direct_image_mor(&at_a, &src.cat, h), "mate");
                    mate.validate(&src.cat, gpre, &dir, &g).unwrap();
                    mates.push(mate.comp.clone());
                }
                mates.sort();
                mates.dedup();
                assert_eq!(mates.len(), lhs.len());
            }
        }
    }

    // Triangle identity on the direct-image side: dir(counit) after the unit
    // of dir F is the identity of dir F.
    #[test]
    fn adjunction_triangle_on_direct_image() {
        let g = Guard::default();
        let src = Site::chaotic(pt_cat(), &g).unwrap();
        let tgt = arrow_site();
        let at_a = Functor::new("at_a", vec![0], vec![0]);
        for fsh in enumerate_sheaves(&tgt, 2, &g).unwrap() {
            let dir = direct_image(&at_a, &src.cat, &tgt.cat, &fsh);
            let inv = inverse_image(&at_a, &src, &tgt, &dir, &g).unwrap();
            let counit = adjunction_counit(&tgt, &fsh, &inv, &g).unwrap();
            counit.validate(&tgt.cat, &inv.out, &fsh, &g).unwrap();
            let unit = adjunction_unit(&at_a, &tgt.cat, &dir, &inv);
            let round = unit.then(&direct_image_mor(&at_a, &src.cat, &counit), "triangle");
            assert_eq!(round.comp, PsMor::identity(&dir).comp, "{}", fsh.name);
        }
    }
}
