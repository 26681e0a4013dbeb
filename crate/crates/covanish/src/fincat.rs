//! Total table categories and the finite set computations built on them.
//!
//! A category is a pair of flat tables: one for objects, one for morphisms,
//! plus an explicit composition matrix. Identities always occupy morphism
//! ids `0..n_obj`, with the identity of object `o` at id `o`. All derived
//! constructions (opposites, slices, commas, full subcategories) preserve
//! that layout.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::guard::Guard;
use crate::Result;

pub type ObjId = usize;
pub type MorId = usize;

/// One arrow of a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mor {
    pub name: String,
    pub dom: ObjId,
    pub cod: ObjId,
}

/// Finite category with explicit identity and composition tables.
///
/// `comp[g][f]` is `g . f`, present exactly when `cod(f) == dom(g)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinCat {
    pub name: String,
    pub objects: Vec<String>,
    pub mors: Vec<Mor>,
    /// Identity morphism of each object; equals the object id after `validate`.
    pub id_of: Vec<MorId>,
    pub comp: Vec<Vec<Option<MorId>>>,
}

impl FinCat {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn obj_name(&self, o: ObjId) -> &str {
        &self.objects[o]
    }

    pub fn mor_name(&self, m: MorId) -> &str {
        &self.mors[m].name
    }

    pub fn n_obj(&self) -> usize {
        self.objects.len()
    }

    pub fn n_mor(&self) -> usize {
        self.mors.len()
    }

    pub fn dom(&self, m: MorId) -> ObjId {
        self.mors[m].dom
    }

    pub fn cod(&self, m: MorId) -> ObjId {
        self.mors[m].cod
    }

    pub fn identity(&self, o: ObjId) -> MorId {
        self.id_of[o]
    }

    pub fn is_identity(&self, m: MorId) -> bool {
        let d = self.dom(m);
        d == self.cod(m) && self.id_of[d] == m
    }

    /// `g . f`, or `None` when the pair is not composable.
    pub fn try_compose(&self, g: MorId, f: MorId) -> Option<MorId> {
        if self.cod(f) != self.dom(g) {
            return None;
        }
        self.comp[g][f]
    }

    /// `g . f`; not being composable is an error.
    pub fn compose(&self, g: MorId, f: MorId) -> Result<MorId> {
        if self.cod(f) != self.dom(g) {
            return Err(Error::malformed(
                "composition",
                &self.name,
                format!(
                    "`{}` and `{}` are not composable",
                    self.mors[g].name, self.mors[f].name
                ),
            ));
        }
        self.comp[g][f].ok_or_else(|| {
            Error::malformed(
                "composition",
                &self.name,
                format!(
                    "table has no entry for `{}` . `{}`",
                    self.mors[g].name, self.mors[f].name
                ),
            )
        })
    }

    /// Morphisms `a -> b`, ascending by id.
    pub fn hom(&self, a: ObjId, b: ObjId) -> Vec<MorId> {
        (0..self.n_mor())
            .filter(|&m| self.dom(m) == a && self.cod(m) == b)
            .collect()
    }

    /// All morphisms with codomain `u`, ascending by id.
    pub fn mors_into(&self, u: ObjId) -> Vec<MorId> {
        (0..self.n_mor()).filter(|&m| self.cod(m) == u).collect()
    }

    /// All morphisms with domain `u`, ascending by id.
    pub fn mors_from(&self, u: ObjId) -> Vec<MorId> {
        (0..self.n_mor()).filter(|&m| self.dom(m) == u).collect()
    }

    pub fn obj_index(&self, name: &str) -> Option<ObjId> {
        self.objects.iter().position(|n| n == name)
    }

    pub fn mor_index(&self, name: &str) -> Option<MorId> {
        self.mors.iter().position(|m| m.name == name)
    }

    /// Two-sided inverse of `m`, if any.
    pub fn inverse_of(&self, m: MorId) -> Option<MorId> {
        let (a, b) = (self.dom(m), self.cod(m));
        self.hom(b, a).into_iter().find(|&w| {
            self.try_compose(w, m) == Some(self.identity(a))
                && self.try_compose(m, w) == Some(self.identity(b))
        })
    }

    /// Isomorphisms `a -> b`, ascending by id.
    pub fn isos_between(&self, a: ObjId, b: ObjId) -> Vec<MorId> {
        self.hom(a, b)
            .into_iter()
            .filter(|&m| self.inverse_of(m).is_some())
            .collect()
    }

    /// Full validation: table shape first, then category laws.
    pub fn validate(&self, guard: &Guard) -> Result<()> {
        let n_obj = self.n_obj();
        let n_mor = self.n_mor();
        let ctx = self.name.clone();

        // Table shape.
        if self.id_of.len() != n_obj {
            return Err(Error::malformed(
                "category",
                &ctx,
                format!("id table has {} entries for {} objects", self.id_of.len(), n_obj),
            ));
        }
        if self.comp.len() != n_mor || self.comp.iter().any(|row| row.len() != n_mor) {
            return Err(Error::malformed(
                "category",
                &ctx,
                "composition table is not square over the morphism list",
            ));
        }
        for (i, m) in self.mors.iter().enumerate() {
            if m.dom >= n_obj || m.cod >= n_obj {
                return Err(Error::malformed(
                    "category",
                    &ctx,
                    format!("morphism `{}` (id {i}) has a dangling endpoint", m.name),
                ));
            }
        }
        for (o, &i) in self.id_of.iter().enumerate() {
            if i >= n_mor {
                return Err(Error::malformed(
                    "category",
                    &ctx,
                    format!("identity entry of object {o} is a dangling morphism id"),
                ));
            }
            if self.dom(i) != o || self.cod(i) != o {
                return Err(Error::malformed(
                    "category",
                    &ctx,
                    format!(
                        "identity entry of `{}` is `{}`, not an endomorphism of it",
                        self.objects[o], self.mors[i].name
                    ),
                ));
            }
            if i != o {
                return Err(Error::malformed(
                    "category",
                    &ctx,
                    format!("identity of object {o} must have morphism id {o}, found {i}"),
                ));
            }
        }
        {
            let mut seen = BTreeMap::new();
            for (o, n) in self.objects.iter().enumerate() {
                if let Some(prev) = seen.insert(n.clone(), o) {
                    return Err(Error::malformed(
                        "category",
                        &ctx,
                        format!("objects {prev} and {o} share the name `{n}`"),
                    ));
                }
            }
            let mut seen = BTreeMap::new();
            for (i, m) in self.mors.iter().enumerate() {
                if let Some(prev) = seen.insert(m.name.clone(), i) {
                    return Err(Error::malformed(
                        "category",
                        &ctx,
                        format!("morphisms {prev} and {i} share the name `{}`", m.name),
                    ));
                }
            }
        }
        guard.spend((n_mor as u64) * (n_mor as u64))?;
        for g in 0..n_mor {
            for f in 0..n_mor {
                let composable = self.cod(f) == self.dom(g);
                match self.comp[g][f] {
                    Some(c) => {
                        if !composable {
                            return Err(Error::malformed(
                                "category",
                                &ctx,
                                format!(
                                    "table composes non composable `{}` . `{}`",
                                    self.mors[g].name, self.mors[f].name
                                ),
                            ));
                        }
                        if c >= n_mor {
                            return Err(Error::malformed(
                                "category",
                                &ctx,
                                "composition entry is a dangling morphism id",
                            ));
                        }
                        if self.dom(c) != self.dom(f) || self.cod(c) != self.cod(g) {
                            return Err(Error::axiom(
                                &ctx,
                                format!(
                                    "composite `{}` . `{}` = `{}` has wrong endpoints",
                                    self.mors[g].name, self.mors[f].name, self.mors[c].name
                                ),
                            ));
                        }
                    }
                    None => {
                        if composable {
                            return Err(Error::malformed(
                                "category",
                                &ctx,
                                format!(
                                    "table lacks composite `{}` . `{}`",
                                    self.mors[g].name, self.mors[f].name
                                ),
                            ));
                        }
                    }
                }
            }
        }

        // Category laws.
        for m in 0..n_mor {
            let l = self.comp[m][self.identity(self.dom(m))];
            let r = self.comp[self.identity(self.cod(m))][m];
            if l != Some(m) || r != Some(m) {
                return Err(Error::axiom(
                    &ctx,
                    format!("identity law fails at `{}`", self.mors[m].name),
                ));
            }
        }
        for h in 0..n_mor {
            for g in 0..n_mor {
                if self.cod(g) != self.dom(h) {
                    continue;
                }
                let hg = self.comp[h][g].unwrap();
                guard.spend(n_mor as u64)?;
                for f in 0..n_mor {
                    if self.cod(f) != self.dom(g) {
                        continue;
                    }
                    let gf = self.comp[g][f].unwrap();
                    if self.comp[h][gf] != self.comp[hg][f] {
                        return Err(Error::axiom(
                            &ctx,
                            format!(
                                "associativity fails at `{}` . `{}` . `{}`",
                                self.mors[h].name, self.mors[g].name, self.mors[f].name
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Opposite category; ids and names are reused, endpoints swap.
    pub fn opposite(&self) -> FinCat {
        let n_mor = self.n_mor();
        let mut comp = vec![vec![None; n_mor]; n_mor];
        for g in 0..n_mor {
            for f in 0..n_mor {
                comp[g][f] = self.comp[f][g];
            }
        }
        FinCat {
            name: format!("{}^op", self.name),
            objects: self.objects.clone(),
            mors: self
                .mors
                .iter()
                .map(|m| Mor {
                    name: m.name.clone(),
                    dom: m.cod,
                    cod: m.dom,
                })
                .collect(),
            id_of: self.id_of.clone(),
            comp,
        }
    }

    /// Full subcategory on `keep` (deduplicated, sorted). Returns the new
    /// category, the old id of each new object, the old id of each new
    /// morphism, and the inclusion functor expressed in the new ids.
    pub fn full_subcategory(&self, keep: &[ObjId], name: &str) -> (FinCat, Vec<ObjId>, Vec<MorId>, Functor) {
        let mut objs: Vec<ObjId> = keep.to_vec();
        objs.sort_unstable();
        objs.dedup();
        let obj_new: BTreeMap<ObjId, ObjId> = objs.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let mut old_mors: Vec<MorId> = Vec::new();
        for &o in &objs {
            old_mors.push(self.identity(o));
        }
        for m in 0..self.n_mor() {
            if self.is_identity(m) {
                continue;
            }
            if obj_new.contains_key(&self.dom(m)) && obj_new.contains_key(&self.cod(m)) {
                old_mors.push(m);
            }
        }
        let mor_new: BTreeMap<MorId, MorId> = old_mors.iter().enumerate().map(|(n, &m)| (m, n)).collect();
        let mors: Vec<Mor> = old_mors
            .iter()
            .map(|&m| Mor {
                name: self.mors[m].name.clone(),
                dom: obj_new[&self.dom(m)],
                cod: obj_new[&self.cod(m)],
            })
            .collect();
        let n = old_mors.len();
        let mut comp = vec![vec![None; n]; n];
        for g in 0..n {
            for f in 0..n {
                if mors[f].cod == mors[g].dom {
                    let c = self.comp[old_mors[g]][old_mors[f]].expect("parent category is total");
                    comp[g][f] = Some(mor_new[&c]);
                }
            }
        }
        let cat = FinCat {
            name: name.to_string(),
            objects: objs.iter().map(|&o| self.objects[o].clone()).collect(),
            mors,
            id_of: (0..objs.len()).collect(),
            comp,
        };
        let incl = Functor {
            name: format!("{name}->{}", self.name),
            obj_map: objs.clone(),
            mor_map: old_mors.clone(),
        };
        (cat, objs, old_mors, incl)
    }
}

/// Incremental builder; identities are implicit and inserted first.
pub struct CatBuilder {
    name: String,
    objects: Vec<String>,
    arrows: Vec<Mor>,
}

impl CatBuilder {
    pub fn new(name: &str) -> Self {
        CatBuilder {
            name: name.to_string(),
            objects: Vec::new(),
            arrows: Vec::new(),
        }
    }

    pub fn obj(&mut self, name: &str) -> ObjId {
        self.objects.push(name.to_string());
        self.objects.len() - 1
    }

    /// Declare a non identity arrow; returns its declaration index.
    pub fn arrow(&mut self, name: &str, dom: ObjId, cod: ObjId) -> usize {
        self.arrows.push(Mor {
            name: name.to_string(),
            dom,
            cod,
        });
        self.arrows.len() - 1
    }

    fn assemble(&self) -> (Vec<Mor>, usize) {
        let n_obj = self.objects.len();
        let mut mors: Vec<Mor> = (0..n_obj)
            .map(|o| Mor {
                name: format!("id_{}", self.objects[o]),
                dom: o,
                cod: o,
            })
            .collect();
        mors.extend(self.arrows.iter().cloned());
        (mors, n_obj)
    }

    /// Finish with explicit composites of declared arrows, given as
    /// `(g, f, g_then_f)` triples of declaration indices.
    pub fn build(self, comps: &[(usize, usize, usize)], guard: &Guard) -> Result<FinCat> {
        let (mors, n_obj) = self.assemble();
        let n = mors.len();
        let mut comp = vec![vec![None; n]; n];
        for g in 0..n {
            for f in 0..n {
                if mors[f].cod != mors[g].dom {
                    continue;
                }
                if f < n_obj {
                    comp[g][f] = Some(g);
                } else if g < n_obj {
                    comp[g][f] = Some(f);
                }
            }
        }
        for &(g, f, gf) in comps {
            let (g, f, gf) = (n_obj + g, n_obj + f, n_obj + gf);
            if g >= n || f >= n || gf >= n {
                return Err(Error::malformed(
                    "category",
                    &self.name,
                    "composition triple uses an undeclared arrow",
                ));
            }
            comp[g][f] = Some(gf);
        }
        let cat = FinCat {
            name: self.name,
            objects: self.objects,
            mors,
            id_of: (0..n_obj).collect(),
            comp,
        };
        cat.validate(guard)?;
        Ok(cat)
    }

    /// Finish by inferring composition from hom set uniqueness. Fails when
    /// any composable pair has zero or several candidate composites.
    pub fn build_thin(self, guard: &Guard) -> Result<FinCat> {
        let (mors, n_obj) = self.assemble();
        let n = mors.len();
        let mut comp = vec![vec![None; n]; n];
        for g in 0..n {
            for f in 0..n {
                if mors[f].cod != mors[g].dom {
                    continue;
                }
                if f < n_obj {
                    comp[g][f] = Some(g);
                    continue;
                }
                if g < n_obj {
                    comp[g][f] = Some(f);
                    continue;
                }
                let cands: Vec<MorId> = (0..n)
                    .filter(|&c| mors[c].dom == mors[f].dom && mors[c].cod == mors[g].cod)
                    .collect();
                match cands.len() {
                    1 => comp[g][f] = Some(cands[0]),
                    0 => {
                        return Err(Error::missing(
                            &self.name,
                            format!(
                                "no candidate composite for `{}` . `{}`",
                                mors[g].name, mors[f].name
                            ),
                        ))
                    }
                    _ => {
                        return Err(Error::unsupported(
                            "build_thin",
                            format!(
                                "hom set for `{}` . `{}` is not a singleton",
                                mors[g].name, mors[f].name
                            ),
                        ))
                    }
                }
            }
        }
        let cat = FinCat {
            name: self.name,
            objects: self.objects,
            mors,
            id_of: (0..n_obj).collect(),
            comp,
        };
        cat.validate(guard)?;
        Ok(cat)
    }
}

/// Functor stored as object and morphism index maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Functor {
    pub name: String,
    pub obj_map: Vec<ObjId>,
    pub mor_map: Vec<MorId>,
}

impl Functor {
    pub fn new(name: &str, obj_map: Vec<ObjId>, mor_map: Vec<MorId>) -> Functor {
        Functor { name: name.to_string(), obj_map, mor_map }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn identity(cat: &FinCat, name: &str) -> Functor {
        Functor {
            name: name.to_string(),
            obj_map: (0..cat.n_obj()).collect(),
            mor_map: (0..cat.n_mor()).collect(),
        }
    }

    pub fn ob(&self, o: ObjId) -> ObjId {
        self.obj_map[o]
    }

    pub fn mo(&self, m: MorId) -> MorId {
        self.mor_map[m]
    }

    /// `self: C -> D` followed by `other: D -> E`.
    pub fn then(&self, other: &Functor, name: &str) -> Functor {
        Functor {
            name: name.to_string(),
            obj_map: self.obj_map.iter().map(|&o| other.ob(o)).collect(),
            mor_map: self.mor_map.iter().map(|&m| other.mo(m)).collect(),
        }
    }

    /// Whether every hom map is injective and surjective.
    pub fn is_fully_faithful(&self, src: &FinCat, tgt: &FinCat) -> bool {
        for a in 0..src.n_obj() {
            for b in 0..src.n_obj() {
                let hs = src.hom(a, b);
                let mut images: Vec<MorId> = hs.iter().map(|&m| self.mo(m)).collect();
                images.sort_unstable();
                images.dedup();
                if images.len() != hs.len() {
                    return false;
                }
                let ht = tgt.hom(self.ob(a), self.ob(b));
                if images != ht {
                    return false;
                }
            }
        }
        true
    }
}

/// Shape and law validation of a functor.
pub fn validate_functor(src: &FinCat, tgt: &FinCat, f: &Functor, guard: &Guard) -> Result<()> {
    let ctx = f.name.clone();
    if f.obj_map.len() != src.n_obj() || f.mor_map.len() != src.n_mor() {
        return Err(Error::malformed("functor", &ctx, "map lengths do not match the source"));
    }
    if f.obj_map.iter().any(|&o| o >= tgt.n_obj()) || f.mor_map.iter().any(|&m| m >= tgt.n_mor()) {
        return Err(Error::malformed("functor", &ctx, "map has a dangling target id"));
    }
    for m in 0..src.n_mor() {
        let fm = f.mo(m);
        if tgt.dom(fm) != f.ob(src.dom(m)) || tgt.cod(fm) != f.ob(src.cod(m)) {
            return Err(Error::axiom(
                &ctx,
                format!("image of `{}` has wrong endpoints", src.mors[m].name),
            ));
        }
    }
    for o in 0..src.n_obj() {
        if f.mo(src.identity(o)) != tgt.identity(f.ob(o)) {
            return Err(Error::axiom(
                &ctx,
                format!("identity of `{}` is not preserved", src.objects[o]),
            ));
        }
    }
    guard.spend((src.n_mor() as u64) * (src.n_mor() as u64))?;
    for g in 0..src.n_mor() {
        for fm in 0..src.n_mor() {
            if let Some(c) = src.try_compose(g, fm) {
                let lhs = f.mo(c);
                let rhs = tgt.compose(f.mo(g), f.mo(fm))?;
                if lhs != rhs {
                    return Err(Error::axiom(
                        &ctx,
                        format!(
                            "composition `{}` . `{}` is not preserved",
                            src.mors[g].name, src.mors[fm].name
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Natural transformation between parallel functors, one component per
/// source object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NatTransf {
    pub components: Vec<MorId>,
}

/// Shape, endpoint, and naturality validation.
pub fn validate_nat(
    src: &FinCat,
    tgt: &FinCat,
    f: &Functor,
    g: &Functor,
    nt: &NatTransf,
    guard: &Guard,
) -> Result<()> {
    if nt.components.len() != src.n_obj() {
        return Err(Error::malformed(
            "natural transformation",
            "nat",
            "component count does not match the source objects",
        ));
    }
    for o in 0..src.n_obj() {
        let c = nt.components[o];
        if c >= tgt.n_mor() || tgt.dom(c) != f.ob(o) || tgt.cod(c) != g.ob(o) {
            return Err(Error::malformed(
                "natural transformation",
                "nat",
                format!("component at `{}` has wrong endpoints", src.objects[o]),
            ));
        }
    }
    guard.spend(src.n_mor() as u64)?;
    for m in 0..src.n_mor() {
        let (a, b) = (src.dom(m), src.cod(m));
        let lhs = tgt.compose(nt.components[b], f.mo(m))?;
        let rhs = tgt.compose(g.mo(m), nt.components[a])?;
        if lhs != rhs {
            return Err(Error::axiom(
                "nat",
                format!("naturality square at `{}` does not commute", src.mors[m].name),
            ));
        }
    }
    Ok(())
}

/// Search for a natural isomorphism between parallel functors.
///
/// Deterministic backtracking over objects in id order, trying candidate
/// isomorphisms in id order; returns the lexicographically least hit.
pub fn natural_iso_search(
    src: &FinCat,
    tgt: &FinCat,
    f: &Functor,
    g: &Functor,
    guard: &Guard,
) -> Result<Option<NatTransf>> {
    let n = src.n_obj();
    let cands: Vec<Vec<MorId>> = (0..n)
        .map(|o| tgt.isos_between(f.ob(o), g.ob(o)))
        .collect();
    if cands.iter().any(|c| c.is_empty()) {
        return Ok(None);
    }
    let mut chosen: Vec<MorId> = Vec::with_capacity(n);
    fn consistent(
        src: &FinCat,
        tgt: &FinCat,
        f: &Functor,
        g: &Functor,
        chosen: &[MorId],
        guard: &Guard,
    ) -> Result<bool> {
        let k = chosen.len() - 1;
        for m in 0..src.n_mor() {
            let (a, b) = (src.dom(m), src.cod(m));
            if (a != k && b != k) || a >= chosen.len() || b >= chosen.len() {
                continue;
            }
            guard.spend(1)?;
            let lhs = tgt.try_compose(chosen[b], f.mo(m));
            let rhs = tgt.try_compose(g.mo(m), chosen[a]);
            if lhs != rhs || lhs.is_none() {
                return Ok(false);
            }
        }
        Ok(true)
    }
    fn rec(
        src: &FinCat,
        tgt: &FinCat,
        f: &Functor,
        g: &Functor,
        cands: &[Vec<MorId>],
        chosen: &mut Vec<MorId>,
        guard: &Guard,
    ) -> Result<Option<NatTransf>> {
        if chosen.len() == cands.len() {
            return Ok(Some(NatTransf {
                components: chosen.clone(),
            }));
        }
        for &c in &cands[chosen.len()] {
            guard.spend(1)?;
            chosen.push(c);
            if consistent(src, tgt, f, g, chosen, guard)? {
                if let Some(hit) = rec(src, tgt, f, g, cands, chosen, guard)? {
                    return Ok(Some(hit));
                }
            }
            chosen.pop();
        }
        Ok(None)
    }
    rec(src, tgt, f, g, &cands, &mut chosen, guard)
}

/// Finite set `{0, .., n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FinSet {
    pub n: usize,
}

/// Total map between finite sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SetMap {
    pub src_n: usize,
    pub tgt_n: usize,
    pub table: Vec<usize>,
}

impl SetMap {
    pub fn new(src_n: usize, tgt_n: usize, table: Vec<usize>) -> SetMap {
        SetMap { src_n, tgt_n, table }
    }

    pub fn identity(n: usize) -> SetMap {
        SetMap {
            src_n: n,
            tgt_n: n,
            table: (0..n).collect(),
        }
    }

    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    /// `self: A -> B` followed by `other: B -> C`.
    pub fn then(&self, other: &SetMap) -> SetMap {
        debug_assert_eq!(self.tgt_n, other.src_n);
        SetMap {
            src_n: self.src_n,
            tgt_n: other.tgt_n,
            table: self.table.iter().map(|&x| other.table[x]).collect(),
        }
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.tgt_n];
        for &y in &self.table {
            if seen[y] {
                return false;
            }
            seen[y] = true;
        }
        true
    }

    pub fn is_surjective(&self) -> bool {
        let mut seen = vec![false; self.tgt_n];
        for &y in &self.table {
            seen[y] = true;
        }
        seen.into_iter().all(|b| b)
    }

    pub fn is_bijective(&self) -> bool {
        self.src_n == self.tgt_n && self.is_injective()
    }

    pub fn inverse(&self) -> Option<SetMap> {
        if !self.is_bijective() {
            return None;
        }
        let mut table = vec![0; self.src_n];
        for (x, &y) in self.table.iter().enumerate() {
            table[y] = x;
        }
        Some(SetMap {
            src_n: self.tgt_n,
            tgt_n: self.src_n,
            table,
        })
    }

    pub fn validate(&self, context: &str) -> Result<()> {
        if self.table.len() != self.src_n {
            return Err(Error::malformed("set map", context, "table length differs from source size"));
        }
        if self.table.iter().any(|&y| y >= self.tgt_n) {
            return Err(Error::malformed("set map", context, "table value out of range"));
        }
        Ok(())
    }
}

/// Covariant finite set valued diagram over a shape category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetDiagram {
    pub obs: Vec<FinSet>,
    pub maps: Vec<SetMap>,
}

impl SetDiagram {
    pub fn validate(&self, shape: &FinCat, guard: &Guard) -> Result<()> {
        if self.obs.len() != shape.n_obj() || self.maps.len() != shape.n_mor() {
            return Err(Error::malformed("diagram", &shape.name, "table lengths do not match the shape"));
        }
        for m in 0..shape.n_mor() {
            let map = &self.maps[m];
            map.validate(&shape.mors[m].name)?;
            if map.src_n != self.obs[shape.dom(m)].n || map.tgt_n != self.obs[shape.cod(m)].n {
                return Err(Error::malformed(
                    "diagram",
                    &shape.name,
                    format!("map at `{}` has wrong endpoints", shape.mors[m].name),
                ));
            }
        }
        for o in 0..shape.n_obj() {
            if self.maps[shape.identity(o)] != SetMap::identity(self.obs[o].n) {
                return Err(Error::axiom(
                    &shape.name,
                    format!("diagram does not send the identity of `{}` to an identity", shape.objects[o]),
                ));
            }
        }
        guard.spend((shape.n_mor() as u64) * (shape.n_mor() as u64))?;
        for g in 0..shape.n_mor() {
            for f in 0..shape.n_mor() {
                if let Some(c) = shape.try_compose(g, f) {
                    if self.maps[f].then(&self.maps[g]) != self.maps[c] {
                        return Err(Error::axiom(
                            &shape.name,
                            format!(
                                "diagram breaks composition at `{}` . `{}`",
                                shape.mors[g].name, shape.mors[f].name
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Limit of a finite set diagram: compatible tuples in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitResult {
    pub apex: FinSet,
    /// Tuple `t` of element choices per shape object, ascending lex.
    pub tuples: Vec<Vec<usize>>,
    /// Projection to each shape object.
    pub proj: Vec<SetMap>,
}

pub fn finset_limit(shape: &FinCat, d: &SetDiagram, guard: &Guard) -> Result<LimitResult> {
    let n = shape.n_obj();
    let mut tuples: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    fn rec(
        shape: &FinCat,
        d: &SetDiagram,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        guard: &Guard,
    ) -> Result<()> {
        let k = cur.len();
        if k == shape.n_obj() {
            out.push(cur.clone());
            return Ok(());
        }
        'next: for x in 0..d.obs[k].n {
            guard.spend(1)?;
            cur.push(x);
            for m in 0..shape.n_mor() {
                let (a, b) = (shape.dom(m), shape.cod(m));
                if a <= k && b <= k {
                    if d.maps[m].apply(cur[a]) != cur[b] {
                        cur.pop();
                        continue 'next;
                    }
                }
            }
            rec(shape, d, cur, out, guard)?;
            cur.pop();
        }
        Ok(())
    }
    rec(shape, d, &mut cur, &mut tuples, guard)?;
    if n == 0 {
        tuples = vec![vec![]];
    }
    let proj = (0..n)
        .map(|o| SetMap {
            src_n: tuples.len(),
            tgt_n: d.obs[o].n,
            table: tuples.iter().map(|t| t[o]).collect(),
        })
        .collect();
    Ok(LimitResult {
        apex: FinSet { n: tuples.len() },
        tuples,
        proj,
    })
}

/// Colimit of a finite set diagram: classes numbered by ascending least
/// representative `(object, element)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColimitResult {
    pub apex: FinSet,
    /// Cocone map from each shape object.
    pub inj: Vec<SetMap>,
    /// Least representative of each class.
    pub reps: Vec<(ObjId, usize)>,
}

pub fn finset_colimit(shape: &FinCat, d: &SetDiagram, guard: &Guard) -> Result<ColimitResult> {
    let n = shape.n_obj();
    let mut offset = vec![0usize; n + 1];
    for o in 0..n {
        offset[o + 1] = offset[o] + d.obs[o].n;
    }
    let total = offset[n];
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != c {
            let nxt = parent[c];
            parent[c] = r;
            c = nxt;
        }
        r
    }
    for m in 0..shape.n_mor() {
        let (a, b) = (shape.dom(m), shape.cod(m));
        for x in 0..d.obs[a].n {
            guard.spend(1)?;
            let u = find(&mut parent, offset[a] + x);
            let v = find(&mut parent, offset[b] + d.maps[m].apply(x));
            // Union toward the smaller flat index keeps representatives least.
            if u < v {
                parent[v] = u;
            } else {
                parent[u] = v;
            }
        }
    }
    let mut roots: Vec<usize> = (0..total).map(|x| find(&mut parent, x)).collect();
    let mut uniq: Vec<usize> = roots.clone();
    uniq.sort_unstable();
    uniq.dedup();
    let class_of: BTreeMap<usize, usize> = uniq.iter().enumerate().map(|(c, &r)| (r, c)).collect();
    for r in roots.iter_mut() {
        *r = class_of[r];
    }
    let inj = (0..n)
        .map(|o| SetMap {
            src_n: d.obs[o].n,
            tgt_n: uniq.len(),
            table: (0..d.obs[o].n).map(|x| roots[offset[o] + x]).collect(),
        })
        .collect();
    let reps = uniq
        .iter()
        .map(|&flat| {
            let o = (0..n).rfind(|&o| offset[o] <= flat).unwrap();
            (o, flat - offset[o])
        })
        .collect();
    Ok(ColimitResult {
        apex: FinSet { n: uniq.len() },
        inj,
        reps,
    })
}

/// A chosen fiber product cone over the cospan `f: A -> C <- B :g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiberProduct {
    pub apex: ObjId,
    pub p: MorId,
    pub q: MorId,
}

/// Whether `(apex, p, q)` is a limiting cone over `f, g`.
fn is_limiting_cone(cat: &FinCat, f: MorId, g: MorId, cone: FiberProduct, guard: &Guard) -> Result<bool> {
    if cat.try_compose(f, cone.p) != cat.try_compose(g, cone.q) || cat.try_compose(f, cone.p).is_none() {
        return Ok(false);
    }
    for t in 0..cat.n_obj() {
        for t1 in cat.hom(t, cat.dom(f)) {
            for t2 in cat.hom(t, cat.dom(g)) {
                guard.spend(1)?;
                if cat.try_compose(f, t1) != cat.try_compose(g, t2) {
                    continue;
                }
                let mediators = cat
                    .hom(t, cone.apex)
                    .into_iter()
                    .filter(|&u| {
                        cat.try_compose(cone.p, u) == Some(t1) && cat.try_compose(cone.q, u) == Some(t2)
                    })
                    .count();
                if mediators != 1 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Least limiting cone over `f, g` in `(apex, p, q)` lexicographic order,
/// or `None` when the cospan has no fiber product.
pub fn try_fiber_product(cat: &FinCat, f: MorId, g: MorId, guard: &Guard) -> Result<Option<FiberProduct>> {
    if cat.cod(f) != cat.cod(g) {
        return Err(Error::malformed(
            "cospan",
            &cat.name,
            format!("`{}` and `{}` have different codomains", cat.mors[f].name, cat.mors[g].name),
        ));
    }
    for apex in 0..cat.n_obj() {
        for p in cat.hom(apex, cat.dom(f)) {
            for q in cat.hom(apex, cat.dom(g)) {
                guard.spend(1)?;
                let cone = FiberProduct { apex, p, q };
                if is_limiting_cone(cat, f, g, cone, guard)? {
                    return Ok(Some(cone));
                }
            }
        }
    }
    Ok(None)
}

/// Like `try_fiber_product` but missing cones are an error.
pub fn fiber_product(cat: &FinCat, f: MorId, g: MorId, guard: &Guard) -> Result<FiberProduct> {
    try_fiber_product(cat, f, g, guard)?.ok_or_else(|| {
        Error::missing(
            &cat.name,
            format!(
                "no fiber product over `{}`, `{}`",
                cat.mors[f].name, cat.mors[g].name
            ),
        )
    })
}

/// The unique morphism into `fp.apex` whose composites with the cone legs are
/// `leg_p` and `leg_q`. The legs must share a domain and commute with the
/// cospan; a missing or ambiguous mediator is an error.
pub fn mediate_fiber_product(
    cat: &FinCat,
    fp: &FiberProduct,
    leg_p: MorId,
    leg_q: MorId,
) -> Result<MorId> {
    if cat.dom(leg_p) != cat.dom(leg_q) {
        return Err(Error::malformed(
            "cone",
            &cat.name,
            "cone legs have different domains",
        ));
    }
    let hits: Vec<MorId> = cat
        .hom(cat.dom(leg_p), fp.apex)
        .into_iter()
        .filter(|&m| {
            cat.try_compose(fp.p, m) == Some(leg_p) && cat.try_compose(fp.q, m) == Some(leg_q)
        })
        .collect();
    match hits.len() {
        1 => Ok(hits[0]),
        0 => Err(Error::missing(
            &cat.name,
            format!(
                "no mediator into `{}` over `{}`, `{}`",
                cat.objects[fp.apex], cat.mors[leg_p].name, cat.mors[leg_q].name
            ),
        )),
        _ => Err(Error::axiom(
            &cat.name,
            format!("ambiguous mediator into `{}`", cat.objects[fp.apex]),
        )),
    }
}

/// Least terminal object, or an error when none exists.
pub fn terminal_object(cat: &FinCat, guard: &Guard) -> Result<ObjId> {
    'outer: for o in 0..cat.n_obj() {
        for t in 0..cat.n_obj() {
            guard.spend(1)?;
            if cat.hom(t, o).len() != 1 {
                continue 'outer;
            }
        }
        return Ok(o);
    }
    Err(Error::missing(&cat.name, "no terminal object"))
}

/// Outcome of a finite limit preservation check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeftExactReport {
    pub ok: bool,
    pub witness: Option<String>,
}

/// Whether `u` preserves the terminal object and all fiber products.
///
/// The source must actually have them; a source without finite limits is a
/// `Missing` error rather than a negative verdict.
pub fn preserves_finite_limits(
    u: &Functor,
    src: &FinCat,
    tgt: &FinCat,
    guard: &Guard,
) -> Result<LeftExactReport> {
    let e = terminal_object(src, guard)?;
    for t in 0..tgt.n_obj() {
        guard.spend(1)?;
        if tgt.hom(t, u.ob(e)).len() != 1 {
            return Ok(LeftExactReport {
                ok: false,
                witness: Some(format!(
                    "image of terminal `{}` is not terminal",
                    src.objects[e]
                )),
            });
        }
    }
    for f in 0..src.n_mor() {
        for g in 0..src.n_mor() {
            if src.cod(f) != src.cod(g) {
                continue;
            }
            guard.spend(1)?;
            let cone = fiber_product(src, f, g, guard)?;
            let image = FiberProduct {
                apex: u.ob(cone.apex),
                p: u.mo(cone.p),
                q: u.mo(cone.q),
            };
            if !is_limiting_cone(tgt, u.mo(f), u.mo(g), image, guard)? {
                return Ok(LeftExactReport {
                    ok: false,
                    witness: Some(format!(
                        "fiber product over `{}`, `{}` is not preserved",
                        src.mors[f].name, src.mors[g].name
                    )),
                });
            }
        }
    }
    Ok(LeftExactReport { ok: true, witness: None })
}

/// Slice category over `c`, with books linking back to the parent.
#[derive(Debug, Clone)]
pub struct SliceCat {
    pub cat: FinCat,
    /// Parent morphism into `c` underlying each slice object.
    pub obj_mor: Vec<MorId>,
    /// Parent morphism underlying each slice morphism.
    pub mor_lift: Vec<MorId>,
    /// Projection to the parent category.
    pub proj: Functor,
}

pub fn slice_category(cat: &FinCat, c: ObjId, guard: &Guard) -> Result<SliceCat> {
    let obj_mor = cat.mors_into(c);
    let obj_of: BTreeMap<MorId, ObjId> = obj_mor.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let objects: Vec<String> = obj_mor.iter().map(|&m| format!("[{}]", cat.mors[m].name)).collect();
    let mut mors: Vec<Mor> = Vec::new();
    let mut mor_lift: Vec<MorId> = Vec::new();
    for (i, &f) in obj_mor.iter().enumerate() {
        mors.push(Mor {
            name: format!("id_{}", objects[i]),
            dom: i,
            cod: i,
        });
        mor_lift.push(cat.identity(cat.dom(f)));
    }
    for (i, &fs) in obj_mor.iter().enumerate() {
        for (j, &ft) in obj_mor.iter().enumerate() {
            for h in cat.hom(cat.dom(fs), cat.dom(ft)) {
                guard.spend(1)?;
                if cat.is_identity(h) && i == j {
                    continue;
                }
                if cat.try_compose(ft, h) == Some(fs) {
                    mors.push(Mor {
                        name: format!("{}[{}>{}]", cat.mors[h].name, cat.mors[fs].name, cat.mors[ft].name),
                        dom: i,
                        cod: j,
                    });
                    mor_lift.push(h);
                }
            }
        }
    }
    let key_of: BTreeMap<(ObjId, ObjId, MorId), MorId> = mors
        .iter()
        .enumerate()
        .map(|(k, m)| ((m.dom, m.cod, mor_lift[k]), k))
        .collect();
    let n = mors.len();
    let mut comp = vec![vec![None; n]; n];
    for g in 0..n {
        for f in 0..n {
            if mors[f].cod != mors[g].dom {
                continue;
            }
            let lift = cat.compose(mor_lift[g], mor_lift[f])?;
            let c = *key_of.get(&(mors[f].dom, mors[g].cod, lift)).ok_or_else(|| {
                Error::axiom(&cat.name, "slice composition escaped the slice")
            })?;
            comp[g][f] = Some(c);
        }
    }
    let slice = FinCat {
        name: format!("{}/{}", cat.name, cat.objects[c]),
        objects,
        mors,
        id_of: (0..obj_mor.len()).collect(),
        comp,
    };
    slice.validate(guard)?;
    let proj = Functor {
        name: format!("{}->{}", slice.name, cat.name),
        obj_map: obj_mor.iter().map(|&m| cat.dom(m)).collect(),
        mor_map: mor_lift.clone(),
    };
    let _ = obj_of;
    Ok(SliceCat {
        cat: slice,
        obj_mor,
        mor_lift,
        proj,
    })
}

/// Comma category of `u: C -> D` under an object `d` of `D`: objects are
/// pairs `(c, alpha: d -> u(c))`, morphisms are `gamma: c -> c'` with
/// `u(gamma) . alpha = alpha'`.
#[derive(Debug, Clone)]
pub struct CommaCat {
    pub cat: FinCat,
    pub obj_c: Vec<ObjId>,
    pub obj_alpha: Vec<MorId>,
    /// Source morphism underlying each comma morphism.
    pub mor_gamma: Vec<MorId>,
    /// Projection to the source of `u`.
    pub proj: Functor,
}

pub fn comma_category(
    u: &Functor,
    src: &FinCat,
    tgt: &FinCat,
    d: ObjId,
    guard: &Guard,
) -> Result<CommaCat> {
    let mut obj_c: Vec<ObjId> = Vec::new();
    let mut obj_alpha: Vec<MorId> = Vec::new();
    for c in 0..src.n_obj() {
        for alpha in tgt.hom(d, u.ob(c)) {
            guard.spend(1)?;
            obj_c.push(c);
            obj_alpha.push(alpha);
        }
    }
    let objects: Vec<String> = obj_c
        .iter()
        .zip(&obj_alpha)
        .map(|(&c, &a)| format!("({};{})", src.objects[c], tgt.mors[a].name))
        .collect();
    let n_obj = obj_c.len();
    let mut mors: Vec<Mor> = Vec::new();
    let mut mor_gamma: Vec<MorId> = Vec::new();
    for i in 0..n_obj {
        mors.push(Mor {
            name: format!("id_{}", objects[i]),
            dom: i,
            cod: i,
        });
        mor_gamma.push(src.identity(obj_c[i]));
    }
    for i in 0..n_obj {
        for j in 0..n_obj {
            for gamma in src.hom(obj_c[i], obj_c[j]) {
                guard.spend(1)?;
                if src.is_identity(gamma) && i == j {
                    continue;
                }
                if tgt.try_compose(u.mo(gamma), obj_alpha[i]) == Some(obj_alpha[j]) {
                    mors.push(Mor {
                        name: format!("{}:{i}>{j}", src.mors[gamma].name),
                        dom: i,
                        cod: j,
                    });
                    mor_gamma.push(gamma);
                }
            }
        }
    }
    let key_of: BTreeMap<(ObjId, ObjId, MorId), MorId> = mors
        .iter()
        .enumerate()
        .map(|(k, m)| ((m.dom, m.cod, mor_gamma[k]), k))
        .collect();
    let n = mors.len();
    let mut comp = vec![vec![None; n]; n];
    for g in 0..n {
        for f in 0..n {
            if mors[f].cod != mors[g].dom {
                continue;
            }
            let gamma = src.compose(mor_gamma[g], mor_gamma[f])?;
            let c = *key_of.get(&(mors[f].dom, mors[g].cod, gamma)).ok_or_else(|| {
                Error::axiom(&src.name, "comma composition escaped the comma category")
            })?;
            comp[g][f] = Some(c);
        }
    }
    let cat = FinCat {
        name: format!("({}|{})", tgt.objects[d], u.name),
        objects,
        mors,
        id_of: (0..n_obj).collect(),
        comp,
    };
    cat.validate(guard)?;
    let proj = Functor {
        name: format!("{}->{}", cat.name, src.name),
        obj_map: obj_c.clone(),
        mor_map: mor_gamma.clone(),
    };
    Ok(CommaCat {
        cat,
        obj_c,
        obj_alpha,
        mor_gamma,
        proj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(g: &Guard) -> FinCat {
        let mut b = CatBuilder::new("PT");
        b.obj("e");
        b.build(&[], g).unwrap()
    }

    fn arrow(g: &Guard) -> FinCat {
        let mut b = CatBuilder::new("ARROW");
        let a = b.obj("a");
        let bb = b.obj("b");
        b.arrow("u", bb, a);
        b.build(&[], g).unwrap()
    }

    #[test]
    fn builder_produces_valid_categories() {
        let g = Guard::default();
        let c = arrow(&g);
        assert_eq!(c.n_obj(), 2);
        assert_eq!(c.n_mor(), 3);
        assert_eq!(c.identity(0), 0);
        assert_eq!(c.hom(1, 0), vec![2]);
        assert!(c.validate(&g).is_ok());
    }

    #[test]
    fn validate_flags_malformed_versus_axiom() {
        let g = Guard::default();
        let mut c = arrow(&g);
        c.comp[2][2] = Some(2);
        assert!(matches!(c.validate(&g), Err(Error::Malformed { .. })));

        let mut c = arrow(&g);
        // Break an identity law while keeping the table shape legal.
        c.comp[2][1] = Some(1);
        assert!(matches!(c.validate(&g), Err(Error::Axiom { .. })));
    }

    #[test]
    fn thin_builder_infers_composites() {
        let g = Guard::default();
        let mut b = CatBuilder::new("CHAIN");
        let x = b.obj("x");
        let y = b.obj("y");
        let z = b.obj("z");
        b.arrow("f", x, y);
        b.arrow("g", y, z);
        b.arrow("gf", x, z);
        let c = b.build_thin(&g).unwrap();
        let (f, gg, gf) = (3, 4, 5);
        assert_eq!(c.try_compose(gg, f), Some(gf));
    }

    #[test]
    fn opposite_transposes_composition() {
        let g = Guard::default();
        let c = arrow(&g);
        let op = c.opposite();
        assert!(op.validate(&g).is_ok());
        assert_eq!(op.dom(2), 0);
        assert_eq!(op.cod(2), 1);
    }

    #[test]
    fn fiber_product_in_discrete_category_is_identity_cone() {
        let g = Guard::default();
        let mut b = CatBuilder::new("DISC2");
        b.obj("a");
        b.obj("b");
        let c = b.build(&[], &g).unwrap();
        let fp = fiber_product(&c, 0, 0, &g).unwrap();
        assert_eq!(fp, FiberProduct { apex: 0, p: 0, q: 0 });
        assert!(matches!(
            try_fiber_product(&c, 0, 1, &g),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn terminal_object_of_arrow() {
        let g = Guard::default();
        let c = arrow(&g);
        assert_eq!(terminal_object(&c, &g).unwrap(), 0);
        let mut b = CatBuilder::new("DISC2");
        b.obj("a");
        b.obj("b");
        let d = b.build(&[], &g).unwrap();
        assert!(matches!(terminal_object(&d, &g), Err(Error::Missing { .. })));
    }

    #[test]
    fn limit_of_parallel_pair_equalizes() {
        let g = Guard::default();
        let mut b = CatBuilder::new("PAIR");
        let x = b.obj("x");
        let y = b.obj("y");
        b.arrow("m1", x, y);
        b.arrow("m2", x, y);
        let shape = b.build(&[], &g).unwrap();
        let d = SetDiagram {
            obs: vec![FinSet { n: 2 }, FinSet { n: 2 }],
            maps: vec![
                SetMap::identity(2),
                SetMap::identity(2),
                SetMap::identity(2),
                SetMap::new(2, 2, vec![1, 0]),
            ],
        };
        d.validate(&shape, &g).unwrap();
        let lim = finset_limit(&shape, &d, &g).unwrap();
        assert_eq!(lim.apex.n, 0);
    }

    #[test]
    fn colimit_collapses_along_maps() {
        let g = Guard::default();
        let c = arrow(&g);
        // Covariant diagram on ARROW^op so the arrow points b <- a.
        let shape = c.opposite();
        let d = SetDiagram {
            obs: vec![FinSet { n: 2 }, FinSet { n: 1 }],
            maps: vec![SetMap::identity(2), SetMap::identity(1), SetMap::new(2, 1, vec![0, 0])],
        };
        d.validate(&shape, &g).unwrap();
        let col = finset_colimit(&shape, &d, &g).unwrap();
        assert_eq!(col.apex.n, 1);
        assert_eq!(col.reps, vec![(0, 0)]);
        assert_eq!(col.inj[0].table, vec![0, 0]);
    }

    #[test]
    fn comma_of_point_into_arrow_has_single_object() {
        let g = Guard::default();
        let p = pt(&g);
        let a = arrow(&g);
        // e goes to a; the comma under b collects maps b -> a.
        let u = Functor {
            name: "incl".into(),
            obj_map: vec![0],
            mor_map: vec![0],
        };
        validate_functor(&p, &a, &u, &g).unwrap();
        let comma = comma_category(&u, &p, &a, 1, &g).unwrap();
        assert_eq!(comma.cat.n_obj(), 1);
        assert_eq!(comma.obj_alpha, vec![2]);
    }

    #[test]
    fn natural_iso_search_finds_identity_first() {
        let g = Guard::default();
        let a = arrow(&g);
        let f = Functor::identity(&a, "idF");
        let h = Functor::identity(&a, "idG");
        let nt = natural_iso_search(&a, &a, &f, &h, &g).unwrap().unwrap();
        assert_eq!(nt.components, vec![0, 1]);
        validate_nat(&a, &a, &f, &h, &nt, &g).unwrap();
    }

    #[test]
    fn slice_of_arrow_over_target() {
        let g = Guard::default();
        let a = arrow(&g);
        let s = slice_category(&a, 0, &g).unwrap();
        // Objects: id_a and u; one non identity morphism u -> id_a over u.
        assert_eq!(s.cat.n_obj(), 2);
        assert_eq!(s.cat.n_mor(), 3);
        assert_eq!(s.proj.obj_map, vec![0, 1]);
        validate_functor(&s.cat, &a, &s.proj, &g).unwrap();
    }

    #[test]
    fn full_subcategory_keeps_tables_total() {
        let g = Guard::default();
        let a = arrow(&g);
        let (sub, old_objs, _, incl) = a.full_subcategory(&[1], "B");
        assert_eq!(sub.n_obj(), 1);
        assert_eq!(old_objs, vec![1]);
        sub.validate(&g).unwrap();
        validate_functor(&sub, &a, &incl, &g).unwrap();
    }
}
