//! Split fibered sites over a finite base site, their total sites with the
//! covanishing topology, sheaf families with transition maps, fiberwise
//! sheaf checks and sheafification, localization, base restriction, and the
//! terminal-base and section functors.
//!
//! The fibration is strict: pullback along an identity is an identity and
//! pullback along a composite is the composite of pullbacks, as tables.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::fincat::{
    slice_category, terminal_object, try_fiber_product, validate_functor, CatBuilder, FinCat,
    FinSet, Functor, LimitResult, Mor, MorId, ObjId, SetDiagram, SetMap, SliceCat,
};
use crate::guard::Guard;
use crate::sheaves::{
    adjunction_unit, direct_image, factor_through_sheafify, inverse_image, is_sheaf, sheafify,
    sheafify_mor, InverseImage, Presheaf, PsMor, SheafReport, Sheafification,
};
use crate::sites::{
    compare_topologies, generate_sieve, induce_topology, slice_site, Comparison, Coverage, Site,
    Topology,
};
use crate::{fincat, Result};

/// A split fibered site: a base site, one fiber site per base object, and a
/// strictly functorial pullback functor per base morphism.
///
/// `pullback[f]` for `f: i -> j` maps the fiber over `j` to the fiber over
/// `i`. Validation checks strictness, continuity and left exactness of every
/// pullback, fiber products in the base, and terminal objects plus fiber
/// products in every fiber.
#[derive(Debug, Clone)]
pub struct SplitFiberedSite {
    pub name: String,
    pub base: Site,
    pub fibers: Vec<Site>,
    pub pullback: Vec<Functor>,
}

impl SplitFiberedSite {
    pub fn validate(&self, guard: &Guard) -> Result<()> {
        let ctx = self.name.clone();
        let base = &self.base.cat;
        if self.fibers.len() != base.n_obj() || self.pullback.len() != base.n_mor() {
            return Err(Error::malformed("fibered site", &ctx, "fiber or pullback count mismatch"));
        }
        for f in 0..base.n_mor() {
            let (i, j) = (base.dom(f), base.cod(f));
            validate_functor(&self.fibers[j].cat, &self.fibers[i].cat, &self.pullback[f], guard)?;
        }
        // Strictness of the splitting.
        for o in 0..base.n_obj() {
            let id = &self.pullback[base.identity(o)];
            let n = self.fibers[o].cat.n_obj();
            let m = self.fibers[o].cat.n_mor();
            if id.obj_map != (0..n).collect::<Vec<_>>() || id.mor_map != (0..m).collect::<Vec<_>>() {
                return Err(Error::axiom(
                    &ctx,
                    format!("pullback along the identity of {} is not the identity", base.obj_name(o)),
                ));
            }
        }
        for g in 0..base.n_mor() {
            for f in 0..base.n_mor() {
                if let Some(c) = base.try_compose(g, f) {
                    guard.spend(1)?;
                    let composite = self.pullback[g].then(&self.pullback[f], "tmp");
                    if composite.obj_map != self.pullback[c].obj_map
                        || composite.mor_map != self.pullback[c].mor_map
                    {
                        return Err(Error::axiom(
                            &ctx,
                            format!(
                                "pullback along {} . {} is not the composite of pullbacks",
                                base.mor_name(g),
                                base.mor_name(f)
                            ),
                        ));
                    }
                }
            }
        }
        // Base has all fiber products.
        for f in 0..base.n_mor() {
            for g in 0..base.n_mor() {
                if base.cod(f) == base.cod(g) && try_fiber_product(base, f, g, guard)?.is_none() {
                    return Err(Error::missing(
                        &ctx,
                        format!(
                            "base has no fiber product over {}, {}",
                            base.mor_name(f),
                            base.mor_name(g)
                        ),
                    ));
                }
            }
        }
        // Fibers have terminal objects and fiber products.
        for (o, fiber) in self.fibers.iter().enumerate() {
            terminal_object(&fiber.cat, guard).map_err(|_| {
                Error::missing(&ctx, format!("fiber over {} has no terminal object", base.obj_name(o)))
            })?;
            for f in 0..fiber.cat.n_mor() {
                for g in 0..fiber.cat.n_mor() {
                    if fiber.cat.cod(f) == fiber.cat.cod(g)
                        && try_fiber_product(&fiber.cat, f, g, guard)?.is_none()
                    {
                        return Err(Error::missing(
                            &ctx,
                            format!("fiber over {} is missing a fiber product", base.obj_name(o)),
                        ));
                    }
                }
            }
        }
        // Pullbacks are continuous and left exact.
        for f in 0..base.n_mor() {
            let (i, j) = (base.dom(f), base.cod(f));
            let rep = crate::sheaves::check_continuity(&self.fibers[j], &self.fibers[i], &self.pullback[f], guard)?;
            if !rep.ok {
                return Err(Error::axiom(
                    &ctx,
                    format!(
                        "pullback along {} is not continuous left exact: {}",
                        base.mor_name(f),
                        rep.witness.unwrap_or_default()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Object of the total category: a base object and an object of its fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotalObj {
    pub base: ObjId,
    pub fib: ObjId,
}

/// Morphism `(i, V) -> (j, W)` of the total category: a base morphism
/// `f: i -> j` and a fiber morphism `V -> f-pullback(W)` in the fiber over i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotalMor {
    pub base: MorId,
    pub fib: MorId,
}

/// The total category of a split fibered site, carrying a topology, the
/// projection to the base, and the vertical inclusion of every fiber.
#[derive(Debug, Clone)]
pub struct TotalSite {
    pub site: Site,
    pub objs: Vec<TotalObj>,
    pub mors: Vec<TotalMor>,
    /// Total object id of `(base, fiber object)`.
    pub obj_flat: Vec<Vec<ObjId>>,
    /// Total morphism id keyed by `(base mor, fiber mor, total codomain)`;
    /// the domain is determined by the first two.
    pub mor_index: BTreeMap<(MorId, MorId, ObjId), MorId>,
    pub proj: Functor,
    pub fiber_incl: Vec<Functor>,
}

impl TotalSite {
    pub fn obj(&self, base: ObjId, fib: ObjId) -> ObjId {
        self.obj_flat[base][fib]
    }

    pub fn mor(&self, base: MorId, fib: MorId, cod: ObjId) -> Option<MorId> {
        self.mor_index.get(&(base, fib, cod)).copied()
    }

    /// Vertical morphism over `i` with fiber component `phi`.
    pub fn vertical(&self, s: &SplitFiberedSite, i: ObjId, phi: MorId) -> MorId {
        let cod = self.obj(i, s.fibers[i].cat.cod(phi));
        self.mor(s.base.cat.identity(i), phi, cod).expect("vertical morphism exists")
    }

    /// Cartesian lift of `f: i -> j` at the fiber object `w` over j: the
    /// morphism `(dom f, pullback(w)) -> (j, w)` with identity fiber part.
    pub fn cartesian(&self, s: &SplitFiberedSite, f: MorId, w: ObjId) -> MorId {
        let j = s.base.cat.cod(f);
        let i = s.base.cat.dom(f);
        let pw = s.pullback[f].ob(w);
        let cod = self.obj(j, w);
        self.mor(f, s.fibers[i].cat.identity(pw), cod).expect("cartesian lift exists")
    }
}

fn build_total_category(
    s: &SplitFiberedSite,
    guard: &Guard,
) -> Result<(FinCat, Vec<TotalObj>, Vec<TotalMor>, Vec<Vec<ObjId>>, BTreeMap<(MorId, MorId, ObjId), MorId>)> {
    let base = &s.base.cat;
    let mut objs: Vec<TotalObj> = Vec::new();
    let mut obj_flat: Vec<Vec<ObjId>> = Vec::with_capacity(base.n_obj());
    let mut names: Vec<String> = Vec::new();
    for i in 0..base.n_obj() {
        let mut row = Vec::new();
        for v in 0..s.fibers[i].cat.n_obj() {
            row.push(objs.len());
            names.push(format!("{}/{}", base.obj_name(i), s.fibers[i].cat.obj_name(v)));
            objs.push(TotalObj { base: i, fib: v });
        }
        obj_flat.push(row);
    }
    // Identities first, then declared morphisms in (source, target, base
    // morphism, fiber morphism) order.
    let mut mors: Vec<Mor> = Vec::new();
    let mut tmors: Vec<TotalMor> = Vec::new();
    let mut mor_index: BTreeMap<(MorId, MorId, ObjId), MorId> = BTreeMap::new();
    for (o, t) in objs.iter().enumerate() {
        let m = Mor { name: format!("id_{}", names[o]), dom: o, cod: o };
        mor_index.insert(
            (base.identity(t.base), s.fibers[t.base].cat.identity(t.fib), o),
            mors.len(),
        );
        mors.push(m);
        tmors.push(TotalMor {
            base: base.identity(t.base),
            fib: s.fibers[t.base].cat.identity(t.fib),
        });
    }
    for (src, ts) in objs.iter().enumerate() {
        for (tgt, tt) in objs.iter().enumerate() {
            for f in base.hom(ts.base, tt.base) {
                let pw = s.pullback[f].ob(tt.fib);
                for phi in s.fibers[ts.base].cat.hom(ts.fib, pw) {
                    guard.spend(1)?;
                    if f == base.identity(ts.base) && phi == s.fibers[ts.base].cat.identity(ts.fib)
                    {
                        continue;
                    }
                    let name = format!(
                        "{};{}>{}",
                        base.mor_name(f),
                        s.fibers[ts.base].cat.mor_name(phi),
                        names[tgt]
                    );
                    mor_index.insert((f, phi, tgt), mors.len());
                    mors.push(Mor { name, dom: src, cod: tgt });
                    tmors.push(TotalMor { base: f, fib: phi });
                }
            }
        }
    }
    let n_mor = mors.len();
    let mut comp: Vec<Vec<Option<MorId>>> = vec![vec![None; n_mor]; n_mor];
    for gm in 0..n_mor {
        for fm in 0..n_mor {
            if mors[fm].cod != mors[gm].dom {
                continue;
            }
            guard.spend(1)?;
            let (bg, bf) = (tmors[gm].base, tmors[fm].base);
            let bc = base.compose(bg, bf)?;
            let i = base.dom(bf);
            // Fiber part: phi then the f-pullback of psi.
            let psi_pulled = s.pullback[bf].mo(tmors[gm].fib);
            let fc = s.fibers[i].cat.compose(psi_pulled, tmors[fm].fib)?;
            let cod = mors[gm].cod;
            let id = *mor_index
                .get(&(bc, fc, cod))
                .ok_or_else(|| Error::missing("total category", "missing composite morphism"))?;
            comp[gm][fm] = Some(id);
        }
    }
    let cat = FinCat {
        name: format!("total({})", s.name),
        objects: names,
        mors,
        id_of: (0..objs.len()).collect(),
        comp,
    };
    cat.validate(guard)?;
    Ok((cat, objs, tmors, obj_flat, mor_index))
}

fn total_from_topology(
    s: &SplitFiberedSite,
    cat: FinCat,
    objs: Vec<TotalObj>,
    tmors: Vec<TotalMor>,
    obj_flat: Vec<Vec<ObjId>>,
    mor_index: BTreeMap<(MorId, MorId, ObjId), MorId>,
    top: Topology,
    guard: &Guard,
) -> Result<TotalSite> {
    let proj = Functor::new(
        "proj",
        objs.iter().map(|t| t.base).collect(),
        tmors.iter().map(|t| t.base).collect(),
    );
    validate_functor(&cat, &s.base.cat, &proj, guard)?;
    let mut fiber_incl = Vec::with_capacity(s.base.cat.n_obj());
    for i in 0..s.base.cat.n_obj() {
        let fc = &s.fibers[i].cat;
        let obj_map: Vec<ObjId> = (0..fc.n_obj()).map(|v| obj_flat[i][v]).collect();
        let mor_map: Vec<MorId> = (0..fc.n_mor())
            .map(|phi| {
                let cod = obj_flat[i][fc.cod(phi)];
                mor_index[&(s.base.cat.identity(i), phi, cod)]
            })
            .collect();
        let incl = Functor::new(&format!("incl_{}", s.base.cat.obj_name(i)), obj_map, mor_map);
        validate_functor(fc, &cat, &incl, guard)?;
        fiber_incl.push(incl);
    }
    let site = Site::new(cat, top, guard)?;
    Ok(TotalSite { site, objs, mors: tmors, obj_flat, mor_index, proj, fiber_incl })
}

/// Builds the total site with the covanishing topology: saturation of the
/// vertical images of all fiber covering sieves together with the Cartesian
/// lift families of all base covering sieves.
pub fn build_total_site(s: &SplitFiberedSite, guard: &Guard) -> Result<TotalSite> {
    s.validate(guard)?;
    let (cat, objs, tmors, obj_flat, mor_index) = build_total_category(s, guard)?;
    let mut cov = Coverage::new(cat.n_obj());
    for (o, t) in objs.iter().enumerate() {
        for sieve in &s.fibers[t.base].top.covering[t.fib] {
            let family: Vec<MorId> = sieve
                .iter()
                .map(|&phi| {
                    let cod = obj_flat[t.base][t.fib];
                    mor_index[&(s.base.cat.identity(t.base), phi, cod)]
                })
                .collect();
            cov.add_family(o, family);
        }
        for sieve in &s.base.top.covering[t.base] {
            let family: Vec<MorId> = sieve
                .iter()
                .map(|&f| {
                    let pw = s.pullback[f].ob(t.fib);
                    let idp = s.fibers[s.base.cat.dom(f)].cat.identity(pw);
                    mor_index[&(f, idp, o)]
                })
                .collect();
            cov.add_family(o, family);
        }
    }
    let top = crate::sites::saturate_topology(&cat, &cov, guard)?;
    total_from_topology(s, cat, objs, tmors, obj_flat, mor_index, top, guard)
}

/// The total topology: saturation of the vertical generators only.
pub fn total_topology(s: &SplitFiberedSite, total: &TotalSite, guard: &Guard) -> Result<Topology> {
    let cat = &total.site.cat;
    let mut cov = Coverage::new(cat.n_obj());
    for (o, t) in total.objs.iter().enumerate() {
        for sieve in &s.fibers[t.base].top.covering[t.fib] {
            let family: Vec<MorId> = sieve
                .iter()
                .map(|&phi| {
                    let cod = total.obj_flat[t.base][t.fib];
                    total.mor_index[&(s.base.cat.identity(t.base), phi, cod)]
                })
                .collect();
            cov.add_family(o, family);
        }
    }
    crate::sites::saturate_topology(cat, &cov, guard)
}

/// A presheaf presented fiberwise: one presheaf per fiber and one transition
/// map per base morphism and fiber object, subject to the cocycle law.
///
/// `transitions[f][w]` for `f: i -> j` maps the value of the j-fiber
/// presheaf at `w` to the value of the i-fiber presheaf at the pullback of
/// `w` along f.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheafFamily {
    pub name: String,
    pub fibers: Vec<Presheaf>,
    pub transitions: Vec<Vec<SetMap>>,
}

impl SheafFamily {
    pub fn validate(&self, s: &SplitFiberedSite, guard: &Guard) -> Result<()> {
        let ctx = self.name.clone();
        let base = &s.base.cat;
        if self.fibers.len() != base.n_obj() || self.transitions.len() != base.n_mor() {
            return Err(Error::malformed("sheaf family", &ctx, "table lengths do not match the base"));
        }
        for (i, p) in self.fibers.iter().enumerate() {
            p.validate(&s.fibers[i].cat, guard)?;
        }
        for f in 0..base.n_mor() {
            let (i, j) = (base.dom(f), base.cod(f));
            let fj = &s.fibers[j].cat;
            if self.transitions[f].len() != fj.n_obj() {
                return Err(Error::malformed(
                    "sheaf family",
                    &ctx,
                    format!("transition table along {} has wrong length", base.mor_name(f)),
                ));
            }
            for w in 0..fj.n_obj() {
                let t = &self.transitions[f][w];
                t.validate(&ctx)?;
                let pw = s.pullback[f].ob(w);
                if t.src_n != self.fibers[j].card(w) || t.tgt_n != self.fibers[i].card(pw) {
                    return Err(Error::malformed(
                        "sheaf family",
                        &ctx,
                        format!("transition along {} at {} has wrong endpoints", base.mor_name(f), fj.obj_name(w)),
                    ));
                }
            }
            // Naturality in the fiber object.
            for psi in 0..fj.n_mor() {
                guard.spend(1)?;
                let (w, wp) = (fj.dom(psi), fj.cod(psi));
                let lhs = self.fibers[j].res[psi].then(&self.transitions[f][w]);
                let rhs = self.transitions[f][wp].then(&self.fibers[i].res[s.pullback[f].mo(psi)]);
                if lhs != rhs {
                    return Err(Error::axiom(
                        &ctx,
                        format!(
                            "transition along {} is not natural at {}",
                            base.mor_name(f),
                            fj.mor_name(psi)
                        ),
                    ));
                }
            }
        }
        // Cocycle: identity transitions are identities, composites compose.
        for o in 0..base.n_obj() {
            let id = base.identity(o);
            for w in 0..s.fibers[o].cat.n_obj() {
                if self.transitions[id][w] != SetMap::identity(self.fibers[o].card(w)) {
                    return Err(Error::axiom(
                        &ctx,
                        format!("transition along the identity of {} is not the identity", base.obj_name(o)),
                    ));
                }
            }
        }
        for g in 0..base.n_mor() {
            for f in 0..base.n_mor() {
                if let Some(c) = base.try_compose(g, f) {
                    guard.spend(1)?;
                    // g: j -> k, f: i -> j; transition along g . f at x is
                    // the g-transition at x then the f-transition at g-pullback(x).
                    let k = base.cod(g);
                    for x in 0..s.fibers[k].cat.n_obj() {
                        let gx = s.pullback[g].ob(x);
                        let lhs = self.transitions[g][x].then(&self.transitions[f][gx]);
                        if lhs != self.transitions[c][x] {
                            return Err(Error::axiom(
                                &ctx,
                                format!(
                                    "cocycle fails along {} . {}",
                                    base.mor_name(g),
                                    base.mor_name(f)
                                ),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Flattens a family into a presheaf on the total category.
pub fn to_presheaf(s: &SplitFiberedSite, total: &TotalSite, fam: &SheafFamily) -> Presheaf {
    let cat = &total.site.cat;
    let value: Vec<FinSet> =
        total.objs.iter().map(|t| fam.fibers[t.base].value[t.fib]).collect();
    let res: Vec<SetMap> = (0..cat.n_mor())
        .map(|m| {
            let t = total.mors[m];
            let w = total.objs[cat.cod(m)].fib;
            fam.transitions[t.base][w].then(&fam.fibers[s.base.cat.dom(t.base)].res[t.fib])
        })
        .collect();
    Presheaf { name: fam.name.clone(), value, res }
}

/// Splits a total presheaf into its fiber restrictions and Cartesian
/// transition maps. Inverse to [`to_presheaf`] on the nose.
pub fn to_family(s: &SplitFiberedSite, total: &TotalSite, p: &Presheaf) -> SheafFamily {
    let base = &s.base.cat;
    let fibers: Vec<Presheaf> = (0..base.n_obj())
        .map(|i| {
            let mut q = direct_image(&total.fiber_incl[i], &s.fibers[i].cat, &total.site.cat, p);
            q.name = p.name.clone();
            q
        })
        .collect();
    let transitions: Vec<Vec<SetMap>> = (0..base.n_mor())
        .map(|f| {
            (0..s.fibers[base.cod(f)].cat.n_obj())
                .map(|w| p.res[total.cartesian(s, f, w)].clone())
                .collect()
        })
        .collect();
    SheafFamily { name: p.name.clone(), fibers, transitions }
}

/// Assembles per-fiber presheaf morphisms into a total presheaf morphism.
/// Only valid when the components commute with the transitions.
pub fn assemble_family_mor(total: &TotalSite, comps: &[PsMor], name: &str) -> PsMor {
    PsMor {
        name: name.to_string(),
        comp: total.objs.iter().map(|t| comps[t.base].comp[t.fib].clone()).collect(),
    }
}

/// Descent diagram limit: the limit of fiber values over the morphisms of
/// `positions` (all with codomain `i`), linked by base morphisms restricted
/// to `link_ok`. Returns the limit data and the canonical comparison map
/// from the value at `(i, w)`.
fn family_limit_over(
    s: &SplitFiberedSite,
    fam: &SheafFamily,
    i: ObjId,
    w: ObjId,
    positions: &[MorId],
    link_ok: &dyn Fn(MorId) -> bool,
    guard: &Guard,
) -> Result<(LimitResult, SetMap)> {
    let base = &s.base.cat;
    let k = positions.len();
    let mut b = CatBuilder::new("descent");
    for p in 0..k {
        b.obj(&format!("n{p}"));
    }
    // Arrow p -> q for every h: dom(positions[q]) -> dom(positions[p]) with
    // positions[p] . h == positions[q].
    let mut arrows: Vec<(usize, usize, MorId)> = Vec::new();
    for p in 0..k {
        for q in 0..k {
            for h in base.hom(base.dom(positions[q]), base.dom(positions[p])) {
                guard.spend(1)?;
                if base.compose(positions[p], h)? == positions[q] {
                    if p == q && base.is_identity(h) {
                        continue;
                    }
                    if link_ok(h) {
                        arrows.push((p, q, h));
                        b.arrow(&format!("a{p}_{q}_{h}"), p, q);
                    }
                }
            }
        }
    }
    let mut comps: Vec<(usize, usize, usize)> = Vec::new();
    for (a1, &(p, q, h1)) in arrows.iter().enumerate() {
        for (a2, &(q2, r, h2)) in arrows.iter().enumerate() {
            if q2 != q {
                continue;
            }
            guard.spend(1)?;
            let h = base.compose(h1, h2)?;
            if p == r && base.is_identity(h) {
                continue;
            }
            let a3 = arrows
                .iter()
                .position(|&(pp, rr, hh)| pp == p && rr == r && hh == h)
                .ok_or_else(|| Error::missing("descent shape", "missing composite link"))?;
            comps.push((a2, a1, a3));
        }
    }
    let shape = b.build(&comps, guard)?;
    let obs: Vec<FinSet> = positions
        .iter()
        .map(|&f| {
            let fw = s.pullback[f].ob(w);
            fam.fibers[base.dom(f)].value[fw]
        })
        .collect();
    let mut maps: Vec<SetMap> = (0..shape.n_mor()).map(|m| SetMap::identity(obs[shape.dom(m)].n)).collect();
    for (a, &(p, _q, h)) in arrows.iter().enumerate() {
        let fw = s.pullback[positions[p]].ob(w);
        maps[k + a] = fam.transitions[h][fw].clone();
    }
    let diagram = SetDiagram { obs, maps };
    diagram.validate(&shape, guard)?;
    let lim = fincat::finset_limit(&shape, &diagram, guard)?;
    let table: Vec<usize> = (0..fam.fibers[i].card(w))
        .map(|x| {
            let tuple: Vec<usize> = positions
                .iter()
                .map(|&f| fam.transitions[f][w].apply(x))
                .collect();
            lim.tuples.binary_search(&tuple).expect("cocycle makes the canonical tuple compatible")
        })
        .collect();
    let canonical = SetMap::new(fam.fibers[i].card(w), lim.apex.n, table);
    Ok((lim, canonical))
}

/// Verdict of the fiberwise sheaf criterion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberwiseReport {
    pub ok: bool,
    pub witness: Option<String>,
}

/// Fiberwise sheaf criterion: every fiber presheaf is a sheaf for its fiber
/// topology, and for every base covering sieve the descent comparison map is
/// bijective at every fiber object.
pub fn fiberwise_sheaf_check(
    s: &SplitFiberedSite,
    fam: &SheafFamily,
    guard: &Guard,
) -> Result<FiberwiseReport> {
    let base = &s.base.cat;
    for i in 0..base.n_obj() {
        let rep: SheafReport = is_sheaf(&s.fibers[i], &fam.fibers[i], guard)?;
        if !rep.ok {
            return Ok(FiberwiseReport {
                ok: false,
                witness: Some(format!(
                    "fiber presheaf over {} is not a sheaf: {}",
                    base.obj_name(i),
                    rep.failure.map(|f| f.detail).unwrap_or_default()
                )),
            });
        }
    }
    for i in 0..base.n_obj() {
        for sieve in &s.base.top.covering[i] {
            let positions: Vec<MorId> = sieve.iter().copied().collect();
            for w in 0..s.fibers[i].cat.n_obj() {
                let (_lim, canonical) =
                    family_limit_over(s, fam, i, w, &positions, &|_| true, guard)?;
                if !canonical.is_bijective() {
                    return Ok(FiberwiseReport {
                        ok: false,
                        witness: Some(format!(
                            "descent fails over {} at fiber object {}",
                            base.obj_name(i),
                            s.fibers[i].cat.obj_name(w)
                        )),
                    });
                }
            }
        }
    }
    Ok(FiberwiseReport { ok: true, witness: None })
}

/// Fiberwise sheafification: each fiber is sheafified and the transitions
/// are pushed through the units by unique factorization.
#[derive(Debug, Clone)]
pub struct FiberwiseSheafification {
    pub out: SheafFamily,
    pub units: Vec<PsMor>,
}

pub fn fiberwise_sheafify(
    s: &SplitFiberedSite,
    fam: &SheafFamily,
    guard: &Guard,
) -> Result<FiberwiseSheafification> {
    let base = &s.base.cat;
    let shs: Vec<Sheafification> = (0..base.n_obj())
        .map(|i| sheafify(&s.fibers[i], &fam.fibers[i], guard))
        .collect::<Result<_>>()?;
    let mut transitions: Vec<Vec<SetMap>> = Vec::with_capacity(base.n_mor());
    for f in 0..base.n_mor() {
        let (i, j) = (base.dom(f), base.cod(f));
        if base.is_identity(f) {
            transitions.push(
                (0..s.fibers[j].cat.n_obj()).map(|w| SetMap::identity(shs[j].out.card(w))).collect(),
            );
            continue;
        }
        // Target: the sheafified i-fiber pulled back along f, a sheaf on the
        // j-fiber by continuity.
        let tgt = direct_image(&s.pullback[f], &s.fibers[j].cat, &s.fibers[i].cat, &shs[i].out);
        let given = PsMor {
            name: format!("t{}", base.mor_name(f)),
            comp: (0..s.fibers[j].cat.n_obj())
                .map(|w| {
                    let pw = s.pullback[f].ob(w);
                    fam.transitions[f][w].then(&shs[i].unit.comp[pw])
                })
                .collect(),
        };
        let factored = factor_through_sheafify(&s.fibers[j], &shs[j], &tgt, &given, guard)?;
        transitions.push(factored.comp);
    }
    let out = SheafFamily {
        name: format!("{}~", fam.name),
        fibers: shs.iter().map(|sh| sh.out.clone()).collect(),
        transitions,
    };
    out.validate(s, guard)?;
    let units = shs.into_iter().map(|sh| sh.unit).collect();
    Ok(FiberwiseSheafification { out, units })
}

/// Compares covanishing sheafification with fiberwise-then-covanishing
/// sheafification: the canonical comparison map must be an isomorphism.
pub fn fiberwise_commutes_with_covanishing(
    s: &SplitFiberedSite,
    total: &TotalSite,
    fam: &SheafFamily,
    guard: &Guard,
) -> Result<bool> {
    let p = to_presheaf(s, total, fam);
    let sh_direct = sheafify(&total.site, &p, guard)?;
    let fw = fiberwise_sheafify(s, fam, guard)?;
    let q = to_presheaf(s, total, &fw.out);
    let sh_after = sheafify(&total.site, &q, guard)?;
    let unit_total = assemble_family_mor(total, &fw.units, "fiberwise-units");
    unit_total.validate(&total.site.cat, &p, &q, guard)?;
    let pushed = sheafify_mor(&total.site, &sh_direct, &sh_after, &unit_total, guard)?;
    Ok(pushed.is_iso())
}

/// A fibered site localized at a total object, together with the canonical
/// identification of its total category with the slice of the original
/// total category.
#[derive(Debug, Clone)]
pub struct LocalizedFibered {
    pub fibered: SplitFiberedSite,
    pub total: TotalSite,
    /// Slice of the original total category at the localization object.
    pub slice: SliceCat,
    /// Isomorphism from the localized total category onto the slice.
    pub to_slice: Functor,
}

/// Localizes a fibered site at a total object `v`: the base becomes the
/// slice of the base at its projection, fibers become slices of fibers at
/// the pulled-back fiber object, and pullbacks restrict.
pub fn localize_at_object(
    s: &SplitFiberedSite,
    total: &TotalSite,
    v: ObjId,
    guard: &Guard,
) -> Result<LocalizedFibered> {
    let base = &s.base.cat;
    let c = total.objs[v].base;
    let v0 = total.objs[v].fib;
    let (base_slice, base_site) = slice_site(&s.base, c, guard)?;
    let n = base_site.cat.n_obj();

    let mut fiber_slices: Vec<SliceCat> = Vec::with_capacity(n);
    let mut fiber_sites: Vec<Site> = Vec::with_capacity(n);
    let mut anchors: Vec<ObjId> = Vec::with_capacity(n);
    for sobj in 0..n {
        let f = base_slice.obj_mor[sobj];
        let i = base.dom(f);
        let anchor = s.pullback[f].ob(v0);
        let (sl, site) = slice_site(&s.fibers[i], anchor, guard)?;
        anchors.push(anchor);
        fiber_slices.push(sl);
        fiber_sites.push(site);
    }

    let mut pulls: Vec<Functor> = Vec::with_capacity(base_site.cat.n_mor());
    for m in 0..base_site.cat.n_mor() {
        let (sp, sq) = (base_site.cat.dom(m), base_site.cat.cod(m));
        // m: [f'] -> [f] over h: dom f' -> dom f with f . h = f'.
        let h = base_slice.mor_lift[m];
        let src_slice = &fiber_slices[sq];
        let tgt_slice = &fiber_slices[sp];
        let obj_map: Vec<ObjId> = src_slice
            .obj_mor
            .iter()
            .map(|&phi| {
                let img = s.pullback[h].mo(phi);
                tgt_slice.obj_mor.iter().position(|&x| x == img).expect("strict pullback of anchor")
            })
            .collect();
        let mor_map: Vec<MorId> = (0..src_slice.cat.n_mor())
            .map(|sm| {
                let lift = s.pullback[h].mo(src_slice.mor_lift[sm]);
                let d = obj_map[src_slice.cat.dom(sm)];
                let cd = obj_map[src_slice.cat.cod(sm)];
                (0..tgt_slice.cat.n_mor())
                    .find(|&tm| {
                        tgt_slice.cat.dom(tm) == d
                            && tgt_slice.cat.cod(tm) == cd
                            && tgt_slice.mor_lift[tm] == lift
                    })
                    .expect("pullback of a slice morphism is a slice morphism")
            })
            .collect();
        pulls.push(Functor::new(&format!("loc_pull_{m}"), obj_map, mor_map));
    }

    let fibered = SplitFiberedSite {
        name: format!("{}/{}", s.name, total.site.cat.obj_name(v)),
        base: base_site,
        fibers: fiber_sites,
        pullback: pulls,
    };
    let loc_total = build_total_site(&fibered, guard)?;

    // Canonical identification with the slice of the total category at v.
    let slice = slice_category(&total.site.cat, v, guard)?;
    let obj_map: Vec<ObjId> = loc_total
        .objs
        .iter()
        .map(|t| {
            let f = base_slice.obj_mor[t.base];
            let phi = fiber_slices[t.base].obj_mor[t.fib];
            let tm = total.mor_index[&(f, phi, v)];
            slice.obj_mor.iter().position(|&x| x == tm).expect("slice object for each pair")
        })
        .collect();
    let mor_map: Vec<MorId> = (0..loc_total.site.cat.n_mor())
        .map(|lm| {
            let t = loc_total.mors[lm];
            let h = base_slice.mor_lift[t.base];
            let src_fiber = &fiber_slices[loc_total.objs[loc_total.site.cat.dom(lm)].base];
            let psi = src_fiber.mor_lift[t.fib];
            let under_cod = {
                let cod_obj = loc_total.objs[loc_total.site.cat.cod(lm)];
                let fj = base_slice.obj_mor[cod_obj.base];
                let xj = fiber_slices[cod_obj.base].obj_mor[cod_obj.fib];
                total.obj_flat[base.dom(fj)][s.fibers[base.dom(fj)].cat.dom(xj)]
            };
            let under = total.mor_index[&(h, psi, under_cod)];
            let d = obj_map[loc_total.site.cat.dom(lm)];
            let cd = obj_map[loc_total.site.cat.cod(lm)];
            (0..slice.cat.n_mor())
                .find(|&sm| {
                    slice.cat.dom(sm) == d && slice.cat.cod(sm) == cd && slice.mor_lift[sm] == under
                })
                .expect("localized morphism corresponds to a slice morphism")
        })
        .collect();
    let to_slice = Functor::new("loc-to-slice", obj_map, mor_map);
    validate_functor(&loc_total.site.cat, &slice.cat, &to_slice, guard)?;
    if loc_total.site.cat.n_obj() != slice.cat.n_obj()
        || loc_total.site.cat.n_mor() != slice.cat.n_mor()
        || !to_slice.is_fully_faithful(&loc_total.site.cat, &slice.cat)
    {
        return Err(Error::axiom(
            "localize_at_object",
            "localized total category does not match the slice of the total category",
        ));
    }
    Ok(LocalizedFibered { fibered, total: loc_total, slice, to_slice })
}

/// Transports a topology along an isomorphism of categories.
pub fn transport_topology(iso: &Functor, top: &Topology, tgt_n_obj: usize) -> Topology {
    let mut covering = vec![std::collections::BTreeSet::new(); tgt_n_obj];
    for (u, sieves) in top.covering.iter().enumerate() {
        for sieve in sieves {
            covering[iso.ob(u)].insert(sieve.iter().map(|&m| iso.mo(m)).collect());
        }
    }
    Topology { covering }
}

/// Compares the topology induced on the slice of the total category by the
/// slice projection with the covanishing topology of the localized fibered
/// site, transported along the canonical identification.
pub fn localization_comparison(
    s: &SplitFiberedSite,
    total: &TotalSite,
    v: ObjId,
    guard: &Guard,
) -> Result<Comparison> {
    let loc = localize_at_object(s, total, v, guard)?;
    let induced = induce_topology(&loc.slice.proj, &loc.slice.cat, &total.site, guard)?;
    let transported = transport_topology(&loc.to_slice, &loc.total.site.top, loc.slice.cat.n_obj());
    compare_topologies(&loc.slice.cat, &induced, &loc.slice.cat, &transported, guard)
}

/// A fibered site restricted to a full base subcategory, with the checked
/// hypotheses: topologically generating and stable under fiber products.
#[derive(Debug, Clone)]
pub struct RestrictedBase {
    pub fibered: SplitFiberedSite,
    /// Kept base objects, ascending; new object k corresponds to keep[k].
    pub keep: Vec<ObjId>,
    /// Old morphism id of each restricted morphism.
    pub old_mors: Vec<MorId>,
    pub incl: Functor,
}

pub fn restrict_base(
    s: &SplitFiberedSite,
    keep: &[ObjId],
    guard: &Guard,
) -> Result<RestrictedBase> {
    let base = &s.base.cat;
    let mut keep: Vec<ObjId> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&o| o >= base.n_obj()) {
        return Err(Error::malformed("restrict_base", &s.name, "kept object id out of range"));
    }
    // Hypothesis: topologically generating.
    for i in 0..base.n_obj() {
        let family: Vec<MorId> = base
            .mors_into(i)
            .into_iter()
            .filter(|&m| keep.contains(&base.dom(m)))
            .collect();
        let gen = generate_sieve(base, i, &family, guard)?;
        if !s.base.top.covers(i, &gen.mors) {
            return Err(Error::unsupported(
                "restrict_base",
                format!("subcategory is not topologically generating at {}", base.obj_name(i)),
            ));
        }
    }
    // Hypothesis: stable under fiber products.
    for f in 0..base.n_mor() {
        for g in 0..base.n_mor() {
            if base.cod(f) != base.cod(g)
                || !keep.contains(&base.dom(f))
                || !keep.contains(&base.dom(g))
            {
                continue;
            }
            guard.spend(1)?;
            let fp = try_fiber_product(base, f, g, guard)?.ok_or_else(|| {
                Error::missing(&s.name, "base is missing a fiber product")
            })?;
            if !keep.contains(&fp.apex) {
                return Err(Error::unsupported(
                    "restrict_base",
                    format!(
                        "subcategory is not stable under fiber products: apex {} escapes",
                        base.obj_name(fp.apex)
                    ),
                ));
            }
        }
    }
    let (sub, old_objs, old_mors, incl) =
        base.full_subcategory(&keep, &format!("{}|sub", base.name()));
    if !incl.is_fully_faithful(&sub, base) {
        return Err(Error::unsupported("restrict_base", "inclusion is not fully faithful"));
    }
    let top = induce_topology(&incl, &sub, &s.base, guard)?;
    let base_site = Site::new(sub, top, guard)?;
    let fibers: Vec<Site> = old_objs.iter().map(|&o| s.fibers[o].clone()).collect();
    let pullback: Vec<Functor> = old_mors.iter().map(|&m| s.pullback[m].clone()).collect();
    let fibered = SplitFiberedSite {
        name: format!("{}|sub", s.name),
        base: base_site,
        fibers,
        pullback,
    };
    fibered.validate(guard)?;
    Ok(RestrictedBase { fibered, keep: old_objs, old_mors, incl })
}

/// Restricts a sheaf family to the kept base objects.
pub fn restrict_family(rb: &RestrictedBase, fam: &SheafFamily) -> SheafFamily {
    SheafFamily {
        name: format!("{}|sub", fam.name),
        fibers: rb.keep.iter().map(|&o| fam.fibers[o].clone()).collect(),
        transitions: rb.old_mors.iter().map(|&m| fam.transitions[m].clone()).collect(),
    }
}

/// Reconstruction along a restriction: at every base object, the family
/// value must be the limit of its kept-side values. Returns the first
/// failing object, if any.
pub fn reconstruction_check(
    s: &SplitFiberedSite,
    rb: &RestrictedBase,
    fam: &SheafFamily,
    guard: &Guard,
) -> Result<FiberwiseReport> {
    let base = &s.base.cat;
    for i in 0..base.n_obj() {
        let positions: Vec<MorId> = base
            .mors_into(i)
            .into_iter()
            .filter(|&m| rb.keep.contains(&base.dom(m)))
            .collect();
        let link_ok = |h: MorId| rb.keep.contains(&base.dom(h)) && rb.keep.contains(&base.cod(h));
        for w in 0..s.fibers[i].cat.n_obj() {
            let (_lim, canonical) = family_limit_over(s, fam, i, w, &positions, &link_ok, guard)?;
            if !canonical.is_bijective() {
                return Ok(FiberwiseReport {
                    ok: false,
                    witness: Some(format!(
                        "reconstruction fails at {} over fiber object {}",
                        base.obj_name(i),
                        s.fibers[i].cat.obj_name(w)
                    )),
                });
            }
        }
    }
    Ok(FiberwiseReport { ok: true, witness: None })
}

/// The terminal-base functor pair. Requires a terminal base object; its
/// fiber is the "generic" fiber the direct image evaluates at.
#[derive(Debug, Clone)]
pub struct Beta {
    /// Terminal object of the base.
    pub iota: ObjId,
    /// Unique base morphism from each object into the terminal one.
    pub to_terminal: Vec<MorId>,
}

pub fn beta_functors(s: &SplitFiberedSite, guard: &Guard) -> Result<Beta> {
    let base = &s.base.cat;
    let iota = terminal_object(base, guard).map_err(|_| {
        Error::unsupported("beta_functors", "base site has no terminal object")
    })?;
    for (i, fiber) in s.fibers.iter().enumerate() {
        terminal_object(&fiber.cat, guard).map_err(|_| {
            Error::unsupported(
                "beta_functors",
                format!("fiber over {} has no terminal object", base.obj_name(i)),
            )
        })?;
    }
    let to_terminal = (0..base.n_obj()).map(|i| base.hom(i, iota)[0]).collect();
    Ok(Beta { iota, to_terminal })
}

/// Direct image under beta: the component of the family at the terminal
/// base object.
pub fn beta_direct(fam: &SheafFamily, beta: &Beta) -> Presheaf {
    let mut p = fam.fibers[beta.iota].clone();
    p.name = format!("beta_*({})", fam.name);
    p
}

/// Inverse image under beta of a sheaf on the terminal fiber: the family of
/// fiberwise inverse images along the pullbacks to the terminal object,
/// covanishing-sheafified.
#[derive(Debug, Clone)]
pub struct BetaInverse {
    /// Fiberwise inverse images, before covanishing sheafification.
    pub family: SheafFamily,
    pub invs: Vec<InverseImage>,
    pub presheaf: Presheaf,
    pub sh: Sheafification,
    /// Unit of the composite adjunction at the terminal fiber.
    pub unit: PsMor,
}

pub fn beta_inverse(
    s: &SplitFiberedSite,
    total: &TotalSite,
    beta: &Beta,
    g: &Presheaf,
    guard: &Guard,
) -> Result<BetaInverse> {
    let base = &s.base.cat;
    let iota = beta.iota;
    let invs: Vec<InverseImage> = (0..base.n_obj())
        .map(|i| {
            let f = beta.to_terminal[i];
            inverse_image(&s.pullback[f], &s.fibers[iota], &s.fibers[i], g, guard)
        })
        .collect::<Result<_>>()?;
    let mut transitions: Vec<Vec<SetMap>> = Vec::with_capacity(base.n_mor());
    for f in 0..base.n_mor() {
        let (i, j) = (base.dom(f), base.cod(f));
        if base.is_identity(f) {
            transitions.push(
                (0..s.fibers[j].cat.n_obj()).map(|w| SetMap::identity(invs[j].out.card(w))).collect(),
            );
            continue;
        }
        // Kan-class map: reanchor along the f-pullback, then sheafify on
        // both sides by unique factorization.
        let tgt = direct_image(&s.pullback[f], &s.fibers[j].cat, &s.fibers[i].cat, &invs[i].out);
        let comp: Vec<SetMap> = (0..s.fibers[j].cat.n_obj())
            .map(|w| {
                let pw = s.pullback[f].ob(w);
                let table: Vec<usize> = (0..invs[j].lan.out.card(w))
                    .map(|class| {
                        let (p, alpha, x) = invs[j].lan.rep(w, class);
                        let moved = s.pullback[f].mo(alpha);
                        let cls = invs[i]
                            .lan
                            .class_of(pw, p, moved, x)
                            .expect("pullback of an anchor is an anchor");
                        invs[i].sh.unit.comp[pw].apply(cls)
                    })
                    .collect();
                SetMap::new(invs[j].lan.out.card(w), invs[i].out.card(pw), table)
            })
            .collect();
        let given = PsMor { name: format!("k{}", base.mor_name(f)), comp };
        let factored = factor_through_sheafify(&s.fibers[j], &invs[j].sh, &tgt, &given, guard)?;
        transitions.push(factored.comp);
    }
    let family = SheafFamily {
        name: format!("beta^*({})", g.name),
        fibers: invs.iter().map(|v| v.out.clone()).collect(),
        transitions,
    };
    family.validate(s, guard)?;
    let presheaf = to_presheaf(s, total, &family);
    let sh = sheafify(&total.site, &presheaf, guard)?;
    // Unit at the terminal fiber: the fiberwise unit into the identity
    // inverse image, then the covanishing unit at the vertical objects.
    let unit_iota = adjunction_unit(
        &s.pullback[base.identity(iota)],
        &s.fibers[iota].cat,
        g,
        &invs[iota],
    );
    let comp: Vec<SetMap> = (0..s.fibers[iota].cat.n_obj())
        .map(|v| unit_iota.comp[v].then(&sh.unit.comp[total.obj(iota, v)]))
        .collect();
    let unit = PsMor { name: format!("beta-unit({})", g.name), comp };
    Ok(BetaInverse { family, invs, presheaf, sh, unit })
}

/// Per-sample verdict of the beta unit check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetaVerdict {
    pub sample: String,
    /// The fiberwise family is already a covanishing sheaf.
    pub family_is_sheaf: bool,
    /// The unit at the terminal fiber is an isomorphism.
    pub unit_iso: bool,
}

pub fn beta_unit_check(
    s: &SplitFiberedSite,
    total: &TotalSite,
    beta: &Beta,
    samples: &[Presheaf],
    guard: &Guard,
) -> Result<Vec<BetaVerdict>> {
    let mut out = Vec::with_capacity(samples.len());
    for g in samples {
        let bi = beta_inverse(s, total, beta, g, guard)?;
        let family_is_sheaf = is_sheaf(&total.site, &bi.presheaf, guard)?.ok;
        out.push(BetaVerdict {
            sample: g.name.clone(),
            family_is_sheaf,
            unit_iso: bi.unit.is_iso(),
        });
    }
    Ok(out)
}

/// The section functor data and the two computations of its inverse image.
#[derive(Debug, Clone)]
pub struct Sigma {
    /// Section of the projection: each base object goes to the terminal
    /// object of its fiber.
    pub sigma: Functor,
    pub family: SheafFamily,
    pub family_sh: Sheafification,
    pub inv: InverseImage,
    /// Canonical comparison from the family computation to the Kan
    /// computation; an isomorphism.
    pub comparison: PsMor,
}

pub fn sigma_pullback(
    s: &SplitFiberedSite,
    total: &TotalSite,
    f: &Presheaf,
    guard: &Guard,
) -> Result<Sigma> {
    let base = &s.base.cat;
    let terminals: Vec<ObjId> = (0..base.n_obj())
        .map(|i| terminal_object(&s.fibers[i].cat, guard))
        .collect::<Result<_>>()?;
    let obj_map: Vec<ObjId> = (0..base.n_obj()).map(|i| total.obj(i, terminals[i])).collect();
    let mor_map: Vec<MorId> = (0..base.n_mor())
        .map(|fm| {
            let (i, j) = (base.dom(fm), base.cod(fm));
            let pw = s.pullback[fm].ob(terminals[j]);
            let phi = s.fibers[i].cat.hom(terminals[i], pw)[0];
            total.mor_index[&(fm, phi, total.obj(j, terminals[j]))]
        })
        .collect();
    let sigma = Functor::new("sigma", obj_map, mor_map);
    validate_functor(base, &total.site.cat, &sigma, guard)?;

    // Family route: the constant presheaf with value F(i) on the fiber over
    // i, transitions given by the restrictions of F.
    let fibers: Vec<Presheaf> = (0..base.n_obj())
        .map(|i| {
            let mut p = Presheaf::constant(&s.fibers[i].cat, f.card(i));
            p.name = format!("const[{}]({})", base.obj_name(i), f.name);
            p
        })
        .collect();
    let transitions: Vec<Vec<SetMap>> = (0..base.n_mor())
        .map(|fm| {
            let j = base.cod(fm);
            (0..s.fibers[j].cat.n_obj()).map(|_| f.res[fm].clone()).collect()
        })
        .collect();
    let family = SheafFamily { name: format!("sigma^*({})", f.name), fibers, transitions };
    family.validate(s, guard)?;
    let fam_presheaf = to_presheaf(s, total, &family);
    let family_sh = sheafify(&total.site, &fam_presheaf, guard)?;

    // Kan route.
    let inv = inverse_image(&sigma, &s.base, &total.site, f, guard)?;

    // Canonical map: a section over i anchors at the vertical morphism into
    // the fiber terminal object.
    let comp: Vec<SetMap> = (0..total.site.cat.n_obj())
        .map(|o| {
            let t = total.objs[o];
            let bang = s.fibers[t.base].cat.hom(t.fib, terminals[t.base])[0];
            let alpha = total.mor_index[&(base.identity(t.base), bang, total.obj(t.base, terminals[t.base]))];
            let table: Vec<usize> = (0..f.card(t.base))
                .map(|x| {
                    let cls = inv.lan.class_of(o, t.base, alpha, x).expect("terminal anchor exists");
                    inv.sh.unit.comp[o].apply(cls)
                })
                .collect();
            SetMap::new(f.card(t.base), inv.out.card(o), table)
        })
        .collect();
    let canonical = PsMor { name: format!("cmp({})", f.name), comp };
    canonical.validate(&total.site.cat, &fam_presheaf, &inv.out, guard)?;
    let comparison = factor_through_sheafify(&total.site, &family_sh, &inv.out, &canonical, guard)?;
    Ok(Sigma { sigma, family, family_sh, inv, comparison })
}

/// A split fibered site whose fiber over `i` is the slice of `ambient` at
/// `kappa(i)`, with pullbacks given by the chosen fiber products along the
/// kappa images of base morphisms. The slice books are kept for translating
/// between slice objects and ambient morphisms.
#[derive(Debug, Clone)]
pub struct SliceFibration {
    pub fibered: SplitFiberedSite,
    pub slices: Vec<SliceCat>,
}

/// Builds the slice fibration of `ambient` along `kappa: base -> ambient`.
///
/// Pullback along an identity is normalized to the identity functor; for the
/// remaining morphisms the chosen fiber products must compose strictly, which
/// `SplitFiberedSite::validate` enforces.
pub fn slice_fibration(
    base: &Site,
    ambient: &Site,
    kappa: &Functor,
    guard: &Guard,
) -> Result<SliceFibration> {
    validate_functor(&base.cat, &ambient.cat, kappa, guard)?;
    let mut slices = Vec::with_capacity(base.cat.n_obj());
    let mut fibers = Vec::with_capacity(base.cat.n_obj());
    for i in 0..base.cat.n_obj() {
        let (sc, site) = slice_site(ambient, kappa.ob(i), guard)?;
        slices.push(sc);
        fibers.push(site);
    }
    let mut pullback = Vec::with_capacity(base.cat.n_mor());
    for fm in 0..base.cat.n_mor() {
        let (i, j) = (base.cat.dom(fm), base.cat.cod(fm));
        let name = format!("{}^+", base.cat.mor_name(fm));
        if base.cat.is_identity(fm) {
            pullback.push(Functor::identity(&fibers[i].cat, &name));
            continue;
        }
        let km = kappa.mo(fm);
        let mut fps = Vec::with_capacity(slices[j].cat.n_obj());
        let mut obj_map = Vec::with_capacity(slices[j].cat.n_obj());
        for so in 0..slices[j].cat.n_obj() {
            let phi = slices[j].obj_mor[so];
            let fp = fincat::fiber_product(&ambient.cat, phi, km, guard)?;
            let pos = slices[i]
                .obj_mor
                .iter()
                .position(|&m| m == fp.q)
                .expect("every morphism into the anchor is a slice object");
            obj_map.push(pos);
            fps.push(fp);
        }
        let mut mor_map = Vec::with_capacity(slices[j].cat.n_mor());
        for sm in 0..slices[j].cat.n_mor() {
            guard.spend(1)?;
            let (sd, sc) = (slices[j].cat.dom(sm), slices[j].cat.cod(sm));
            let lift = slices[j].mor_lift[sm];
            let leg_p = ambient.cat.compose(lift, fps[sd].p)?;
            let med = fincat::mediate_fiber_product(&ambient.cat, &fps[sc], leg_p, fps[sd].q)?;
            let hit = (0..slices[i].cat.n_mor())
                .find(|&k| {
                    slices[i].cat.dom(k) == obj_map[sd]
                        && slices[i].cat.cod(k) == obj_map[sc]
                        && slices[i].mor_lift[k] == med
                })
                .ok_or_else(|| {
                    Error::missing(
                        &name,
                        format!("no slice morphism lifting `{}`", ambient.cat.mor_name(med)),
                    )
                })?;
            mor_map.push(hit);
        }
        pullback.push(Functor::new(&name, obj_map, mor_map));
    }
    let fibered = SplitFiberedSite {
        name: format!("{}-slices/{}", ambient.cat.name(), base.cat.name()),
        base: base.clone(),
        fibers,
        pullback,
    };
    fibered.validate(guard)?;
    Ok(SliceFibration { fibered, slices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sheaves::enumerate_presheaves;
    use crate::sheaves::enumerate_sheaves;

    fn g() -> Guard {
        Guard::new(1_000_000_000)
    }

    fn fibarrow_total(g: &Guard) -> (SplitFiberedSite, TotalSite) {
        let s = fixtures::fibarrow(g).unwrap();
        let total = build_total_site(&s, g).unwrap();
        (s, total)
    }

    #[test]
    fn family_roundtrip_is_exact() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        let p = Presheaf::representable(&total.site.cat, 0);
        let fam = to_family(&s, &total, &p);
        fam.validate(&s, &g).unwrap();
        let back = to_presheaf(&s, &total, &fam);
        assert!(back.same_tables(&p));
        let fam2 = to_family(&s, &total, &back);
        assert_eq!(fam.transitions, fam2.transitions);
        for i in 0..2 {
            assert!(fam.fibers[i].same_tables(&fam2.fibers[i]));
        }
    }

    #[test]
    fn cocycle_violation_is_rejected() {
        let g = g();
        let (s, _total) = fibarrow_total(&g);
        let fibers = vec![
            Presheaf::constant(&s.fibers[0].cat, 2),
            Presheaf::constant(&s.fibers[1].cat, 2),
        ];
        let ok_transitions = vec![
            vec![SetMap::identity(2), SetMap::identity(2)],
            vec![SetMap::identity(2)],
            vec![SetMap::identity(2), SetMap::identity(2)],
        ];
        let fam = SheafFamily {
            name: "c2".to_string(),
            fibers: fibers.clone(),
            transitions: ok_transitions.clone(),
        };
        fam.validate(&s, &g).unwrap();
        let mut bad = ok_transitions;
        bad[0][0] = SetMap::new(2, 2, vec![1, 0]);
        let broken = SheafFamily { name: "c2x".to_string(), fibers, transitions: bad };
        match broken.validate(&s, &g) {
            Err(Error::Axiom { .. }) => {}
            other => panic!("expected an axiom failure, got {other:?}"),
        }
    }

    #[test]
    fn fiberwise_check_matches_total_sheaf_condition() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        let all = enumerate_presheaves(&total.site.cat, 2, &g).unwrap();
        let mut sheaves = 0;
        for p in &all {
            let direct = is_sheaf(&total.site, p, &g).unwrap().ok;
            let fam = to_family(&s, &total, p);
            let fiberwise = fiberwise_sheaf_check(&s, &fam, &g).unwrap().ok;
            assert_eq!(direct, fiberwise, "mismatch on {}", p.name);
            if direct {
                sheaves += 1;
            }
        }
        assert!(sheaves > 0 && sheaves < all.len());
    }

    #[test]
    fn fiberwise_sheafify_commutes_on_small_presheaves() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        for p in enumerate_presheaves(&total.site.cat, 2, &g).unwrap().iter().take(12) {
            let fam = to_family(&s, &total, p);
            assert!(
                fiberwise_commutes_with_covanishing(&s, &total, &fam, &g).unwrap(),
                "comparison failed on {}",
                p.name
            );
        }
    }

    #[test]
    fn localization_matches_induced_topology_everywhere() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        for v in 0..total.site.cat.n_obj() {
            let cmp = localization_comparison(&s, &total, v, &g).unwrap();
            assert_eq!(cmp, Comparison::Equal, "object {v}");
        }
        let s = fixtures::fibemptycover(&g).unwrap();
        let total = build_total_site(&s, &g).unwrap();
        for v in 0..total.site.cat.n_obj() {
            let cmp = localization_comparison(&s, &total, v, &g).unwrap();
            assert_eq!(cmp, Comparison::Equal, "object {v}");
        }
    }

    #[test]
    fn restrict_to_source_object_reconstructs_sheaves() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        let rb = restrict_base(&s, &[1], &g).unwrap();
        assert_eq!(rb.fibered.base.cat.n_obj(), 1);
        for p in enumerate_sheaves(&total.site, 2, &g).unwrap() {
            let fam = to_family(&s, &total, &p);
            let restricted = restrict_family(&rb, &fam);
            restricted.validate(&rb.fibered, &g).unwrap();
            assert!(fiberwise_sheaf_check(&rb.fibered, &restricted, &g).unwrap().ok);
            assert!(reconstruction_check(&s, &rb, &fam, &g).unwrap().ok, "{}", p.name);
        }
    }

    #[test]
    fn restrict_rejects_non_generating_subcategories() {
        let g = g();
        let (s, _total) = fibarrow_total(&g);
        match restrict_base(&s, &[0], &g) {
            Err(Error::Unsupported { detail, .. }) => {
                assert!(detail.contains("topologically generating"))
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        let s = fixtures::fibemptycover(&g).unwrap();
        match restrict_base(&s, &[1], &g) {
            Err(Error::Unsupported { detail, .. }) => {
                assert!(detail.contains("topologically generating"))
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn beta_unit_is_iso_on_terminal_fiber_sheaves() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        let beta = beta_functors(&s, &g).unwrap();
        assert_eq!(beta.iota, 0);
        let samples = enumerate_sheaves(&s.fibers[0], 2, &g).unwrap();
        assert_eq!(samples.len(), 4);
        for v in beta_unit_check(&s, &total, &beta, &samples, &g).unwrap() {
            assert!(v.family_is_sheaf, "{}", v.sample);
            assert!(v.unit_iso, "{}", v.sample);
        }
    }

    #[test]
    fn beta_direct_takes_the_terminal_component() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        let beta = beta_functors(&s, &g).unwrap();
        let p = Presheaf::representable(&total.site.cat, 0);
        let fam = to_family(&s, &total, &p);
        let direct = beta_direct(&fam, &beta);
        assert!(direct.same_tables(&fam.fibers[0]));
    }

    #[test]
    fn sigma_two_computations_agree() {
        let g = g();
        let (s, total) = fibarrow_total(&g);
        for o in 0..s.base.cat.n_obj() {
            let f = Presheaf::representable(&s.base.cat, o);
            let sig = sigma_pullback(&s, &total, &f, &g).unwrap();
            assert!(sig.comparison.is_iso(), "representable of object {o}");
        }
        // The section functor lands on the fiber terminals along the
        // Cartesian lift.
        let f = Presheaf::representable(&s.base.cat, 0);
        let sig = sigma_pullback(&s, &total, &f, &g).unwrap();
        assert_eq!(sig.sigma.obj_map, vec![0, 2]);
        assert_eq!(sig.sigma.mor_map, vec![0, 2, 4]);
    }

    #[test]
    fn projection_preserves_finite_limits() {
        let g = g();
        let (_s, total) = fibarrow_total(&g);
        let rep = fincat::preserves_finite_limits(
            &total.proj,
            &total.site.cat,
            &crate::fixtures::arrow_site(&g).unwrap().cat,
            &g,
        )
        .unwrap();
        assert!(rep.ok, "{:?}", rep.witness);
    }
}
