//! Oriented product sites over a cospan of finite-limit sites, the
//! covanishing site of a single site map, and the comparison machinery
//! between the two routes.
//!
//! An oriented object is a triple `(U -> W <- V)`: a center object `W`
//! together with structure morphisms `alpha: U -> f^+(W)` on the first leg
//! and `beta: V -> g^+(W)` on the second. A covanishing object for
//! `h^+: X -> Y` is a pair `(V -> h^+(U))`. Both categories carry the
//! topology saturated from leg-refinement families plus singleton
//! center-change families built from chosen fiber products.
//!
//! The rest of the module realizes the structural comparisons as table
//! computations: the covanishing site against the slice-fibration total
//! site, the round trip between the oriented and covanishing sites, the
//! closed forms of the two projection pullbacks, the co-nearby-cycles
//! functor, the base-change identity, the center-change isomorphisms, the
//! representable fiber-product square, the mediating cone into a third
//! site, and the fiberwise comparison induced by an anchored map out of a
//! fibered total site.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::fibered::{
    build_total_site, slice_fibration, transport_topology, SplitFiberedSite, TotalSite,
};
use crate::fincat::{
    fiber_product, mediate_fiber_product, terminal_object, validate_functor, validate_nat,
    FiberProduct, FinCat, FinSet, Functor, Mor, MorId, NatTransf, ObjId, SetMap,
};
use crate::guard::Guard;
use crate::sheaves::{
    adjunction_unit, check_continuity, direct_image, enumerate_sheaves, factor_through_sheafify,
    inverse_image, inverse_image_mor, is_sheaf, presheaf_fiber_product, presheaf_homs, ran_extend,
    ran_unit, sheafify, sheafify_mor, yoneda_mor, ContinuityReport, InverseImage, Presheaf, PsMor,
    Sheafification,
};
use crate::sites::{compare_topologies, saturate_topology, Comparison, Coverage, Site};
use crate::Result;

/// Terminal object plus all binary fiber products must exist.
fn check_finite_limits(cat: &FinCat, guard: &Guard) -> Result<()> {
    terminal_object(cat, guard)?;
    for f in 0..cat.n_mor() {
        for g in 0..cat.n_mor() {
            if cat.cod(f) == cat.cod(g) {
                fiber_product(cat, f, g, guard)?;
            }
        }
    }
    Ok(())
}

/// The unique morphism `a -> b`; an error when the hom set is not a singleton.
fn unique_morphism(cat: &FinCat, a: ObjId, b: ObjId) -> Result<MorId> {
    let h = cat.hom(a, b);
    if h.len() != 1 {
        return Err(Error::missing(
            cat.name(),
            format!(
                "expected a unique morphism from `{}` to `{}`, found {}",
                cat.obj_name(a),
                cat.obj_name(b),
                h.len()
            ),
        ));
    }
    Ok(h[0])
}

/// Position of the identity of `o` in the ascending hom list `hom(o, o)`,
/// which is how representable presheaves index their values.
fn identity_position(cat: &FinCat, o: ObjId) -> usize {
    cat.hom(o, o)
        .iter()
        .position(|&m| m == cat.identity(o))
        .expect("identity is in its own hom set")
}

/// A cospan of sites `X <- S -> Y` with both legs continuous and left exact.
#[derive(Debug, Clone)]
pub struct CospanData {
    pub x: Site,
    pub y: Site,
    pub s: Site,
    /// First leg `S -> X`.
    pub f_plus: Functor,
    /// Second leg `S -> Y`.
    pub g_plus: Functor,
}

impl CospanData {
    pub fn new(
        x: Site,
        y: Site,
        s: Site,
        f_plus: Functor,
        g_plus: Functor,
        guard: &Guard,
    ) -> Result<CospanData> {
        validate_functor(&s.cat, &x.cat, &f_plus, guard)?;
        validate_functor(&s.cat, &y.cat, &g_plus, guard)?;
        check_finite_limits(&x.cat, guard)?;
        check_finite_limits(&y.cat, guard)?;
        check_finite_limits(&s.cat, guard)?;
        for (leg, tgt) in [(&f_plus, &x), (&g_plus, &y)] {
            let report = check_continuity(&s, tgt, leg, guard)?;
            if !report.ok {
                return Err(Error::unsupported(
                    "cospan",
                    format!("`{}` is not a continuous left exact site map", leg.name()),
                ));
            }
        }
        Ok(CospanData { x, y, s, f_plus, g_plus })
    }
}

/// One oriented object `(u, w, v, alpha: u -> f^+(w), beta: v -> g^+(w))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedObj {
    pub u: ObjId,
    pub w: ObjId,
    pub v: ObjId,
    pub alpha: MorId,
    pub beta: MorId,
}

/// Componentwise oriented morphism `(a, c, b)` compatible with the
/// structure morphisms on both legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedMor {
    pub a: MorId,
    pub c: MorId,
    pub b: MorId,
}

/// The oriented site of a cospan, with its generator bookkeeping.
#[derive(Debug, Clone)]
pub struct OrientedSiteC {
    pub site: Site,
    pub data: CospanData,
    pub objs: Vec<OrientedObj>,
    pub mors: Vec<OrientedMor>,
    /// Object id keyed by `(u, w, v, alpha, beta)`.
    pub obj_index: BTreeMap<(ObjId, ObjId, ObjId, MorId, MorId), ObjId>,
    /// Morphism id keyed by `(a, c, b, dom, cod)`; the components alone do
    /// not determine the endpoints.
    pub mor_index: BTreeMap<(MorId, MorId, MorId, ObjId, ObjId), MorId>,
    /// The single morphism of each center-change covering family.
    pub w_changes: Vec<MorId>,
    /// Every generator family fed into saturation, in insertion order.
    pub gen_families: Vec<(ObjId, Vec<MorId>)>,
}

/// Builds the oriented site: triples as objects, componentwise morphisms,
/// and the topology saturated from first-leg refinements, second-leg
/// refinements, and singleton center changes along chosen fiber products.
pub fn build_oriented_site(data: CospanData, guard: &Guard) -> Result<OrientedSiteC> {
    let x = data.x.cat.clone();
    let y = data.y.cat.clone();
    let s = data.s.cat.clone();

    let mut objs: Vec<OrientedObj> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut obj_index: BTreeMap<(ObjId, ObjId, ObjId, MorId, MorId), ObjId> = BTreeMap::new();
    for w in 0..s.n_obj() {
        for u in 0..x.n_obj() {
            for alpha in x.hom(u, data.f_plus.ob(w)) {
                for v in 0..y.n_obj() {
                    for beta in y.hom(v, data.g_plus.ob(w)) {
                        guard.spend(1)?;
                        obj_index.insert((u, w, v, alpha, beta), objs.len());
                        names.push(format!(
                            "<{};{};{}>",
                            x.mor_name(alpha),
                            s.obj_name(w),
                            y.mor_name(beta)
                        ));
                        objs.push(OrientedObj { u, w, v, alpha, beta });
                    }
                }
            }
        }
    }

    let mut mors: Vec<Mor> = Vec::new();
    let mut parts: Vec<OrientedMor> = Vec::new();
    let mut mor_index: BTreeMap<(MorId, MorId, MorId, ObjId, ObjId), MorId> = BTreeMap::new();
    for (o, t) in objs.iter().enumerate() {
        mor_index.insert((x.identity(t.u), s.identity(t.w), y.identity(t.v), o, o), mors.len());
        mors.push(Mor { name: format!("id_{}", names[o]), dom: o, cod: o });
        parts.push(OrientedMor { a: x.identity(t.u), c: s.identity(t.w), b: y.identity(t.v) });
    }
    for (src, ts) in objs.iter().enumerate() {
        for (tgt, tt) in objs.iter().enumerate() {
            for a in x.hom(ts.u, tt.u) {
                for c in s.hom(ts.w, tt.w) {
                    if x.compose(tt.alpha, a)? != x.compose(data.f_plus.mo(c), ts.alpha)? {
                        continue;
                    }
                    for b in y.hom(ts.v, tt.v) {
                        guard.spend(1)?;
                        if y.compose(tt.beta, b)? != y.compose(data.g_plus.mo(c), ts.beta)? {
                            continue;
                        }
                        if a == x.identity(ts.u)
                            && c == s.identity(ts.w)
                            && b == y.identity(ts.v)
                        {
                            continue;
                        }
                        mor_index.insert((a, c, b, src, tgt), mors.len());
                        mors.push(Mor {
                            name: format!(
                                "t{}[{};{};{}]",
                                mors.len(),
                                x.mor_name(a),
                                s.mor_name(c),
                                y.mor_name(b)
                            ),
                            dom: src,
                            cod: tgt,
                        });
                        parts.push(OrientedMor { a, c, b });
                    }
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
            let a = x.compose(parts[gm].a, parts[fm].a)?;
            let c = s.compose(parts[gm].c, parts[fm].c)?;
            let b = y.compose(parts[gm].b, parts[fm].b)?;
            let id = *mor_index
                .get(&(a, c, b, mors[fm].dom, mors[gm].cod))
                .ok_or_else(|| Error::missing("oriented site", "missing composite morphism"))?;
            comp[gm][fm] = Some(id);
        }
    }
    let cat = FinCat {
        name: format!("oriented({},{};{})", x.name(), y.name(), s.name()),
        objects: names,
        mors,
        id_of: (0..objs.len()).collect(),
        comp,
    };
    cat.validate(guard)?;
    check_finite_limits(&cat, guard)?;

    let mut cov = Coverage::new(cat.n_obj());
    let mut gen_families: Vec<(ObjId, Vec<MorId>)> = Vec::new();
    let mut w_changes: Vec<MorId> = Vec::new();
    for (o, t) in objs.iter().enumerate() {
        for sieve in &data.x.top.covering[t.u] {
            let mut family = Vec::with_capacity(sieve.len());
            for &ai in sieve {
                let du = x.dom(ai);
                let alpha_i = x.compose(t.alpha, ai)?;
                let dobj = obj_index[&(du, t.w, t.v, alpha_i, t.beta)];
                family.push(mor_index[&(ai, s.identity(t.w), y.identity(t.v), dobj, o)]);
            }
            cov.add_family(o, family.clone());
            gen_families.push((o, family));
        }
        for sieve in &data.y.top.covering[t.v] {
            let mut family = Vec::with_capacity(sieve.len());
            for &bi in sieve {
                let dv = y.dom(bi);
                let beta_i = y.compose(t.beta, bi)?;
                let dobj = obj_index[&(t.u, t.w, dv, t.alpha, beta_i)];
                family.push(mor_index[&(x.identity(t.u), s.identity(t.w), bi, dobj, o)]);
            }
            cov.add_family(o, family.clone());
            gen_families.push((o, family));
        }
        for c in 0..s.n_mor() {
            if s.cod(c) != t.w {
                continue;
            }
            let wp = s.dom(c);
            for alpha_p in x.hom(t.u, data.f_plus.ob(wp)) {
                guard.spend(1)?;
                if x.compose(data.f_plus.mo(c), alpha_p)? != t.alpha {
                    continue;
                }
                let fp = fiber_product(&y, t.beta, data.g_plus.mo(c), guard)?;
                let dobj = obj_index[&(t.u, wp, fp.apex, alpha_p, fp.q)];
                let m = mor_index[&(x.identity(t.u), c, fp.p, dobj, o)];
                cov.add_family(o, vec![m]);
                gen_families.push((o, vec![m]));
                w_changes.push(m);
            }
        }
    }
    let top = saturate_topology(&cat, &cov, guard)?;
    let site = Site::new(cat, top, guard)?;
    Ok(OrientedSiteC { site, data, objs, mors: parts, obj_index, mor_index, w_changes, gen_families })
}

/// One covanishing object `(u, v, delta: v -> h^+(u))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoevObj {
    pub u: ObjId,
    pub v: ObjId,
    pub delta: MorId,
}

/// Componentwise covanishing morphism `(a, b)` with
/// `delta' . b = h^+(a) . delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoevMor {
    pub a: MorId,
    pub b: MorId,
}

/// The covanishing site of a single site map `h^+: X -> Y`.
#[derive(Debug, Clone)]
pub struct CoevSiteD {
    pub site: Site,
    pub x: Site,
    pub y: Site,
    pub f_plus: Functor,
    pub objs: Vec<CoevObj>,
    pub mors: Vec<CoevMor>,
    /// Object id keyed by `(u, v, delta)`.
    pub obj_index: BTreeMap<(ObjId, ObjId, MorId), ObjId>,
    /// Morphism id keyed by `(a, b, dom, cod)`.
    pub mor_index: BTreeMap<(MorId, MorId, ObjId, ObjId), MorId>,
    pub gen_families: Vec<(ObjId, Vec<MorId>)>,
}

/// Builds the covanishing site: pairs as objects, componentwise morphisms,
/// and the topology saturated from vertical families (second-leg covers
/// with the first component fixed) and Cartesian families (first-leg covers
/// lifted through chosen fiber products).
pub fn build_covanishing_site(
    x: &Site,
    y: &Site,
    f_plus: &Functor,
    guard: &Guard,
) -> Result<CoevSiteD> {
    validate_functor(&x.cat, &y.cat, f_plus, guard)?;
    check_finite_limits(&x.cat, guard)?;
    check_finite_limits(&y.cat, guard)?;
    let report = check_continuity(x, y, f_plus, guard)?;
    if !report.ok {
        return Err(Error::unsupported(
            "covanishing site",
            format!("`{}` is not a continuous left exact site map", f_plus.name()),
        ));
    }
    let xc = &x.cat;
    let yc = &y.cat;

    let mut objs: Vec<CoevObj> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut obj_index: BTreeMap<(ObjId, ObjId, MorId), ObjId> = BTreeMap::new();
    for u in 0..xc.n_obj() {
        for v in 0..yc.n_obj() {
            for delta in yc.hom(v, f_plus.ob(u)) {
                guard.spend(1)?;
                obj_index.insert((u, v, delta), objs.len());
                names.push(format!("({};{})", yc.mor_name(delta), xc.obj_name(u)));
                objs.push(CoevObj { u, v, delta });
            }
        }
    }

    let mut mors: Vec<Mor> = Vec::new();
    let mut parts: Vec<CoevMor> = Vec::new();
    let mut mor_index: BTreeMap<(MorId, MorId, ObjId, ObjId), MorId> = BTreeMap::new();
    for (o, t) in objs.iter().enumerate() {
        mor_index.insert((xc.identity(t.u), yc.identity(t.v), o, o), mors.len());
        mors.push(Mor { name: format!("id_{}", names[o]), dom: o, cod: o });
        parts.push(CoevMor { a: xc.identity(t.u), b: yc.identity(t.v) });
    }
    for (src, ts) in objs.iter().enumerate() {
        for (tgt, tt) in objs.iter().enumerate() {
            for a in xc.hom(ts.u, tt.u) {
                for b in yc.hom(ts.v, tt.v) {
                    guard.spend(1)?;
                    if yc.compose(tt.delta, b)? != yc.compose(f_plus.mo(a), ts.delta)? {
                        continue;
                    }
                    if a == xc.identity(ts.u) && b == yc.identity(ts.v) {
                        continue;
                    }
                    mor_index.insert((a, b, src, tgt), mors.len());
                    mors.push(Mor {
                        name: format!(
                            "t{}[{};{}]",
                            mors.len(),
                            xc.mor_name(a),
                            yc.mor_name(b)
                        ),
                        dom: src,
                        cod: tgt,
                    });
                    parts.push(CoevMor { a, b });
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
            let a = xc.compose(parts[gm].a, parts[fm].a)?;
            let b = yc.compose(parts[gm].b, parts[fm].b)?;
            let id = *mor_index
                .get(&(a, b, mors[fm].dom, mors[gm].cod))
                .ok_or_else(|| Error::missing("covanishing site", "missing composite morphism"))?;
            comp[gm][fm] = Some(id);
        }
    }
    let cat = FinCat {
        name: format!("covanishing({}->{})", xc.name(), yc.name()),
        objects: names,
        mors,
        id_of: (0..objs.len()).collect(),
        comp,
    };
    cat.validate(guard)?;
    check_finite_limits(&cat, guard)?;

    let mut cov = Coverage::new(cat.n_obj());
    let mut gen_families: Vec<(ObjId, Vec<MorId>)> = Vec::new();
    for (o, t) in objs.iter().enumerate() {
        for sieve in &y.top.covering[t.v] {
            let mut family = Vec::with_capacity(sieve.len());
            for &bi in sieve {
                let dv = yc.dom(bi);
                let delta_i = yc.compose(t.delta, bi)?;
                let dobj = obj_index[&(t.u, dv, delta_i)];
                family.push(mor_index[&(xc.identity(t.u), bi, dobj, o)]);
            }
            cov.add_family(o, family.clone());
            gen_families.push((o, family));
        }
        for sieve in &x.top.covering[t.u] {
            let mut family = Vec::with_capacity(sieve.len());
            for &ai in sieve {
                guard.spend(1)?;
                let fp = fiber_product(yc, t.delta, f_plus.mo(ai), guard)?;
                let dobj = obj_index[&(xc.dom(ai), fp.apex, fp.q)];
                family.push(mor_index[&(ai, fp.p, dobj, o)]);
            }
            cov.add_family(o, family.clone());
            gen_families.push((o, family));
        }
    }
    let top = saturate_topology(&cat, &cov, guard)?;
    let site = Site::new(cat, top, guard)?;
    Ok(CoevSiteD {
        site,
        x: x.clone(),
        y: y.clone(),
        f_plus: f_plus.clone(),
        objs,
        mors: parts,
        obj_index,
        mor_index,
        gen_families,
    })
}

/// Rebuilds the covanishing site as the total site of the slice fibration
/// of `y` along `f_plus` and compares the two topologies through the
/// evident identification. `Equal` means the two routes agree exactly.
pub fn covanishing_cross_check(d: &CoevSiteD, guard: &Guard) -> Result<Comparison> {
    let trip = slice_fibration(&d.x, &d.y, &d.f_plus, guard)?;
    let total = build_total_site(&trip.fibered, guard)?;
    let yc = &d.y.cat;
    let xc = &d.x.cat;
    let spos = |u: ObjId, delta: MorId| -> Result<ObjId> {
        trip.slices[u]
            .obj_mor
            .iter()
            .position(|&m| m == delta)
            .ok_or_else(|| Error::missing("slice fibration", "anchored slice object"))
    };
    let smor = |u: ObjId, dompos: ObjId, codpos: ObjId, lift: MorId| -> Result<MorId> {
        let sc = &trip.slices[u];
        (0..sc.cat.n_mor())
            .find(|&k| sc.cat.dom(k) == dompos && sc.cat.cod(k) == codpos && sc.mor_lift[k] == lift)
            .ok_or_else(|| Error::missing("slice fibration", "anchored slice morphism"))
    };

    let mut ob = Vec::with_capacity(d.objs.len());
    for t in &d.objs {
        ob.push(total.obj(t.u, spos(t.u, t.delta)?));
    }
    let mut mo = Vec::with_capacity(d.mors.len());
    for (m, dm) in d.mors.iter().enumerate() {
        let src = d.objs[d.site.cat.dom(m)];
        let tgt = d.objs[d.site.cat.cod(m)];
        let fibmor = if dm.a == xc.identity(src.u) {
            smor(src.u, spos(src.u, src.delta)?, spos(src.u, tgt.delta)?, dm.b)?
        } else {
            let fp = fiber_product(yc, tgt.delta, d.f_plus.mo(dm.a), guard)?;
            let med = mediate_fiber_product(yc, &fp, dm.b, src.delta)?;
            smor(src.u, spos(src.u, src.delta)?, spos(src.u, fp.q)?, med)?
        };
        let cod = total.obj(tgt.u, spos(tgt.u, tgt.delta)?);
        mo.push(
            total
                .mor(dm.a, fibmor, cod)
                .ok_or_else(|| Error::missing("total site", "image morphism"))?,
        );
    }
    let iso = Functor::new("coev-as-total", ob, mo);
    validate_functor(&d.site.cat, &total.site.cat, &iso, guard)?;
    let mut seen = vec![false; total.site.cat.n_obj()];
    for &o in &iso.obj_map {
        if seen[o] {
            return Err(Error::axiom("covanishing cross-check", "object map is not injective"));
        }
        seen[o] = true;
    }
    if iso.obj_map.len() != total.site.cat.n_obj() || iso.mor_map.len() != total.site.cat.n_mor()
    {
        return Err(Error::axiom("covanishing cross-check", "the two routes differ in size"));
    }
    let mut seen_m = vec![false; total.site.cat.n_mor()];
    for &m in &iso.mor_map {
        if seen_m[m] {
            return Err(Error::axiom("covanishing cross-check", "morphism map is not injective"));
        }
        seen_m[m] = true;
    }
    let transported = transport_topology(&iso, &d.site.top, total.site.cat.n_obj());
    compare_topologies(&total.site.cat, &transported, &total.site.cat, &total.site.top, guard)
}

/// A site map packaged with its continuity certificate; construction fails
/// unless the underlying functor is continuous and left exact.
#[derive(Debug, Clone)]
pub struct PointedMap {
    pub name: String,
    pub plus: Functor,
    pub continuity: ContinuityReport,
}

pub fn pointed_map(
    name: &str,
    plus: Functor,
    src: &Site,
    tgt: &Site,
    guard: &Guard,
) -> Result<PointedMap> {
    validate_functor(&src.cat, &tgt.cat, &plus, guard)?;
    let continuity = check_continuity(src, tgt, &plus, guard)?;
    if !continuity.ok {
        return Err(Error::unsupported(
            "pointed map",
            format!("`{}` is not a continuous left exact site map", name),
        ));
    }
    Ok(PointedMap { name: name.to_string(), plus, continuity })
}

impl PointedMap {
    /// Direct image: precomposition with the underlying functor. `f` lives
    /// on the target category; the result lives on the source.
    pub fn direct(&self, src: &Site, tgt: &Site, f: &Presheaf) -> Presheaf {
        direct_image(&self.plus, &src.cat, &tgt.cat, f)
    }

    /// Inverse image: sheafified left Kan extension. `f` lives on the
    /// source site; the result lives on the target.
    pub fn inverse(&self, src: &Site, tgt: &Site, f: &Presheaf, guard: &Guard) -> Result<InverseImage> {
        inverse_image(&self.plus, src, tgt, f, guard)
    }
}

/// First projection `X -> D`, `u` to `(u, h^+(u), id)`.
pub fn projection_p1(d: &CoevSiteD, guard: &Guard) -> Result<PointedMap> {
    let xc = &d.x.cat;
    let yc = &d.y.cat;
    let ob: Vec<ObjId> = (0..xc.n_obj())
        .map(|u| d.obj_index[&(u, d.f_plus.ob(u), yc.identity(d.f_plus.ob(u)))])
        .collect();
    let mo: Vec<MorId> = (0..xc.n_mor())
        .map(|a| d.mor_index[&(a, d.f_plus.mo(a), ob[xc.dom(a)], ob[xc.cod(a)])])
        .collect();
    pointed_map("p1^+", Functor::new("p1^+", ob, mo), &d.x, &d.site, guard)
}

/// Second projection `Y -> D`, `v` to `(e, v, !)` over the terminal first
/// component.
pub fn projection_p2(d: &CoevSiteD, guard: &Guard) -> Result<PointedMap> {
    let xc = &d.x.cat;
    let yc = &d.y.cat;
    let e = terminal_object(xc, guard)?;
    let fe = d.f_plus.ob(e);
    let mut ob = Vec::with_capacity(yc.n_obj());
    for v in 0..yc.n_obj() {
        ob.push(d.obj_index[&(e, v, unique_morphism(yc, v, fe)?)]);
    }
    let mo: Vec<MorId> = (0..yc.n_mor())
        .map(|b| d.mor_index[&(xc.identity(e), b, ob[yc.dom(b)], ob[yc.cod(b)])])
        .collect();
    pointed_map("p2^+", Functor::new("p2^+", ob, mo), &d.y, &d.site, guard)
}

/// Co-nearby-cycles functor `D -> Y`, the second-component projection.
pub fn conearby_functor(d: &CoevSiteD, guard: &Guard) -> Result<PointedMap> {
    let ob: Vec<ObjId> = d.objs.iter().map(|t| t.v).collect();
    let mo: Vec<MorId> = d.mors.iter().map(|m| m.b).collect();
    pointed_map("psi^+", Functor::new("psi^+", ob, mo), &d.site, &d.y, guard)
}

/// Closed form of the first projection pullback before sheafification:
/// `o` is sent to `f(u_o)`, restrictions use the first components.
pub fn first_leg_closed_form(d: &CoevSiteD, f: &Presheaf) -> Presheaf {
    Presheaf {
        name: format!("first-closed({})", f.name),
        value: d.objs.iter().map(|t| FinSet { n: f.card(t.u) }).collect(),
        res: d.mors.iter().map(|m| f.res[m.a].clone()).collect(),
    }
}

/// Closed form of the second projection pullback: `o` is sent to `g(v_o)`,
/// restrictions use the second components.
pub fn second_leg_closed_form(d: &CoevSiteD, g: &Presheaf) -> Presheaf {
    Presheaf {
        name: format!("second-closed({})", g.name),
        value: d.objs.iter().map(|t| FinSet { n: g.card(t.v) }).collect(),
        res: d.mors.iter().map(|m| g.res[m.b].clone()).collect(),
    }
}

/// The comparison pair between the oriented site with an identity first leg
/// and the covanishing site of the same data, plus the per-sample verdicts
/// of the two round trips.
#[derive(Debug, Clone)]
pub struct IotaJmathReport {
    /// `D -> C`, pairs embedded as identity-centered triples.
    pub iota: PointedMap,
    /// `C -> D`, triples collapsed through chosen fiber products.
    pub jmath: PointedMap,
    /// Per sheaf on the oriented site: the sheafified round trip is an
    /// isomorphism.
    pub c_side: Vec<(String, bool)>,
    /// Per sheaf on the covanishing site: the plain round trip is an
    /// isomorphism, no sheafification involved.
    pub d_side: Vec<(String, bool)>,
    pub witness: Option<String>,
}

/// Requires the oriented cospan to have center equal to the first leg site
/// with identity first leg, and second leg equal to the covanishing map.
pub fn comparison_iota_jmath(
    c: &OrientedSiteC,
    d: &CoevSiteD,
    c_samples: &[Presheaf],
    d_samples: &[Presheaf],
    guard: &Guard,
) -> Result<IotaJmathReport> {
    let xc = &c.data.x.cat;
    let yc = &c.data.y.cat;
    let identity_first = c.data.f_plus.obj_map == (0..c.data.s.cat.n_obj()).collect::<Vec<_>>()
        && c.data.f_plus.mor_map == (0..c.data.s.cat.n_mor()).collect::<Vec<_>>();
    let matched = identity_first
        && c.data.s.cat == c.data.x.cat
        && c.data.g_plus.obj_map == d.f_plus.obj_map
        && c.data.g_plus.mor_map == d.f_plus.mor_map
        && c.data.x.cat == d.x.cat
        && c.data.x.top.covering == d.x.top.covering
        && c.data.y.cat == d.y.cat
        && c.data.y.top.covering == d.y.top.covering;
    if !matched {
        return Err(Error::unsupported(
            "oriented-covanishing comparison",
            "the oriented cospan must have an identity first leg matching the covanishing data",
        ));
    }

    // iota: (u, v, delta) to (u, u, v, id, delta).
    let iob: Vec<ObjId> = d
        .objs
        .iter()
        .map(|t| c.obj_index[&(t.u, t.u, t.v, xc.identity(t.u), t.delta)])
        .collect();
    let imo: Vec<MorId> = d
        .mors
        .iter()
        .enumerate()
        .map(|(m, dm)| {
            let (sd, cd) = (d.site.cat.dom(m), d.site.cat.cod(m));
            c.mor_index[&(dm.a, dm.a, dm.b, iob[sd], iob[cd])]
        })
        .collect();
    let iota = pointed_map("iota^+", Functor::new("iota^+", iob, imo), &d.site, &c.site, guard)?;

    // jmath: (u, w, v, alpha, beta) to the chosen fiber product of beta with
    // the second-leg image of alpha.
    let mut jfps: Vec<FiberProduct> = Vec::with_capacity(c.objs.len());
    let mut job: Vec<ObjId> = Vec::with_capacity(c.objs.len());
    for t in &c.objs {
        let fp = fiber_product(yc, t.beta, d.f_plus.mo(t.alpha), guard)?;
        job.push(d.obj_index[&(t.u, fp.apex, fp.q)]);
        jfps.push(fp);
    }
    let mut jmo: Vec<MorId> = Vec::with_capacity(c.mors.len());
    for (m, cm) in c.mors.iter().enumerate() {
        let (sd, cd) = (c.site.cat.dom(m), c.site.cat.cod(m));
        let leg_p = yc.compose(cm.b, jfps[sd].p)?;
        let leg_q = yc.compose(d.f_plus.mo(cm.a), jfps[sd].q)?;
        let med = mediate_fiber_product(yc, &jfps[cd], leg_p, leg_q)?;
        jmo.push(d.mor_index[&(cm.a, med, job[sd], job[cd])]);
    }
    let jmath = pointed_map("jmath^+", Functor::new("jmath^+", job, jmo), &c.site, &d.site, guard)?;

    let mut witness: Option<String> = None;

    // Oriented side: the counit-style comparison from each sheaf to the
    // sheafified restriction of its collapse.
    let k = jmath.plus.then(&iota.plus, "jmath;iota");
    let eps = NatTransf {
        components: (0..c.objs.len())
            .map(|o| {
                let t = &c.objs[o];
                c.mor_index[&(xc.identity(t.u), t.alpha, jfps[o].p, k.ob(o), o)]
            })
            .collect(),
    };
    validate_nat(
        &c.site.cat,
        &c.site.cat,
        &k,
        &Functor::identity(&c.site.cat, "id"),
        &eps,
        guard,
    )?;
    let mut c_side = Vec::with_capacity(c_samples.len());
    for g in c_samples {
        let p = direct_image(&k, &c.site.cat, &c.site.cat, g);
        let comp: Vec<SetMap> = (0..c.objs.len())
            .map(|o| {
                let table: Vec<usize> =
                    (0..g.card(o)).map(|t| g.restrict(eps.components[o], t)).collect();
                SetMap::new(g.card(o), p.card(o), table)
            })
            .collect();
        let g_eps = PsMor { name: format!("restrict({})", g.name), comp };
        g_eps.validate(&c.site.cat, g, &p, guard)?;
        let sh = sheafify(&c.site, &p, guard)?;
        let round = g_eps.then(&sh.unit, "round-trip");
        let ok = round.is_iso();
        if !ok && witness.is_none() {
            witness = Some(format!("`{}` fails the oriented-side round trip", g.name));
        }
        c_side.push((g.name.clone(), ok));
    }

    // Covanishing side: the same comparison needs no sheafification.
    let k2 = iota.plus.then(&jmath.plus, "iota;jmath");
    let eta = NatTransf {
        components: (0..d.objs.len())
            .map(|o| {
                let t = &d.objs[o];
                let fp = &jfps[iota.plus.ob(o)];
                d.mor_index[&(d.x.cat.identity(t.u), fp.p, k2.ob(o), o)]
            })
            .collect(),
    };
    validate_nat(
        &d.site.cat,
        &d.site.cat,
        &k2,
        &Functor::identity(&d.site.cat, "id"),
        &eta,
        guard,
    )?;
    let mut d_side = Vec::with_capacity(d_samples.len());
    for f in d_samples {
        let q = direct_image(&k2, &d.site.cat, &d.site.cat, f);
        let comp: Vec<SetMap> = (0..d.objs.len())
            .map(|o| {
                let table: Vec<usize> =
                    (0..f.card(o)).map(|t| f.restrict(eta.components[o], t)).collect();
                SetMap::new(f.card(o), q.card(o), table)
            })
            .collect();
        let f_eta = PsMor { name: format!("restrict({})", f.name), comp };
        f_eta.validate(&d.site.cat, f, &q, guard)?;
        let ok = f_eta.is_iso();
        if !ok && witness.is_none() {
            witness = Some(format!("`{}` fails the covanishing-side round trip", f.name));
        }
        d_side.push((f.name.clone(), ok));
    }

    Ok(IotaJmathReport { iota, jmath, c_side, d_side, witness })
}

/// The two projection pullbacks of the covanishing site, their closed
/// forms, the second-projection adjunction unit, and the connecting map.
#[derive(Debug, Clone)]
pub struct ProjectionPullbacks {
    pub p1: PointedMap,
    pub p2: PointedMap,
    /// Sheafified first-leg closed form; isomorphic to the Kan route when
    /// `first_closed_matches` holds.
    pub first_pullback: Presheaf,
    /// Second-leg closed form; already a sheaf and isomorphic to the Kan
    /// route without any sheafification.
    pub second_pullback: Presheaf,
    /// Connecting map from the first pullback of `f` to the second-leg
    /// closed form of the inverse image of `f` along the covanishing map.
    pub tau: PsMor,
    pub first_closed_matches: bool,
    pub second_closed_is_sheaf: bool,
    pub second_closed_matches: bool,
    pub unit_iso: bool,
}

/// `f` is a sheaf on the first-leg site, `g` a sheaf on the second-leg
/// site. Verifies the closed forms of both projection pullbacks against
/// the sheafified-Kan route and the second-projection unit.
pub fn projection_pullbacks(
    d: &CoevSiteD,
    f: &Presheaf,
    g: &Presheaf,
    guard: &Guard,
) -> Result<ProjectionPullbacks> {
    let p1 = projection_p1(d, guard)?;
    let p2 = projection_p2(d, guard)?;

    // First projection: Kan route, then the canonical map onto the closed
    // form, compared after sheafifying both sides.
    let kan1 = inverse_image(&p1.plus, &d.x, &d.site, f, guard)?;
    let closed1 = first_leg_closed_form(d, f);
    let k1 = PsMor {
        name: "kan-to-closed".to_string(),
        comp: (0..d.objs.len())
            .map(|o| {
                let table: Vec<usize> = (0..kan1.lan.out.card(o))
                    .map(|cl| {
                        let (_, anchor, xval) = kan1.lan.rep(o, cl);
                        f.res[d.mors[anchor].a].apply(xval)
                    })
                    .collect();
                SetMap::new(kan1.lan.out.card(o), closed1.card(o), table)
            })
            .collect(),
    };
    k1.validate(&d.site.cat, &kan1.lan.out, &closed1, guard)?;
    let sh1 = sheafify(&d.site, &closed1, guard)?;
    let cmp1 = sheafify_mor(&d.site, &kan1.sh, &sh1, &k1, guard)?;
    let first_closed_matches = cmp1.is_iso();

    // Second projection: the closed form must already be a sheaf and agree
    // with the Kan route directly.
    let kan2 = inverse_image(&p2.plus, &d.y, &d.site, g, guard)?;
    let closed2 = second_leg_closed_form(d, g);
    let second_closed_is_sheaf = is_sheaf(&d.site, &closed2, guard)?.ok;
    let k2 = PsMor {
        name: "kan-to-closed".to_string(),
        comp: (0..d.objs.len())
            .map(|o| {
                let table: Vec<usize> = (0..kan2.lan.out.card(o))
                    .map(|cl| {
                        let (_, anchor, xval) = kan2.lan.rep(o, cl);
                        g.res[d.mors[anchor].b].apply(xval)
                    })
                    .collect();
                SetMap::new(kan2.lan.out.card(o), closed2.card(o), table)
            })
            .collect(),
    };
    k2.validate(&d.site.cat, &kan2.lan.out, &closed2, guard)?;
    let cmp2 = factor_through_sheafify(&d.site, &kan2.sh, &closed2, &k2, guard)?;
    let second_closed_matches = cmp2.is_iso();

    let unit_iso = adjunction_unit(&p2.plus, &d.site.cat, g, &kan2).is_iso();

    // Connecting map: push a first-leg section into the inverse image of
    // `f` along the covanishing map, anchored at the structure morphism.
    let inv_f = inverse_image(&d.f_plus, &d.x, &d.y, f, guard)?;
    let target = second_leg_closed_form(d, &inv_f.out);
    let tau0 = PsMor {
        name: "connect".to_string(),
        comp: (0..d.objs.len())
            .map(|o| {
                let t = &d.objs[o];
                let table: Vec<usize> = (0..f.card(t.u))
                    .map(|xval| {
                        let cl = inv_f
                            .lan
                            .class_of(t.v, t.u, t.delta, xval)
                            .expect("structure morphism anchors the class");
                        inv_f.sh.unit.comp[t.v].apply(cl)
                    })
                    .collect();
                SetMap::new(f.card(t.u), target.card(o), table)
            })
            .collect(),
    };
    tau0.validate(&d.site.cat, &closed1, &target, guard)?;
    let tau = factor_through_sheafify(&d.site, &sh1, &target, &tau0, guard)?;

    Ok(ProjectionPullbacks {
        p1,
        p2,
        first_pullback: sh1.out,
        second_pullback: closed2,
        tau,
        first_closed_matches,
        second_closed_is_sheaf,
        second_closed_matches,
        unit_iso,
    })
}

/// Direct image along the co-nearby-cycles functor, compared with the
/// second projection pullback.
#[derive(Debug, Clone)]
pub struct ConearbyReport {
    pub psi: PointedMap,
    pub direct: Presheaf,
    pub direct_is_sheaf: bool,
    /// The tables agree literally with the second-leg closed form.
    pub matches_second_pullback: bool,
}

pub fn conearby_cycles(d: &CoevSiteD, f: &Presheaf, guard: &Guard) -> Result<ConearbyReport> {
    let psi = conearby_functor(d, guard)?;
    let direct = direct_image(&psi.plus, &d.site.cat, &d.y.cat, f);
    let closed2 = second_leg_closed_form(d, f);
    let matches_second_pullback = direct.same_tables(&closed2);
    let direct_is_sheaf = is_sheaf(&d.site, &direct, guard)?.ok;
    Ok(ConearbyReport { psi, direct, direct_is_sheaf, matches_second_pullback })
}

/// Direct image along the covanishing map versus the composite route
/// through the covanishing site.
#[derive(Debug, Clone)]
pub struct BaseChangeReport {
    pub lhs: Presheaf,
    pub rhs: Presheaf,
    pub canonical: PsMor,
    pub iso: bool,
}

/// `f` is a sheaf on the second-leg site. Compares its direct image along
/// the covanishing map with the first-projection direct image of its
/// second-projection pullback.
pub fn base_change_identity(d: &CoevSiteD, f: &Presheaf, guard: &Guard) -> Result<BaseChangeReport> {
    let p1 = projection_p1(d, guard)?;
    let p2 = projection_p2(d, guard)?;
    let xc = &d.x.cat;
    let yc = &d.y.cat;
    let e = terminal_object(xc, guard)?;
    let lhs = direct_image(&d.f_plus, xc, yc, f);
    let kan2 = inverse_image(&p2.plus, &d.y, &d.site, f, guard)?;
    let rhs = direct_image(&p1.plus, xc, &d.site.cat, &kan2.out);
    let mut comp = Vec::with_capacity(xc.n_obj());
    for u in 0..xc.n_obj() {
        let fu = d.f_plus.ob(u);
        let dom = p1.plus.ob(u);
        let cod = p2.plus.ob(fu);
        let anchor = d.mor_index[&(unique_morphism(xc, u, e)?, yc.identity(fu), dom, cod)];
        let table: Vec<usize> = (0..f.card(fu))
            .map(|xval| {
                let cl = kan2
                    .lan
                    .class_of(dom, fu, anchor, xval)
                    .expect("projection anchors the class");
                kan2.sh.unit.comp[dom].apply(cl)
            })
            .collect();
        comp.push(SetMap::new(f.card(fu), rhs.card(u), table));
    }
    let canonical = PsMor { name: "base-change".to_string(), comp };
    canonical.validate(xc, &lhs, &rhs, guard)?;
    let iso = canonical.is_iso();
    Ok(BaseChangeReport { lhs, rhs, canonical, iso })
}

/// Every center-change generator must become an isomorphism after applying
/// the sheafified Yoneda embedding.
pub fn w_change_sheaf_isos(c: &OrientedSiteC, guard: &Guard) -> Result<(bool, Option<String>)> {
    let mut cache: BTreeMap<ObjId, Sheafification> = BTreeMap::new();
    for &m in &c.w_changes {
        let (dm, cm) = (c.site.cat.dom(m), c.site.cat.cod(m));
        for o in [dm, cm] {
            if !cache.contains_key(&o) {
                cache.insert(
                    o,
                    sheafify(&c.site, &Presheaf::representable(&c.site.cat, o), guard)?,
                );
            }
        }
        let pushed =
            sheafify_mor(&c.site, &cache[&dm], &cache[&cm], &yoneda_mor(&c.site.cat, m), guard)?;
        if !pushed.is_iso() {
            return Ok((
                false,
                Some(format!(
                    "`{}` does not sheafify to an isomorphism",
                    c.site.cat.mor_name(m)
                )),
            ));
        }
    }
    Ok((true, None))
}

/// First projection of the oriented site, `u` to the triple over the
/// terminal center with terminal second leg.
fn c_first_projection(c: &OrientedSiteC, guard: &Guard) -> Result<Functor> {
    let xc = &c.data.x.cat;
    let yc = &c.data.y.cat;
    let sc = &c.data.s.cat;
    let e_s = terminal_object(sc, guard)?;
    let e_y = terminal_object(yc, guard)?;
    let beta = unique_morphism(yc, e_y, c.data.g_plus.ob(e_s))?;
    let mut ob = Vec::with_capacity(xc.n_obj());
    for u in 0..xc.n_obj() {
        let alpha = unique_morphism(xc, u, c.data.f_plus.ob(e_s))?;
        ob.push(c.obj_index[&(u, e_s, e_y, alpha, beta)]);
    }
    let mo: Vec<MorId> = (0..xc.n_mor())
        .map(|a| c.mor_index[&(a, sc.identity(e_s), yc.identity(e_y), ob[xc.dom(a)], ob[xc.cod(a)])])
        .collect();
    let f = Functor::new("c-p1^+", ob, mo);
    validate_functor(xc, &c.site.cat, &f, guard)?;
    Ok(f)
}

/// Second projection of the oriented site.
fn c_second_projection(c: &OrientedSiteC, guard: &Guard) -> Result<Functor> {
    let xc = &c.data.x.cat;
    let yc = &c.data.y.cat;
    let sc = &c.data.s.cat;
    let e_s = terminal_object(sc, guard)?;
    let e_x = terminal_object(xc, guard)?;
    let alpha = unique_morphism(xc, e_x, c.data.f_plus.ob(e_s))?;
    let mut ob = Vec::with_capacity(yc.n_obj());
    for v in 0..yc.n_obj() {
        let beta = unique_morphism(yc, v, c.data.g_plus.ob(e_s))?;
        ob.push(c.obj_index[&(e_x, e_s, v, alpha, beta)]);
    }
    let mo: Vec<MorId> = (0..yc.n_mor())
        .map(|b| c.mor_index[&(xc.identity(e_x), sc.identity(e_s), b, ob[yc.dom(b)], ob[yc.cod(b)])])
        .collect();
    let f = Functor::new("c-p2^+", ob, mo);
    validate_functor(yc, &c.site.cat, &f, guard)?;
    Ok(f)
}

/// Center embedding `w` to `(f^+(w), w, g^+(w), id, id)`.
fn c_center_embedding(c: &OrientedSiteC, guard: &Guard) -> Result<Functor> {
    let xc = &c.data.x.cat;
    let yc = &c.data.y.cat;
    let sc = &c.data.s.cat;
    let ob: Vec<ObjId> = (0..sc.n_obj())
        .map(|w| {
            c.obj_index[&(
                c.data.f_plus.ob(w),
                w,
                c.data.g_plus.ob(w),
                xc.identity(c.data.f_plus.ob(w)),
                yc.identity(c.data.g_plus.ob(w)),
            )]
        })
        .collect();
    let mo: Vec<MorId> = (0..sc.n_mor())
        .map(|m| {
            c.mor_index[&(
                c.data.f_plus.mo(m),
                m,
                c.data.g_plus.mo(m),
                ob[sc.dom(m)],
                ob[sc.cod(m)],
            )]
        })
        .collect();
    let f = Functor::new("c-q^+", ob, mo);
    validate_functor(sc, &c.site.cat, &f, guard)?;
    Ok(f)
}

/// Canonical map from the representable at `plus(x_obj)` into the inverse
/// image of the sheafified representable at `x_obj`, anchoring each
/// morphism at itself with the unit image of the identity section.
fn representable_into_inverse(
    tgt_cat: &FinCat,
    base_cat: &FinCat,
    plus: &Functor,
    x_obj: ObjId,
    sh_base: &Sheafification,
    inv: &InverseImage,
) -> PsMor {
    let px = plus.ob(x_obj);
    let unit_id = sh_base.unit.comp[x_obj].apply(identity_position(base_cat, x_obj));
    let comp: Vec<SetMap> = (0..tgt_cat.n_obj())
        .map(|o| {
            let homs = tgt_cat.hom(o, px);
            let table: Vec<usize> = homs
                .iter()
                .map(|&m| {
                    let cl = inv
                        .lan
                        .class_of(o, x_obj, m, unit_id)
                        .expect("morphism anchors its own class");
                    inv.sh.unit.comp[o].apply(cl)
                })
                .collect();
            SetMap::new(homs.len(), inv.out.card(o), table)
        })
        .collect();
    PsMor { name: format!("anchor({})", base_cat.obj_name(x_obj)), comp }
}

/// Checks, for a single oriented object `z`, that its sheafified
/// representable is the fiber product of the two projection pullbacks of
/// the sheafified representables at its legs, over the center.
pub fn representable_square_check(c: &OrientedSiteC, z: ObjId, guard: &Guard) -> Result<bool> {
    let t = c.objs[z];
    let xs = &c.data.x;
    let ys = &c.data.y;
    let xc = &xs.cat;
    let yc = &ys.cat;
    let sc = &c.data.s.cat;
    let p1f = c_first_projection(c, guard)?;
    let p2f = c_second_projection(c, guard)?;
    let qf = c_center_embedding(c, guard)?;
    let e_s = terminal_object(sc, guard)?;
    let e_x = terminal_object(xc, guard)?;
    let e_y = terminal_object(yc, guard)?;
    let fw = c.data.f_plus.ob(t.w);
    let gw = c.data.g_plus.ob(t.w);

    // First-leg side: A = pullback of the sheafified representable at u,
    // P = pullback at the first-leg image of the center.
    let sh_u = sheafify(xs, &Presheaf::representable(xc, t.u), guard)?;
    let sh_fw = sheafify(xs, &Presheaf::representable(xc, fw), guard)?;
    let inv_a = inverse_image(&p1f, xs, &c.site, &sh_u.out, guard)?;
    let inv_p = inverse_image(&p1f, xs, &c.site, &sh_fw.out, guard)?;
    let map_ap = inverse_image_mor(
        &c.site,
        &inv_a,
        &inv_p,
        &sheafify_mor(xs, &sh_u, &sh_fw, &yoneda_mor(xc, t.alpha), guard)?,
        guard,
    )?;

    // Second-leg side: B and M.
    let sh_v = sheafify(ys, &Presheaf::representable(yc, t.v), guard)?;
    let sh_gw = sheafify(ys, &Presheaf::representable(yc, gw), guard)?;
    let inv_b = inverse_image(&p2f, ys, &c.site, &sh_v.out, guard)?;
    let inv_m = inverse_image(&p2f, ys, &c.site, &sh_gw.out, guard)?;
    let map_bm = inverse_image_mor(
        &c.site,
        &inv_b,
        &inv_m,
        &sheafify_mor(ys, &sh_v, &sh_gw, &yoneda_mor(yc, t.beta), guard)?,
        guard,
    )?;

    // Bridge P to M through the sheafified representable at the embedded
    // center, whose two projections must both be isomorphisms.
    let zq = qf.ob(t.w);
    let sh_zq = sheafify(&c.site, &Presheaf::representable(&c.site.cat, zq), guard)?;
    let r_p = c.mor_index[&(
        xc.identity(fw),
        unique_morphism(sc, t.w, e_s)?,
        unique_morphism(yc, gw, e_y)?,
        zq,
        p1f.ob(fw),
    )];
    let n_p = factor_through_sheafify(
        &c.site,
        &sh_zq,
        &inv_p.out,
        &yoneda_mor(&c.site.cat, r_p).then(
            &representable_into_inverse(&c.site.cat, xc, &p1f, fw, &sh_fw, &inv_p),
            "to-first",
        ),
        guard,
    )?;
    let r_m = c.mor_index[&(
        unique_morphism(xc, fw, e_x)?,
        unique_morphism(sc, t.w, e_s)?,
        yc.identity(gw),
        zq,
        p2f.ob(gw),
    )];
    let n_m = factor_through_sheafify(
        &c.site,
        &sh_zq,
        &inv_m.out,
        &yoneda_mor(&c.site.cat, r_m).then(
            &representable_into_inverse(&c.site.cat, yc, &p2f, gw, &sh_gw, &inv_m),
            "to-second",
        ),
        guard,
    )?;
    if !n_p.is_iso() || !n_m.is_iso() {
        return Ok(false);
    }
    let bridge = n_p.inverse("bridge-left").expect("just checked bijectivity").then(&n_m, "bridge");
    let map_am = map_ap.then(&bridge, "first-to-center");

    let (fp_ps, pr1, pr2) = presheaf_fiber_product(&c.site.cat, &inv_a.out, &inv_b.out, &map_am, &map_bm);

    // Canonical cone out of the representable at z.
    let r1 = c.mor_index[&(
        xc.identity(t.u),
        unique_morphism(sc, t.w, e_s)?,
        unique_morphism(yc, t.v, e_y)?,
        z,
        p1f.ob(t.u),
    )];
    let r2 = c.mor_index[&(
        unique_morphism(xc, t.u, e_x)?,
        unique_morphism(sc, t.w, e_s)?,
        yc.identity(t.v),
        z,
        p2f.ob(t.v),
    )];
    let c1 = yoneda_mor(&c.site.cat, r1).then(
        &representable_into_inverse(&c.site.cat, xc, &p1f, t.u, &sh_u, &inv_a),
        "cone-first",
    );
    let c2 = yoneda_mor(&c.site.cat, r2).then(
        &representable_into_inverse(&c.site.cat, yc, &p2f, t.v, &sh_v, &inv_b),
        "cone-second",
    );
    if c1.then(&map_am, "l").comp != c2.then(&map_bm, "r").comp {
        return Ok(false);
    }
    let yz = Presheaf::representable(&c.site.cat, z);
    let mut comp = Vec::with_capacity(c.objs.len());
    for o in 0..c.objs.len() {
        let mut table = Vec::with_capacity(yz.card(o));
        for i in 0..yz.card(o) {
            let xa = c1.comp[o].apply(i);
            let xb = c2.comp[o].apply(i);
            let hit = (0..fp_ps.card(o))
                .find(|&k| pr1.comp[o].apply(k) == xa && pr2.comp[o].apply(k) == xb)
                .ok_or_else(|| Error::axiom("representable square", "cone misses the fiber product"))?;
            table.push(hit);
        }
        comp.push(SetMap::new(yz.card(o), fp_ps.card(o), table));
    }
    let cone = PsMor { name: "cone".to_string(), comp };
    cone.validate(&c.site.cat, &yz, &fp_ps, guard)?;
    if !is_sheaf(&c.site, &fp_ps, guard)?.ok {
        return Err(Error::axiom("representable square", "fiber product of sheaves is not a sheaf"));
    }
    let sh_z = sheafify(&c.site, &yz, guard)?;
    let cmp = factor_through_sheafify(&c.site, &sh_z, &fp_ps, &cone, guard)?;
    Ok(cmp.is_iso())
}

/// Verdicts for the mediating functor into a third site that receives both
/// legs of the cospan compatibly.
#[derive(Debug, Clone)]
pub struct MediatingReport {
    /// Every oriented covering generator maps to a jointly locally
    /// surjective family of sheaf maps.
    pub covers_ok: bool,
    /// The terminal oriented object maps to the terminal sheaf.
    pub terminal_ok: bool,
    /// Over first-leg objects the mediated sheaf is the first-leg pullback.
    pub first_leg_ok: bool,
    /// Over second-leg objects the mediated sheaf is the second-leg pullback.
    pub second_leg_ok: bool,
    pub witness: Option<String>,
}

/// For a receiving site `t` with `a_plus: X -> T` and `b_plus: Y -> T`
/// agreeing on the center, sends each oriented object `z` to the fiber
/// product of the pulled-back leg sheaves over the center sheaf, and checks
/// that this assignment behaves like a site map.
pub fn mediating_cone_check(
    c: &OrientedSiteC,
    t: &Site,
    a_plus: &Functor,
    b_plus: &Functor,
    guard: &Guard,
) -> Result<MediatingReport> {
    let xs = &c.data.x;
    let ys = &c.data.y;
    let xc = &xs.cat;
    let yc = &ys.cat;
    let sc = &c.data.s.cat;
    validate_functor(xc, &t.cat, a_plus, guard)?;
    validate_functor(yc, &t.cat, b_plus, guard)?;
    let via_x = c.data.f_plus.then(a_plus, "via-first");
    let via_y = c.data.g_plus.then(b_plus, "via-second");
    if via_x.obj_map != via_y.obj_map || via_x.mor_map != via_y.mor_map {
        return Err(Error::unsupported(
            "mediating cone",
            "the two legs do not agree on the center",
        ));
    }
    for (leg, src) in [(a_plus, xs), (b_plus, ys)] {
        let report = check_continuity(src, t, leg, guard)?;
        if !report.ok {
            return Err(Error::unsupported(
                "mediating cone",
                format!("`{}` is not a continuous left exact site map", leg.name()),
            ));
        }
    }

    // Pull back every leg representable once.
    let mut sh_x = Vec::with_capacity(xc.n_obj());
    let mut inv_a = Vec::with_capacity(xc.n_obj());
    for u in 0..xc.n_obj() {
        let sh = sheafify(xs, &Presheaf::representable(xc, u), guard)?;
        inv_a.push(inverse_image(a_plus, xs, t, &sh.out, guard)?);
        sh_x.push(sh);
    }
    let mut sh_y = Vec::with_capacity(yc.n_obj());
    let mut inv_b = Vec::with_capacity(yc.n_obj());
    for v in 0..yc.n_obj() {
        let sh = sheafify(ys, &Presheaf::representable(yc, v), guard)?;
        inv_b.push(inverse_image(b_plus, ys, t, &sh.out, guard)?);
        sh_y.push(sh);
    }

    // Center bridges through the representable at the common image.
    let mut bridges = Vec::with_capacity(sc.n_obj());
    for w in 0..sc.n_obj() {
        let fw = c.data.f_plus.ob(w);
        let gw = c.data.g_plus.ob(w);
        let sh_tw = sheafify(t, &Presheaf::representable(&t.cat, via_x.ob(w)), guard)?;
        let n_p = factor_through_sheafify(
            t,
            &sh_tw,
            &inv_a[fw].out,
            &representable_into_inverse(&t.cat, xc, a_plus, fw, &sh_x[fw], &inv_a[fw]),
            guard,
        )?;
        let n_m = factor_through_sheafify(
            t,
            &sh_tw,
            &inv_b[gw].out,
            &representable_into_inverse(&t.cat, yc, b_plus, gw, &sh_y[gw], &inv_b[gw]),
            guard,
        )?;
        let left = match n_p.inverse("center-left") {
            Some(m) => m,
            None => {
                return Ok(MediatingReport {
                    covers_ok: false,
                    terminal_ok: false,
                    first_leg_ok: false,
                    second_leg_ok: false,
                    witness: Some(format!(
                        "center `{}` does not identify with its first-leg pullback",
                        sc.obj_name(w)
                    )),
                })
            }
        };
        if !n_m.is_iso() {
            return Ok(MediatingReport {
                covers_ok: false,
                terminal_ok: false,
                first_leg_ok: false,
                second_leg_ok: false,
                witness: Some(format!(
                    "center `{}` does not identify with its second-leg pullback",
                    sc.obj_name(w)
                )),
            });
        }
        bridges.push(left.then(&n_m, "center-bridge"));
    }

    // The mediated sheaf of each oriented object, with its two projections
    // and the two structure maps into the center corners.
    struct Corner {
        ps: Presheaf,
        pr1: PsMor,
        pr2: PsMor,
    }
    let mut corners = Vec::with_capacity(c.objs.len());
    for z in &c.objs {
        let map_am = inverse_image_mor(
            t,
            &inv_a[z.u],
            &inv_a[c.data.f_plus.ob(z.w)],
            &sheafify_mor(
                xs,
                &sh_x[z.u],
                &sh_x[c.data.f_plus.ob(z.w)],
                &yoneda_mor(xc, z.alpha),
                guard,
            )?,
            guard,
        )?
        .then(&bridges[z.w], "first-to-center");
        let map_bm = inverse_image_mor(
            t,
            &inv_b[z.v],
            &inv_b[c.data.g_plus.ob(z.w)],
            &sheafify_mor(
                ys,
                &sh_y[z.v],
                &sh_y[c.data.g_plus.ob(z.w)],
                &yoneda_mor(yc, z.beta),
                guard,
            )?,
            guard,
        )?;
        let (ps, pr1, pr2) =
            presheaf_fiber_product(&t.cat, &inv_a[z.u].out, &inv_b[z.v].out, &map_am, &map_bm);
        corners.push(Corner { ps, pr1, pr2 });
    }

    // Image of an oriented morphism between the mediated sheaves.
    let h_mor = |m: MorId| -> Result<Option<PsMor>> {
        let parts = c.mors[m];
        let zd = c.objs[c.site.cat.dom(m)];
        let amap = inverse_image_mor(
            t,
            &inv_a[zd.u],
            &inv_a[xc.cod(parts.a)],
            &sheafify_mor(xs, &sh_x[zd.u], &sh_x[xc.cod(parts.a)], &yoneda_mor(xc, parts.a), guard)?,
            guard,
        )?;
        let bmap = inverse_image_mor(
            t,
            &inv_b[zd.v],
            &inv_b[yc.cod(parts.b)],
            &sheafify_mor(ys, &sh_y[zd.v], &sh_y[yc.cod(parts.b)], &yoneda_mor(yc, parts.b), guard)?,
            guard,
        )?;
        let dc = &corners[c.site.cat.dom(m)];
        let cc = &corners[c.site.cat.cod(m)];
        let mut comp = Vec::with_capacity(t.cat.n_obj());
        for o in 0..t.cat.n_obj() {
            let mut table = Vec::with_capacity(dc.ps.card(o));
            for k in 0..dc.ps.card(o) {
                let xa = amap.comp[o].apply(dc.pr1.comp[o].apply(k));
                let xb = bmap.comp[o].apply(dc.pr2.comp[o].apply(k));
                match (0..cc.ps.card(o))
                    .find(|&j| cc.pr1.comp[o].apply(j) == xa && cc.pr2.comp[o].apply(j) == xb)
                {
                    Some(j) => table.push(j),
                    None => return Ok(None),
                }
            }
            comp.push(SetMap::new(dc.ps.card(o), cc.ps.card(o), table));
        }
        Ok(Some(PsMor { name: format!("H({})", c.site.cat.mor_name(m)), comp }))
    };

    let mut witness = None;
    let mut covers_ok = true;
    'families: for (o, family) in &c.gen_families {
        let mut maps = Vec::with_capacity(family.len());
        for &m in family {
            match h_mor(m)? {
                Some(h) => maps.push(h),
                None => {
                    covers_ok = false;
                    witness = Some(format!(
                        "`{}` has no mediated image",
                        c.site.cat.mor_name(m)
                    ));
                    break 'families;
                }
            }
        }
        // Jointly locally surjective: every section restricts, along some
        // covering sieve, into the union of the family images.
        let corner = &corners[*o];
        let mut hit: Vec<Vec<bool>> = (0..t.cat.n_obj()).map(|tt| vec![false; corner.ps.card(tt)]).collect();
        for h in &maps {
            for tt in 0..t.cat.n_obj() {
                for s in 0..h.comp[tt].src_n {
                    hit[tt][h.comp[tt].apply(s)] = true;
                }
            }
        }
        for tt in 0..t.cat.n_obj() {
            for xi in 0..corner.ps.card(tt) {
                guard.spend(1)?;
                let covered = t.top.covering[tt].iter().any(|sieve| {
                    sieve.iter().all(|&r| hit[t.cat.dom(r)][corner.ps.restrict(r, xi)])
                });
                if !covered {
                    covers_ok = false;
                    if witness.is_none() {
                        witness = Some(format!(
                            "a section over `{}` at `{}` is not locally covered",
                            c.site.cat.obj_name(*o),
                            t.cat.obj_name(tt)
                        ));
                    }
                    break 'families;
                }
            }
        }
    }

    let e_s = terminal_object(sc, guard)?;
    let e_x = terminal_object(xc, guard)?;
    let e_y = terminal_object(yc, guard)?;
    let z_t = c.obj_index[&(
        e_x,
        e_s,
        e_y,
        unique_morphism(xc, e_x, c.data.f_plus.ob(e_s))?,
        unique_morphism(yc, e_y, c.data.g_plus.ob(e_s))?,
    )];
    let terminal_ok = (0..t.cat.n_obj()).all(|tt| corners[z_t].ps.card(tt) == 1);

    let p1f = c_first_projection(c, guard)?;
    let p2f = c_second_projection(c, guard)?;
    let first_leg_ok = (0..xc.n_obj()).all(|u| corners[p1f.ob(u)].pr1.is_iso());
    let second_leg_ok = (0..yc.n_obj()).all(|v| corners[p2f.ob(v)].pr2.is_iso());

    Ok(MediatingReport { covers_ok, terminal_ok, first_leg_ok, second_leg_ok, witness })
}

/// An anchored map out of a fibered total site: the receiving site and the
/// functor from the total category.
#[derive(Debug, Clone)]
pub struct PsiData {
    pub x: Site,
    pub psi: Functor,
}

/// Outcome of the fiberwise comparison. `applicable` is false when the
/// hypotheses fail, which is a different verdict from a failing conclusion.
#[derive(Debug, Clone)]
pub struct RhoReport {
    pub applicable: bool,
    pub witness: Option<String>,
    /// Per sample sheaf on the total site: the comparison unit is an
    /// isomorphism.
    pub unit_isos: Vec<(String, bool)>,
    /// Hom-set enumeration verdict across all sample pairs.
    pub fully_faithful: Option<bool>,
}

/// Builds the slice fibration induced by the anchored map, checks the
/// strict pullback squares and the fiberwise recovery hypothesis first, and
/// only then compares the total sites through the induced functor.
pub fn rho_comparison(
    s: &SplitFiberedSite,
    total: &TotalSite,
    data: &PsiData,
    samples: &[Presheaf],
    max_size: usize,
    guard: &Guard,
) -> Result<RhoReport> {
    let base = &s.base.cat;
    let psi = &data.psi;
    validate_functor(&total.site.cat, &data.x.cat, psi, guard)?;
    let not_applicable = |w: String| RhoReport {
        applicable: false,
        witness: Some(w),
        unit_isos: Vec::new(),
        fully_faithful: None,
    };

    // Terminal-anchor section; its image defines the base-to-ambient map.
    let mut anchor = Vec::with_capacity(base.n_obj());
    for i in 0..base.n_obj() {
        anchor.push(terminal_object(&s.fibers[i].cat, guard)?);
    }
    let mut kmo = Vec::with_capacity(base.n_mor());
    for f in 0..base.n_mor() {
        let (i, j) = (base.dom(f), base.cod(f));
        let pw = s.pullback[f].ob(anchor[j]);
        let legs = s.fibers[i].cat.hom(anchor[i], pw);
        if legs.len() != 1 {
            return Err(Error::unsupported(
                "anchored comparison",
                format!("no canonical section over `{}`", base.mor_name(f)),
            ));
        }
        let tm = total
            .mor(f, legs[0], total.obj(j, anchor[j]))
            .ok_or_else(|| Error::missing("total site", "section morphism"))?;
        kmo.push(psi.mo(tm));
    }
    let kappa = Functor::new(
        "kappa",
        (0..base.n_obj()).map(|i| psi.ob(total.obj(i, anchor[i]))).collect(),
        kmo,
    );
    validate_functor(base, &data.x.cat, &kappa, guard)?;
    let trip = slice_fibration(&s.base, &data.x, &kappa, guard)?;
    let dt = build_total_site(&trip.fibered, guard)?;

    // Fiberwise functors into the slices.
    let mut psis: Vec<Functor> = Vec::with_capacity(base.n_obj());
    for i in 0..base.n_obj() {
        let fib = &s.fibers[i].cat;
        let mut ob = Vec::with_capacity(fib.n_obj());
        for v in 0..fib.n_obj() {
            let bang = unique_morphism(fib, v, anchor[i])?;
            let img = psi.mo(total.vertical(s, i, bang));
            ob.push(
                trip.slices[i]
                    .obj_mor
                    .iter()
                    .position(|&m| m == img)
                    .ok_or_else(|| Error::missing("slice fibration", "anchored object"))?,
            );
        }
        let mut mo = Vec::with_capacity(fib.n_mor());
        for phi in 0..fib.n_mor() {
            let lift = psi.mo(total.vertical(s, i, phi));
            let (dv, cv) = (ob[fib.dom(phi)], ob[fib.cod(phi)]);
            let sc = &trip.slices[i];
            mo.push(
                (0..sc.cat.n_mor())
                    .find(|&k| sc.cat.dom(k) == dv && sc.cat.cod(k) == cv && sc.mor_lift[k] == lift)
                    .ok_or_else(|| Error::missing("slice fibration", "anchored morphism"))?,
            );
        }
        let fu = Functor::new(&format!("psi_{}", base.obj_name(i)), ob, mo);
        validate_functor(fib, &trip.slices[i].cat, &fu, guard)?;
        psis.push(fu);
    }

    // Strict pullback squares.
    for f in 0..base.n_mor() {
        let (i, j) = (base.dom(f), base.cod(f));
        let lhs = s.pullback[f].then(&psis[i], "lhs");
        let rhs = psis[j].then(&trip.fibered.pullback[f], "rhs");
        if lhs.obj_map != rhs.obj_map || lhs.mor_map != rhs.mor_map {
            return Ok(not_applicable(format!(
                "pullback square over `{}` does not commute",
                base.mor_name(f)
            )));
        }
    }

    // Fiberwise recovery hypothesis, checked before any total comparison:
    // every sheaf on a slice is the extension of its own restriction.
    for i in 0..base.n_obj() {
        for gsh in enumerate_sheaves(&trip.fibered.fibers[i], max_size, guard)? {
            let restricted =
                direct_image(&psis[i], &s.fibers[i].cat, &trip.slices[i].cat, &gsh);
            let ran = ran_extend(&psis[i], &s.fibers[i].cat, &trip.slices[i].cat, &restricted, guard)?;
            if !is_sheaf(&trip.fibered.fibers[i], &ran.out, guard)?.ok {
                return Ok(not_applicable(format!(
                    "fiber `{}`: the extension of `{}` is not a sheaf",
                    base.obj_name(i),
                    gsh.name
                )));
            }
            if !ran_unit(&trip.slices[i].cat, &gsh, &ran).is_iso() {
                return Ok(not_applicable(format!(
                    "fiber `{}`: `{}` is not recovered from its restriction",
                    base.obj_name(i),
                    gsh.name
                )));
            }
        }
    }

    // The comparison functor between the total sites.
    let ob: Vec<ObjId> =
        total.objs.iter().map(|t| dt.obj(t.base, psis[t.base].ob(t.fib))).collect();
    let mut mo = Vec::with_capacity(total.mors.len());
    for (m, tm) in total.mors.iter().enumerate() {
        let i = base.dom(tm.base);
        let j = base.cod(tm.base);
        let cod_fib = total.objs[total.site.cat.cod(m)].fib;
        let cod = dt.obj(j, psis[j].ob(cod_fib));
        mo.push(
            dt.mor(tm.base, psis[i].mo(tm.fib), cod)
                .ok_or_else(|| Error::missing("anchored comparison", "image morphism"))?,
        );
    }
    let rho = Functor::new("rho^+", ob, mo);
    validate_functor(&total.site.cat, &dt.site.cat, &rho, guard)?;
    let cont = check_continuity(&total.site, &dt.site, &rho, guard)?;
    if !cont.ok {
        return Ok(not_applicable(
            "the comparison functor is not a continuous left exact site map".to_string(),
        ));
    }

    let mut unit_isos = Vec::with_capacity(samples.len());
    let mut invs = Vec::with_capacity(samples.len());
    for fsh in samples {
        let inv = inverse_image(&rho, &total.site, &dt.site, fsh, guard)?;
        let unit = adjunction_unit(&rho, &dt.site.cat, fsh, &inv);
        unit_isos.push((fsh.name.clone(), unit.is_iso()));
        invs.push(inv);
    }

    // Full faithfulness on the sample sheaves by hom-set enumeration.
    let mut fully_faithful = true;
    for i1 in 0..samples.len() {
        for i2 in 0..samples.len() {
            let src_homs = presheaf_homs(&total.site.cat, &samples[i1], &samples[i2], guard)?;
            let tgt_homs = presheaf_homs(&dt.site.cat, &invs[i1].out, &invs[i2].out, guard)?;
            let mut mapped = Vec::with_capacity(src_homs.len());
            for h in &src_homs {
                mapped.push(inverse_image_mor(&dt.site, &invs[i1], &invs[i2], h, guard)?);
            }
            for a in 0..mapped.len() {
                for b in (a + 1)..mapped.len() {
                    if mapped[a].comp == mapped[b].comp {
                        fully_faithful = false;
                    }
                }
            }
            for tgt in &tgt_homs {
                if !mapped.iter().any(|m| m.comp == tgt.comp) {
                    fully_faithful = false;
                }
            }
        }
    }

    Ok(RhoReport {
        applicable: true,
        witness: None,
        unit_isos,
        fully_faithful: Some(fully_faithful),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{
        arrow_chaotic_site, arrow_site, cospan_parts, fibarrow, fibarrow_psi_bad,
        fibarrow_psi_good, pt_empty_site, pt_site, triple_parts,
    };
    use std::collections::BTreeSet;

    fn g() -> Guard {
        Guard::new(1_000_000_000)
    }

    fn cospan_c(guard: &Guard) -> Result<OrientedSiteC> {
        let (x, y, s, f, gp) = cospan_parts(guard)?;
        build_oriented_site(CospanData::new(x, y, s, f, gp, guard)?, guard)
    }

    fn cospan_d(guard: &Guard) -> Result<CoevSiteD> {
        let x = pt_site(guard)?;
        let y = arrow_site(guard)?;
        let h = Functor::new("h^+", vec![0], vec![0]);
        build_covanishing_site(&x, &y, &h, guard)
    }

    fn identity_arrow_d(guard: &Guard) -> Result<CoevSiteD> {
        let x = arrow_site(guard)?;
        let y = arrow_site(guard)?;
        let h = Functor::identity(&x.cat, "h^+");
        build_covanishing_site(&x, &y, &h, guard)
    }

    fn sieve(ms: &[MorId]) -> BTreeSet<MorId> {
        ms.iter().copied().collect()
    }

    #[test]
    fn point_cospan_collapses_to_a_point() {
        let guard = g();
        let x = pt_site(&guard).unwrap();
        let y = pt_site(&guard).unwrap();
        let s = pt_site(&guard).unwrap();
        let f = Functor::identity(&s.cat, "f^+");
        let gp = Functor::identity(&s.cat, "g^+");
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        assert_eq!(c.site.cat.n_obj(), 1);
        assert_eq!(c.site.cat.n_mor(), 1);
    }

    #[test]
    fn constant_cospan_has_four_objects_with_degenerate_center_changes() {
        let guard = g();
        let x = arrow_site(&guard).unwrap();
        let y = arrow_site(&guard).unwrap();
        let s = pt_site(&guard).unwrap();
        let f = Functor::new("f^+", vec![0], vec![0]);
        let gp = Functor::new("g^+", vec![0], vec![0]);
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        assert_eq!(c.site.cat.n_obj(), 4);
        // A point center admits only identity center changes, and the chosen
        // fiber products collapse them to identity morphisms.
        assert!(!c.w_changes.is_empty());
        assert!(c.w_changes.iter().all(|&m| m < c.site.cat.n_obj()));
        let (ok, witness) = w_change_sheaf_isos(&c, &guard).unwrap();
        assert!(ok, "{witness:?}");
    }

    #[test]
    fn cospan_oriented_site_is_the_arrow_site() {
        let guard = g();
        let c = cospan_c(&guard).unwrap();
        assert_eq!(c.site.cat.n_obj(), 2);
        assert_eq!(c.site.cat.n_mor(), 3);
        let a_side = c.obj_index[&(0, 0, 0, 0, 0)];
        let b_side = c.obj_index[&(0, 0, 1, 0, 2)];
        let m = c.mor_index[&(0, 0, 2, b_side, a_side)];
        assert!(c.site.covers(a_side, &sieve(&[m])));
        let (ok, witness) = w_change_sheaf_isos(&c, &guard).unwrap();
        assert!(ok, "{witness:?}");
    }

    #[test]
    fn triple_cospan_has_six_objects_and_center_change_isos() {
        let guard = g();
        let (x, y, s, f, gp) = triple_parts(&guard).unwrap();
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        assert_eq!(c.site.cat.n_obj(), 6);
        // The arrow center contributes genuine, non-identity center changes.
        assert!(c.w_changes.iter().any(|&m| m >= c.site.cat.n_obj()));
        let (ok, witness) = w_change_sheaf_isos(&c, &guard).unwrap();
        assert!(ok, "{witness:?}");
    }

    #[test]
    fn covanishing_of_a_point_base_is_the_target_site() {
        let guard = g();
        let d = cospan_d(&guard).unwrap();
        assert_eq!(d.site.cat.n_obj(), 2);
        assert_eq!(d.site.cat.n_mor(), 3);
        // Object 0 is (id_a; e), object 1 is (u; e); morphism 2 is the only
        // non-identity, so the covering sets mirror the arrow site exactly.
        let expected: BTreeSet<BTreeSet<MorId>> = [sieve(&[2]), sieve(&[0, 2])].into();
        assert_eq!(d.site.top.covering[0], expected);
        let max1: BTreeSet<BTreeSet<MorId>> = [sieve(&[1])].into();
        assert_eq!(d.site.top.covering[1], max1);
        assert_eq!(covanishing_cross_check(&d, &guard).unwrap(), Comparison::Equal);
    }

    #[test]
    fn covanishing_of_the_identity_arrow_has_both_cover_kinds() {
        let guard = g();
        let d = identity_arrow_d(&guard).unwrap();
        assert_eq!(d.site.cat.n_obj(), 3);
        assert_eq!(d.site.cat.n_mor(), 6);
        let j0: BTreeSet<BTreeSet<MorId>> =
            [sieve(&[4]), sieve(&[3, 4]), sieve(&[0, 3, 4])].into();
        let j1: BTreeSet<BTreeSet<MorId>> = [sieve(&[5]), sieve(&[1, 5])].into();
        let j2: BTreeSet<BTreeSet<MorId>> = [sieve(&[2])].into();
        assert_eq!(d.site.top.covering, vec![j0, j1, j2]);
        assert_eq!(covanishing_cross_check(&d, &guard).unwrap(), Comparison::Equal);
    }

    #[test]
    fn empty_cover_target_forces_singleton_sheaves() {
        let guard = g();
        let x = arrow_chaotic_site(&guard).unwrap();
        let y = pt_empty_site(&guard).unwrap();
        let h = Functor::new("h^+", vec![0, 0], vec![0, 0, 0]);
        let d = build_covanishing_site(&x, &y, &h, &guard).unwrap();
        let sheaves = enumerate_sheaves(&d.site, 3, &guard).unwrap();
        assert_eq!(sheaves.len(), 1);
        assert!(sheaves[0].value.iter().all(|v| v.n == 1));
    }

    #[test]
    fn oriented_covanishing_round_trip_holds_on_the_cospan() {
        let guard = g();
        let c = cospan_c(&guard).unwrap();
        let d = cospan_d(&guard).unwrap();
        let cs = enumerate_sheaves(&c.site, 2, &guard).unwrap();
        let ds = enumerate_sheaves(&d.site, 2, &guard).unwrap();
        assert!(cs.len() >= 4 && ds.len() >= 4);
        let report = comparison_iota_jmath(&c, &d, &cs, &ds, &guard).unwrap();
        assert!(report.c_side.iter().all(|(_, ok)| *ok));
        assert!(report.d_side.iter().all(|(_, ok)| *ok));
        assert!(report.witness.is_none());
    }

    #[test]
    fn oriented_covanishing_round_trip_holds_on_the_identity_arrow() {
        let guard = g();
        let x = arrow_site(&guard).unwrap();
        let y = arrow_site(&guard).unwrap();
        let s = arrow_site(&guard).unwrap();
        let f = Functor::identity(&s.cat, "f^+");
        let gp = Functor::identity(&s.cat, "g^+");
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        assert_eq!(c.site.cat.n_obj(), 5);
        let d = identity_arrow_d(&guard).unwrap();
        let cs: Vec<Presheaf> = (0..c.site.cat.n_obj())
            .map(|z| {
                sheafify(&c.site, &Presheaf::representable(&c.site.cat, z), &guard)
                    .unwrap()
                    .out
            })
            .collect();
        let ds: Vec<Presheaf> = (0..d.site.cat.n_obj())
            .map(|z| {
                sheafify(&d.site, &Presheaf::representable(&d.site.cat, z), &guard)
                    .unwrap()
                    .out
            })
            .collect();
        let report = comparison_iota_jmath(&c, &d, &cs, &ds, &guard).unwrap();
        assert!(report.c_side.iter().all(|(_, ok)| *ok));
        assert!(report.d_side.iter().all(|(_, ok)| *ok));
        assert!(report.witness.is_none());
    }

    #[test]
    fn non_sheaf_sample_fails_the_round_trip_with_a_witness() {
        let guard = g();
        let c = cospan_c(&guard).unwrap();
        let d = cospan_d(&guard).unwrap();
        // The representable at the covering object is functorial but not a
        // sheaf here, so the round trip must flag it instead of passing.
        let mut bad = Presheaf::representable(&c.site.cat, 1);
        bad.name = "non-sheaf".to_string();
        let report = comparison_iota_jmath(&c, &d, &[bad], &[], &guard).unwrap();
        assert!(report.c_side.iter().any(|(_, ok)| !ok));
        assert!(report.witness.is_some());
    }

    #[test]
    fn projection_closed_forms_match_the_kan_route() {
        let guard = g();
        let d = identity_arrow_d(&guard).unwrap();
        let f = sheafify(&d.x, &Presheaf::representable(&d.x.cat, 0), &guard).unwrap().out;
        let gp = sheafify(&d.y, &Presheaf::representable(&d.y.cat, 1), &guard).unwrap().out;
        let report = projection_pullbacks(&d, &f, &gp, &guard).unwrap();
        assert!(report.first_closed_matches);
        assert!(report.second_closed_is_sheaf);
        assert!(report.second_closed_matches);
        assert!(report.unit_iso);
        for (o, t) in d.objs.iter().enumerate() {
            assert_eq!(report.second_pullback.card(o), gp.card(t.v));
        }
    }

    #[test]
    fn second_projection_closed_form_is_the_hom_table() {
        let guard = g();
        // With a chaotic target every presheaf is a sheaf, so the pullback
        // of a representable is the literal hom table of second components.
        let x = pt_site(&guard).unwrap();
        let y = arrow_chaotic_site(&guard).unwrap();
        let h = Functor::new("h^+", vec![0], vec![0]);
        let d = build_covanishing_site(&x, &y, &h, &guard).unwrap();
        let f = Presheaf::representable(&d.x.cat, 0);
        let gp = Presheaf::representable(&d.y.cat, 1);
        let report = projection_pullbacks(&d, &f, &gp, &guard).unwrap();
        assert!(report.second_closed_is_sheaf);
        assert!(report.second_closed_matches);
        for (o, t) in d.objs.iter().enumerate() {
            assert_eq!(report.second_pullback.card(o), d.y.cat.hom(t.v, 1).len());
        }
    }

    #[test]
    fn conearby_direct_image_is_the_second_projection_pullback() {
        let guard = g();
        for d in [identity_arrow_d(&guard).unwrap(), cospan_d(&guard).unwrap()] {
            let f = sheafify(&d.y, &Presheaf::representable(&d.y.cat, 1), &guard).unwrap().out;
            let report = conearby_cycles(&d, &f, &guard).unwrap();
            assert!(report.matches_second_pullback);
            assert!(report.direct_is_sheaf);
        }
    }

    #[test]
    fn base_change_composite_matches_the_direct_image() {
        let guard = g();
        for d in [identity_arrow_d(&guard).unwrap(), cospan_d(&guard).unwrap()] {
            let rep = sheafify(&d.y, &Presheaf::representable(&d.y.cat, 1), &guard).unwrap().out;
            let konst = Presheaf {
                name: "two".to_string(),
                value: vec![FinSet { n: 2 }; d.y.cat.n_obj()],
                res: (0..d.y.cat.n_mor()).map(|_| SetMap::identity(2)).collect(),
            };
            for f in [rep, konst] {
                let report = base_change_identity(&d, &f, &guard).unwrap();
                assert!(report.iso, "{} on {}", f.name, d.site.cat.name());
            }
        }
    }

    #[test]
    fn representable_squares_hold_everywhere() {
        let guard = g();
        let c = cospan_c(&guard).unwrap();
        for z in 0..c.site.cat.n_obj() {
            assert!(representable_square_check(&c, z, &guard).unwrap(), "object {z}");
        }
        let (x, y, s, f, gp) = triple_parts(&guard).unwrap();
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        for z in 0..c.site.cat.n_obj() {
            assert!(representable_square_check(&c, z, &guard).unwrap(), "object {z}");
        }
    }

    #[test]
    fn mediating_cone_is_a_site_map_on_the_constant_cospan() {
        let guard = g();
        let x = arrow_site(&guard).unwrap();
        let y = arrow_site(&guard).unwrap();
        let s = pt_site(&guard).unwrap();
        let f = Functor::new("f^+", vec![0], vec![0]);
        let gp = Functor::new("g^+", vec![0], vec![0]);
        let c = build_oriented_site(CospanData::new(x, y, s, f, gp, &guard).unwrap(), &guard)
            .unwrap();
        let t = arrow_site(&guard).unwrap();
        let a_plus = Functor::identity(&t.cat, "a^+");
        let b_plus = Functor::identity(&t.cat, "b^+");
        let report = mediating_cone_check(&c, &t, &a_plus, &b_plus, &guard).unwrap();
        assert!(report.covers_ok, "{:?}", report.witness);
        assert!(report.terminal_ok);
        assert!(report.first_leg_ok);
        assert!(report.second_leg_ok);
    }

    #[test]
    fn anchored_comparison_applies_on_the_identity_slice() {
        let guard = g();
        let s = fibarrow(&guard).unwrap();
        let total = build_total_site(&s, &guard).unwrap();
        let (x, psi) = fibarrow_psi_good(&total.site.cat, &guard).unwrap();
        let samples = enumerate_sheaves(&total.site, 2, &guard).unwrap();
        assert!(samples.len() >= 3);
        let report =
            rho_comparison(&s, &total, &PsiData { x, psi }, &samples, 2, &guard).unwrap();
        assert!(report.applicable, "{:?}", report.witness);
        assert!(report.unit_isos.iter().all(|(_, ok)| *ok));
        assert_eq!(report.fully_faithful, Some(true));
    }

    #[test]
    fn anchored_comparison_rejects_the_collapsing_map() {
        let guard = g();
        let s = fibarrow(&guard).unwrap();
        let total = build_total_site(&s, &guard).unwrap();
        let (x, psi) = fibarrow_psi_bad(&total.site.cat, &guard).unwrap();
        let report = rho_comparison(&s, &total, &PsiData { x, psi }, &[], 2, &guard).unwrap();
        assert!(!report.applicable);
        assert!(report.witness.is_some());
        assert_eq!(report.fully_faithful, None);
    }
}
