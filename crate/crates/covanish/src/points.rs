//! Points of finite sites as certified neighborhood diagrams, stalks as
//! filtered colimits over those diagrams, combined points of covanishing
//! sites, and brute-force conservativity checks.
//!
//! A point is a cofiltered shape with a functor into the site category.
//! The constructor certifies three things: the shape really is cofiltered,
//! every covering sieve of a neighborhood is met by a diagram morphism, and
//! the induced stalk functor passes finite-limit probes (terminal presheaf
//! and all representable cospans). Stalks are then colimits of the presheaf
//! restricted to the opposite of the shape, which is filtered.

use crate::error::Error;
use crate::fincat::{
    finset_colimit, FinCat, FinSet, Functor, Mor, MorId, ObjId, SetDiagram, SetMap,
};
use crate::guard::Guard;
use crate::oriented::{first_leg_closed_form, second_leg_closed_form, CoevSiteD};
use crate::sheaves::{
    direct_image, presheaf_fiber_product, sheafify, Presheaf, PsMor,
};
use crate::sites::Site;
use crate::Result;
use std::collections::BTreeMap;

/// Certificate gathered while checking a candidate point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointCertificate {
    /// Nonempty, every object pair has a cone, every parallel pair is
    /// equalized by some incoming morphism.
    pub cofiltered: bool,
    /// Every covering sieve of every neighborhood contains the image of a
    /// diagram morphism into that neighborhood.
    pub cover_lifting: bool,
    /// The stalk of the terminal presheaf is a singleton and stalks commute
    /// with fiber products of representables.
    pub left_exact_on_probes: bool,
}

impl PointCertificate {
    pub fn ok(&self) -> bool {
        self.cofiltered && self.cover_lifting && self.left_exact_on_probes
    }
}

/// A certified point: a cofiltered neighborhood diagram in the site.
#[derive(Debug, Clone)]
pub struct Point {
    pub name: String,
    pub shape: FinCat,
    /// Diagram functor from the shape into the site category.
    pub diagram: Functor,
    pub certificate: PointCertificate,
}

/// A stalk: the filtered colimit of a presheaf over the opposite of the
/// neighborhood shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stalk {
    pub value: FinSet,
    /// Cocone component from the presheaf value at each neighborhood.
    pub cocone: Vec<SetMap>,
    /// Least representative `(neighborhood, element)` of each class.
    pub reps: Vec<(ObjId, usize)>,
}

fn is_cofiltered(shape: &FinCat, guard: &Guard) -> Result<bool> {
    if shape.n_obj() == 0 {
        return Ok(false);
    }
    for a in 0..shape.n_obj() {
        for b in 0..shape.n_obj() {
            guard.spend(1)?;
            let coned = (0..shape.n_obj())
                .any(|c| !shape.hom(c, a).is_empty() && !shape.hom(c, b).is_empty());
            if !coned {
                return Ok(false);
            }
        }
    }
    for f in 0..shape.n_mor() {
        for g in 0..shape.n_mor() {
            if f == g || shape.dom(f) != shape.dom(g) || shape.cod(f) != shape.cod(g) {
                continue;
            }
            let a = shape.dom(f);
            let mut equalized = false;
            'search: for c in 0..shape.n_obj() {
                for h in shape.hom(c, a) {
                    guard.spend(1)?;
                    if shape.compose(f, h)? == shape.compose(g, h)? {
                        equalized = true;
                        break 'search;
                    }
                }
            }
            if !equalized {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn lifts_covers(shape: &FinCat, diagram: &Functor, site: &Site, guard: &Guard) -> Result<bool> {
    for n in 0..shape.n_obj() {
        for sieve in &site.top.covering[diagram.ob(n)] {
            guard.spend(1)?;
            let met = (0..shape.n_mor())
                .any(|m| shape.cod(m) == n && sieve.contains(&diagram.mo(m)));
            if !met {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Raw stalk over an uncertified diagram; shared by certification and the
/// public `stalk`.
fn stalk_raw(
    site: &Site,
    p: &Presheaf,
    shape: &FinCat,
    diagram: &Functor,
    guard: &Guard,
) -> Result<Stalk> {
    let op = shape.opposite();
    let d = SetDiagram {
        obs: (0..op.n_obj()).map(|n| FinSet { n: p.card(diagram.ob(n)) }).collect(),
        maps: (0..op.n_mor()).map(|m| p.res[diagram.mo(m)].clone()).collect(),
    };
    d.validate(&op, guard)?;
    let col = finset_colimit(&op, &d, guard)?;
    let _ = site;
    Ok(Stalk { value: col.apex, cocone: col.inj, reps: col.reps })
}

fn terminal_presheaf(cat: &FinCat) -> Presheaf {
    Presheaf {
        name: "terminal".to_string(),
        value: vec![FinSet { n: 1 }; cat.n_obj()],
        res: (0..cat.n_mor()).map(|_| SetMap::identity(1)).collect(),
    }
}

/// The induced map on stalks of a presheaf morphism, via least
/// representatives.
fn stalk_map_raw(
    site: &Site,
    shape: &FinCat,
    diagram: &Functor,
    h: &PsMor,
    src: &Presheaf,
    tgt: &Presheaf,
    guard: &Guard,
) -> Result<SetMap> {
    let s = stalk_raw(site, src, shape, diagram, guard)?;
    let t = stalk_raw(site, tgt, shape, diagram, guard)?;
    let table = s
        .reps
        .iter()
        .map(|&(n, x)| t.cocone[n].apply(h.comp[diagram.ob(n)].apply(x)))
        .collect();
    Ok(SetMap::new(s.value.n, t.value.n, table))
}

/// Canonical comparison for one presheaf cospan: the stalk of the fiber
/// product must biject onto the fiber product of the stalks.
fn stalk_fiber_product_raw(
    site: &Site,
    shape: &FinCat,
    diagram: &Functor,
    a: &Presheaf,
    b: &Presheaf,
    c: &Presheaf,
    f: &PsMor,
    g: &PsMor,
    guard: &Guard,
) -> Result<bool> {
    let (ps, pr1, pr2) = presheaf_fiber_product(&site.cat, a, b, f, g);
    let sp = stalk_raw(site, &ps, shape, diagram, guard)?;
    let sf = stalk_map_raw(site, shape, diagram, f, a, c, guard)?;
    let sg = stalk_map_raw(site, shape, diagram, g, b, c, guard)?;
    let s1 = stalk_map_raw(site, shape, diagram, &pr1, &ps, a, guard)?;
    let s2 = stalk_map_raw(site, shape, diagram, &pr2, &ps, b, guard)?;
    let sa = stalk_raw(site, a, shape, diagram, guard)?;
    let sb = stalk_raw(site, b, shape, diagram, guard)?;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for xa in 0..sa.value.n {
        for xb in 0..sb.value.n {
            guard.spend(1)?;
            if sf.apply(xa) == sg.apply(xb) {
                pairs.push((xa, xb));
            }
        }
    }
    if sp.value.n != pairs.len() {
        return Ok(false);
    }
    let mut seen = vec![false; pairs.len()];
    for k in 0..sp.value.n {
        let target = (s1.apply(k), s2.apply(k));
        match pairs.iter().position(|&p| p == target) {
            Some(i) if !seen[i] => seen[i] = true,
            _ => return Ok(false),
        }
    }
    Ok(true)
}

/// Runs the three certificate checks without constructing a point.
pub fn certify_point(
    shape: &FinCat,
    diagram: &Functor,
    site: &Site,
    guard: &Guard,
) -> Result<PointCertificate> {
    shape.validate(guard)?;
    crate::fincat::validate_functor(shape, &site.cat, diagram, guard)?;
    let cofiltered = is_cofiltered(shape, guard)?;
    let cover_lifting = lifts_covers(shape, diagram, site, guard)?;
    let mut left_exact_on_probes = cofiltered;
    if left_exact_on_probes {
        let term = terminal_presheaf(&site.cat);
        if stalk_raw(site, &term, shape, diagram, guard)?.value.n != 1 {
            left_exact_on_probes = false;
        }
    }
    if left_exact_on_probes {
        'probes: for f in 0..site.cat.n_mor() {
            for g in 0..site.cat.n_mor() {
                if site.cat.cod(f) != site.cat.cod(g) {
                    continue;
                }
                guard.spend(1)?;
                let a = Presheaf::representable(&site.cat, site.cat.dom(f));
                let b = Presheaf::representable(&site.cat, site.cat.dom(g));
                let c = Presheaf::representable(&site.cat, site.cat.cod(f));
                let fm = crate::sheaves::yoneda_mor(&site.cat, f);
                let gm = crate::sheaves::yoneda_mor(&site.cat, g);
                if !stalk_fiber_product_raw(site, shape, diagram, &a, &b, &c, &fm, &gm, guard)? {
                    left_exact_on_probes = false;
                    break 'probes;
                }
            }
        }
    }
    Ok(PointCertificate { cofiltered, cover_lifting, left_exact_on_probes })
}

/// Constructs a certified point; a failing certificate is rejected.
pub fn point(
    name: &str,
    shape: FinCat,
    diagram: Functor,
    site: &Site,
    guard: &Guard,
) -> Result<Point> {
    let certificate = certify_point(&shape, &diagram, site, guard)?;
    if !certificate.ok() {
        return Err(Error::axiom(
            "point",
            format!(
                "certificate rejected for `{}`: cofiltered={} cover_lifting={} left_exact={}",
                name, certificate.cofiltered, certificate.cover_lifting,
                certificate.left_exact_on_probes
            ),
        ));
    }
    Ok(Point { name: name.to_string(), shape, diagram, certificate })
}

/// Stalk of a presheaf at a certified point.
pub fn stalk(site: &Site, p: &Presheaf, pt: &Point, guard: &Guard) -> Result<Stalk> {
    if !pt.certificate.ok() {
        return Err(Error::axiom("stalk", format!("point `{}` carries a failed certificate", pt.name)));
    }
    p.validate(&site.cat, guard)?;
    stalk_raw(site, p, &pt.shape, &pt.diagram, guard)
}

/// Map induced on stalks by a presheaf morphism; functorial in the
/// morphism by construction.
pub fn stalk_map(
    site: &Site,
    pt: &Point,
    h: &PsMor,
    src: &Presheaf,
    tgt: &Presheaf,
    guard: &Guard,
) -> Result<SetMap> {
    h.validate(&site.cat, src, tgt, guard)?;
    stalk_map_raw(site, &pt.shape, &pt.diagram, h, src, tgt, guard)
}

/// Standalone finite-limit probes for property tests.
pub fn stalk_terminal_check(site: &Site, pt: &Point, guard: &Guard) -> Result<bool> {
    Ok(stalk(site, &terminal_presheaf(&site.cat), pt, guard)?.value.n == 1)
}

pub fn stalk_fiber_product_check(
    site: &Site,
    pt: &Point,
    a: &Presheaf,
    b: &Presheaf,
    c: &Presheaf,
    f: &PsMor,
    g: &PsMor,
    guard: &Guard,
) -> Result<bool> {
    f.validate(&site.cat, a, c, guard)?;
    g.validate(&site.cat, b, c, guard)?;
    stalk_fiber_product_raw(site, &pt.shape, &pt.diagram, a, b, c, f, g, guard)
}

/// Specialization data for a combined covanishing point: one structure
/// morphism per neighborhood pair, row-major in the first coordinate:
/// `delta[nx * ny_count + ny]: d_y(ny) -> h^+(d_x(nx))`.
#[derive(Debug, Clone)]
pub struct SpecData {
    pub delta: Vec<MorId>,
}

/// A point of the covanishing site built from a point of each leg and a
/// specialization; the pair shape is the product of the two shapes.
#[derive(Debug, Clone)]
pub struct CovanishingPoint {
    pub point: Point,
    pub nx_count: usize,
    pub ny_count: usize,
}

impl CovanishingPoint {
    /// Shape object id of the neighborhood pair `(nx, ny)`.
    pub fn pair(&self, nx: ObjId, ny: ObjId) -> ObjId {
        nx * self.ny_count + ny
    }
}

/// Assembles the combined point. The specialization components must be
/// natural in both coordinates; incompatibility surfaces as a missing
/// morphism of the covanishing site and is rejected.
pub fn covanishing_point(
    d: &CoevSiteD,
    px: &Point,
    py: &Point,
    spec: &SpecData,
    name: &str,
    guard: &Guard,
) -> Result<CovanishingPoint> {
    let yc = &d.y.cat;
    let nx = px.shape.n_obj();
    let ny = py.shape.n_obj();
    if spec.delta.len() != nx * ny {
        return Err(Error::malformed(
            "specialization",
            name,
            "component count does not match the neighborhood pairs",
        ));
    }
    for i in 0..nx {
        for j in 0..ny {
            let del = spec.delta[i * ny + j];
            let want_dom = py.diagram.ob(j);
            let want_cod = d.f_plus.ob(px.diagram.ob(i));
            if yc.dom(del) != want_dom || yc.cod(del) != want_cod {
                return Err(Error::malformed(
                    "specialization",
                    name,
                    format!(
                        "component at ({}, {}) must run `{}` -> `{}`",
                        px.shape.obj_name(i),
                        py.shape.obj_name(j),
                        yc.obj_name(want_dom),
                        yc.obj_name(want_cod)
                    ),
                ));
            }
        }
    }

    // Product shape: identities first, then all remaining morphism pairs.
    let pair_obj = |i: ObjId, j: ObjId| i * ny + j;
    let names: Vec<String> = (0..nx * ny)
        .map(|o| format!("({},{})", px.shape.obj_name(o / ny), py.shape.obj_name(o % ny)))
        .collect();
    let mut mors: Vec<Mor> = Vec::new();
    let mut pair_of: Vec<(MorId, MorId)> = Vec::new();
    let mut index: BTreeMap<(MorId, MorId), MorId> = BTreeMap::new();
    for o in 0..nx * ny {
        let (i, j) = (o / ny, o % ny);
        index.insert((px.shape.identity(i), py.shape.identity(j)), mors.len());
        mors.push(Mor { name: format!("id_{}", names[o]), dom: o, cod: o });
        pair_of.push((px.shape.identity(i), py.shape.identity(j)));
    }
    for mx in 0..px.shape.n_mor() {
        for my in 0..py.shape.n_mor() {
            guard.spend(1)?;
            if mx == px.shape.identity(px.shape.dom(mx)) && my == py.shape.identity(py.shape.dom(my))
            {
                continue;
            }
            index.insert((mx, my), mors.len());
            mors.push(Mor {
                name: format!("({},{})", px.shape.mor_name(mx), py.shape.mor_name(my)),
                dom: pair_obj(px.shape.dom(mx), py.shape.dom(my)),
                cod: pair_obj(px.shape.cod(mx), py.shape.cod(my)),
            });
            pair_of.push((mx, my));
        }
    }
    let n_mor = mors.len();
    let mut comp = vec![vec![None; n_mor]; n_mor];
    for g in 0..n_mor {
        for f in 0..n_mor {
            if mors[f].cod != mors[g].dom {
                continue;
            }
            guard.spend(1)?;
            let cx = px.shape.compose(pair_of[g].0, pair_of[f].0)?;
            let cy = py.shape.compose(pair_of[g].1, pair_of[f].1)?;
            comp[g][f] = Some(index[&(cx, cy)]);
        }
    }
    let shape = FinCat {
        name: format!("{}x{}", px.shape.name(), py.shape.name()),
        objects: names,
        mors,
        id_of: (0..nx * ny).collect(),
        comp,
    };
    shape.validate(guard)?;

    let mut ob = Vec::with_capacity(nx * ny);
    for o in 0..nx * ny {
        let (i, j) = (o / ny, o % ny);
        ob.push(d.obj_index[&(px.diagram.ob(i), py.diagram.ob(j), spec.delta[i * ny + j])]);
    }
    let mut mo = Vec::with_capacity(shape.n_mor());
    for m in 0..shape.n_mor() {
        let (mx, my) = pair_of[m];
        let key = (
            px.diagram.mo(mx),
            py.diagram.mo(my),
            ob[shape.dom(m)],
            ob[shape.cod(m)],
        );
        match d.mor_index.get(&key) {
            Some(&dm) => mo.push(dm),
            None => {
                return Err(Error::axiom(
                    "specialization",
                    format!(
                        "components are not natural along `{}`",
                        shape.mor_name(m)
                    ),
                ))
            }
        }
    }
    let diagram = Functor::new(&format!("nbhd({})", name), ob, mo);
    let pt = point(name, shape, diagram, &d.site, guard)?;
    Ok(CovanishingPoint { point: pt, nx_count: nx, ny_count: ny })
}

/// Stalk of the representable at a covanishing object `z = (u, v, delta)`
/// against the closed fiber-product form: the stalk must biject onto
/// pairs of leg-stalk classes that agree after moving into the stalk of
/// the representable at `h^+(u)`.
pub fn covanishing_representable_stalk_check(
    d: &CoevSiteD,
    cp: &CovanishingPoint,
    px: &Point,
    py: &Point,
    spec: &SpecData,
    z: ObjId,
    guard: &Guard,
) -> Result<bool> {
    let t = d.objs[z];
    let xc = &d.x.cat;
    let yc = &d.y.cat;
    let hu = d.f_plus.ob(t.u);
    let s_z = stalk(&d.site, &Presheaf::representable(&d.site.cat, z), &cp.point, guard)?;
    let u_x = stalk(&d.x, &Presheaf::representable(xc, t.u), px, guard)?;
    let v_y = stalk(&d.y, &Presheaf::representable(yc, t.v), py, guard)?;
    let u_hy = stalk(&d.y, &Presheaf::representable(yc, hu), py, guard)?;

    // Leg stalk into the common corner, through the specialization.
    let hom_pos = |cat: &FinCat, a: ObjId, b: ObjId, m: MorId| -> usize {
        cat.hom(a, b).iter().position(|&k| k == m).expect("morphism sits in its hom set")
    };
    let m1: Vec<usize> = u_x
        .reps
        .iter()
        .map(|&(n, xi)| {
            let a = xc.hom(px.diagram.ob(n), t.u)[xi];
            let del = spec.delta[n * cp.ny_count];
            let via = yc
                .compose(d.f_plus.mo(a), del)
                .expect("specialization composes with the leg image");
            u_hy.cocone[0].apply(hom_pos(yc, py.diagram.ob(0), hu, via))
        })
        .collect();
    let m2: Vec<usize> = v_y
        .reps
        .iter()
        .map(|&(n, xi)| {
            let b = yc.hom(py.diagram.ob(n), t.v)[xi];
            let via = yc.compose(t.delta, b).expect("structure morphism composes");
            u_hy.cocone[n].apply(hom_pos(yc, py.diagram.ob(n), hu, via))
        })
        .collect();

    // Components of each combined section.
    let mut e1 = Vec::with_capacity(s_z.value.n);
    let mut e2 = Vec::with_capacity(s_z.value.n);
    for &(pair, xi) in &s_z.reps {
        let (i, j) = (pair / cp.ny_count, pair % cp.ny_count);
        let src_obj = cp.point.diagram.ob(pair);
        let dm = d.site.cat.hom(src_obj, z)[xi];
        let parts = d.mors[dm];
        e1.push(u_x.cocone[i].apply(hom_pos(xc, px.diagram.ob(i), t.u, parts.a)));
        e2.push(v_y.cocone[j].apply(hom_pos(yc, py.diagram.ob(j), t.v, parts.b)));
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for xa in 0..u_x.value.n {
        for xb in 0..v_y.value.n {
            guard.spend(1)?;
            if m1[xa] == m2[xb] {
                pairs.push((xa, xb));
            }
        }
    }
    if s_z.value.n != pairs.len() {
        return Ok(false);
    }
    let mut seen = vec![false; pairs.len()];
    for k in 0..s_z.value.n {
        match pairs.iter().position(|&p| p == (e1[k], e2[k])) {
            Some(i) if !seen[i] => seen[i] = true,
            _ => return Ok(false),
        }
    }
    Ok(true)
}

/// The three stalk identities at a combined point: first-leg pullback
/// stalks, second-leg pullback stalks, and co-nearby-cycles stalks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StalkFormulas {
    /// Stalk of the sheafified first-leg pullback equals the first-leg
    /// stalk of the input.
    pub first: bool,
    /// Stalk of the second-leg pullback equals the second-leg stalk.
    pub second: bool,
    /// Stalk of the co-nearby-cycles direct image equals the second-leg
    /// stalk of the input.
    pub conearby: bool,
}

/// `f` is a sheaf on the first leg, `g` a sheaf on the second.
pub fn covanishing_stalk_formulas(
    d: &CoevSiteD,
    cp: &CovanishingPoint,
    px: &Point,
    py: &Point,
    f: &Presheaf,
    g: &Presheaf,
    guard: &Guard,
) -> Result<StalkFormulas> {
    // First leg: canonical map into the closed-form stalk, then the
    // sheafification unit on stalks; both must be bijections.
    let closed1 = first_leg_closed_form(d, f);
    let s_closed = stalk(&d.site, &closed1, &cp.point, guard)?;
    let s_x = stalk(&d.x, f, px, guard)?;
    let table1: Vec<usize> = s_x
        .reps
        .iter()
        .map(|&(n, xi)| s_closed.cocone[cp.pair(n, 0)].apply(xi))
        .collect();
    let into_closed = SetMap::new(s_x.value.n, s_closed.value.n, table1);
    let sh1 = sheafify(&d.site, &closed1, guard)?;
    let unit_on_stalks =
        stalk_map(&d.site, &cp.point, &sh1.unit, &closed1, &sh1.out, guard)?;
    let first = into_closed.is_bijective() && unit_on_stalks.is_bijective();

    // Second leg: the closed form needs no sheafification.
    let closed2 = second_leg_closed_form(d, g);
    let s_closed2 = stalk(&d.site, &closed2, &cp.point, guard)?;
    let s_y = stalk(&d.y, g, py, guard)?;
    let table2: Vec<usize> = s_y
        .reps
        .iter()
        .map(|&(n, xi)| s_closed2.cocone[cp.pair(0, n)].apply(xi))
        .collect();
    let second = SetMap::new(s_y.value.n, s_closed2.value.n, table2).is_bijective();

    // Co-nearby-cycles direct image, computed through the functor itself.
    let psi = Functor::new(
        "psi^+",
        d.objs.iter().map(|t| t.v).collect(),
        d.mors.iter().map(|m| m.b).collect(),
    );
    let direct = direct_image(&psi, &d.site.cat, &d.y.cat, g);
    let s_direct = stalk(&d.site, &direct, &cp.point, guard)?;
    let table3: Vec<usize> = s_y
        .reps
        .iter()
        .map(|&(n, xi)| s_direct.cocone[cp.pair(0, n)].apply(xi))
        .collect();
    let conearby = SetMap::new(s_y.value.n, s_direct.value.n, table3).is_bijective();

    Ok(StalkFormulas { first, second, conearby })
}

/// Per-morphism verdict of the conservativity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorVerdict {
    pub name: String,
    /// Bijectivity of the stalk map at each supplied point, in order.
    pub stalk_bijective: Vec<bool>,
    pub stalkwise_invertible: bool,
    pub actually_invertible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservativityReport {
    pub per_morphism: Vec<MorVerdict>,
    /// No morphism was declared invertible by points without actually
    /// being invertible.
    pub no_false_positives: bool,
}

/// Declares a morphism invertible-by-points iff every stalk map is a
/// bijection, and cross-checks against actual invertibility.
pub fn conservativity_check(
    site: &Site,
    points: &[Point],
    morphisms: &[(Presheaf, Presheaf, PsMor)],
    guard: &Guard,
) -> Result<ConservativityReport> {
    let mut per_morphism = Vec::with_capacity(morphisms.len());
    let mut no_false_positives = true;
    for (src, tgt, h) in morphisms {
        let mut stalk_bijective = Vec::with_capacity(points.len());
        for pt in points {
            stalk_bijective.push(stalk_map(site, pt, h, src, tgt, guard)?.is_bijective());
        }
        let stalkwise_invertible = stalk_bijective.iter().all(|&b| b);
        let actually_invertible = h.is_iso();
        if stalkwise_invertible && !actually_invertible {
            no_false_positives = false;
        }
        per_morphism.push(MorVerdict {
            name: h.name.clone(),
            stalk_bijective,
            stalkwise_invertible,
            actually_invertible,
        });
    }
    Ok(ConservativityReport { per_morphism, no_false_positives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fincat::CatBuilder;
    use crate::fixtures::{arrow_chaotic_site, arrow_site, pt_site};
    use crate::oriented::build_covanishing_site;
    use crate::sheaves::{enumerate_sheaves, presheaf_homs, yoneda_mor};

    fn g() -> Guard {
        Guard::new(1_000_000_000)
    }

    fn pt_cat(guard: &Guard) -> FinCat {
        let mut b = CatBuilder::new("N1");
        b.obj("n");
        b.build(&[], guard).unwrap()
    }

    /// Generic point of the arrow site: the identity neighborhood diagram.
    fn generic_arrow_point(site: &Site, guard: &Guard) -> Point {
        point(
            "generic",
            site.cat.clone(),
            Functor::identity(&site.cat, "nbhd"),
            site,
            guard,
        )
        .unwrap()
    }

    fn single_point(site: &Site, at: ObjId, guard: &Guard) -> Result<Point> {
        point(
            &format!("at-{}", site.cat.obj_name(at)),
            pt_cat(guard),
            Functor::new("nbhd", vec![at], vec![site.cat.identity(at)]),
            site,
            guard,
        )
    }

    fn cospan_d(guard: &Guard) -> CoevSiteD {
        let x = pt_site(guard).unwrap();
        let y = arrow_site(guard).unwrap();
        let h = Functor::new("h^+", vec![0], vec![0]);
        build_covanishing_site(&x, &y, &h, guard).unwrap()
    }

    /// Combined generic point of the point-to-arrow covanishing site.
    fn cospan_generic(d: &CoevSiteD, guard: &Guard) -> (Point, Point, SpecData, CovanishingPoint) {
        let px = single_point(&d.x, 0, guard).unwrap();
        let py = generic_arrow_point(&d.y, guard);
        // Structure morphisms into a: identity at a, the arrow at b.
        let spec = SpecData { delta: vec![0, 2] };
        let cp = covanishing_point(d, &px, &py, &spec, "combined", guard).unwrap();
        (px, py, spec, cp)
    }

    #[test]
    fn constant_presheaf_stalk_is_the_constant() {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        let pt = generic_arrow_point(&site, &guard);
        let konst = Presheaf {
            name: "three".to_string(),
            value: vec![FinSet { n: 3 }; 2],
            res: (0..3).map(|_| SetMap::identity(3)).collect(),
        };
        let s = stalk(&site, &konst, &pt, &guard).unwrap();
        assert_eq!(s.value.n, 3);
    }

    #[test]
    fn representable_stalks_on_a_poset_are_singletons() {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        let pt = generic_arrow_point(&site, &guard);
        for o in 0..2 {
            let s = stalk(&site, &Presheaf::representable(&site.cat, o), &pt, &guard).unwrap();
            assert_eq!(s.value.n, 1, "representable at {o}");
        }
    }

    #[test]
    fn invalid_point_certificate_is_rejected() {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        // A single neighborhood at the covered object never meets its
        // nontrivial covering sieve.
        assert!(single_point(&site, 0, &guard).is_err());
        // The same diagram at the other object lifts every cover.
        assert!(single_point(&site, 1, &guard).is_ok());
    }

    #[test]
    fn point_cospan_has_a_unique_combined_point() {
        let guard = g();
        let x = pt_site(&guard).unwrap();
        let y = pt_site(&guard).unwrap();
        let h = Functor::identity(&x.cat, "h^+");
        let d = build_covanishing_site(&x, &y, &h, &guard).unwrap();
        assert_eq!(d.site.cat.n_obj(), 1);
        let px = single_point(&d.x, 0, &guard).unwrap();
        let py = single_point(&d.y, 0, &guard).unwrap();
        let cp =
            covanishing_point(&d, &px, &py, &SpecData { delta: vec![0] }, "combined", &guard)
                .unwrap();
        let term = Presheaf {
            name: "terminal".to_string(),
            value: vec![FinSet { n: 1 }],
            res: vec![SetMap::identity(1)],
        };
        assert_eq!(stalk(&d.site, &term, &cp.point, &guard).unwrap().value.n, 1);
    }

    #[test]
    fn incompatible_specialization_is_rejected() {
        let guard = g();
        let d = cospan_d(&guard);
        let px = single_point(&d.x, 0, &guard).unwrap();
        let py = generic_arrow_point(&d.y, &guard);
        // Swapping the two structure morphisms breaks naturality: the pair
        // over b would need a morphism that does not exist.
        let bad = SpecData { delta: vec![2, 0] };
        assert!(covanishing_point(&d, &px, &py, &bad, "broken", &guard).is_err());
    }

    #[test]
    fn representable_stalk_is_the_fiber_product_of_leg_stalks() {
        let guard = g();
        let d = cospan_d(&guard);
        let (px, py, spec, cp) = cospan_generic(&d, &guard);
        for z in 0..d.site.cat.n_obj() {
            assert!(
                covanishing_representable_stalk_check(&d, &cp, &px, &py, &spec, z, &guard)
                    .unwrap(),
                "object {z}"
            );
        }
    }

    #[test]
    fn stalk_formulas_hold_at_the_combined_generic_point() {
        let guard = g();
        let d = cospan_d(&guard);
        let (px, py, _, cp) = cospan_generic(&d, &guard);
        let f = Presheaf {
            name: "two".to_string(),
            value: vec![FinSet { n: 2 }],
            res: vec![SetMap::identity(2)],
        };
        let gsh = sheafify(&d.y, &Presheaf::representable(&d.y.cat, 1), &guard).unwrap().out;
        let report = covanishing_stalk_formulas(&d, &cp, &px, &py, &f, &gsh, &guard).unwrap();
        assert!(report.first);
        assert!(report.second);
        assert!(report.conearby);
    }

    #[test]
    fn stalk_formulas_hold_at_a_single_pair_point() {
        let guard = g();
        let x = arrow_site(&guard).unwrap();
        let y = arrow_site(&guard).unwrap();
        let h = Functor::identity(&x.cat, "h^+");
        let d = build_covanishing_site(&x, &y, &h, &guard).unwrap();
        let px = single_point(&d.x, 1, &guard).unwrap();
        let py = single_point(&d.y, 1, &guard).unwrap();
        let spec = SpecData { delta: vec![d.y.cat.identity(1)] };
        let cp = covanishing_point(&d, &px, &py, &spec, "at-(b,b)", &guard).unwrap();
        let f = sheafify(&d.x, &Presheaf::representable(&d.x.cat, 0), &guard).unwrap().out;
        let gsh = sheafify(&d.y, &Presheaf::representable(&d.y.cat, 1), &guard).unwrap().out;
        let report = covanishing_stalk_formulas(&d, &cp, &px, &py, &f, &gsh, &guard).unwrap();
        assert!(report.first);
        assert!(report.second);
        assert!(report.conearby);
    }

    #[test]
    fn identity_morphisms_are_stalkwise_invertible() {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        let pt = generic_arrow_point(&site, &guard);
        let sheaves = enumerate_sheaves(&site, 2, &guard).unwrap();
        let morphisms: Vec<(Presheaf, Presheaf, PsMor)> = sheaves
            .iter()
            .map(|s| (s.clone(), s.clone(), PsMor::identity(s)))
            .collect();
        let report = conservativity_check(&site, &[pt], &morphisms, &guard).unwrap();
        assert!(report
            .per_morphism
            .iter()
            .all(|v| v.stalkwise_invertible && v.actually_invertible));
        assert!(report.no_false_positives);
    }

    #[test]
    fn mixed_stalk_behavior_is_flagged() {
        let guard = g();
        let site = arrow_chaotic_site(&guard).unwrap();
        let pa = single_point(&site, 0, &guard).unwrap();
        let pb = single_point(&site, 1, &guard).unwrap();
        // Non-injective map out of a sheaf that collapses only over a: the
        // stalk at b stays bijective while the stalk at a drops an element.
        let src = Presheaf {
            name: "deflate".to_string(),
            value: vec![FinSet { n: 2 }, FinSet { n: 1 }],
            res: vec![SetMap::identity(2), SetMap::identity(1), SetMap::new(2, 1, vec![0, 0])],
        };
        let tgt = Presheaf {
            name: "terminal".to_string(),
            value: vec![FinSet { n: 1 }, FinSet { n: 1 }],
            res: vec![SetMap::identity(1); 3],
        };
        let h = PsMor {
            name: "collapse".to_string(),
            comp: vec![SetMap::new(2, 1, vec![0, 0]), SetMap::identity(1)],
        };
        let report =
            conservativity_check(&site, &[pa, pb], &[(src, tgt, h)], &guard).unwrap();
        let v = &report.per_morphism[0];
        assert_eq!(v.stalk_bijective, vec![false, true]);
        assert!(!v.stalkwise_invertible);
        assert!(!v.actually_invertible);
        assert!(report.no_false_positives);
    }

    #[test]
    fn covanishing_points_have_no_false_positives_exhaustively() {
        let guard = g();
        let d = cospan_d(&guard);
        let (_, _, _, cp) = cospan_generic(&d, &guard);
        let sheaves = enumerate_sheaves(&d.site, 2, &guard).unwrap();
        let mut morphisms = Vec::new();
        for a in &sheaves {
            for b in &sheaves {
                for h in presheaf_homs(&d.site.cat, a, b, &guard).unwrap() {
                    morphisms.push((a.clone(), b.clone(), h));
                }
            }
        }
        assert!(morphisms.len() > 20);
        let report = conservativity_check(&d.site, &[cp.point], &morphisms, &guard).unwrap();
        assert!(report.no_false_positives);
    }

    #[test]
    fn stalk_probes_pass_on_certified_points() {
        let guard = g();
        let site = arrow_site(&guard).unwrap();
        let pt = generic_arrow_point(&site, &guard);
        assert!(stalk_terminal_check(&site, &pt, &guard).unwrap());
        let a = Presheaf::representable(&site.cat, 0);
        let c = Presheaf::representable(&site.cat, 0);
        let f = yoneda_mor(&site.cat, 0);
        assert!(stalk_fiber_product_check(&site, &pt, &a, &a, &c, &f, &f, &guard).unwrap());
    }
}
