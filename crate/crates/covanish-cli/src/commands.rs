//! Command dispatch over a loaded workspace.
//!
//! Every command reduces to engine calls on named entities and returns a
//! list of verdicts. Hypothesis failures (`Error::Unsupported`) become SKIP
//! verdicts whose detail starts with "not applicable"; guard exhaustion
//! propagates so the caller can exit with its own code; any other engine
//! error becomes a FAIL verdict carrying the error text. Sampled checks
//! draw from the seeded generators, so a fixed seed fixes every verdict.

use std::collections::BTreeSet;

use covanish::abelian::{
    cech_cohomology, circle_constant_sheaf, conearby_preserves_kernel_cokernel, AbMor, AbPresheaf,
};
use covanish::fibered::{
    beta_functors, beta_unit_check, build_total_site, fiberwise_commutes_with_covanishing,
    fiberwise_sheaf_check, localization_comparison, reconstruction_check, restrict_base,
    sigma_pullback, to_family, total_topology, SplitFiberedSite, TotalSite,
};
use covanish::fincat::{terminal_object, FinCat, Functor, MorId, ObjId};
use covanish::oriented::{
    base_change_identity, build_covanishing_site, build_oriented_site, comparison_iota_jmath,
    conearby_cycles, covanishing_cross_check, projection_pullbacks, representable_square_check,
    w_change_sheaf_isos, CoevSiteD, CospanData, PsiData,
};
use covanish::points::conservativity_check;
use covanish::samples::{seeded_presheaves, seeded_sheaves};
use covanish::sheaves::{
    enumerate_presheaves, enumerate_sheaves, is_sheaf, presheaf_homs, sheafify, Presheaf, PsMor,
};
use covanish::sites::{compare_topologies, Comparison, Site, Topology};
use covanish::{Error, Guard, Result};

use crate::report::Verdict;
use crate::schema::{LoadedFibered, LoadedPresheaf, LoadedSite, Workspace};

/// Value-size cap for seeded samples.
const SAMPLE_CAP: usize = 2;
/// Sample count for per-sample verdict commands.
const SAMPLE_COUNT: usize = 8;
/// Sample count per side for the equivalence comparison.
const COMPARISON_SAMPLES: usize = 10;

pub const COMMANDS: &[&str] = &[
    "validate",
    "saturate",
    "compare-topologies",
    "check-sheaf",
    "sheafify",
    "build-covanishing",
    "build-oriented",
    "build-total",
    "localize",
    "restrict-base",
    "beta",
    "sigma",
    "psi",
    "base-change",
    "compare-cd",
    "rho-check",
    "stalk",
    "conservativity",
    "cech",
    "verify-theorem",
];

pub const THEOREM_IDS: &[&str] = &[
    "tcevg5", "tcevg41", "tcevg71", "tcevg8", "tcevg10", "co-ev101", "co-ev13", "co-ev12",
    "co-ev16", "fccp4", "fccp7", "tf7", "topfl5", "topfl3",
];

#[derive(Debug)]
pub enum CmdError {
    /// Unknown command, bad arity, or an unresolved entity name.
    Usage(String),
    /// The step budget ran out.
    Guard(u64),
}

pub struct Ctx<'a> {
    pub ws: &'a Workspace,
    pub guard: &'a Guard,
    pub seed: u64,
}

type Cmd<T> = std::result::Result<T, CmdError>;

pub fn run_command(ctx: &Ctx, command: &str, args: &[String]) -> Cmd<Vec<Verdict>> {
    let body = match command {
        "validate" => cmd_validate(ctx, args),
        "saturate" => cmd_saturate(ctx, args)?,
        "compare-topologies" => cmd_compare_topologies(ctx, args)?,
        "check-sheaf" => cmd_check_sheaf(ctx, args)?,
        "sheafify" => cmd_sheafify(ctx, args)?,
        "build-covanishing" => cmd_build_covanishing(ctx, args)?,
        "build-oriented" => cmd_build_oriented(ctx, args)?,
        "build-total" => cmd_build_total(ctx, args)?,
        "localize" => cmd_localize(ctx, args)?,
        "restrict-base" => cmd_restrict_base(ctx, args)?,
        "beta" => cmd_beta(ctx, args)?,
        "sigma" => cmd_sigma(ctx, args)?,
        "psi" => cmd_psi(ctx, args)?,
        "base-change" => cmd_base_change(ctx, args)?,
        "compare-cd" => cmd_compare_cd(ctx, args)?,
        "rho-check" => cmd_rho_check(ctx, args)?,
        "stalk" => cmd_stalk(ctx, args)?,
        "conservativity" => cmd_conservativity(ctx, args)?,
        "cech" => cmd_cech(ctx, args)?,
        "verify-theorem" => cmd_verify_theorem(ctx, args)?,
        other => {
            return Err(CmdError::Usage(format!(
                "unknown command `{other}`; commands: {}",
                COMMANDS.join(", ")
            )))
        }
    };
    absorb(command, body)
}

/// Folds engine errors into verdicts: hypothesis failures skip, resource
/// exhaustion propagates, anything else fails with the error text.
fn absorb(name: &str, r: Result<Vec<Verdict>>) -> Cmd<Vec<Verdict>> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::Resource { limit }) => Err(CmdError::Guard(limit)),
        Err(e @ Error::Unsupported { .. }) => {
            Ok(vec![Verdict::skip(name, format!("not applicable: {e}"))])
        }
        Err(e) => Ok(vec![Verdict::fail(name, format!("computation failed: {e}"), None)]),
    }
}

/// Per-entity variant of [`absorb`] used inside theorem loops.
fn absorb_entity(name: &str, r: Result<Vec<Verdict>>) -> Result<Vec<Verdict>> {
    match r {
        Err(e @ Error::Unsupported { .. }) => {
            Ok(vec![Verdict::skip(name, format!("not applicable: {e}"))])
        }
        other => other,
    }
}

fn need<'a>(args: &'a [String], i: usize, what: &str) -> Cmd<&'a str> {
    args.get(i)
        .map(|s| s.as_str())
        .ok_or_else(|| CmdError::Usage(format!("missing argument {}: {what}", i + 1)))
}

fn topo<'w>(ctx: &Ctx<'w>, name: &str) -> Cmd<&'w LoadedSite> {
    ctx.ws
        .topologies
        .get(name)
        .ok_or_else(|| CmdError::Usage(format!("unknown topology `{name}`")))
}

fn presh<'w>(ctx: &Ctx<'w>, name: &str) -> Cmd<&'w LoadedPresheaf> {
    ctx.ws
        .presheaves
        .get(name)
        .ok_or_else(|| CmdError::Usage(format!("unknown presheaf `{name}`")))
}

fn fib<'w>(ctx: &Ctx<'w>, name: &str) -> Cmd<&'w LoadedFibered> {
    ctx.ws
        .fibered
        .get(name)
        .ok_or_else(|| CmdError::Usage(format!("unknown fibered site `{name}`")))
}

fn cospan<'w>(ctx: &Ctx<'w>, name: &str) -> Cmd<&'w CospanData> {
    ctx.ws
        .cospans
        .get(name)
        .ok_or_else(|| CmdError::Usage(format!("unknown cospan `{name}`")))
}

fn obj_by_name(cat: &FinCat, name: &str) -> Cmd<ObjId> {
    cat.objects
        .iter()
        .position(|o| o == name)
        .ok_or_else(|| CmdError::Usage(format!("unknown object `{name}` in `{}`", cat.name)))
}

fn sieve_names(cat: &FinCat, sieve: &BTreeSet<MorId>) -> String {
    let names: Vec<&str> = sieve.iter().map(|&m| cat.mor_name(m)).collect();
    format!("{{{}}}", names.join(","))
}

/// The covanishing site presented by a cospan: requires the first leg to
/// be an identity, making the second leg a single site map.
fn covanishing_of(c: &CospanData, guard: &Guard) -> Result<CoevSiteD> {
    let identity_first = c.s.cat == c.x.cat
        && c.f_plus.obj_map == (0..c.s.cat.n_obj()).collect::<Vec<_>>()
        && c.f_plus.mor_map == (0..c.s.cat.n_mor()).collect::<Vec<_>>();
    if !identity_first {
        return Err(Error::unsupported(
            "covanishing presentation",
            "the cospan's first leg is not the identity",
        ));
    }
    build_covanishing_site(&c.x, &c.y, &c.g_plus, guard)
}

fn cmd_validate(ctx: &Ctx, args: &[String]) -> Result<Vec<Verdict>> {
    let ws = ctx.ws;
    let guard = ctx.guard;
    let mut out = Vec::new();
    let mut matched: BTreeSet<&str> = BTreeSet::new();
    let mut want = |n: &str| -> bool {
        if args.is_empty() || args.iter().any(|a| a == n) {
            matched.insert(Box::leak(n.to_string().into_boxed_str()));
            true
        } else {
            false
        }
    };
    for (n, c) in &ws.categories {
        if want(n) {
            c.validate(guard)?;
            out.push(Verdict::pass(
                format!("category[{n}]"),
                format!("{} objects, {} morphisms, tables lawful", c.n_obj(), c.n_mor()),
            ));
        }
    }
    for (n, t) in &ws.topologies {
        if want(n) {
            covanish::sites::validate_topology(&t.site.cat, &t.site.top, guard)?;
            let sieves: usize = t.site.top.covering.iter().map(|s| s.len()).sum();
            out.push(Verdict::pass(
                format!("topology[{n}]"),
                format!("on `{}`, {} covering sieves, axioms hold", t.category, sieves),
            ));
        }
    }
    for (n, p) in &ws.presheaves {
        if want(n) {
            let cat = &ws.categories[&p.category];
            p.presheaf.validate(cat, guard)?;
            out.push(Verdict::pass(
                format!("presheaf[{n}]"),
                format!("on `{}`, functorial tables", p.category),
            ));
        }
    }
    for (n, f) in &ws.fibered {
        if want(n) {
            f.fibered.validate(guard)?;
            out.push(Verdict::pass(
                format!("fibered[{n}]"),
                format!(
                    "base `{}` with {} fibers, split pullbacks compose strictly",
                    f.fibered.base.cat.name,
                    f.fibered.fibers.len()
                ),
            ));
        }
    }
    for (n, c) in &ws.cospans {
        if want(n) {
            out.push(Verdict::pass(
                format!("cospan[{n}]"),
                format!(
                    "legs `{}` and `{}` are continuous and left exact",
                    c.f_plus.name, c.g_plus.name
                ),
            ));
        }
    }
    for (n, p) in &ws.points {
        if want(n) {
            out.push(Verdict::pass(
                format!("point[{n}]"),
                format!("certified on `{}`: cofiltered, cover lifting, left exact", p.site),
            ));
        }
    }
    for a in args {
        if !matched.contains(a.as_str()) {
            return Err(Error::missing("validate", format!("no entity named `{a}`")));
        }
    }
    Ok(out)
}

fn cmd_saturate(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let t = topo(ctx, need(args, 0, "topology name")?)?;
    let cat = &t.site.cat;
    let mut out = Vec::new();
    for o in 0..cat.n_obj() {
        let sieves = &t.site.top.covering[o];
        let mut listed: Vec<String> = sieves.iter().map(|s| sieve_names(cat, s)).collect();
        if listed.len() > 8 {
            listed.truncate(8);
            listed.push("...".to_string());
        }
        out.push(Verdict::pass(
            format!("saturate[{}].{}", need(args, 0, "")?, cat.obj_name(o)),
            format!("{} covering sieves: {}", sieves.len(), listed.join(", ")),
        ));
    }
    Ok(Ok(out))
}

fn cmd_compare_topologies(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let n1 = need(args, 0, "first topology name")?;
    let n2 = need(args, 1, "second topology name")?;
    let t1 = topo(ctx, n1)?;
    let t2 = topo(ctx, n2)?;
    if t1.site.cat != t2.site.cat {
        return Err(CmdError::Usage(format!(
            "`{n1}` and `{n2}` live on different categories"
        )));
    }
    Ok((|| {
        let cmp = compare_topologies(&t1.site.cat, &t1.site.top, &t2.site.cat, &t2.site.top, ctx.guard)?;
        Ok(vec![Verdict::pass(format!("compare[{n1},{n2}]"), format!("{cmp}"))])
    })())
}

/// Picks the unique topology on the presheaf's category when none is named.
fn default_topology<'w>(ctx: &Ctx<'w>, p: &LoadedPresheaf, pname: &str) -> Cmd<(&'w LoadedSite, String)> {
    let matches: Vec<(&String, &LoadedSite)> = ctx
        .ws
        .topologies
        .iter()
        .filter(|(_, t)| t.category == p.category)
        .collect();
    match matches.len() {
        1 => Ok((matches[0].1, matches[0].0.clone())),
        0 => Err(CmdError::Usage(format!(
            "no topology on category `{}` for presheaf `{pname}`",
            p.category
        ))),
        _ => Err(CmdError::Usage(format!(
            "several topologies on `{}`; name one explicitly",
            p.category
        ))),
    }
}

fn site_for<'w>(ctx: &Ctx<'w>, args: &[String], p: &LoadedPresheaf, pname: &str) -> Cmd<(&'w LoadedSite, String)> {
    match args.get(1) {
        Some(n) => {
            let t = topo(ctx, n)?;
            if t.category != p.category {
                return Err(CmdError::Usage(format!(
                    "presheaf `{pname}` lives on `{}`, topology `{n}` on `{}`",
                    p.category, t.category
                )));
            }
            Ok((t, n.clone()))
        }
        None => default_topology(ctx, p, pname),
    }
}

fn cmd_check_sheaf(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let pname = need(args, 0, "presheaf name")?;
    let p = presh(ctx, pname)?;
    let (t, tname) = site_for(ctx, args, p, pname)?;
    Ok((|| {
        let rep = is_sheaf(&t.site, &p.presheaf, ctx.guard)?;
        let witness = rep.failure.as_ref().map(|f| {
            format!(
                "object `{}`, sieve {}: {}",
                t.site.cat.obj_name(f.base),
                sieve_names(&t.site.cat, &f.sieve),
                f.detail
            )
        });
        Ok(vec![Verdict::check(
            format!("sheaf[{pname} on {tname}]"),
            rep.ok,
            if rep.ok { "sheaf condition holds" } else { "sheaf condition fails" },
            witness,
        )])
    })())
}

fn cmd_sheafify(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let pname = need(args, 0, "presheaf name")?;
    let p = presh(ctx, pname)?;
    let (t, tname) = site_for(ctx, args, p, pname)?;
    Ok((|| {
        let sh = sheafify(&t.site, &p.presheaf, ctx.guard)?;
        let cards: Vec<String> = (0..t.site.cat.n_obj())
            .map(|o| format!("{}: {}", t.site.cat.obj_name(o), sh.out.card(o)))
            .collect();
        Ok(vec![Verdict::pass(
            format!("sheafify[{pname} on {tname}]"),
            format!("values {}; unit is iso: {}", cards.join(", "), sh.unit.is_iso()),
        )])
    })())
}

fn cmd_build_covanishing(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "cospan name")?;
    let c = cospan(ctx, name)?;
    Ok((|| {
        let d = covanishing_of(c, ctx.guard)?;
        let mut out = vec![Verdict::pass(
            format!("build-covanishing[{name}]"),
            format!(
                "{} objects, {} morphisms, {} generating families",
                d.site.cat.n_obj(),
                d.site.cat.n_mor(),
                d.gen_families.len()
            ),
        )];
        let cmp = covanishing_cross_check(&d, ctx.guard)?;
        out.push(Verdict::check(
            format!("cross-check[{name}]"),
            cmp == Comparison::Equal,
            format!("saturated generators against direct closure: {cmp}"),
            None,
        ));
        Ok(out)
    })())
}

fn cmd_build_oriented(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "cospan name")?;
    let c = cospan(ctx, name)?;
    Ok((|| {
        let site = build_oriented_site(c.clone(), ctx.guard)?;
        Ok(vec![Verdict::pass(
            format!("build-oriented[{name}]"),
            format!(
                "{} objects, {} morphisms, {} center changes",
                site.site.cat.n_obj(),
                site.site.cat.n_mor(),
                site.w_changes.len()
            ),
        )])
    })())
}

fn cmd_build_total(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    Ok((|| {
        let total = build_total_site(&f.fibered, ctx.guard)?;
        let cat = &total.site.cat;
        let sieves: Vec<String> = (0..cat.n_obj())
            .map(|o| format!("{}: {}", cat.obj_name(o), total.site.top.covering[o].len()))
            .collect();
        Ok(vec![Verdict::pass(
            format!("build-total[{name}]"),
            format!(
                "{} objects, {} morphisms; covering sieves {}",
                cat.n_obj(),
                cat.n_mor(),
                sieves.join(", ")
            ),
        )])
    })())
}

fn cmd_localize(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    let s = &f.fibered;
    let total = match build_total_site(s, ctx.guard) {
        Ok(t) => t,
        Err(e) => return Ok(Err(e)),
    };
    let objects: Vec<ObjId> = match args.get(1) {
        Some(n) => vec![obj_by_name(&total.site.cat, n)?],
        None => (0..total.site.cat.n_obj()).collect(),
    };
    Ok((|| {
        let mut out = Vec::new();
        for v in objects {
            let cmp = localization_comparison(s, &total, v, ctx.guard)?;
            out.push(Verdict::check(
                format!("localize[{name}].{}", total.site.cat.obj_name(v)),
                cmp == Comparison::Equal,
                format!("induced topology vs localized covanishing: {cmp}"),
                None,
            ));
        }
        Ok(out)
    })())
}

fn cmd_restrict_base(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    let s = &f.fibered;
    if args.len() < 2 {
        return Err(CmdError::Usage("name at least one base object to keep".into()));
    }
    let mut keep = Vec::new();
    for a in &args[1..] {
        keep.push(obj_by_name(&s.base.cat, a)?);
    }
    Ok((|| {
        let rb = restrict_base(s, &keep, ctx.guard)?;
        let total = build_total_site(s, ctx.guard)?;
        let sheaves = seeded_sheaves(&total.site, SAMPLE_CAP, ctx.seed, 5, ctx.guard)?;
        let mut out = vec![Verdict::pass(
            format!("restrict-base[{name}]"),
            format!(
                "subcategory on {{{}}} is topologically generating and fiber-product stable",
                args[1..].join(",")
            ),
        )];
        for p in &sheaves {
            let fam = to_family(s, &total, p);
            let rep = reconstruction_check(s, &rb, &fam, ctx.guard)?;
            out.push(Verdict::check(
                format!("reconstruct[{name}].{}", p.name),
                rep.ok,
                if rep.ok { "values rebuild from the kept fibers" } else { "reconstruction fails" }
                    .to_string(),
                rep.witness,
            ));
        }
        Ok(out)
    })())
}

fn cmd_beta(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    let s = &f.fibered;
    Ok((|| {
        let total = build_total_site(s, ctx.guard)?;
        let beta = beta_functors(s, ctx.guard)?;
        let samples =
            seeded_sheaves(&s.fibers[beta.iota], SAMPLE_CAP, ctx.seed, 6, ctx.guard)?;
        let verdicts = beta_unit_check(s, &total, &beta, &samples, ctx.guard)?;
        Ok(verdicts
            .into_iter()
            .map(|v| {
                Verdict::check(
                    format!("beta[{name}].{}", v.sample),
                    v.family_is_sheaf && v.unit_iso,
                    format!("family is a sheaf: {}, unit is iso: {}", v.family_is_sheaf, v.unit_iso),
                    None,
                )
            })
            .collect())
    })())
}

fn cmd_sigma(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    let s = &f.fibered;
    Ok((|| {
        let total = build_total_site(s, ctx.guard)?;
        let samples = seeded_presheaves(&s.base.cat, SAMPLE_CAP, ctx.seed, 6, ctx.guard)?;
        let mut out = Vec::new();
        for p in &samples {
            let sig = sigma_pullback(s, &total, p, ctx.guard)?;
            out.push(Verdict::check(
                format!("sigma[{name}].{}", p.name),
                sig.comparison.is_iso(),
                format!(
                    "family route vs Kan route comparison is iso: {}",
                    sig.comparison.is_iso()
                ),
                None,
            ));
        }
        Ok(out)
    })())
}

fn cmd_psi(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "cospan name")?;
    let c = cospan(ctx, name)?;
    Ok((|| {
        let d = covanishing_of(c, ctx.guard)?;
        let samples = seeded_sheaves(&d.y, SAMPLE_CAP, ctx.seed, SAMPLE_COUNT, ctx.guard)?;
        let mut out = Vec::new();
        for f in &samples {
            let rep = conearby_cycles(&d, f, ctx.guard)?;
            out.push(Verdict::check(
                format!("psi[{name}].{}", f.name),
                rep.direct_is_sheaf && rep.matches_second_pullback,
                format!(
                    "direct image is a sheaf: {}, matches the second-leg pullback: {}",
                    rep.direct_is_sheaf, rep.matches_second_pullback
                ),
                None,
            ));
        }
        Ok(out)
    })())
}

fn cmd_base_change(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "cospan name")?;
    let c = cospan(ctx, name)?;
    Ok((|| {
        let d = covanishing_of(c, ctx.guard)?;
        let samples = seeded_sheaves(&d.y, SAMPLE_CAP, ctx.seed, SAMPLE_COUNT, ctx.guard)?;
        let mut out = Vec::new();
        for f in &samples {
            let rep = base_change_identity(&d, f, ctx.guard)?;
            out.push(Verdict::check(
                format!("base-change[{name}].{}", f.name),
                rep.iso,
                format!("direct image vs projection composite is iso: {}", rep.iso),
                None,
            ));
        }
        Ok(out)
    })())
}

fn iota_jmath_verdicts(
    label: &str,
    c: &covanish::oriented::OrientedSiteC,
    d: &CoevSiteD,
    seed: u64,
    guard: &Guard,
) -> Result<Vec<Verdict>> {
    let c_samples = seeded_sheaves(&c.site, SAMPLE_CAP, seed, COMPARISON_SAMPLES, guard)?;
    let d_samples =
        seeded_sheaves(&d.site, SAMPLE_CAP, seed.wrapping_add(1), COMPARISON_SAMPLES, guard)?;
    let rep = comparison_iota_jmath(c, d, &c_samples, &d_samples, guard)?;
    let c_ok = rep.c_side.iter().all(|(_, b)| *b);
    let d_ok = rep.d_side.iter().all(|(_, b)| *b);
    let first_bad = |side: &[(String, bool)]| {
        side.iter().find(|(_, b)| !*b).map(|(n, _)| n.clone()).or_else(|| rep.witness.clone())
    };
    Ok(vec![
        Verdict::check(
            format!("{label} oriented side"),
            c_ok,
            format!(
                "{} sheaf samples: sheafified round trips are isomorphisms: {c_ok}",
                rep.c_side.len()
            ),
            first_bad(&rep.c_side),
        ),
        Verdict::check(
            format!("{label} covanishing side"),
            d_ok,
            format!(
                "{} sheaf samples: plain round trips are isomorphisms: {d_ok}",
                rep.d_side.len()
            ),
            first_bad(&rep.d_side),
        ),
    ])
}

fn cmd_compare_cd(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "cospan name")?;
    let c = cospan(ctx, name)?;
    Ok((|| {
        let oriented = build_oriented_site(c.clone(), ctx.guard)?;
        let d = covanishing_of(c, ctx.guard)?;
        iota_jmath_verdicts(&format!("compare-cd[{name}]"), &oriented, &d, ctx.seed, ctx.guard)
    })())
}

/// Resolved comparison data of a fibered entity, if any.
fn psi_data(f: &LoadedFibered) -> Option<PsiData> {
    f.psi_resolved
        .as_ref()
        .map(|(x, psi)| PsiData { x: x.clone(), psi: psi.clone() })
}

fn rho_verdicts(
    label: &str,
    s: &SplitFiberedSite,
    total: &TotalSite,
    data: &PsiData,
    seed: u64,
    guard: &Guard,
) -> Result<Vec<Verdict>> {
    let samples = seeded_sheaves(&total.site, SAMPLE_CAP, seed, 6, guard)?;
    let rep = covanish::oriented::rho_comparison(s, total, data, &samples, 2, guard)?;
    if !rep.applicable {
        return Ok(vec![Verdict::skip(
            format!("{label} hypotheses"),
            format!(
                "not applicable: {}",
                rep.witness.unwrap_or_else(|| "hypotheses fail".to_string())
            ),
        )]);
    }
    let units_ok = rep.unit_isos.iter().all(|(_, b)| *b);
    let unit_witness = rep.unit_isos.iter().find(|(_, b)| !*b).map(|(n, _)| n.clone());
    let ff = rep.fully_faithful == Some(true);
    Ok(vec![
        Verdict::check(
            format!("{label} units"),
            units_ok,
            format!("{} sheaf samples: comparison units are isomorphisms: {units_ok}", rep.unit_isos.len()),
            unit_witness,
        ),
        Verdict::check(
            format!("{label} hom-sets"),
            ff,
            format!("hom-set enumeration is bijective: {ff}"),
            None,
        ),
    ])
}

fn cmd_rho_check(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let name = need(args, 0, "fibered site name")?;
    let f = fib(ctx, name)?;
    Ok((|| {
        let data = match psi_data(f) {
            Some(d) => d,
            None => {
                return Ok(vec![Verdict::skip(
                    format!("rho-check[{name}]"),
                    "not applicable: the entity carries no comparison data (psi)",
                )])
            }
        };
        let total = build_total_site(&f.fibered, ctx.guard)?;
        rho_verdicts(&format!("rho-check[{name}]"), &f.fibered, &total, &data, ctx.seed, ctx.guard)
    })())
}

fn cmd_stalk(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let ptname = need(args, 0, "point name")?;
    let pname = need(args, 1, "presheaf name")?;
    let lp = ctx
        .ws
        .points
        .get(ptname)
        .ok_or_else(|| CmdError::Usage(format!("unknown point `{ptname}`")))?;
    let p = presh(ctx, pname)?;
    let t = topo(ctx, &lp.site)?;
    if t.category != p.category {
        return Err(CmdError::Usage(format!(
            "presheaf `{pname}` lives on `{}`, point `{ptname}` on `{}`",
            p.category, t.category
        )));
    }
    Ok((|| {
        let st = covanish::points::stalk(&t.site, &p.presheaf, &lp.point, ctx.guard)?;
        Ok(vec![Verdict::pass(
            format!("stalk[{pname} at {ptname}]"),
            format!("stalk has {} elements", st.value.n),
        )])
    })())
}

fn cmd_conservativity(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let tname = need(args, 0, "topology name")?;
    let t = topo(ctx, tname)?;
    let points: Vec<&crate::schema::LoadedPoint> =
        ctx.ws.points.values().filter(|p| p.site == tname).collect();
    Ok((|| {
        if points.is_empty() {
            return Ok(vec![Verdict::skip(
                format!("conservativity[{tname}]"),
                "not applicable: the workspace has no points on this site",
            )]);
        }
        let pts: Vec<covanish::points::Point> =
            points.iter().map(|p| p.point.clone()).collect();
        let sheaves = seeded_sheaves(&t.site, SAMPLE_CAP, ctx.seed, 4, ctx.guard)?;
        let mut morphisms: Vec<(Presheaf, Presheaf, PsMor)> = Vec::new();
        'outer: for f in &sheaves {
            for g in &sheaves {
                for h in presheaf_homs(&t.site.cat, f, g, ctx.guard)? {
                    morphisms.push((f.clone(), g.clone(), h));
                    if morphisms.len() >= 64 {
                        break 'outer;
                    }
                }
            }
        }
        let rep = conservativity_check(&t.site, &pts, &morphisms, ctx.guard)?;
        let stalkwise = rep.per_morphism.iter().filter(|m| m.stalkwise_invertible).count();
        let witness = rep
            .per_morphism
            .iter()
            .find(|m| m.stalkwise_invertible && !m.actually_invertible)
            .map(|m| m.name.clone());
        Ok(vec![Verdict::check(
            format!("conservativity[{tname}]"),
            rep.no_false_positives,
            format!(
                "{} morphisms at {} points, {} stalkwise invertible, no false positives: {}",
                rep.per_morphism.len(),
                pts.len(),
                stalkwise,
                rep.no_false_positives
            ),
            witness,
        )])
    })())
}

fn parse_modulus(arg: &str) -> Cmd<usize> {
    let digits = arg.strip_prefix("Z/").or_else(|| arg.strip_prefix("z/")).unwrap_or(arg);
    match digits.parse::<usize>() {
        Ok(n) if n >= 2 => Ok(n),
        _ => Err(CmdError::Usage(format!(
            "coefficient `{arg}` is not of the form Z/n with n >= 2"
        ))),
    }
}

fn cmd_cech(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let tname = need(args, 0, "topology name")?;
    let t = topo(ctx, tname)?;
    let modulus = parse_modulus(need(args, 1, "coefficient group, e.g. Z/2")?)?;
    let degree: usize = need(args, 2, "cohomology degree")?
        .parse()
        .map_err(|_| CmdError::Usage("degree must be a natural number".into()))?;
    let cat = &t.site.cat;
    let obj = match args.get(3) {
        Some(n) => obj_by_name(cat, n)?,
        None => terminal_object(cat, ctx.guard).map_err(|_| {
            CmdError::Usage("site has no terminal object; name the covered object".into())
        })?,
    };
    let family = t
        .covers
        .iter()
        .find(|(o, _)| *o == obj)
        .map(|(_, f)| f.clone())
        .ok_or_else(|| {
            CmdError::Usage(format!(
                "no generating family recorded on `{}`; write the topology with covers",
                cat.obj_name(obj)
            ))
        })?;
    Ok((|| {
        let (coeff, kind) = match circle_constant_sheaf(&t.site, modulus, ctx.guard) {
            Ok(f) => (f, "circle constant sheaf"),
            Err(Error::Unsupported { .. }) => (
                AbPresheaf::constant(cat, modulus, 1, &format!("Z/{modulus}")),
                "constant coefficients",
            ),
            Err(e) => return Err(e),
        };
        let h = cech_cohomology(&t.site, &coeff, &family, degree, ctx.guard)?;
        Ok(vec![Verdict::pass(
            format!("cech[{tname} at {}]", cat.obj_name(obj)),
            format!(
                "H^{degree} with Z/{modulus} coefficients ({kind}) is a group of order {}: (Z/{})^{}",
                h.order(),
                h.modulus,
                h.rank
            ),
        )])
    })())
}

fn cmd_verify_theorem(ctx: &Ctx, args: &[String]) -> Cmd<Result<Vec<Verdict>>> {
    let id = need(args, 0, "proposition id")?;
    if id != "all" && !THEOREM_IDS.contains(&id) {
        return Err(CmdError::Usage(format!(
            "unknown proposition id `{id}`; known: all, {}",
            THEOREM_IDS.join(", ")
        )));
    }
    Ok((|| {
        let mut out = Vec::new();
        if id == "all" {
            for t in THEOREM_IDS {
                out.extend(run_theorem(ctx, t)?);
            }
        } else {
            out.extend(run_theorem(ctx, id)?);
        }
        Ok(out)
    })())
}

fn run_theorem(ctx: &Ctx, id: &str) -> Result<Vec<Verdict>> {
    match id {
        "tcevg5" => thm_tcevg5(ctx),
        "tcevg41" => thm_tcevg41(ctx),
        "tcevg71" => thm_tcevg71(ctx),
        "tcevg8" => thm_tcevg8(ctx),
        "tcevg10" => thm_tcevg10(ctx),
        "co-ev101" => thm_co_ev101(ctx),
        "co-ev13" => thm_co_ev13(ctx),
        "co-ev12" => thm_co_ev12(ctx),
        "co-ev16" => thm_co_ev16(ctx),
        "fccp4" => thm_fccp(ctx, "fccp4"),
        "fccp7" => thm_fccp(ctx, "fccp7"),
        "tf7" => thm_tf7(ctx),
        "topfl5" => thm_topfl5(ctx),
        "topfl3" => thm_topfl3(ctx),
        _ => unreachable!("dispatcher validated the id"),
    }
}

fn no_entities(id: &str, kind: &str) -> Vec<Verdict> {
    vec![Verdict::skip(id, format!("no {kind} entities in this workspace"))]
}

/// Runs `body` once per fibered entity, skipping entities whose hypotheses
/// fail, and emits the no-entity SKIP when the workspace has none.
fn over_fibered<F>(ctx: &Ctx, id: &str, mut body: F) -> Result<Vec<Verdict>>
where
    F: FnMut(&str, &LoadedFibered) -> Result<Vec<Verdict>>,
{
    if ctx.ws.fibered.is_empty() {
        return Ok(no_entities(id, "fibered site"));
    }
    let mut out = Vec::new();
    for (name, f) in &ctx.ws.fibered {
        out.extend(absorb_entity(&format!("{id}[{name}]"), body(name, f))?);
    }
    Ok(out)
}

fn over_cospans<F>(ctx: &Ctx, id: &str, mut body: F) -> Result<Vec<Verdict>>
where
    F: FnMut(&str, &CospanData) -> Result<Vec<Verdict>>,
{
    if ctx.ws.cospans.is_empty() {
        return Ok(no_entities(id, "cospan"));
    }
    let mut out = Vec::new();
    for (name, c) in &ctx.ws.cospans {
        out.extend(absorb_entity(&format!("{id}[{name}]"), body(name, c))?);
    }
    Ok(out)
}

fn thm_tcevg5(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tcevg5", |name, f| {
        let s = &f.fibered;
        let total = build_total_site(s, ctx.guard)?;
        let ps = enumerate_presheaves(&total.site.cat, 2, ctx.guard)?;
        let mut witness = None;
        for p in &ps {
            let direct = is_sheaf(&total.site, p, ctx.guard)?.ok;
            let fam = to_family(s, &total, p);
            let fiberwise = fiberwise_sheaf_check(s, &fam, ctx.guard)?.ok;
            if direct != fiberwise {
                witness = Some(p.name.clone());
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("tcevg5[{name}]"),
            witness.is_none(),
            format!(
                "{} presheaves with values up to 2: covanishing and fiberwise sheaf verdicts agree",
                ps.len()
            ),
            witness,
        )])
    })
}

fn thm_tcevg41(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tcevg41", |name, f| {
        let s = &f.fibered;
        let total = build_total_site(s, ctx.guard)?;
        let tt = total_topology(s, &total, ctx.guard)?;
        let cmp = compare_topologies(&total.site.cat, &total.site.top, &total.site.cat, &tt, ctx.guard)?;
        let chaotic_base = s.base.top == Topology::chaotic(&s.base.cat);
        let ok = if chaotic_base {
            cmp == Comparison::Equal
        } else {
            matches!(cmp, Comparison::Equal | Comparison::FirstFiner)
        };
        Ok(vec![Verdict::check(
            format!("tcevg41[{name}]"),
            ok,
            format!(
                "base topology chaotic: {chaotic_base}; covanishing vs total-generated topology: {cmp}"
            ),
            None,
        )])
    })
}

fn thm_tcevg71(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tcevg71", |name, f| {
        let s = &f.fibered;
        let total = build_total_site(s, ctx.guard)?;
        let mut witness = None;
        for v in 0..total.site.cat.n_obj() {
            let cmp = localization_comparison(s, &total, v, ctx.guard)?;
            if cmp != Comparison::Equal {
                witness = Some(format!("{}: {cmp}", total.site.cat.obj_name(v)));
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("tcevg71[{name}]"),
            witness.is_none(),
            format!(
                "{} total objects: induced and localized covanishing topologies are equal",
                total.site.cat.n_obj()
            ),
            witness,
        )])
    })
}

fn thm_tcevg8(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tcevg8", |name, f| {
        let s = &f.fibered;
        let total = build_total_site(s, ctx.guard)?;
        let fams =
            covanish::samples::seeded_families(s, &total, SAMPLE_CAP, ctx.seed, 10, ctx.guard)?;
        let mut witness = None;
        for fam in &fams {
            if !fiberwise_commutes_with_covanishing(s, &total, fam, ctx.guard)? {
                witness = Some(fam.name.clone());
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("tcevg8[{name}]"),
            witness.is_none(),
            format!(
                "{} seeded families: fiberwise sheafification commutes with covanishing sheafification",
                fams.len()
            ),
            witness,
        )])
    })
}

fn thm_tcevg10(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tcevg10", |name, f| {
        let s = &f.fibered;
        let total = build_total_site(s, ctx.guard)?;
        let sheaves = seeded_sheaves(&total.site, SAMPLE_CAP, ctx.seed, 5, ctx.guard)?;
        let n = s.base.cat.n_obj();
        let mut applicable = 0usize;
        let mut witness = None;
        'masks: for mask in 1u32..(1 << n) {
            let keep: Vec<ObjId> = (0..n).filter(|&o| mask & (1 << o) != 0).collect();
            let rb = match restrict_base(s, &keep, ctx.guard) {
                Ok(rb) => rb,
                Err(e @ Error::Resource { .. }) => return Err(e),
                Err(_) => continue,
            };
            applicable += 1;
            for p in &sheaves {
                let fam = to_family(s, &total, p);
                let rep = reconstruction_check(s, &rb, &fam, ctx.guard)?;
                if !rep.ok {
                    let names: Vec<&str> =
                        keep.iter().map(|&o| s.base.cat.obj_name(o)).collect();
                    witness = Some(format!(
                        "subset {{{}}}, family `{}`: {}",
                        names.join(","),
                        fam.name,
                        rep.witness.unwrap_or_default()
                    ));
                    break 'masks;
                }
            }
        }
        if applicable == 0 {
            return Ok(vec![Verdict::skip(
                format!("tcevg10[{name}]"),
                "not applicable: no base subcategory satisfies the hypotheses",
            )]);
        }
        Ok(vec![Verdict::check(
            format!("tcevg10[{name}]"),
            witness.is_none(),
            format!(
                "{applicable} admissible base subcategories, {} sheaf samples each reconstruct",
                sheaves.len()
            ),
            witness,
        )])
    })
}

fn thm_co_ev101(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "co-ev101", |name, c| {
        let oriented = build_oriented_site(c.clone(), ctx.guard)?;
        let d = covanishing_of(c, ctx.guard)?;
        iota_jmath_verdicts(&format!("co-ev101[{name}]"), &oriented, &d, ctx.seed, ctx.guard)
    })
}

fn thm_co_ev13(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "co-ev13", |name, c| {
        let d = covanishing_of(c, ctx.guard)?;
        let fs = seeded_sheaves(&d.x, SAMPLE_CAP, ctx.seed, 6, ctx.guard)?;
        let gs = seeded_sheaves(&d.y, SAMPLE_CAP, ctx.seed.wrapping_add(1), 6, ctx.guard)?;
        let mut witness = None;
        let mut count = 0;
        for (f, g) in fs.iter().zip(gs.iter()) {
            let rep = projection_pullbacks(&d, f, g, ctx.guard)?;
            count += 1;
            let ok = rep.first_closed_matches
                && rep.second_closed_is_sheaf
                && rep.second_closed_matches
                && rep.unit_iso;
            if !ok {
                witness = Some(format!(
                    "({}, {}): first closed {}, second sheaf {}, second closed {}, unit iso {}",
                    f.name,
                    g.name,
                    rep.first_closed_matches,
                    rep.second_closed_is_sheaf,
                    rep.second_closed_matches,
                    rep.unit_iso
                ));
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("co-ev13[{name}]"),
            witness.is_none(),
            format!(
                "{count} sample pairs: both projection pullbacks match their closed forms and the unit is iso"
            ),
            witness,
        )])
    })
}

fn thm_co_ev12(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "co-ev12", |name, c| {
        let d = covanishing_of(c, ctx.guard)?;
        let samples = seeded_sheaves(&d.y, SAMPLE_CAP, ctx.seed, 6, ctx.guard)?;
        let mut witness = None;
        for f in &samples {
            let rep = conearby_cycles(&d, f, ctx.guard)?;
            if !(rep.direct_is_sheaf && rep.matches_second_pullback) {
                witness = Some(f.name.clone());
                break;
            }
        }
        let mut out = vec![Verdict::check(
            format!("co-ev12[{name}] direct images"),
            witness.is_none(),
            format!(
                "{} sheaf samples: the direct image is a sheaf equal to the second-leg pullback",
                samples.len()
            ),
            witness,
        )];
        let src = AbPresheaf::constant(&d.y.cat, 4, 1, "Z/4");
        let tgt = src.clone();
        let u = AbMor::scalar(&src, 2, "times-two");
        let rep = conearby_preserves_kernel_cokernel(&d, &src, &tgt, &u, ctx.guard)?;
        out.push(Verdict::check(
            format!("co-ev12[{name}] kernel and cokernel"),
            rep.kernel_exact && rep.cokernel_raw_exact && rep.cokernel_sheaf_iso,
            format!(
                "doubling on Z/4: kernel preserved {}, raw cokernel preserved {}, sheafified cokernel iso {}",
                rep.kernel_exact, rep.cokernel_raw_exact, rep.cokernel_sheaf_iso
            ),
            None,
        ));
        Ok(out)
    })
}

fn thm_co_ev16(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "co-ev16", |name, c| {
        let d = covanishing_of(c, ctx.guard)?;
        let samples = seeded_sheaves(&d.y, SAMPLE_CAP, ctx.seed, SAMPLE_COUNT, ctx.guard)?;
        let mut witness = None;
        for f in &samples {
            let rep = base_change_identity(&d, f, ctx.guard)?;
            if !rep.iso {
                witness = Some(f.name.clone());
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("co-ev16[{name}]"),
            witness.is_none(),
            format!(
                "{} sheaf samples: direct image along the second leg equals the projection composite",
                samples.len()
            ),
            witness,
        )])
    })
}

fn thm_fccp(ctx: &Ctx, id: &'static str) -> Result<Vec<Verdict>> {
    over_fibered(ctx, id, |name, f| {
        let data = match psi_data(f) {
            Some(d) => d,
            None => {
                return Ok(vec![Verdict::skip(
                    format!("{id}[{name}]"),
                    "not applicable: the entity carries no comparison data (psi)",
                )])
            }
        };
        let total = build_total_site(&f.fibered, ctx.guard)?;
        let all = rho_verdicts(
            &format!("{id}[{name}]"),
            &f.fibered,
            &total,
            &data,
            ctx.seed,
            ctx.guard,
        )?;
        // fccp4 asserts the unit isomorphisms, fccp7 the hom-set bijection.
        Ok(all
            .into_iter()
            .filter(|v| {
                v.name.ends_with("hypotheses")
                    || (id == "fccp4" && v.name.ends_with("units"))
                    || (id == "fccp7" && v.name.ends_with("hom-sets"))
            })
            .collect())
    })
}

fn thm_tf7(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_fibered(ctx, "tf7", |name, f| {
        let s = &f.fibered;
        let degenerate = s.fibers.iter().all(|fiber| {
            (0..fiber.cat.n_obj()).all(|o| fiber.top.covers(o, &BTreeSet::new()))
        });
        if !degenerate {
            return Ok(vec![Verdict::skip(
                format!("tf7[{name}]"),
                "not applicable: some fiber object lacks an empty covering sieve",
            )]);
        }
        let total = build_total_site(s, ctx.guard)?;
        let sheaves = enumerate_sheaves(&total.site, 3, ctx.guard)?;
        let all_singleton = !sheaves.is_empty()
            && sheaves
                .iter()
                .all(|g| (0..total.site.cat.n_obj()).all(|o| g.card(o) == 1));
        Ok(vec![Verdict::check(
            format!("tf7[{name}]"),
            all_singleton,
            format!("all sheaves singleton: {all_singleton}"),
            None,
        )])
    })
}

fn thm_topfl5(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "topfl5", |name, c| {
        let oriented = build_oriented_site(c.clone(), ctx.guard)?;
        let mut witness = None;
        for z in 0..oriented.site.cat.n_obj() {
            if !representable_square_check(&oriented, z, ctx.guard)? {
                witness = Some(oriented.site.cat.obj_name(z).to_string());
                break;
            }
        }
        Ok(vec![Verdict::check(
            format!("topfl5[{name}]"),
            witness.is_none(),
            format!(
                "{} objects: each sheafified representable is the fiber product of its leg pullbacks",
                oriented.site.cat.n_obj()
            ),
            witness,
        )])
    })
}

fn thm_topfl3(ctx: &Ctx) -> Result<Vec<Verdict>> {
    over_cospans(ctx, "topfl3", |name, c| {
        let oriented = build_oriented_site(c.clone(), ctx.guard)?;
        let (ok, witness) = w_change_sheaf_isos(&oriented, ctx.guard)?;
        Ok(vec![Verdict::check(
            format!("topfl3[{name}]"),
            ok,
            format!(
                "{} center-change generators become isomorphisms after sheafified embedding",
                oriented.w_changes.len()
            ),
            witness,
        )])
    })
}

#[allow(dead_code)]
fn unused_functor_hint(_: &Functor, _: &Site) {}
