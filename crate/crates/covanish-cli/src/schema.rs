//! JSON workspace schema and the loader onto engine types.
//!
//! A workspace file is one JSON object with up to six maps, each keyed by
//! entity name:
//!
//! ```json
//! {
//!   "categories":  { "<name>": { "objects": [..], "morphisms": [..],
//!                                "thin": bool, "compose": [..] } },
//!   "topologies":  { "<name>": { "category": "<cat>",
//!                                "chaotic" | "covers" | "sieves": .. } },
//!   "presheaves":  { "<name>": { "category": "<cat>", "values": {..},
//!                                "restrictions": {..} } },
//!   "fibered":     { "<name>": { "base": "<top>", "fibers": {..},
//!                                "pullback": {..}, "psi": {..}? } },
//!   "cospans":     { "<name>": { "x": .., "y": .., "s": ..,
//!                                "f_plus": {..}, "g_plus": {..} } },
//!   "points":      { "<name>": { "site": "<top>", "shape": "<cat>",
//!                                "diagram": {..} } }
//! }
//! ```
//!
//! Category entries list only the non-identity arrows; identities are
//! created automatically and named `id_<object>`. Composition comes from
//! one of three sources: the free table (valid when no two non-identity
//! arrows compose), hom-set uniqueness (`"thin": true`), or explicit
//! `{"g", "f", "gf"}` triples, which are applied last so they can also
//! express deliberate table errors for diagnostics testing. A topology
//! names its category and carries exactly one of `"chaotic": true`, a
//! `"covers"` list of generating families, or a `"sieves"` list of
//! saturated sieve sets. Functor tables map source names to target names
//! with identity entries implicit. All cross-references are by entity
//! name and every entity revalidates on load, so `load_workspace` either
//! returns a fully checked workspace or a diagnostic locating the entity
//! and field at fault.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use covanish::fibered::SplitFiberedSite;
use covanish::fincat::{validate_functor, FinCat, Functor, Mor, MorId, ObjId, SetMap};
use covanish::oriented::CospanData;
use covanish::points::{point, Point};
use covanish::sheaves::Presheaf;
use covanish::sites::{Coverage, Site, Topology};
use covanish::{Error, Guard};

/// A diagnostic locating a load failure: entity kind and name plus the
/// field inside it, or a schema position for malformed JSON.
#[derive(Debug, Clone)]
pub struct LoadError {
    pub entity_kind: &'static str,
    pub entity: String,
    pub field: Option<String>,
    pub message: String,
    /// The failure was the step budget, not the data.
    pub guard_exhausted: bool,
}

impl LoadError {
    fn at(kind: &'static str, entity: &str, field: &str, message: impl Into<String>) -> Self {
        LoadError {
            entity_kind: kind,
            entity: entity.to_string(),
            field: Some(field.to_string()),
            message: message.into(),
            guard_exhausted: false,
        }
    }

    fn from_engine(kind: &'static str, entity: &str, err: Error) -> Self {
        LoadError {
            entity_kind: kind,
            entity: entity.to_string(),
            field: None,
            message: err.to_string(),
            guard_exhausted: matches!(err, Error::Resource { .. }),
        }
    }
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} `{}`", self.entity_kind, self.entity)?;
        if let Some(field) = &self.field {
            write!(f, ", field {}", field)?;
        }
        write!(f, ": {}", self.message)
    }
}

type Load<T> = std::result::Result<T, LoadError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceFile {
    #[serde(default)]
    pub categories: BTreeMap<String, CategorySpec>,
    #[serde(default)]
    pub topologies: BTreeMap<String, TopologySpec>,
    #[serde(default)]
    pub presheaves: BTreeMap<String, PresheafSpec>,
    #[serde(default)]
    pub fibered: BTreeMap<String, FiberedSpec>,
    #[serde(default)]
    pub cospans: BTreeMap<String, CospanSpec>,
    #[serde(default)]
    pub points: BTreeMap<String, PointSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub objects: Vec<String>,
    #[serde(default)]
    pub morphisms: Vec<MorSpec>,
    #[serde(default)]
    pub thin: bool,
    #[serde(default)]
    pub compose: Vec<ComposeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorSpec {
    pub name: String,
    pub dom: String,
    pub cod: String,
}

/// One explicit composition entry: `gf = g . f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeSpec {
    pub g: String,
    pub f: String,
    pub gf: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub category: String,
    #[serde(default)]
    pub chaotic: bool,
    #[serde(default)]
    pub covers: Vec<CoverSpec>,
    #[serde(default)]
    pub sieves: Vec<SieveListSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    pub object: String,
    pub family: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveListSpec {
    pub object: String,
    pub sieves: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresheafSpec {
    pub category: String,
    /// Value cardinality at each object, all objects required.
    pub values: BTreeMap<String, usize>,
    /// Restriction table per morphism: entry `x` of the table for `m` is
    /// the image in the value set at `dom(m)` of element `x` at `cod(m)`.
    /// Identity entries are implicit.
    #[serde(default)]
    pub restrictions: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctorSpec {
    pub name: String,
    /// Identity functor shorthand; requires equal source and target.
    #[serde(default)]
    pub identity: bool,
    #[serde(default)]
    pub objects: BTreeMap<String, String>,
    /// Non-identity source morphisms only; identities map to identities.
    #[serde(default)]
    pub morphisms: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberedSpec {
    /// Base site, by topology name.
    pub base: String,
    /// Fiber site per base object name, by topology name.
    pub fibers: BTreeMap<String, String>,
    /// Pullback functor per non-identity base morphism name, mapping the
    /// fiber over its codomain into the fiber over its domain. Identity
    /// pullbacks are created automatically and named `id_<object>^+`.
    #[serde(default)]
    pub pullback: BTreeMap<String, FunctorSpec>,
    /// Optional comparison data: a site and a functor out of the total
    /// category, keyed by total object and morphism names.
    #[serde(default)]
    pub psi: Option<PsiSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiSpec {
    /// Target site, by topology name.
    pub site: String,
    pub name: String,
    pub objects: BTreeMap<String, String>,
    #[serde(default)]
    pub morphisms: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CospanSpec {
    pub x: String,
    pub y: String,
    pub s: String,
    /// First leg `S -> X`.
    pub f_plus: FunctorSpec,
    /// Second leg `S -> Y`.
    pub g_plus: FunctorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    /// Site the point lives on, by topology name.
    pub site: String,
    /// Neighborhood shape, by category name.
    pub shape: String,
    /// Diagram from the shape into the site category.
    pub diagram: FunctorSpec,
}

/// A loaded site plus the raw generating covers (empty for the chaotic
/// and sieve-list forms); commands that need a covering family read them.
#[derive(Debug, Clone)]
pub struct LoadedSite {
    pub site: Site,
    pub category: String,
    pub covers: Vec<(ObjId, Vec<MorId>)>,
}

#[derive(Debug, Clone)]
pub struct LoadedPresheaf {
    pub presheaf: Presheaf,
    pub category: String,
}

#[derive(Debug, Clone)]
pub struct LoadedFibered {
    pub fibered: SplitFiberedSite,
    pub psi: Option<PsiSpec>,
}

#[derive(Debug, Clone)]
pub struct LoadedPoint {
    pub point: Point,
    pub site: String,
}

/// A fully resolved and validated workspace.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub categories: BTreeMap<String, FinCat>,
    pub topologies: BTreeMap<String, LoadedSite>,
    pub presheaves: BTreeMap<String, LoadedPresheaf>,
    pub fibered: BTreeMap<String, LoadedFibered>,
    pub cospans: BTreeMap<String, CospanData>,
    pub points: BTreeMap<String, LoadedPoint>,
}

/// Reads, resolves, and validates a workspace file. Total: either every
/// entity loads and passes its validator, or the first failure comes back
/// as a located diagnostic.
pub fn load_workspace(path: &Path, guard: &Guard) -> Load<Workspace> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError {
        entity_kind: "workspace",
        entity: path.display().to_string(),
        field: None,
        message: format!("cannot read file: {e}"),
        guard_exhausted: false,
    })?;
    let file: WorkspaceFile = serde_json::from_str(&text).map_err(|e| LoadError {
        entity_kind: "workspace",
        entity: path.display().to_string(),
        field: Some(format!("line {}, column {}", e.line(), e.column())),
        message: format!("schema violation: {e}"),
        guard_exhausted: false,
    })?;
    resolve(&file, guard)
}

pub fn resolve(file: &WorkspaceFile, guard: &Guard) -> Load<Workspace> {
    let mut categories = BTreeMap::new();
    for (name, spec) in &file.categories {
        categories.insert(name.clone(), build_category(name, spec, guard)?);
    }
    let mut topologies = BTreeMap::new();
    for (name, spec) in &file.topologies {
        topologies.insert(name.clone(), build_topology(name, spec, &categories, guard)?);
    }
    let mut presheaves = BTreeMap::new();
    for (name, spec) in &file.presheaves {
        presheaves.insert(name.clone(), build_presheaf(name, spec, &categories, guard)?);
    }
    let mut fibered = BTreeMap::new();
    for (name, spec) in &file.fibered {
        fibered.insert(name.clone(), build_fibered(name, spec, &topologies, guard)?);
    }
    let mut cospans = BTreeMap::new();
    for (name, spec) in &file.cospans {
        cospans.insert(name.clone(), build_cospan(name, spec, &topologies, guard)?);
    }
    let mut points = BTreeMap::new();
    for (name, spec) in &file.points {
        points.insert(
            name.clone(),
            build_point(name, spec, &categories, &topologies, guard)?,
        );
    }
    Ok(Workspace { categories, topologies, presheaves, fibered, cospans, points })
}

fn build_category(name: &str, spec: &CategorySpec, guard: &Guard) -> Load<FinCat> {
    const KIND: &str = "category";
    let n_obj = spec.objects.len();
    let obj_id = |field: &str, obj: &str| -> Load<ObjId> {
        spec.objects
            .iter()
            .position(|o| o == obj)
            .ok_or_else(|| LoadError::at(KIND, name, field, format!("unknown object `{obj}`")))
    };
    let mut mors: Vec<Mor> = (0..n_obj)
        .map(|o| Mor { name: format!("id_{}", spec.objects[o]), dom: o, cod: o })
        .collect();
    for (i, m) in spec.morphisms.iter().enumerate() {
        let dom = obj_id(&format!("morphisms[{i}].dom"), &m.dom)?;
        let cod = obj_id(&format!("morphisms[{i}].cod"), &m.cod)?;
        mors.push(Mor { name: m.name.clone(), dom, cod });
    }
    let n = mors.len();
    let mor_id = |field: &str, mor: &str| -> Load<MorId> {
        mors.iter()
            .position(|m| m.name == mor)
            .ok_or_else(|| LoadError::at(KIND, name, field, format!("unknown morphism `{mor}`")))
    };

    // Identity composites are forced; the non-identity ones come from
    // thinness or explicit triples. What remains is checked by validate.
    let mut comp: Vec<Vec<Option<MorId>>> = vec![vec![None; n]; n];
    for g in 0..n {
        for f in 0..n {
            if mors[f].cod != mors[g].dom {
                continue;
            }
            if f < n_obj {
                comp[g][f] = Some(g);
            } else if g < n_obj {
                comp[g][f] = Some(f);
            } else if spec.thin {
                let cands: Vec<MorId> = (0..n)
                    .filter(|&c| mors[c].dom == mors[f].dom && mors[c].cod == mors[g].cod)
                    .collect();
                if cands.len() != 1 {
                    return Err(LoadError::at(
                        KIND,
                        name,
                        "thin",
                        format!(
                            "composite `{}` . `{}` has {} candidates, thinness needs exactly one",
                            mors[g].name, mors[f].name, cands.len()
                        ),
                    ));
                }
                comp[g][f] = Some(cands[0]);
            }
        }
    }
    for (i, c) in spec.compose.iter().enumerate() {
        let g = mor_id(&format!("compose[{i}].g"), &c.g)?;
        let f = mor_id(&format!("compose[{i}].f"), &c.f)?;
        let gf = mor_id(&format!("compose[{i}].gf"), &c.gf)?;
        comp[g][f] = Some(gf);
    }
    let cat = FinCat {
        name: name.to_string(),
        objects: spec.objects.clone(),
        mors,
        id_of: (0..n_obj).collect(),
        comp,
    };
    cat.validate(guard).map_err(|e| LoadError::from_engine(KIND, name, e))?;
    Ok(cat)
}

fn build_topology(
    name: &str,
    spec: &TopologySpec,
    categories: &BTreeMap<String, FinCat>,
    guard: &Guard,
) -> Load<LoadedSite> {
    const KIND: &str = "topology";
    let cat = categories.get(&spec.category).ok_or_else(|| {
        LoadError::at(KIND, name, "category", format!("dangling reference `{}`", spec.category))
    })?;
    let forms = spec.chaotic as usize
        + !spec.covers.is_empty() as usize
        + !spec.sieves.is_empty() as usize;
    if forms != 1 {
        return Err(LoadError::at(
            KIND,
            name,
            "chaotic/covers/sieves",
            "exactly one of `chaotic: true`, `covers`, or `sieves` is required",
        ));
    }
    let mor_id = |field: &str, mor: &str| -> Load<MorId> {
        cat.mors
            .iter()
            .position(|m| m.name == mor)
            .ok_or_else(|| LoadError::at(KIND, name, field, format!("unknown morphism `{mor}`")))
    };
    let obj_id = |field: &str, obj: &str| -> Load<ObjId> {
        cat.objects
            .iter()
            .position(|o| o == obj)
            .ok_or_else(|| LoadError::at(KIND, name, field, format!("unknown object `{obj}`")))
    };
    if spec.chaotic {
        let site = Site::chaotic(cat.clone(), guard)
            .map_err(|e| LoadError::from_engine(KIND, name, e))?;
        return Ok(LoadedSite { site, category: spec.category.clone(), covers: Vec::new() });
    }
    if !spec.covers.is_empty() {
        let mut cov = Coverage::new(cat.n_obj());
        let mut covers = Vec::new();
        for (i, c) in spec.covers.iter().enumerate() {
            let o = obj_id(&format!("covers[{i}].object"), &c.object)?;
            let mut family = Vec::with_capacity(c.family.len());
            for (j, m) in c.family.iter().enumerate() {
                let mid = mor_id(&format!("covers[{i}].family[{j}]"), m)?;
                if cat.cod(mid) != o {
                    return Err(LoadError::at(
                        KIND,
                        name,
                        &format!("covers[{i}].family[{j}]"),
                        format!("morphism `{m}` does not land in `{}`", c.object),
                    ));
                }
                family.push(mid);
            }
            cov.add_family(o, family.clone());
            covers.push((o, family));
        }
        let site = Site::from_coverage(cat.clone(), &cov, guard)
            .map_err(|e| LoadError::from_engine(KIND, name, e))?;
        return Ok(LoadedSite { site, category: spec.category.clone(), covers });
    }
    let mut covering = vec![std::collections::BTreeSet::new(); cat.n_obj()];
    for (i, s) in spec.sieves.iter().enumerate() {
        let o = obj_id(&format!("sieves[{i}].object"), &s.object)?;
        for (j, sieve) in s.sieves.iter().enumerate() {
            let mut set = std::collections::BTreeSet::new();
            for (k, m) in sieve.iter().enumerate() {
                set.insert(mor_id(&format!("sieves[{i}].sieves[{j}][{k}]"), m)?);
            }
            covering[o].insert(set);
        }
    }
    let site = Site::new(cat.clone(), Topology { covering }, guard)
        .map_err(|e| LoadError::from_engine(KIND, name, e))?;
    Ok(LoadedSite { site, category: spec.category.clone(), covers: Vec::new() })
}

fn build_presheaf(
    name: &str,
    spec: &PresheafSpec,
    categories: &BTreeMap<String, FinCat>,
    guard: &Guard,
) -> Load<LoadedPresheaf> {
    const KIND: &str = "presheaf";
    let cat = categories.get(&spec.category).ok_or_else(|| {
        LoadError::at(KIND, name, "category", format!("dangling reference `{}`", spec.category))
    })?;
    for key in spec.values.keys() {
        if !cat.objects.contains(key) {
            return Err(LoadError::at(
                KIND,
                name,
                &format!("values.{key}"),
                format!("unknown object `{key}`"),
            ));
        }
    }
    let mut value = Vec::with_capacity(cat.n_obj());
    for o in 0..cat.n_obj() {
        let n = spec.values.get(&cat.objects[o]).ok_or_else(|| {
            LoadError::at(
                KIND,
                name,
                "values",
                format!("missing value cardinality for object `{}`", cat.objects[o]),
            )
        })?;
        value.push(covanish::fincat::FinSet { n: *n });
    }
    for key in spec.restrictions.keys() {
        if !cat.mors.iter().any(|m| &m.name == key) {
            return Err(LoadError::at(
                KIND,
                name,
                &format!("restrictions.{key}"),
                format!("unknown morphism `{key}`"),
            ));
        }
    }
    let mut res = Vec::with_capacity(cat.n_mor());
    for m in 0..cat.n_mor() {
        let field = format!("restrictions.{}", cat.mor_name(m));
        let (src_n, tgt_n) = (value[cat.cod(m)].n, value[cat.dom(m)].n);
        let table = match spec.restrictions.get(cat.mor_name(m)) {
            Some(t) => t.clone(),
            None if cat.is_identity(m) => (0..src_n).collect(),
            None => {
                return Err(LoadError::at(KIND, name, &field, "missing restriction table"));
            }
        };
        if table.len() != src_n {
            return Err(LoadError::at(
                KIND,
                name,
                &field,
                format!("table has {} entries, the value at the codomain has {src_n}", table.len()),
            ));
        }
        if let Some(&bad) = table.iter().find(|&&x| x >= tgt_n) {
            return Err(LoadError::at(
                KIND,
                name,
                &field,
                format!("entry {bad} exceeds the value cardinality {tgt_n} at the domain"),
            ));
        }
        res.push(SetMap::new(src_n, tgt_n, table));
    }
    let presheaf = Presheaf { name: name.to_string(), value, res };
    presheaf.validate(cat, guard).map_err(|e| LoadError::from_engine(KIND, name, e))?;
    Ok(LoadedPresheaf { presheaf, category: spec.category.clone() })
}

/// Resolves a functor spec between two known categories.
pub fn build_functor(
    kind: &'static str,
    entity: &str,
    field: &str,
    spec: &FunctorSpec,
    src: &FinCat,
    tgt: &FinCat,
    guard: &Guard,
) -> Load<Functor> {
    if spec.identity {
        if src != tgt {
            return Err(LoadError::at(
                kind,
                entity,
                field,
                "identity shorthand requires equal source and target categories",
            ));
        }
        return Ok(Functor::identity(src, &spec.name));
    }
    let tgt_obj = |f: &str, o: &str| -> Load<ObjId> {
        tgt.objects
            .iter()
            .position(|x| x == o)
            .ok_or_else(|| LoadError::at(kind, entity, f, format!("unknown target object `{o}`")))
    };
    let tgt_mor = |f: &str, m: &str| -> Load<MorId> {
        tgt.mors
            .iter()
            .position(|x| x.name == m)
            .ok_or_else(|| LoadError::at(kind, entity, f, format!("unknown target morphism `{m}`")))
    };
    for key in spec.objects.keys() {
        if !src.objects.contains(key) {
            return Err(LoadError::at(
                kind,
                entity,
                &format!("{field}.objects.{key}"),
                format!("unknown source object `{key}`"),
            ));
        }
    }
    for key in spec.morphisms.keys() {
        if !src.mors.iter().any(|m| &m.name == key) {
            return Err(LoadError::at(
                kind,
                entity,
                &format!("{field}.morphisms.{key}"),
                format!("unknown source morphism `{key}`"),
            ));
        }
    }
    let mut obj_map = Vec::with_capacity(src.n_obj());
    for o in 0..src.n_obj() {
        let f = format!("{field}.objects.{}", src.objects[o]);
        let image = spec.objects.get(&src.objects[o]).ok_or_else(|| {
            LoadError::at(kind, entity, &f, "missing object image")
        })?;
        obj_map.push(tgt_obj(&f, image)?);
    }
    let mut mor_map = Vec::with_capacity(src.n_mor());
    for m in 0..src.n_mor() {
        let f = format!("{field}.morphisms.{}", src.mor_name(m));
        match spec.morphisms.get(src.mor_name(m)) {
            Some(image) => mor_map.push(tgt_mor(&f, image)?),
            None if src.is_identity(m) => mor_map.push(tgt.identity(obj_map[src.dom(m)])),
            None => return Err(LoadError::at(kind, entity, &f, "missing morphism image")),
        }
    }
    let functor = Functor::new(&spec.name, obj_map, mor_map);
    validate_functor(src, tgt, &functor, guard)
        .map_err(|e| LoadError::from_engine(kind, entity, e))?;
    Ok(functor)
}

fn build_fibered(
    name: &str,
    spec: &FiberedSpec,
    topologies: &BTreeMap<String, LoadedSite>,
    guard: &Guard,
) -> Load<LoadedFibered> {
    const KIND: &str = "fibered site";
    let base = topologies.get(&spec.base).ok_or_else(|| {
        LoadError::at(KIND, name, "base", format!("dangling reference `{}`", spec.base))
    })?;
    let bc = &base.site.cat;
    for key in spec.fibers.keys() {
        if !bc.objects.contains(key) {
            return Err(LoadError::at(
                KIND,
                name,
                &format!("fibers.{key}"),
                format!("unknown base object `{key}`"),
            ));
        }
    }
    let mut fibers = Vec::with_capacity(bc.n_obj());
    for o in 0..bc.n_obj() {
        let field = format!("fibers.{}", bc.objects[o]);
        let top_name = spec
            .fibers
            .get(&bc.objects[o])
            .ok_or_else(|| LoadError::at(KIND, name, &field, "missing fiber"))?;
        let fiber = topologies.get(top_name).ok_or_else(|| {
            LoadError::at(KIND, name, &field, format!("dangling reference `{top_name}`"))
        })?;
        fibers.push(fiber.site.clone());
    }
    for key in spec.pullback.keys() {
        if !bc.mors.iter().any(|m| &m.name == key) {
            return Err(LoadError::at(
                KIND,
                name,
                &format!("pullback.{key}"),
                format!("unknown base morphism `{key}`"),
            ));
        }
    }
    let mut pullback = Vec::with_capacity(bc.n_mor());
    for m in 0..bc.n_mor() {
        let field = format!("pullback.{}", bc.mor_name(m));
        match spec.pullback.get(bc.mor_name(m)) {
            Some(fs) => pullback.push(build_functor(
                KIND,
                name,
                &field,
                fs,
                &fibers[bc.cod(m)].cat,
                &fibers[bc.dom(m)].cat,
                guard,
            )?),
            None if bc.is_identity(m) => pullback.push(Functor::identity(
                &fibers[bc.dom(m)].cat,
                &format!("id_{}^+", bc.objects[bc.dom(m)]),
            )),
            None => {
                return Err(LoadError::at(KIND, name, &field, "missing pullback functor"));
            }
        }
    }
    let fibered = SplitFiberedSite {
        name: name.to_string(),
        base: base.site.clone(),
        fibers,
        pullback,
    };
    fibered.validate(guard).map_err(|e| LoadError::from_engine(KIND, name, e))?;
    if let Some(psi) = &spec.psi {
        if !topologies.contains_key(&psi.site) {
            return Err(LoadError::at(
                KIND,
                name,
                "psi.site",
                format!("dangling reference `{}`", psi.site),
            ));
        }
    }
    Ok(LoadedFibered { fibered, psi: spec.psi.clone() })
}

/// Resolves the optional comparison data of a fibered entity against its
/// built total category. The total category is deterministic, so the spec
/// keys its tables by total object and morphism names.
pub fn resolve_psi(
    entity: &str,
    psi: &PsiSpec,
    total_cat: &FinCat,
    topologies: &BTreeMap<String, LoadedSite>,
    guard: &Guard,
) -> Load<covanish::oriented::PsiData> {
    const KIND: &str = "fibered site";
    let x = topologies.get(&psi.site).ok_or_else(|| {
        LoadError::at(KIND, entity, "psi.site", format!("dangling reference `{}`", psi.site))
    })?;
    let fs = FunctorSpec {
        name: psi.name.clone(),
        identity: false,
        objects: psi.objects.clone(),
        morphisms: psi.morphisms.clone(),
    };
    let functor = build_functor(KIND, entity, "psi", &fs, total_cat, &x.site.cat, guard)?;
    Ok(covanish::oriented::PsiData { x: x.site.clone(), psi: functor })
}

fn build_cospan(
    name: &str,
    spec: &CospanSpec,
    topologies: &BTreeMap<String, LoadedSite>,
    guard: &Guard,
) -> Load<CospanData> {
    const KIND: &str = "cospan";
    let get = |field: &str, key: &str| -> Load<&LoadedSite> {
        topologies.get(key).ok_or_else(|| {
            LoadError::at(KIND, name, field, format!("dangling reference `{key}`"))
        })
    };
    let x = get("x", &spec.x)?;
    let y = get("y", &spec.y)?;
    let s = get("s", &spec.s)?;
    let f_plus = build_functor(KIND, name, "f_plus", &spec.f_plus, &s.site.cat, &x.site.cat, guard)?;
    let g_plus = build_functor(KIND, name, "g_plus", &spec.g_plus, &s.site.cat, &y.site.cat, guard)?;
    CospanData::new(x.site.clone(), y.site.clone(), s.site.clone(), f_plus, g_plus, guard)
        .map_err(|e| LoadError::from_engine(KIND, name, e))
}

fn build_point(
    name: &str,
    spec: &PointSpec,
    categories: &BTreeMap<String, FinCat>,
    topologies: &BTreeMap<String, LoadedSite>,
    guard: &Guard,
) -> Load<LoadedPoint> {
    const KIND: &str = "point";
    let site = topologies.get(&spec.site).ok_or_else(|| {
        LoadError::at(KIND, name, "site", format!("dangling reference `{}`", spec.site))
    })?;
    let shape = categories.get(&spec.shape).ok_or_else(|| {
        LoadError::at(KIND, name, "shape", format!("dangling reference `{}`", spec.shape))
    })?;
    let diagram =
        build_functor(KIND, name, "diagram", &spec.diagram, shape, &site.site.cat, guard)?;
    let pt = point(name, shape.clone(), diagram, &site.site, guard)
        .map_err(|e| LoadError::from_engine(KIND, name, e))?;
    Ok(LoadedPoint { point: pt, site: spec.site.clone() })
}
