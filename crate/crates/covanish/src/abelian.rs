//! Abelian presheaves with finite cyclic coefficients.
//!
//! Values are free modules `(Z/n)^k`, restrictions are matrices mod n, and
//! every kernel, cokernel, and cohomology group is computed by explicit
//! element enumeration. Kernels and cokernels of a presheaf map are ordinary
//! set-level presheaves (a kernel mod a composite modulus need not be free),
//! with the cokernel sheafified on the ambient site. Cohomology of a covering
//! family uses the ordered alternating complex on iterated fiber products.
//! All quotients are classified as a power of one cyclic group or rejected.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::fibered::{
    fiberwise_sheaf_check, to_family, FiberwiseReport, SplitFiberedSite, TotalSite,
};
use crate::fincat::{
    fiber_product, mediate_fiber_product, terminal_object, FiberProduct, FinCat, FinSet, MorId,
    ObjId, SetMap,
};
use crate::guard::Guard;
use crate::oriented::{conearby_functor, CoevSiteD};
use crate::sheaves::{
    factor_through_sheafify, is_sheaf, sheafify, Presheaf, PsMor, Sheafification,
};
use crate::sites::Site;
use crate::Result;

/// Free module `(Z/modulus)^rank` with componentwise arithmetic. Elements
/// are length `rank` residue vectors; the flat encoding is little endian in
/// base `modulus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbGroupFin {
    pub modulus: usize,
    pub rank: usize,
}

impl AbGroupFin {
    pub fn order(&self) -> usize {
        self.modulus.pow(self.rank as u32)
    }

    pub fn zero(&self) -> Vec<usize> {
        vec![0; self.rank]
    }

    pub fn encode(&self, v: &[usize]) -> usize {
        debug_assert_eq!(v.len(), self.rank);
        let mut out = 0;
        for &x in v.iter().rev() {
            out = out * self.modulus + x % self.modulus;
        }
        out
    }

    pub fn decode(&self, mut i: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.rank);
        for _ in 0..self.rank {
            v.push(i % self.modulus);
            i /= self.modulus;
        }
        v
    }

    pub fn elements(&self) -> Vec<Vec<usize>> {
        (0..self.order()).map(|i| self.decode(i)).collect()
    }

    pub fn add(&self, a: &[usize], b: &[usize]) -> Vec<usize> {
        a.iter().zip(b).map(|(&x, &y)| (x + y) % self.modulus).collect()
    }

    pub fn sub(&self, a: &[usize], b: &[usize]) -> Vec<usize> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x + self.modulus - y % self.modulus) % self.modulus)
            .collect()
    }

    pub fn scale(&self, k: usize, a: &[usize]) -> Vec<usize> {
        a.iter().map(|&x| (k % self.modulus) * x % self.modulus).collect()
    }
}

/// Additive map `(Z/n)^src_rank -> (Z/n)^tgt_rank` stored as a row major
/// `tgt_rank x src_rank` matrix with entries reduced mod n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbMap {
    pub modulus: usize,
    pub src_rank: usize,
    pub tgt_rank: usize,
    pub entries: Vec<usize>,
}

impl AbMap {
    pub fn new(modulus: usize, src_rank: usize, tgt_rank: usize, entries: Vec<usize>) -> AbMap {
        debug_assert!(modulus >= 1);
        debug_assert_eq!(entries.len(), src_rank * tgt_rank);
        let entries = entries.into_iter().map(|e| e % modulus).collect();
        AbMap { modulus, src_rank, tgt_rank, entries }
    }

    pub fn zero(modulus: usize, src_rank: usize, tgt_rank: usize) -> AbMap {
        AbMap::new(modulus, src_rank, tgt_rank, vec![0; src_rank * tgt_rank])
    }

    pub fn identity(modulus: usize, rank: usize) -> AbMap {
        AbMap::scalar(modulus, rank, 1)
    }

    /// Componentwise multiplication by `c`.
    pub fn scalar(modulus: usize, rank: usize, c: usize) -> AbMap {
        let mut entries = vec![0; rank * rank];
        for i in 0..rank {
            entries[i * rank + i] = c % modulus;
        }
        AbMap { modulus, src_rank: rank, tgt_rank: rank, entries }
    }

    pub fn entry(&self, row: usize, col: usize) -> usize {
        self.entries[row * self.src_rank + col]
    }

    pub fn src_group(&self) -> AbGroupFin {
        AbGroupFin { modulus: self.modulus, rank: self.src_rank }
    }

    pub fn tgt_group(&self) -> AbGroupFin {
        AbGroupFin { modulus: self.modulus, rank: self.tgt_rank }
    }

    pub fn apply(&self, v: &[usize]) -> Vec<usize> {
        debug_assert_eq!(v.len(), self.src_rank);
        (0..self.tgt_rank)
            .map(|r| {
                let mut acc = 0;
                for c in 0..self.src_rank {
                    acc = (acc + self.entry(r, c) * (v[c] % self.modulus)) % self.modulus;
                }
                acc
            })
            .collect()
    }

    /// `self: A -> B` followed by `other: B -> C`, as the matrix product.
    pub fn then(&self, other: &AbMap) -> AbMap {
        debug_assert_eq!(self.modulus, other.modulus);
        debug_assert_eq!(self.tgt_rank, other.src_rank);
        let mut entries = vec![0; other.tgt_rank * self.src_rank];
        for r in 0..other.tgt_rank {
            for c in 0..self.src_rank {
                let mut acc = 0;
                for k in 0..self.tgt_rank {
                    acc = (acc + other.entry(r, k) * self.entry(k, c)) % self.modulus;
                }
                entries[r * self.src_rank + c] = acc;
            }
        }
        AbMap { modulus: self.modulus, src_rank: self.src_rank, tgt_rank: other.tgt_rank, entries }
    }

    /// Flat table on encoded elements.
    pub fn to_set_map(&self) -> SetMap {
        let src = self.src_group();
        let tgt = self.tgt_group();
        let table = (0..src.order()).map(|i| tgt.encode(&self.apply(&src.decode(i)))).collect();
        SetMap::new(src.order(), tgt.order(), table)
    }

    /// Reads a matrix back off a flat table. The table must agree with the
    /// matrix spanned by its basis images everywhere; anything else is not an
    /// additive map and is rejected.
    pub fn from_set_map(
        modulus: usize,
        src_rank: usize,
        tgt_rank: usize,
        sm: &SetMap,
        guard: &Guard,
    ) -> Result<AbMap> {
        let src = AbGroupFin { modulus, rank: src_rank };
        let tgt = AbGroupFin { modulus, rank: tgt_rank };
        if sm.src_n != src.order() || sm.tgt_n != tgt.order() {
            return Err(Error::malformed(
                "additive map",
                "from_set_map",
                "table endpoints do not match the stated module sizes",
            ));
        }
        let mut entries = vec![0; src_rank * tgt_rank];
        for c in 0..src_rank {
            let mut basis = src.zero();
            basis[c] = 1 % modulus;
            let img = tgt.decode(sm.apply(src.encode(&basis)));
            for r in 0..tgt_rank {
                entries[r * src_rank + c] = img[r];
            }
        }
        let mat = AbMap::new(modulus, src_rank, tgt_rank, entries);
        for i in 0..src.order() {
            guard.spend(1)?;
            if tgt.encode(&mat.apply(&src.decode(i))) != sm.apply(i) {
                return Err(Error::axiom("additive map extraction", "table is not additive"));
            }
        }
        Ok(mat)
    }

    /// Trivial kernel on a square matrix; equivalent to bijectivity here.
    pub fn is_invertible(&self) -> bool {
        if self.src_rank != self.tgt_rank {
            return false;
        }
        let grp = self.src_group();
        (1..grp.order()).all(|i| self.apply(&grp.decode(i)).iter().any(|&x| x != 0))
    }

    pub fn inverse(&self) -> Option<AbMap> {
        if !self.is_invertible() {
            return None;
        }
        let grp = self.src_group();
        let mut lookup = vec![0; grp.order()];
        for i in 0..grp.order() {
            lookup[grp.encode(&self.apply(&grp.decode(i)))] = i;
        }
        let mut entries = vec![0; self.src_rank * self.src_rank];
        for c in 0..self.src_rank {
            let mut basis = grp.zero();
            basis[c] = 1 % self.modulus;
            let pre = grp.decode(lookup[grp.encode(&basis)]);
            for r in 0..self.src_rank {
                entries[r * self.src_rank + c] = pre[r];
            }
        }
        Some(AbMap::new(self.modulus, self.src_rank, self.src_rank, entries))
    }
}

/// Presheaf of free `(Z/n)`-modules: one rank per object, one matrix per
/// morphism, contravariant.
#[derive(Debug, Clone)]
pub struct AbPresheaf {
    pub name: String,
    pub modulus: usize,
    pub rank: Vec<usize>,
    pub res: Vec<AbMap>,
}

impl AbPresheaf {
    pub fn constant(cat: &FinCat, modulus: usize, rank: usize, name: &str) -> AbPresheaf {
        AbPresheaf {
            name: name.to_string(),
            modulus,
            rank: vec![rank; cat.n_obj()],
            res: (0..cat.n_mor()).map(|_| AbMap::identity(modulus, rank)).collect(),
        }
    }

    pub fn value(&self, o: ObjId) -> AbGroupFin {
        AbGroupFin { modulus: self.modulus, rank: self.rank[o] }
    }

    /// Shape, identity, and contravariant composition laws.
    pub fn validate(&self, cat: &FinCat, guard: &Guard) -> Result<()> {
        let ctx = self.name.clone();
        if self.modulus == 0 {
            return Err(Error::malformed("abelian presheaf", &ctx, "modulus must be at least 1"));
        }
        if self.rank.len() != cat.n_obj() || self.res.len() != cat.n_mor() {
            return Err(Error::malformed(
                "abelian presheaf",
                &ctx,
                "table lengths do not match the category",
            ));
        }
        for m in 0..cat.n_mor() {
            let mat = &self.res[m];
            if mat.modulus != self.modulus
                || mat.src_rank != self.rank[cat.cod(m)]
                || mat.tgt_rank != self.rank[cat.dom(m)]
            {
                return Err(Error::malformed(
                    "abelian presheaf",
                    &ctx,
                    format!("restriction along `{}` has the wrong shape", cat.mor_name(m)),
                ));
            }
        }
        for o in 0..cat.n_obj() {
            if self.res[cat.identity(o)] != AbMap::identity(self.modulus, self.rank[o]) {
                return Err(Error::axiom(
                    &ctx,
                    format!("restriction along the identity of {} is not the identity", cat.obj_name(o)),
                ));
            }
        }
        for g in 0..cat.n_mor() {
            for f in 0..cat.n_mor() {
                if let Some(h) = cat.try_compose(g, f) {
                    guard.spend(1)?;
                    if self.res[h] != self.res[g].then(&self.res[f]) {
                        return Err(Error::axiom(
                            &ctx,
                            format!(
                                "restrictions are not functorial along {} . {}",
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

    /// The same presheaf on encoded elements, forgetting addition.
    pub fn underlying(&self) -> Presheaf {
        Presheaf {
            name: self.name.clone(),
            value: self.rank.iter().map(|&k| FinSet { n: self.value_order(k) }).collect(),
            res: self.res.iter().map(|m| m.to_set_map()).collect(),
        }
    }

    fn value_order(&self, rank: usize) -> usize {
        self.modulus.pow(rank as u32)
    }
}

/// Natural family of additive maps between two abelian presheaves over the
/// same modulus.
#[derive(Debug, Clone)]
pub struct AbMor {
    pub name: String,
    pub comp: Vec<AbMap>,
}

impl AbMor {
    pub fn zero(src: &AbPresheaf, tgt: &AbPresheaf, name: &str) -> AbMor {
        AbMor {
            name: name.to_string(),
            comp: src
                .rank
                .iter()
                .zip(&tgt.rank)
                .map(|(&s, &t)| AbMap::zero(src.modulus, s, t))
                .collect(),
        }
    }

    pub fn identity(f: &AbPresheaf, name: &str) -> AbMor {
        AbMor {
            name: name.to_string(),
            comp: f.rank.iter().map(|&k| AbMap::identity(f.modulus, k)).collect(),
        }
    }

    /// Componentwise multiplication by `c` on every value of `f`.
    pub fn scalar(f: &AbPresheaf, c: usize, name: &str) -> AbMor {
        AbMor {
            name: name.to_string(),
            comp: f.rank.iter().map(|&k| AbMap::scalar(f.modulus, k, c)).collect(),
        }
    }

    /// Shapes, shared modulus, and naturality of every component.
    pub fn validate(
        &self,
        cat: &FinCat,
        src: &AbPresheaf,
        tgt: &AbPresheaf,
        guard: &Guard,
    ) -> Result<()> {
        let ctx = self.name.clone();
        if src.modulus != tgt.modulus {
            return Err(Error::malformed("abelian map", &ctx, "source and target moduli differ"));
        }
        if self.comp.len() != cat.n_obj() {
            return Err(Error::malformed("abelian map", &ctx, "component count mismatch"));
        }
        for o in 0..cat.n_obj() {
            let c = &self.comp[o];
            if c.modulus != src.modulus || c.src_rank != src.rank[o] || c.tgt_rank != tgt.rank[o] {
                return Err(Error::malformed(
                    "abelian map",
                    &ctx,
                    format!("component at {} has the wrong shape", cat.obj_name(o)),
                ));
            }
        }
        for m in 0..cat.n_mor() {
            guard.spend(1)?;
            let left = self.comp[cat.cod(m)].then(&tgt.res[m]);
            let right = src.res[m].then(&self.comp[cat.dom(m)]);
            if left != right {
                return Err(Error::axiom(
                    &ctx,
                    format!("naturality fails along `{}`", cat.mor_name(m)),
                ));
            }
        }
        Ok(())
    }

    pub fn underlying(&self, src: &AbPresheaf, tgt: &AbPresheaf) -> PsMor {
        let _ = (src, tgt);
        PsMor {
            name: self.name.clone(),
            comp: self.comp.iter().map(|c| c.to_set_map()).collect(),
        }
    }
}

/// Precomposition of an abelian presheaf with a functor into its site.
pub fn ab_direct_image(plus: &crate::fincat::Functor, f: &AbPresheaf, name: &str) -> AbPresheaf {
    AbPresheaf {
        name: name.to_string(),
        modulus: f.modulus,
        rank: plus.obj_map.iter().map(|&o| f.rank[o]).collect(),
        res: plus.mor_map.iter().map(|&m| f.res[m].clone()).collect(),
    }
}

/// Set-level kernel and cokernel of an additive presheaf map on one site.
///
/// The kernel is the subpresheaf of vanishing elements, the raw cokernel the
/// presheaf of image cosets with their least encoded representatives, and the
/// cokernel proper its sheafification. Exactness of
/// kernel -> source -> target -> cokernel is re-verified objectwise.
#[derive(Debug, Clone)]
pub struct AbKernelCokernel {
    pub kernel: Presheaf,
    /// Encoded kernel elements per object, ascending.
    pub kernel_members: Vec<Vec<usize>>,
    pub kernel_is_sheaf: bool,
    pub inclusion: PsMor,
    pub cokernel_raw: Presheaf,
    /// Least encoded coset representative per class, per object.
    pub cokernel_reps: Vec<Vec<usize>>,
    pub cokernel_raw_is_sheaf: bool,
    pub projection: PsMor,
    pub cokernel: Sheafification,
    pub exact_at_source: bool,
    pub exact_at_target: bool,
}

pub fn ab_kernel_cokernel(
    site: &Site,
    src: &AbPresheaf,
    tgt: &AbPresheaf,
    u: &AbMor,
    guard: &Guard,
) -> Result<AbKernelCokernel> {
    let cat = &site.cat;
    src.validate(cat, guard)?;
    tgt.validate(cat, guard)?;
    u.validate(cat, src, tgt, guard)?;
    let sp = src.underlying();
    let tp = tgt.underlying();
    let up = u.underlying(src, tgt);

    let mut kernel_members: Vec<Vec<usize>> = Vec::with_capacity(cat.n_obj());
    for o in 0..cat.n_obj() {
        let mut members = Vec::new();
        for x in 0..sp.card(o) {
            guard.spend(1)?;
            if up.comp[o].apply(x) == 0 {
                members.push(x);
            }
        }
        kernel_members.push(members);
    }
    let kernel_res: Vec<SetMap> = (0..cat.n_mor())
        .map(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let table = kernel_members[cod]
                .iter()
                .map(|&x| {
                    let y = sp.res[m].apply(x);
                    kernel_members[dom].binary_search(&y).map_err(|_| {
                        Error::axiom("kernel", format!("restriction along `{}` leaves the kernel", cat.mor_name(m)))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            Ok(SetMap::new(kernel_members[cod].len(), kernel_members[dom].len(), table))
        })
        .collect::<Result<_>>()?;
    let kernel = Presheaf {
        name: format!("ker({})", u.name),
        value: kernel_members.iter().map(|m| FinSet { n: m.len() }).collect(),
        res: kernel_res,
    };
    kernel.validate(cat, guard)?;
    let inclusion = PsMor {
        name: format!("incl({})", u.name),
        comp: (0..cat.n_obj())
            .map(|o| SetMap::new(kernel_members[o].len(), sp.card(o), kernel_members[o].clone()))
            .collect(),
    };

    // Cosets of the image, numbered by ascending least member.
    let mut cokernel_reps: Vec<Vec<usize>> = Vec::with_capacity(cat.n_obj());
    let mut class_of: Vec<Vec<usize>> = Vec::with_capacity(cat.n_obj());
    let mut images: Vec<BTreeSet<usize>> = Vec::with_capacity(cat.n_obj());
    for o in 0..cat.n_obj() {
        let grp = tgt.value(o);
        let mut img = BTreeSet::new();
        for x in 0..sp.card(o) {
            guard.spend(1)?;
            img.insert(up.comp[o].apply(x));
        }
        let mut classes = vec![usize::MAX; tp.card(o)];
        let mut reps = Vec::new();
        for z in 0..tp.card(o) {
            if classes[z] != usize::MAX {
                continue;
            }
            let id = reps.len();
            reps.push(z);
            let zv = grp.decode(z);
            for &w in &img {
                guard.spend(1)?;
                classes[grp.encode(&grp.add(&zv, &grp.decode(w)))] = id;
            }
        }
        cokernel_reps.push(reps);
        class_of.push(classes);
        images.push(img);
    }
    let cokernel_res: Vec<SetMap> = (0..cat.n_mor())
        .map(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let table = cokernel_reps[cod]
                .iter()
                .map(|&rep| class_of[dom][tp.res[m].apply(rep)])
                .collect();
            SetMap::new(cokernel_reps[cod].len(), cokernel_reps[dom].len(), table)
        })
        .collect();
    let cokernel_raw = Presheaf {
        name: format!("coker({})", u.name),
        value: cokernel_reps.iter().map(|r| FinSet { n: r.len() }).collect(),
        res: cokernel_res,
    };
    cokernel_raw.validate(cat, guard)?;
    let projection = PsMor {
        name: format!("proj({})", u.name),
        comp: (0..cat.n_obj())
            .map(|o| SetMap::new(tp.card(o), cokernel_reps[o].len(), class_of[o].clone()))
            .collect(),
    };

    let kernel_is_sheaf = is_sheaf(site, &kernel, guard)?.ok;
    let cokernel_raw_is_sheaf = is_sheaf(site, &cokernel_raw, guard)?.ok;
    let cokernel = sheafify(site, &cokernel_raw, guard)?;

    let mut exact_at_source = true;
    let mut exact_at_target = true;
    for o in 0..cat.n_obj() {
        let through = inclusion.comp[o].then(&up.comp[o]);
        if through.table.iter().any(|&y| y != 0) {
            exact_at_source = false;
        }
        let vanishing: Vec<usize> = (0..sp.card(o)).filter(|&x| up.comp[o].apply(x) == 0).collect();
        if vanishing != kernel_members[o] {
            exact_at_source = false;
        }
        let zero_class = class_of[o][0];
        let proj_kernel: BTreeSet<usize> =
            (0..tp.card(o)).filter(|&z| class_of[o][z] == zero_class).collect();
        if proj_kernel != images[o] {
            exact_at_target = false;
        }
    }

    Ok(AbKernelCokernel {
        kernel,
        kernel_members,
        kernel_is_sheaf,
        inclusion,
        cokernel_raw,
        cokernel_reps,
        cokernel_raw_is_sheaf,
        projection,
        cokernel,
        exact_at_source,
        exact_at_target,
    })
}

/// Kernel and cokernel of a map of abelian sheaf families, computed on the
/// total site of a split fibered site.
///
/// Both inputs must restrict to a sheaf on every fiber. The kernel is
/// reported with its direct sheaf verdicts; the raw cokernel generally needs
/// the sheafification that `inner.cokernel` carries.
#[derive(Debug, Clone)]
pub struct KernelCokernel {
    pub inner: AbKernelCokernel,
    pub kernel_fiberwise: FiberwiseReport,
    pub cokernel_raw_fiberwise: FiberwiseReport,
}

pub fn kernel_cokernel(
    s: &SplitFiberedSite,
    total: &TotalSite,
    src: &AbPresheaf,
    tgt: &AbPresheaf,
    u: &AbMor,
    guard: &Guard,
) -> Result<KernelCokernel> {
    src.validate(&total.site.cat, guard)?;
    tgt.validate(&total.site.cat, guard)?;
    for (p, label) in [(src, "source"), (tgt, "target")] {
        let fam = to_family(s, total, &p.underlying());
        for i in 0..s.base.cat.n_obj() {
            if !is_sheaf(&s.fibers[i], &fam.fibers[i], guard)?.ok {
                return Err(Error::axiom(
                    "kernel and cokernel",
                    format!("{} fiber over {} is not a sheaf", label, s.base.cat.obj_name(i)),
                ));
            }
        }
    }
    let inner = ab_kernel_cokernel(&total.site, src, tgt, u, guard)?;
    let kernel_fiberwise = fiberwise_sheaf_check(s, &to_family(s, total, &inner.kernel), guard)?;
    let cokernel_raw_fiberwise =
        fiberwise_sheaf_check(s, &to_family(s, total, &inner.cokernel_raw), guard)?;
    Ok(KernelCokernel { inner, kernel_fiberwise, cokernel_raw_fiberwise })
}

/// Whether moving along the canonical projection of an oriented covanishing
/// site commutes with kernels and cokernels of an abelian map on the target
/// site. Tables must agree exactly for the kernel and raw cokernel; the
/// sheafified cokernels are compared by the canonical factorization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConearbyAbReport {
    pub kernel_exact: bool,
    pub cokernel_raw_exact: bool,
    pub cokernel_sheaf_iso: bool,
}

pub fn conearby_preserves_kernel_cokernel(
    d: &CoevSiteD,
    src: &AbPresheaf,
    tgt: &AbPresheaf,
    u: &AbMor,
    guard: &Guard,
) -> Result<ConearbyAbReport> {
    let psi = conearby_functor(d, guard)?;
    let kc_y = ab_kernel_cokernel(&d.y, src, tgt, u, guard)?;
    let src_d = ab_direct_image(&psi.plus, src, &format!("moved({})", src.name));
    let tgt_d = ab_direct_image(&psi.plus, tgt, &format!("moved({})", tgt.name));
    let u_d = AbMor {
        name: format!("moved({})", u.name),
        comp: psi.plus.obj_map.iter().map(|&v| u.comp[v].clone()).collect(),
    };
    let kc_d = ab_kernel_cokernel(&d.site, &src_d, &tgt_d, &u_d, guard)?;

    let kernel_exact = psi.direct(&d.site, &d.y, &kc_y.kernel).same_tables(&kc_d.kernel);
    let cokernel_raw_exact =
        psi.direct(&d.site, &d.y, &kc_y.cokernel_raw).same_tables(&kc_d.cokernel_raw);
    if !cokernel_raw_exact {
        return Ok(ConearbyAbReport { kernel_exact, cokernel_raw_exact, cokernel_sheaf_iso: false });
    }
    let moved_out = psi.direct(&d.site, &d.y, &kc_y.cokernel.out);
    if !is_sheaf(&d.site, &moved_out, guard)?.ok {
        return Ok(ConearbyAbReport { kernel_exact, cokernel_raw_exact, cokernel_sheaf_iso: false });
    }
    let moved_unit = PsMor {
        name: "moved-unit".to_string(),
        comp: psi.plus.obj_map.iter().map(|&v| kc_y.cokernel.unit.comp[v].clone()).collect(),
    };
    let cmp = factor_through_sheafify(&d.site, &kc_d.cokernel, &moved_out, &moved_unit, guard)?;
    Ok(ConearbyAbReport { kernel_exact, cokernel_raw_exact, cokernel_sheaf_iso: cmp.is_iso() })
}

// An indexing tuple of a cover: the iterated fiber product object, one leg
// to each indexed domain, and every intermediate stage so faces can be
// mediated into shorter tuples. Composing cover[t[j]] with legs[j] gives the
// same anchor morphism to the covered object for every j.
#[derive(Debug, Clone)]
struct TupleData {
    obj: ObjId,
    legs: Vec<MorId>,
    stages: Vec<FiberProduct>,
}

fn build_tuple(cat: &FinCat, cover: &[MorId], t: &[usize], guard: &Guard) -> Result<TupleData> {
    let first = cover[t[0]];
    let mut obj = cat.dom(first);
    let mut legs = vec![cat.identity(obj)];
    let mut anchor = first;
    let mut stages = Vec::new();
    for &i in &t[1..] {
        guard.spend(1)?;
        let fp = fiber_product(cat, anchor, cover[i], guard)?;
        for leg in legs.iter_mut() {
            *leg = cat.compose(*leg, fp.p)?;
        }
        legs.push(fp.q);
        anchor = cat.compose(anchor, fp.p)?;
        obj = fp.apex;
        stages.push(fp);
    }
    Ok(TupleData { obj, legs, stages })
}

// The unique morphism from the tuple object of `src` to the tuple object of
// `src` with position `k` deleted, commuting with all remaining legs.
fn face_morphism(
    cat: &FinCat,
    src: &TupleData,
    k: usize,
    tgt: &TupleData,
) -> Result<MorId> {
    let pos = |j: usize| if j < k { j } else { j + 1 };
    let mut med = src.legs[pos(0)];
    for (si, fp) in tgt.stages.iter().enumerate() {
        med = mediate_fiber_product(cat, fp, med, src.legs[pos(si + 1)])?;
    }
    Ok(med)
}

/// The ordered alternating complex of a covering family: degree q carries one
/// summand per strictly increasing `(q+1)`-tuple of cover indices, valued at
/// the iterated fiber product of the indexed morphisms.
#[derive(Debug, Clone)]
pub struct CechComplex {
    pub modulus: usize,
    /// Strictly increasing index tuples per degree, lexicographic.
    pub tuples: Vec<Vec<Vec<usize>>>,
    /// Tuple object per tuple.
    pub objects: Vec<Vec<ObjId>>,
    /// Coordinate rank of each degree.
    pub ranks: Vec<usize>,
    /// Coordinate offset of each tuple block.
    pub offsets: Vec<Vec<usize>>,
    /// `boundary[q]` is the differential out of degree q.
    pub boundary: Vec<AbMap>,
}

fn increasing_tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(n: usize, len: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, len, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, len, 0, &mut cur, &mut out);
    out
}

pub fn cech_complex(
    site: &Site,
    f: &AbPresheaf,
    cover: &[MorId],
    max_degree: usize,
    guard: &Guard,
) -> Result<CechComplex> {
    let cat = &site.cat;
    f.validate(cat, guard)?;
    if cover.is_empty() {
        return Err(Error::malformed("cover", &cat.name, "empty covering family"));
    }
    for &m in cover {
        if m >= cat.n_mor() {
            return Err(Error::malformed("cover", &cat.name, "dangling morphism id"));
        }
        if cat.cod(m) != cat.cod(cover[0]) {
            return Err(Error::malformed("cover", &cat.name, "cover morphisms have different codomains"));
        }
    }

    let mut tuples: Vec<Vec<Vec<usize>>> = Vec::with_capacity(max_degree + 2);
    let mut objects: Vec<Vec<ObjId>> = Vec::with_capacity(max_degree + 2);
    let mut ranks: Vec<usize> = Vec::with_capacity(max_degree + 2);
    let mut offsets: Vec<Vec<usize>> = Vec::with_capacity(max_degree + 2);
    let mut data: Vec<BTreeMap<Vec<usize>, TupleData>> = Vec::with_capacity(max_degree + 2);
    let mut index: Vec<BTreeMap<Vec<usize>, usize>> = Vec::with_capacity(max_degree + 2);
    for q in 0..=max_degree + 1 {
        let ts = increasing_tuples(cover.len(), q + 1);
        let mut objs = Vec::with_capacity(ts.len());
        let mut offs = Vec::with_capacity(ts.len());
        let mut rank = 0;
        let mut dmap = BTreeMap::new();
        let mut imap = BTreeMap::new();
        for (ti, t) in ts.iter().enumerate() {
            guard.spend(1)?;
            let td = build_tuple(cat, cover, t, guard)?;
            objs.push(td.obj);
            offs.push(rank);
            rank += f.rank[td.obj];
            imap.insert(t.clone(), ti);
            dmap.insert(t.clone(), td);
        }
        tuples.push(ts);
        objects.push(objs);
        ranks.push(rank);
        offsets.push(offs);
        data.push(dmap);
        index.push(imap);
    }

    let n = f.modulus;
    let mut boundary = Vec::with_capacity(max_degree + 1);
    for q in 0..=max_degree {
        let mut entries = vec![0; ranks[q + 1] * ranks[q]];
        for (ti, t) in tuples[q + 1].iter().enumerate() {
            let src_data = &data[q + 1][t];
            let row_off = offsets[q + 1][ti];
            for k in 0..t.len() {
                guard.spend(1)?;
                let mut tt = t.clone();
                tt.remove(k);
                let tgt_pos = index[q][&tt];
                let face = face_morphism(cat, src_data, k, &data[q][&tt])?;
                let mat = &f.res[face];
                let sign = if k % 2 == 1 { (n - 1) % n } else { 1 % n };
                let col_off = offsets[q][tgt_pos];
                for r in 0..mat.tgt_rank {
                    for c in 0..mat.src_rank {
                        let idx = (row_off + r) * ranks[q] + (col_off + c);
                        entries[idx] = (entries[idx] + sign * mat.entry(r, c)) % n;
                    }
                }
            }
        }
        boundary.push(AbMap::new(n, ranks[q], ranks[q + 1], entries));
    }
    for q in 0..max_degree {
        if boundary[q].then(&boundary[q + 1]).entries.iter().any(|&e| e != 0) {
            return Err(Error::axiom(
                "alternating complex",
                format!("boundary out of degree {} composes to a nonzero map", q),
            ));
        }
    }
    Ok(CechComplex { modulus: n, tuples, objects, ranks, offsets, boundary })
}

fn kernel_vectors(map: &AbMap, guard: &Guard) -> Result<Vec<usize>> {
    let src = map.src_group();
    let mut out = Vec::new();
    for i in 0..src.order() {
        guard.spend(1)?;
        if map.apply(&src.decode(i)).iter().all(|&x| x == 0) {
            out.push(i);
        }
    }
    Ok(out)
}

fn image_vectors(map: &AbMap, guard: &Guard) -> Result<BTreeSet<usize>> {
    let src = map.src_group();
    let tgt = map.tgt_group();
    let mut out = BTreeSet::new();
    for i in 0..src.order() {
        guard.spend(1)?;
        out.insert(tgt.encode(&map.apply(&src.decode(i))));
    }
    Ok(out)
}

// Cosets of a boundary subgroup inside a cocycle set, with least encoded
// coset representatives as canonical class names.
#[derive(Debug, Clone)]
struct QuotientClasses {
    grp: AbGroupFin,
    b: BTreeSet<usize>,
    z: Vec<usize>,
    reps: Vec<usize>,
    index: BTreeMap<usize, usize>,
    zero_class: usize,
}

impl QuotientClasses {
    fn build(grp: AbGroupFin, z: Vec<usize>, b: BTreeSet<usize>, guard: &Guard) -> Result<QuotientClasses> {
        for &w in &b {
            if z.binary_search(&w).is_err() {
                return Err(Error::axiom("cohomology", "boundaries are not cocycles"));
            }
        }
        let mut reps_set = BTreeSet::new();
        let mut q =
            QuotientClasses { grp, b, z, reps: Vec::new(), index: BTreeMap::new(), zero_class: 0 };
        for &v in &q.z {
            guard.spend(1)?;
            reps_set.insert(q.canonical(v));
        }
        q.reps = reps_set.into_iter().collect();
        q.index = q.reps.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        q.zero_class = q.class_of(0)?;
        Ok(q)
    }

    fn canonical(&self, v: usize) -> usize {
        let vd = self.grp.decode(v);
        self.b
            .iter()
            .map(|&w| self.grp.encode(&self.grp.sub(&vd, &self.grp.decode(w))))
            .min()
            .unwrap_or(v)
    }

    fn class_of(&self, v: usize) -> Result<usize> {
        self.index
            .get(&self.canonical(v))
            .copied()
            .ok_or_else(|| Error::axiom("cohomology", "element is outside the cocycle group"))
    }

    fn class_of_vec(&self, v: &[usize]) -> Result<usize> {
        self.class_of(self.grp.encode(v))
    }

    /// Classifies the quotient as `(Z/e)^r` by order, exponent, and the full
    /// divisor counting function, or rejects it as inhomogeneous.
    fn classify(&self, guard: &Guard) -> Result<AbGroupFin> {
        let order = self.reps.len();
        if order == 1 {
            return Ok(AbGroupFin { modulus: 1, rank: 0 });
        }
        let mut orders = Vec::with_capacity(order);
        for &r in &self.reps {
            let rv = self.grp.decode(r);
            let mut found = 0;
            for k in 1..=self.grp.modulus {
                guard.spend(1)?;
                if self.class_of_vec(&self.grp.scale(k, &rv))? == self.zero_class {
                    found = k;
                    break;
                }
            }
            if found == 0 {
                return Err(Error::axiom("cohomology", "class order does not divide the modulus"));
            }
            orders.push(found);
        }
        let e = orders.iter().fold(1, |a, &b| lcm(a, b));
        let mut pow = 1usize;
        let mut rank = 0usize;
        while pow < order {
            pow *= e;
            rank += 1;
        }
        if pow != order {
            return Err(Error::unsupported(
                "cohomology classification",
                format!("quotient of order {} and exponent {} is not a power of one cyclic group", order, e),
            ));
        }
        for d in divisors(e) {
            let mut killed = 0;
            for &r in &self.reps {
                guard.spend(1)?;
                let rv = self.grp.decode(r);
                if self.class_of_vec(&self.grp.scale(d, &rv))? == self.zero_class {
                    killed += 1;
                }
            }
            if killed != d.pow(rank as u32) {
                return Err(Error::unsupported(
                    "cohomology classification",
                    format!("quotient is not a power of one cyclic group (counting fails at {})", d),
                ));
            }
        }
        Ok(AbGroupFin { modulus: e, rank })
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn divisors(e: usize) -> Vec<usize> {
    (1..=e).filter(|d| e % d == 0).collect()
}

fn classes_at(cx: &CechComplex, q: usize, guard: &Guard) -> Result<QuotientClasses> {
    let z = kernel_vectors(&cx.boundary[q], guard)?;
    let b = if q == 0 {
        let mut b = BTreeSet::new();
        b.insert(0);
        b
    } else {
        image_vectors(&cx.boundary[q - 1], guard)?
    };
    QuotientClasses::build(AbGroupFin { modulus: cx.modulus, rank: cx.ranks[q] }, z, b, guard)
}

/// Cohomology of the ordered alternating complex of `cover` with
/// coefficients in `f`, classified as a power of one cyclic group.
///
/// Degree 0 is the group of matching sections of the cover. Every iterated
/// fiber product must exist in the site; a missing one is an error.
pub fn cech_cohomology(
    site: &Site,
    f: &AbPresheaf,
    cover: &[MorId],
    degree: usize,
    guard: &Guard,
) -> Result<AbGroupFin> {
    let cx = cech_complex(site, f, cover, degree, guard)?;
    classes_at(&cx, degree, guard)?.classify(guard)
}

/// Global sections of an abelian sheaf: the value at a terminal object when
/// one exists, else the limit over the whole site, classified as a power of
/// one cyclic group.
pub fn global_sections_ab(site: &Site, f: &AbPresheaf, guard: &Guard) -> Result<AbGroupFin> {
    let cat = &site.cat;
    f.validate(cat, guard)?;
    if let Ok(t) = terminal_object(cat, guard) {
        return Ok(f.value(t));
    }
    let mut offsets = Vec::with_capacity(cat.n_obj());
    let mut total = 0;
    for o in 0..cat.n_obj() {
        offsets.push(total);
        total += f.rank[o];
    }
    let ambient = AbGroupFin { modulus: f.modulus, rank: total };
    let mut members = Vec::new();
    for i in 0..ambient.order() {
        guard.spend(1)?;
        let v = ambient.decode(i);
        let ok = (0..cat.n_mor()).all(|m| {
            let cod = cat.cod(m);
            let dom = cat.dom(m);
            let x = &v[offsets[cod]..offsets[cod] + f.rank[cod]];
            f.res[m].apply(x) == v[offsets[dom]..offsets[dom] + f.rank[dom]]
        });
        if ok {
            members.push(i);
        }
    }
    let mut b = BTreeSet::new();
    b.insert(0);
    QuotientClasses::build(ambient, members, b, guard)?.classify(guard)
}

/// The sheaf of locally constant `Z/n` valued sections on the six object
/// circle site: rank 1 on the whole space, the two covering arcs, and the
/// two intersection components, rank 2 on the disconnected intersection.
/// Intersection coordinates are ordered (east component, west component).
pub fn circle_constant_sheaf(site: &Site, modulus: usize, guard: &Guard) -> Result<AbPresheaf> {
    let cat = &site.cat;
    let arrows: [(ObjId, ObjId); 13] = [
        (1, 0),
        (2, 0),
        (3, 0),
        (4, 0),
        (5, 0),
        (3, 1),
        (4, 1),
        (5, 1),
        (3, 2),
        (4, 2),
        (5, 2),
        (4, 3),
        (5, 3),
    ];
    let shape_ok = cat.n_obj() == 6
        && cat.n_mor() == 19
        && arrows
            .iter()
            .enumerate()
            .all(|(i, &(d, c))| cat.dom(6 + i) == d && cat.cod(6 + i) == c);
    if !shape_ok {
        return Err(Error::unsupported(
            "circle constant sheaf",
            "site does not have the six object circle shape",
        ));
    }
    let rank = vec![1, 1, 1, 2, 1, 1];
    let mut res: Vec<AbMap> = (0..6).map(|o| AbMap::identity(modulus, rank[o])).collect();
    for (i, &(d, c)) in arrows.iter().enumerate() {
        let _ = i;
        let mat = match (rank[c], rank[d]) {
            (1, 1) => AbMap::identity(modulus, 1),
            // Restriction from a connected open to the two component
            // intersection repeats the constant on both components.
            (1, 2) => AbMap::new(modulus, 1, 2, vec![1, 1]),
            // Restriction from the intersection to one component projects.
            (2, 1) => {
                if d == 4 {
                    AbMap::new(modulus, 2, 1, vec![1, 0])
                } else {
                    AbMap::new(modulus, 2, 1, vec![0, 1])
                }
            }
            _ => unreachable!("circle ranks are 1 or 2"),
        };
        res.push(mat);
    }
    let f = AbPresheaf { name: format!("circle-const{}", modulus), modulus, rank, res };
    f.validate(cat, guard)?;
    Ok(f)
}

/// Verdicts on the six term cohomology sequence induced by a coefficient
/// extension `Z/m -> Z/m^2 -> Z/m` in degrees 0 and 1, with the connecting
/// maps computed by lifting cochains and dividing the boundary by m.
/// Node order: degree 0 of sub, mid, quot, then degree 1 of sub, mid, quot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionSequenceReport {
    pub zero_compositions: bool,
    pub exact: [bool; 6],
}

pub fn cech_extension_sequence(
    site: &Site,
    cover: &[MorId],
    sub: &AbPresheaf,
    mid: &AbPresheaf,
    quot: &AbPresheaf,
    guard: &Guard,
) -> Result<ExtensionSequenceReport> {
    let cat = &site.cat;
    let m = sub.modulus;
    if quot.modulus != m || mid.modulus != m * m {
        return Err(Error::unsupported(
            "extension sequence",
            "moduli must be m for the ends and m squared in the middle",
        ));
    }
    if sub.rank != mid.rank || quot.rank != mid.rank {
        return Err(Error::unsupported("extension sequence", "value ranks differ"));
    }
    for mor in 0..cat.n_mor() {
        guard.spend(1)?;
        let (a, b, c) = (&sub.res[mor].entries, &mid.res[mor].entries, &quot.res[mor].entries);
        if a.len() != b.len()
            || a.iter().zip(b).any(|(&x, &y)| x % m != y % m)
            || c.iter().zip(b).any(|(&x, &y)| x % m != y % m)
        {
            return Err(Error::axiom(
                "extension sequence",
                format!("restrictions along `{}` disagree mod {}", cat.mor_name(mor), m),
            ));
        }
    }

    let cs = cech_complex(site, sub, cover, 2, guard)?;
    let cm = cech_complex(site, mid, cover, 2, guard)?;
    let cq = cech_complex(site, quot, cover, 2, guard)?;
    let hs = [classes_at(&cs, 0, guard)?, classes_at(&cs, 1, guard)?];
    let hm = [classes_at(&cm, 0, guard)?, classes_at(&cm, 1, guard)?];
    let hq = [classes_at(&cq, 0, guard)?, classes_at(&cq, 1, guard)?];
    let b2_sub = image_vectors(&cs.boundary[1], guard)?;

    // Cochain level coefficient maps, digit by digit.
    let scale_up = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| (x * m) % (m * m)).collect() };
    let reduce = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| x % m).collect() };
    let lift = |v: &[usize]| -> Vec<usize> { v.to_vec() };
    let divide = |v: &[usize]| -> Result<Vec<usize>> {
        v.iter()
            .map(|&x| {
                if x % m != 0 {
                    Err(Error::axiom("extension sequence", "boundary of a lift is not divisible"))
                } else {
                    Ok((x / m) % m)
                }
            })
            .collect()
    };

    // Induced maps as total class tables, with constancy on classes checked
    // on every cocycle.
    let class_map = |src: &QuotientClasses,
                     map: &dyn Fn(usize) -> Result<usize>|
     -> Result<Vec<usize>> {
        let mut table = vec![usize::MAX; src.reps.len()];
        for &v in &src.z {
            guard.spend(1)?;
            let sc = src.class_of(v)?;
            let tc = map(v)?;
            if table[sc] == usize::MAX {
                table[sc] = tc;
            } else if table[sc] != tc {
                return Err(Error::axiom(
                    "extension sequence",
                    "induced map is not constant on classes",
                ));
            }
        }
        if table.iter().any(|&t| t == usize::MAX) {
            return Err(Error::axiom("extension sequence", "induced map misses a class"));
        }
        Ok(table)
    };

    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(5);
    for q in 0..2 {
        let gs = AbGroupFin { modulus: m, rank: cs.ranks[q] };
        let gm = AbGroupFin { modulus: m * m, rank: cm.ranks[q] };
        let i_star = class_map(&hs[q], &|v| {
            let lifted = scale_up(&gs.decode(v));
            if cm.boundary[q].apply(&lifted).iter().any(|&x| x != 0) {
                return Err(Error::axiom("extension sequence", "scaled cocycle is not a cocycle"));
            }
            hm[q].class_of(gm.encode(&lifted))
        })?;
        maps.push(i_star);
        let p_star = class_map(&hm[q], &|v| hq[q].class_of_vec(&reduce(&gm.decode(v))))?;
        maps.push(p_star);
        if q == 0 {
            let gq = AbGroupFin { modulus: m, rank: cq.ranks[0] };
            let delta = class_map(&hq[0], &|v| {
                let lifted = lift(&gq.decode(v));
                let db = cm.boundary[0].apply(&lifted);
                let a = divide(&db)?;
                if cs.boundary[1].apply(&a).iter().any(|&x| x != 0) {
                    return Err(Error::axiom(
                        "extension sequence",
                        "connecting image is not a cocycle",
                    ));
                }
                hs[1].class_of_vec(&a)
            })?;
            maps.push(delta);
        }
    }
    let (f1, f2, f3, f4, f5) = (&maps[0], &maps[1], &maps[2], &maps[3], &maps[4]);

    // Trailing connecting map, needed only for membership in the degree 2
    // boundaries of sub.
    let gq1 = AbGroupFin { modulus: m, rank: cq.ranks[1] };
    let gs2 = AbGroupFin { modulus: m, rank: cs.ranks[2] };
    let mut f6_partial = vec![None; hq[1].reps.len()];
    for &i in &hq[1].z {
        guard.spend(1)?;
        let c = hq[1].class_of(i)?;
        let lifted = lift(&gq1.decode(i));
        let db = cm.boundary[1].apply(&lifted);
        let a = divide(&db)?;
        let vanishes = b2_sub.contains(&gs2.encode(&a));
        match f6_partial[c] {
            None => f6_partial[c] = Some(vanishes),
            Some(prev) if prev != vanishes => {
                return Err(Error::axiom(
                    "extension sequence",
                    "induced map is not constant on classes",
                ));
            }
            _ => {}
        }
    }
    let f6: Vec<bool> = f6_partial.into_iter().map(|x| x.unwrap_or(true)).collect();

    let zero_compositions = f1.iter().all(|&c| f2[c] == hq[0].zero_class)
        && f2.iter().all(|&c| f3[c] == hs[1].zero_class)
        && f3.iter().all(|&c| f4[c] == hm[1].zero_class)
        && f4.iter().all(|&c| f5[c] == hq[1].zero_class);

    let kernel_of = |table: &Vec<usize>, zero: usize| -> BTreeSet<usize> {
        table.iter().enumerate().filter(|&(_, &t)| t == zero).map(|(i, _)| i).collect()
    };
    let image_of = |table: &Vec<usize>| -> BTreeSet<usize> { table.iter().copied().collect() };
    let single = |c: usize| -> BTreeSet<usize> { std::iter::once(c).collect() };

    let exact = [
        kernel_of(f1, hm[0].zero_class) == single(hs[0].zero_class),
        kernel_of(f2, hq[0].zero_class) == image_of(f1),
        kernel_of(f3, hs[1].zero_class) == image_of(f2),
        kernel_of(f4, hm[1].zero_class) == image_of(f3),
        kernel_of(f5, hq[1].zero_class) == image_of(f4),
        f6.iter().enumerate().filter(|&(_, &v)| v).map(|(i, _)| i).collect::<BTreeSet<_>>()
            == image_of(f5),
    ];
    Ok(ExtensionSequenceReport { zero_compositions, exact })
}

fn random_invertible(rng: &mut ChaCha8Rng, modulus: usize, rank: usize, guard: &Guard) -> Result<AbMap> {
    for _ in 0..10_000 {
        guard.spend(1)?;
        let entries: Vec<usize> = (0..rank * rank).map(|_| rng.gen_range(0..modulus)).collect();
        let m = AbMap::new(modulus, rank, rank, entries);
        if m.is_invertible() {
            return Ok(m);
        }
    }
    Err(Error::unsupported("random invertible matrix", "no invertible matrix found"))
}

/// Seeded morphisms between abelian sheaves on a three object total site of
/// arrow shape (two fiber objects over the covered base object, one over the
/// covering one). All transitions are invertible, which makes every sample a
/// sheaf for the covanishing topology; the map components away from the
/// first object are forced by naturality.
pub fn seeded_sheaf_morphisms(
    total: &TotalSite,
    modulus: usize,
    max_rank: usize,
    seed: u64,
    count: usize,
    guard: &Guard,
) -> Result<Vec<(AbPresheaf, AbPresheaf, AbMor)>> {
    let cat = &total.site.cat;
    let shape_ok = cat.n_obj() == 3
        && cat.n_mor() == 6
        && cat.dom(3) == 1
        && cat.cod(3) == 0
        && cat.dom(4) == 2
        && cat.cod(4) == 0
        && cat.dom(5) == 2
        && cat.cod(5) == 1
        && cat.try_compose(3, 5) == Some(4);
    if !shape_ok {
        return Err(Error::unsupported(
            "seeded sheaf morphisms",
            "total category does not have the arrow total shape",
        ));
    }
    if max_rank == 0 {
        return Err(Error::malformed("seeded sheaf morphisms", &cat.name, "max_rank must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let rf = rng.gen_range(1..=max_rank);
        let rg = rng.gen_range(1..=max_rank);
        let f3 = random_invertible(&mut rng, modulus, rf, guard)?;
        let f5 = random_invertible(&mut rng, modulus, rf, guard)?;
        let g3 = random_invertible(&mut rng, modulus, rg, guard)?;
        let g5 = random_invertible(&mut rng, modulus, rg, guard)?;
        let mut fres = vec![AbMap::identity(modulus, rf); 3];
        fres.push(f3.clone());
        fres.push(f3.then(&f5));
        fres.push(f5.clone());
        let src = AbPresheaf {
            name: format!("seeded-src-{}", idx),
            modulus,
            rank: vec![rf; 3],
            res: fres,
        };
        let mut gres = vec![AbMap::identity(modulus, rg); 3];
        gres.push(g3.clone());
        gres.push(g3.then(&g5));
        gres.push(g5.clone());
        let tgt = AbPresheaf {
            name: format!("seeded-tgt-{}", idx),
            modulus,
            rank: vec![rg; 3],
            res: gres,
        };
        let u0 = AbMap::new(modulus, rf, rg, (0..rf * rg).map(|_| rng.gen_range(0..modulus)).collect());
        let f3_inv = f3.inverse().expect("generated invertible");
        let f5_inv = f5.inverse().expect("generated invertible");
        let u1 = f3_inv.then(&u0).then(&g3);
        let u2 = f5_inv.then(&u1).then(&g5);
        let mor = AbMor { name: format!("seeded-map-{}", idx), comp: vec![u0, u1, u2] };
        src.validate(cat, guard)?;
        tgt.validate(cat, guard)?;
        mor.validate(cat, &src, &tgt, guard)?;
        if !is_sheaf(&total.site, &src.underlying(), guard)?.ok
            || !is_sheaf(&total.site, &tgt.underlying(), guard)?.ok
        {
            return Err(Error::axiom("seeded sheaf morphisms", "a seeded presheaf is not a sheaf"));
        }
        out.push((src, tgt, mor));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibered::build_total_site;
    use crate::fincat::CatBuilder;
    use crate::fixtures::{arrow_site, coev_arrow_parts, fibarrow, s1_site, vee_site};
    use crate::oriented::build_covanishing_site;
    use crate::sheaves::Presheaf;

    fn g() -> Guard {
        Guard::new(1_000_000_000)
    }

    #[test]
    fn encode_decode_round_trip_and_arithmetic() {
        let grp = AbGroupFin { modulus: 4, rank: 3 };
        for i in 0..grp.order() {
            assert_eq!(grp.encode(&grp.decode(i)), i);
        }
        assert_eq!(grp.add(&[3, 2, 1], &[1, 3, 0]), vec![0, 1, 1]);
        assert_eq!(grp.sub(&[0, 1, 2], &[1, 3, 2]), vec![3, 2, 0]);
        assert_eq!(grp.scale(3, &[1, 2, 3]), vec![3, 2, 1]);
    }

    #[test]
    fn additive_tables_round_trip_and_non_additive_tables_are_rejected() {
        let double = AbMap::scalar(4, 1, 2);
        let sm = double.to_set_map();
        assert_eq!(AbMap::from_set_map(4, 1, 1, &sm, &g()).unwrap(), double);
        // x squared mod 4 respects zero but is not additive.
        let square = SetMap::new(4, 4, vec![0, 1, 0, 1]);
        assert!(matches!(
            AbMap::from_set_map(4, 1, 1, &square, &g()),
            Err(Error::Axiom { .. })
        ));
    }

    #[test]
    fn kernel_and_cokernel_of_zero_and_identity_maps() {
        let site = arrow_site(&g()).unwrap();
        let f = AbPresheaf::constant(&site.cat, 4, 1, "four");
        f.validate(&site.cat, &g()).unwrap();

        let zero = AbMor::zero(&f, &f, "zero");
        let kc = ab_kernel_cokernel(&site, &f, &f, &zero, &g()).unwrap();
        assert!(kc.kernel.same_tables(&f.underlying()));
        assert!(kc.cokernel_raw.same_tables(&f.underlying()));
        assert!(kc.exact_at_source && kc.exact_at_target);

        let id = AbMor::identity(&f, "id");
        let kc = ab_kernel_cokernel(&site, &f, &f, &id, &g()).unwrap();
        assert!(kc.kernel.value.iter().all(|v| v.n == 1));
        assert!(kc.cokernel_raw.value.iter().all(|v| v.n == 1));
        assert!(kc.cokernel.out.value.iter().all(|v| v.n == 1));
        assert!(kc.exact_at_source && kc.exact_at_target);
    }

    #[test]
    fn doubling_on_the_constant_has_mod_two_kernel_and_cokernel() {
        let s = fibarrow(&g()).unwrap();
        let total = build_total_site(&s, &g()).unwrap();
        let f = AbPresheaf::constant(&total.site.cat, 4, 1, "four");
        let double = AbMor::scalar(&f, 2, "double");
        let kc = kernel_cokernel(&s, &total, &f, &f, &double, &g()).unwrap();

        assert!(kc.inner.kernel_members.iter().all(|m| m == &vec![0, 2]));
        assert!(kc.inner.kernel.res.iter().all(|r| r.is_bijective()));
        assert!(kc.inner.kernel_is_sheaf);
        assert!(kc.kernel_fiberwise.ok);

        assert!(kc.inner.cokernel_raw.value.iter().all(|v| v.n == 2));
        assert!(kc.inner.cokernel_raw_is_sheaf);
        assert!(kc.cokernel_raw_fiberwise.ok);
        assert!(kc.inner.cokernel.out.value.iter().all(|v| v.n == 2));
        assert!(kc.inner.exact_at_source && kc.inner.exact_at_target);
    }

    #[test]
    fn cokernel_of_a_merely_fiberwise_sheaf_needs_sheafification() {
        let s = fibarrow(&g()).unwrap();
        let total = build_total_site(&s, &g()).unwrap();
        let zero_ps = AbPresheaf {
            name: "zero".to_string(),
            modulus: 2,
            rank: vec![0, 0, 0],
            res: (0..6).map(|_| AbMap::identity(2, 0)).collect(),
        };
        // Sheaf on each fiber (the vertical transition is the identity), but
        // the collapsed cartesian transitions break descent to the covering
        // base object, so the total presheaf is not a sheaf.
        let weak = AbPresheaf {
            name: "weak".to_string(),
            modulus: 2,
            rank: vec![1, 1, 1],
            res: vec![
                AbMap::identity(2, 1),
                AbMap::identity(2, 1),
                AbMap::identity(2, 1),
                AbMap::identity(2, 1),
                AbMap::zero(2, 1, 1),
                AbMap::zero(2, 1, 1),
            ],
        };
        weak.validate(&total.site.cat, &g()).unwrap();
        let u = AbMor::zero(&zero_ps, &weak, "zero-into-weak");
        let kc = kernel_cokernel(&s, &total, &zero_ps, &weak, &u, &g()).unwrap();

        assert!(kc.inner.kernel_is_sheaf);
        assert!(kc.kernel_fiberwise.ok);
        assert!(!kc.inner.cokernel_raw_is_sheaf);
        assert!(!kc.cokernel_raw_fiberwise.ok);
        assert!(is_sheaf(&total.site, &kc.inner.cokernel.out, &g()).unwrap().ok);
        assert!(kc.inner.cokernel.out.value.iter().all(|v| v.n == 2));
        assert!(kc.inner.exact_at_source && kc.inner.exact_at_target);
    }

    #[test]
    fn inputs_that_fail_on_a_fiber_are_rejected() {
        let s = fibarrow(&g()).unwrap();
        let total = build_total_site(&s, &g()).unwrap();
        let zero_ps = AbPresheaf {
            name: "zero".to_string(),
            modulus: 2,
            rank: vec![0, 0, 0],
            res: (0..6).map(|_| AbMap::identity(2, 0)).collect(),
        };
        // The vertical transition collapses, so the fiber over the covered
        // base object is not a sheaf there.
        let bad = AbPresheaf {
            name: "bad-fiber".to_string(),
            modulus: 2,
            rank: vec![1, 1, 1],
            res: vec![
                AbMap::identity(2, 1),
                AbMap::identity(2, 1),
                AbMap::identity(2, 1),
                AbMap::zero(2, 1, 1),
                AbMap::zero(2, 1, 1),
                AbMap::identity(2, 1),
            ],
        };
        bad.validate(&total.site.cat, &g()).unwrap();
        let u = AbMor::zero(&zero_ps, &bad, "zero-into-bad");
        assert!(matches!(
            kernel_cokernel(&s, &total, &zero_ps, &bad, &u, &g()),
            Err(Error::Axiom { .. })
        ));
    }

    #[test]
    fn moving_along_the_second_projection_preserves_kernel_and_cokernel() {
        let (x, y, f_plus) = coev_arrow_parts(&g()).unwrap();
        let d = build_covanishing_site(&x, &y, &f_plus, &g()).unwrap();
        let f = AbPresheaf::constant(&d.y.cat, 4, 1, "four");
        let double = AbMor::scalar(&f, 2, "double");
        let rep = conearby_preserves_kernel_cokernel(&d, &f, &f, &double, &g()).unwrap();
        assert!(rep.kernel_exact);
        assert!(rep.cokernel_raw_exact);
        assert!(rep.cokernel_sheaf_iso);
    }

    #[test]
    fn circle_sheaf_is_the_sheafification_of_the_constant() {
        let site = s1_site(&g()).unwrap();
        let f = circle_constant_sheaf(&site, 2, &g()).unwrap();
        let fp = f.underlying();
        assert!(is_sheaf(&site, &fp, &g()).unwrap().ok);
        let c = Presheaf::constant(&site.cat, 2);
        let sh = sheafify(&site, &c, &g()).unwrap();
        let comp: Vec<SetMap> = (0..6)
            .map(|o| {
                let grp = f.value(o);
                let table = (0..2).map(|v| grp.encode(&vec![v; grp.rank])).collect();
                SetMap::new(2, fp.card(o), table)
            })
            .collect();
        let diag = PsMor { name: "diag".to_string(), comp };
        diag.validate(&site.cat, &c, &fp, &g()).unwrap();
        let cmp = factor_through_sheafify(&site, &sh, &fp, &diag, &g()).unwrap();
        assert!(cmp.is_iso());
    }

    #[test]
    fn one_element_cover_computes_plain_sections() {
        let site = s1_site(&g()).unwrap();
        let f = circle_constant_sheaf(&site, 3, &g()).unwrap();
        let cover = vec![site.cat.identity(0)];
        let h0 = cech_cohomology(&site, &f, &cover, 0, &g()).unwrap();
        assert_eq!(h0, AbGroupFin { modulus: 3, rank: 1 });
        let h1 = cech_cohomology(&site, &f, &cover, 1, &g()).unwrap();
        assert_eq!(h1.order(), 1);
        let h2 = cech_cohomology(&site, &f, &cover, 2, &g()).unwrap();
        assert_eq!(h2.order(), 1);
    }

    #[test]
    fn circle_cohomology_matches_the_hand_boundary_matrix() {
        let site = s1_site(&g()).unwrap();
        let cover = vec![6, 7];
        for n in [2usize, 3] {
            let f = circle_constant_sheaf(&site, n, &g()).unwrap();
            let cx = cech_complex(&site, &f, &cover, 1, &g()).unwrap();
            assert_eq!(cx.ranks[0], 2);
            assert_eq!(cx.ranks[1], 2);
            assert_eq!(cx.boundary[0].entries, vec![n - 1, 1, n - 1, 1]);
            let h0 = cech_cohomology(&site, &f, &cover, 0, &g()).unwrap();
            let h1 = cech_cohomology(&site, &f, &cover, 1, &g()).unwrap();
            assert_eq!(h0, AbGroupFin { modulus: n, rank: 1 });
            assert_eq!(h1, AbGroupFin { modulus: n, rank: 1 });
            // Matching sections of the cover agree with global sections.
            let gs = global_sections_ab(&site, &f, &g()).unwrap();
            assert_eq!(gs.order(), h0.order());
        }
    }

    #[test]
    fn plain_constants_have_matching_sections_but_no_higher_classes() {
        let site = s1_site(&g()).unwrap();
        let f = AbPresheaf::constant(&site.cat, 3, 1, "plain");
        let cover = vec![6, 7];
        let h0 = cech_cohomology(&site, &f, &cover, 0, &g()).unwrap();
        assert_eq!(h0, AbGroupFin { modulus: 3, rank: 1 });
        let h1 = cech_cohomology(&site, &f, &cover, 1, &g()).unwrap();
        assert_eq!(h1.order(), 1);
    }

    #[test]
    fn covers_without_fiber_products_are_rejected() {
        let site = vee_site(&g()).unwrap();
        let f = AbPresheaf::constant(&site.cat, 2, 1, "two");
        let err = cech_cohomology(&site, &f, &[3, 4], 1, &g());
        assert!(matches!(err, Err(Error::Missing { .. })));
    }

    #[test]
    fn global_sections_use_the_terminal_value_or_the_limit() {
        let site = s1_site(&g()).unwrap();
        let f = circle_constant_sheaf(&site, 5, &g()).unwrap();
        assert_eq!(global_sections_ab(&site, &f, &g()).unwrap(), AbGroupFin { modulus: 5, rank: 1 });

        // Two disconnected points: sections are the product of the values.
        let mut b = CatBuilder::new("TWO");
        b.obj("x");
        b.obj("y");
        let cat = b.build(&[], &g()).unwrap();
        let site2 = Site::chaotic(cat, &g()).unwrap();
        let pair = AbPresheaf {
            name: "pair".to_string(),
            modulus: 3,
            rank: vec![1, 2],
            res: vec![AbMap::identity(3, 1), AbMap::identity(3, 2)],
        };
        pair.validate(&site2.cat, &g()).unwrap();
        assert_eq!(global_sections_ab(&site2, &pair, &g()).unwrap(), AbGroupFin { modulus: 3, rank: 3 });

        // The kernel of doubling on Z/4 is the copy of Z/2 inside it.
        let arrow = arrow_site(&g()).unwrap();
        let four = AbPresheaf::constant(&arrow.cat, 4, 1, "four");
        let kc = ab_kernel_cokernel(&arrow, &four, &four, &AbMor::scalar(&four, 2, "double"), &g())
            .unwrap();
        assert!(kc.kernel_members.iter().all(|m| m == &vec![0, 2]));
        let as_z2 = AbPresheaf::constant(&arrow.cat, 2, 1, "kernel-of-doubling");
        assert_eq!(global_sections_ab(&arrow, &as_z2, &g()).unwrap(), AbGroupFin { modulus: 2, rank: 1 });
    }

    #[test]
    fn extension_sequence_is_exact_on_the_circle() {
        let site = s1_site(&g()).unwrap();
        let sub = circle_constant_sheaf(&site, 2, &g()).unwrap();
        let mid = circle_constant_sheaf(&site, 4, &g()).unwrap();
        let quot = circle_constant_sheaf(&site, 2, &g()).unwrap();
        let rep = cech_extension_sequence(&site, &[6, 7], &sub, &mid, &quot, &g()).unwrap();
        assert!(rep.zero_compositions);
        assert_eq!(rep.exact, [true; 6]);
    }

    #[test]
    fn classification_accepts_homogeneous_and_rejects_mixed_quotients() {
        let grp = AbGroupFin { modulus: 2, rank: 2 };
        let z: Vec<usize> = (0..4).collect();
        let mut b = BTreeSet::new();
        b.insert(0);
        let q = QuotientClasses::build(grp, z, b, &g()).unwrap();
        assert_eq!(q.classify(&g()).unwrap(), AbGroupFin { modulus: 2, rank: 2 });

        // (Z/4)^2 modulo the order two subgroup generated by (2, 0) is
        // Z/4 x Z/2, which is not a power of one cyclic group.
        let grp = AbGroupFin { modulus: 4, rank: 2 };
        let z: Vec<usize> = (0..16).collect();
        let mut b = BTreeSet::new();
        b.insert(grp.encode(&[0, 0]));
        b.insert(grp.encode(&[2, 0]));
        let q = QuotientClasses::build(grp, z, b, &g()).unwrap();
        assert!(matches!(q.classify(&g()), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn seeded_morphisms_have_sheaf_kernels_without_sheafification() {
        let s = fibarrow(&g()).unwrap();
        let total = build_total_site(&s, &g()).unwrap();
        let samples = seeded_sheaf_morphisms(&total, 4, 2, 2024, 20, &g()).unwrap();
        assert_eq!(samples.len(), 20);
        for (src, tgt, u) in &samples {
            let kc = kernel_cokernel(&s, &total, src, tgt, u, &g()).unwrap();
            assert!(kc.inner.kernel_is_sheaf);
            assert!(kc.kernel_fiberwise.ok);
            assert!(kc.inner.exact_at_source && kc.inner.exact_at_target);
            // Invertible transitions keep even the raw cokernel a sheaf.
            assert!(kc.inner.cokernel_raw_is_sheaf);
        }
    }
}
