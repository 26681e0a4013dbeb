//! Randomized laws for coverage saturation and topology comparison.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covanish::fincat::FinCat;
use covanish::fixtures::{arrow_site, s1_site, vee_site};
use covanish::sites::{
    compare_topologies, saturate_topology, validate_topology, Comparison, Coverage, Topology,
};
use covanish::Guard;

fn g() -> Guard {
    Guard::new(1_000_000_000)
}

fn fixture_cat(which: usize, guard: &Guard) -> FinCat {
    match which % 3 {
        0 => arrow_site(guard).unwrap().cat,
        1 => vee_site(guard).unwrap().cat,
        _ => s1_site(guard).unwrap().cat,
    }
}

fn random_coverage(cat: &FinCat, rng: &mut ChaCha8Rng, families: usize) -> Coverage {
    let mut cov = Coverage::new(cat.n_obj());
    for _ in 0..families {
        let u = rng.gen_range(0..cat.n_obj());
        let into: Vec<usize> = (0..cat.n_mor()).filter(|&m| cat.cod(m) == u).collect();
        let family: Vec<usize> = into.into_iter().filter(|_| rng.gen_bool(0.5)).collect();
        cov.add_family(u, family);
    }
    cov
}

fn union(a: &Coverage, b: &Coverage) -> Coverage {
    let mut out = Coverage::new(a.families.len());
    for side in [a, b] {
        for (u, fams) in side.families.iter().enumerate() {
            for fam in fams {
                out.add_family(u, fam.clone());
            }
        }
    }
    out
}

fn coverage_of(top: &Topology) -> Coverage {
    let mut cov = Coverage::new(top.n_obj());
    for u in 0..top.n_obj() {
        for sieve in &top.covering[u] {
            cov.add_family(u, sieve.iter().copied().collect());
        }
    }
    cov
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn saturation_output_is_a_topology_and_idempotent(which in 0usize..3, seed in any::<u64>(), n in 1usize..4) {
        let guard = g();
        let cat = fixture_cat(which, &guard);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_coverage(&cat, &mut rng, n);
        let top = saturate_topology(&cat, &cov, &guard).unwrap();
        validate_topology(&cat, &top, &guard).unwrap();
        let again = saturate_topology(&cat, &coverage_of(&top), &guard).unwrap();
        prop_assert_eq!(top, again);
    }

    #[test]
    fn saturation_is_monotone_in_the_coverage(which in 0usize..3, seed in any::<u64>(), n in 1usize..4, extra in 1usize..4) {
        let guard = g();
        let cat = fixture_cat(which, &guard);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = random_coverage(&cat, &mut rng, n);
        let grown = union(&small, &random_coverage(&cat, &mut rng, extra));
        let t_small = saturate_topology(&cat, &small, &guard).unwrap();
        let t_grown = saturate_topology(&cat, &grown, &guard).unwrap();
        let verdict = compare_topologies(&cat, &t_small, &cat, &t_grown, &guard).unwrap();
        prop_assert!(matches!(verdict, Comparison::Equal | Comparison::SecondFiner));
    }

    #[test]
    fn saturated_union_is_never_strictly_coarser(which in 0usize..3, seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let guard = g();
        let cat = fixture_cat(which, &guard);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_coverage(&cat, &mut rng, n);
        let b = random_coverage(&cat, &mut rng, m);
        let t_union = saturate_topology(&cat, &union(&a, &b), &guard).unwrap();
        let t_a = saturate_topology(&cat, &a, &guard).unwrap();
        let verdict = compare_topologies(&cat, &t_union, &cat, &t_a, &guard).unwrap();
        prop_assert!(matches!(verdict, Comparison::Equal | Comparison::FirstFiner));
    }
}
