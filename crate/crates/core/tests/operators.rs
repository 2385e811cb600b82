mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alns_mip::destroy::{destroy, DestroyContext, OperatorKind, OperatorSpec, INT_TOL};
use alns_mip::model::Relation;

use common::{lift, random_pair};

fn specs() -> Vec<OperatorSpec> {
    let mut out = OperatorSpec::paper16();
    out.push("dins".parse().unwrap());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn previous_state_survives_every_operator_but_rens(seed in any::<u64>()) {
        let p = random_pair(seed);
        let sets = p.inst.index_sets();
        let ctx = DestroyContext { base: &p.inst, sets: &sets, previous: &p.previous, root_lp: &p.root_lp };
        for spec in specs() {
            if spec.kind() == OperatorKind::Rens || !spec.kind().is_applicable(&sets) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let delta = destroy(&spec, &ctx, &mut rng, Some(&p.other)).unwrap();
            let sub = p.inst.apply_delta(&delta).unwrap();
            let x = lift(&p.inst, &delta, p.previous.values());
            prop_assert!(x.is_some(), "{}: added row violated", spec.label());
            let x = x.unwrap();
            let report = sub.check_feasibility(&x, 1e-6).unwrap();
            prop_assert!(report.is_feasible(), "{}: {report:?}", spec.label());
        }
    }

    #[test]
    fn fixings_copy_the_previous_state(seed in any::<u64>()) {
        let p = random_pair(seed);
        let sets = p.inst.index_sets();
        let ctx = DestroyContext { base: &p.inst, sets: &sets, previous: &p.previous, root_lp: &p.root_lp };
        for spec in specs() {
            if !spec.kind().is_applicable(&sets) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let delta = destroy(&spec, &ctx, &mut rng, Some(&p.other)).unwrap();
            for (&k, &v) in &delta.fixings {
                prop_assert!(p.inst.variable(k).kind.is_discrete(), "{} fixed a continuous variable", spec.label());
                prop_assert!((v - p.previous.values()[k]).abs() <= INT_TOL, "{}", spec.label());
            }
        }
    }

    #[test]
    fn crossover_frees_exactly_the_disagreements(seed in any::<u64>()) {
        let p = random_pair(seed);
        let sets = p.inst.index_sets();
        let ctx = DestroyContext { base: &p.inst, sets: &sets, previous: &p.previous, root_lp: &p.root_lp };
        let spec: OperatorSpec = "crossover".parse().unwrap();
        let delta = destroy(&spec, &ctx, &mut ChaCha8Rng::seed_from_u64(0), Some(&p.other)).unwrap();
        for &k in &sets.discrete {
            let agree = (p.previous.values()[k] - p.other.values()[k]).abs() <= INT_TOL;
            prop_assert_eq!(delta.fixings.contains_key(&k), agree);
        }
    }

    #[test]
    fn local_branching_radius_within_budget(seed in any::<u64>(), pct in prop::sample::select(vec![10u32, 25, 50])) {
        let p = random_pair(seed);
        let sets = p.inst.index_sets();
        if sets.binary.is_empty() {
            return Ok(());
        }
        let ctx = DestroyContext { base: &p.inst, sets: &sets, previous: &p.previous, root_lp: &p.root_lp };
        let spec: OperatorSpec = format!("lb_{pct}").parse().unwrap();
        let delta = destroy(&spec, &ctx, &mut ChaCha8Rng::seed_from_u64(seed), None).unwrap();
        prop_assert_eq!(delta.added_constraints.len(), 1);
        let row = &delta.added_constraints[0];
        prop_assert_eq!(row.relation, Relation::Le);
        prop_assert_eq!(row.coeffs().len(), sets.binary.len());
        // The row is the Hamming distance to x_{t-1}: its value at x_{t-1}
        // is 0, so the radius equals the right-hand side minus the constant.
        let at_prev: f64 = row.coeffs().iter().map(|&(k, a)| a * p.previous.values()[k]).sum();
        let radius = row.rhs - at_prev;
        prop_assert!(radius >= 1.0 - 1e-9 && radius <= sets.binary.len() as f64 + 1e-9, "radius {radius}");
    }
}
