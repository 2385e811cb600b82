#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alns_mip::bnb::{solve_mip, SolveLimits};
use alns_mip::generate::{generate, GraphModel, InstanceSpec};
use alns_mip::model::{
    LinearConstraint, MipInstance, ObjectiveReplacement, Relation, SolutionState, SubMipDelta, VarKind, Variable,
};
use alns_mip::mps::parse_mps;
use alns_mip::simplex::{solve_lp, LpStatus};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus() -> Vec<(String, MipInstance)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "mps"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let inst = parse_mps(&std::fs::read(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (name, inst)
        })
        .collect()
}

/// Minimum by enumerating every integer assignment. At most one continuous
/// variable is allowed; it is set to the cheapest end of the interval the
/// rows leave for it.
pub fn enumerate(inst: &MipInstance) -> Option<f64> {
    let vars = inst.variables();
    let cont: Vec<usize> = (0..vars.len()).filter(|&k| vars[k].kind == VarKind::Continuous).collect();
    assert!(cont.len() <= 1, "oracle handles one continuous variable");
    let ints: Vec<usize> = (0..vars.len()).filter(|&k| vars[k].kind != VarKind::Continuous).collect();
    for &k in &ints {
        assert!(vars[k].lower.is_finite() && vars[k].upper.is_finite());
    }
    let mut x: Vec<f64> = vars.iter().map(|v| v.lower.ceil().max(v.lower)).collect();
    for &k in &ints {
        x[k] = vars[k].lower.ceil();
    }
    let mut best: Option<f64> = None;
    loop {
        if let Some(f) = complete(inst, &mut x, cont.first().copied()) {
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
        let mut pos = 0;
        loop {
            if pos == ints.len() {
                return best;
            }
            let k = ints[pos];
            if x[k] + 1.0 <= vars[k].upper + 1e-9 {
                x[k] += 1.0;
                break;
            }
            x[k] = vars[k].lower.ceil();
            pos += 1;
        }
    }
}

fn complete(inst: &MipInstance, x: &mut [f64], cont: Option<usize>) -> Option<f64> {
    if let Some(j) = cont {
        let v = inst.variable(j);
        let (mut lo, mut hi) = (v.lower, v.upper);
        for row in inst.constraints() {
            let a = row.coeffs().iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
            let rest: f64 = row.coeffs().iter().filter(|e| e.0 != j).map(|&(k, c)| c * x[k]).sum();
            if a == 0.0 {
                continue;
            }
            let bound = (row.rhs - rest) / a;
            let (upper_side, lower_side) = match row.relation {
                Relation::Le => (a > 0.0, a < 0.0),
                Relation::Ge => (a < 0.0, a > 0.0),
                Relation::Eq => (true, true),
            };
            if upper_side {
                hi = hi.min(bound);
            }
            if lower_side {
                lo = lo.max(bound);
            }
        }
        if lo > hi + 1e-9 {
            return None;
        }
        x[j] = if inst.objective_coeffs()[j] >= 0.0 { lo } else { hi };
        if !x[j].is_finite() {
            return None;
        }
    }
    inst.is_feasible(x).then(|| inst.evaluate_objective(x).unwrap())
}

/// Random instance with binaries, small general integers and one
/// continuous variable. All coefficients are nonnegative with `<=` rows, so
/// the zero point is feasible.
pub fn random_mixed(rng: &mut impl Rng) -> MipInstance {
    let n_bin = rng.random_range(2..=6);
    let n_int = rng.random_range(1..=3);
    let mut vars = Vec::new();
    for k in 0..n_bin {
        vars.push(Variable::binary(format!("b{k}")));
    }
    for k in 0..n_int {
        vars.push(Variable::integer(format!("g{k}"), 0.0, f64::from(rng.random_range(2..=5))));
    }
    vars.push(Variable::continuous("z", 0.0, 10.0));
    let n = vars.len();
    let m = rng.random_range(1..=4);
    let rows = (0..m)
        .map(|i| {
            let mut coeffs = Vec::new();
            for k in 0..n {
                if rng.random_bool(0.7) {
                    coeffs.push((k, f64::from(rng.random_range(1..=6))));
                }
            }
            let coeffs = if coeffs.is_empty() { vec![(0, 1.0)] } else { coeffs };
            let rhs = f64::from(rng.random_range(3..=20));
            LinearConstraint::new(format!("r{i}"), coeffs, Relation::Le, rhs)
        })
        .collect();
    let c = (0..n).map(|_| f64::from(rng.random_range(-6..=3))).collect();
    MipInstance::new("mixed", vars, rows, c, 0.0).unwrap()
}

/// Small instance of a randomly chosen shape: one of the four generated
/// families or a mixed-integer one.
pub fn random_instance(rng: &mut impl Rng) -> MipInstance {
    let seed = rng.random();
    let er = GraphModel::ErdosRenyi {
        edge_probability: rng.random_range(0.2..0.5),
    };
    let spec = match rng.random_range(0..5) {
        0 => InstanceSpec::MultipleKnapsack {
            items: rng.random_range(4..=12),
            knapsacks: rng.random_range(1..=3),
        },
        1 => InstanceSpec::SetCover {
            rows: rng.random_range(4..=10),
            cols: rng.random_range(4..=12),
            density: rng.random_range(0.2..0.5),
        },
        2 => InstanceSpec::MaxIndependentSet {
            nodes: rng.random_range(4..=12),
            model: er,
        },
        3 => InstanceSpec::MinVertexCover {
            nodes: rng.random_range(4..=12),
            model: er,
        },
        _ => return random_mixed(rng),
    };
    generate(&spec, seed).unwrap()
}

/// A feasible point found by optimizing a random objective.
pub fn random_feasible(inst: &MipInstance, rng: &mut impl Rng) -> Option<SolutionState> {
    let c: Vec<(usize, f64)> = (0..inst.num_vars()).map(|k| (k, rng.random_range(-1.0..=1.0))).collect();
    let delta = SubMipDelta {
        objective_replacement: Some(ObjectiveReplacement { coeffs: c, constant: 0.0 }),
        ..Default::default()
    };
    let sub = inst.apply_delta(&delta).unwrap();
    let r = solve_mip(&sub, &SolveLimits::nodes(200));
    let x = r.best?.values().to_vec();
    SolutionState::new(inst, x).ok()
}

/// `x` extended with the smallest slack values that satisfy the rows added
/// by `delta`, or `None` when a row without slack is violated.
pub fn lift(base: &MipInstance, delta: &SubMipDelta, x: &[f64]) -> Option<Vec<f64>> {
    let n = base.num_vars();
    let mut full = x.to_vec();
    full.extend(delta.slack_vars.iter().map(|s| s.lower));
    for row in &delta.added_constraints {
        let activity: f64 = row.coeffs().iter().map(|&(k, a)| a * full[k]).sum();
        let excess = match row.relation {
            Relation::Le => activity - row.rhs,
            Relation::Ge => row.rhs - activity,
            Relation::Eq => (activity - row.rhs).abs(),
        };
        if excess <= 1e-9 {
            continue;
        }
        let slack = row.coeffs().iter().find(|&&(k, _)| k >= n)?;
        let grow = excess / slack.1.abs();
        full[slack.0] += grow;
    }
    Some(full)
}

/// Random (instance, previous state, root relaxation, second feasible
/// state) tuple drawn from `seed`.
pub struct Pair {
    pub inst: MipInstance,
    pub previous: SolutionState,
    pub root_lp: Vec<f64>,
    pub other: SolutionState,
}

pub fn random_pair(seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = random_instance(&mut rng);
        let lp = solve_lp(&inst, 100_000);
        if lp.status != LpStatus::Optimal {
            continue;
        }
        let (Some(previous), Some(other)) = (random_feasible(&inst, &mut rng), random_feasible(&inst, &mut rng))
        else {
            continue;
        };
        return Pair {
            inst,
            previous,
            root_lp: lp.values,
            other,
        };
    }
}
