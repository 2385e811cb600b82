//! Depth-first LP-based branch-and-bound.
//!
//! Branches on the most fractional discrete variable (lowest index on ties),
//! explores the down branch first and reuses the parent's simplex tableau
//! for both children. Serves as the repair solver, the initial-solution
//! finder and the reference solver in tests.

use std::time::{Duration, Instant};

use crate::model::{MipInstance, SolutionState, FEAS_TOL};
use crate::simplex::{LpResult, LpStatus, Tableau};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    /// Search tree exhausted with an incumbent.
    Optimal,
    /// Stopped at the first feasible solution on request.
    Feasible,
    Infeasible,
    LimitReachedWithIncumbent,
    LimitReachedNoIncumbent,
    /// The root relaxation is unbounded.
    Unbounded,
}

#[derive(Debug, Clone, Default)]
pub struct SolveLimits {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub stop_at_first_feasible: bool,
    pub incumbent_warm_start: Option<SolutionState>,
}

impl SolveLimits {
    pub fn nodes(limit: u64) -> Self {
        SolveLimits {
            node_limit: Some(limit),
            ..Default::default()
        }
    }

    pub fn with_time(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncumbentEvent {
    pub node: u64,
    pub lp_iterations: u64,
    pub elapsed: Duration,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub status: MipStatus,
    pub best: Option<SolutionState>,
    pub dual_bound: f64,
    pub nodes_explored: u64,
    /// Simplex pivots over all nodes; a machine-independent effort measure.
    pub lp_iterations: u64,
    pub wall_time: Duration,
    /// Relaxation solved at the root node, when it was solved to optimality.
    pub root_lp: Option<LpResult>,
    /// Every improvement of the incumbent, in order.
    pub incumbent_trace: Vec<IncumbentEvent>,
}

impl MipResult {
    pub fn has_solution(&self) -> bool {
        self.best.is_some()
    }

    pub(crate) fn without_solution(status: MipStatus) -> Self {
        MipResult {
            status,
            best: None,
            dual_bound: f64::NEG_INFINITY,
            nodes_explored: 0,
            lp_iterations: 0,
            wall_time: Duration::ZERO,
            root_lp: None,
            incumbent_trace: Vec::new(),
        }
    }
}

pub fn solve_mip(instance: &MipInstance, limits: &SolveLimits) -> MipResult {
    search(instance, limits, None)
}

/// Budget for the initial solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBudget {
    pub time_limit: Duration,
    pub node_limit: Option<u64>,
    /// Extra nodes granted after the first feasible solution to detect
    /// instances that are solved outright.
    pub probe_nodes: u64,
}

impl Default for InitialBudget {
    fn default() -> Self {
        InitialBudget {
            time_limit: Duration::from_secs(20),
            node_limit: None,
            probe_nodes: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialSolve {
    pub result: MipResult,
    /// The tree was exhausted: the instance needs no further search.
    pub solved_upfront: bool,
}

/// Runs branch-and-bound until the first feasible solution, then for at most
/// `probe_nodes` more nodes. Finishing the tree in that window marks the
/// instance as solved upfront.
pub fn find_initial(instance: &MipInstance, budget: &InitialBudget) -> InitialSolve {
    let limits = SolveLimits {
        time_limit: Some(budget.time_limit),
        node_limit: budget.node_limit,
        stop_at_first_feasible: true,
        incumbent_warm_start: None,
    };
    let result = search(instance, &limits, Some(budget.probe_nodes));
    let solved_upfront = result.status == MipStatus::Optimal;
    InitialSolve {
        result,
        solved_upfront,
    }
}

struct Node {
    /// Parent tableau to resume from; `None` continues with the live one.
    tableau: Option<Box<Tableau>>,
    branch: Option<(usize, f64, f64)>,
    parent_bound: f64,
}

struct Incumbent {
    state: Option<SolutionState>,
}

fn search(instance: &MipInstance, limits: &SolveLimits, first_feasible_grace: Option<u64>) -> MipResult {
    let start = Instant::now();
    let n = instance.num_vars();
    let discrete: Vec<usize> = instance.index_sets().discrete;
    let integral_objective = objective_is_integral(instance);
    let constant = instance.objective_constant();

    let mut inc = Incumbent { state: None };
    if let Some(ws) = &limits.incumbent_warm_start {
        if ws.values().len() == n && instance.is_feasible(ws.values()) {
            inc.state = SolutionState::new(instance, ws.values().to_vec()).ok();
        }
    }
    let mut trace = Vec::new();

    // Any point in the subtree has objective >= bound; prune when that cannot
    // beat the incumbent by more than the optimality tolerance.
    let prunable = |bound: f64, inc: &Incumbent| -> bool {
        let Some(best) = inc.state.as_ref().map(SolutionState::objective) else {
            return false;
        };
        let tol = 1e-6 * best.abs().max(1.0);
        if integral_objective {
            let rounded = constant + (bound - constant - 1e-6).ceil();
            if rounded > best - 0.5 {
                return true;
            }
        }
        bound > best - tol
    };

    let mut tableau = Tableau::new(instance);
    let lp_iteration_limit = 50_000;
    let mut stack: Vec<Node> = Vec::new();
    let mut current = Some(Node {
        tableau: None,
        branch: None,
        parent_bound: f64::NEG_INFINITY,
    });
    let mut nodes: u64 = 0;
    let mut lp_iterations: u64 = 0;
    let mut root_lp = None;
    let mut interrupted = false;
    let mut stopped_first = false;
    let mut incomplete = false;
    let mut unbounded = false;
    let mut open_bound = f64::INFINITY;
    let mut node_cap = limits.node_limit;
    let mut found_by_search = false;

    loop {
        let node = match current.take() {
            Some(node) => node,
            None => match stack.pop() {
                Some(node) => node,
                None => break,
            },
        };
        if prunable(node.parent_bound, &inc) {
            continue;
        }
        let out_of_nodes = node_cap.is_some_and(|cap| nodes >= cap);
        let out_of_time = limits.time_limit.is_some_and(|t| start.elapsed() >= t);
        if out_of_nodes || out_of_time {
            open_bound = open_bound.min(node.parent_bound);
            for pending in &stack {
                open_bound = open_bound.min(pending.parent_bound);
            }
            interrupted = true;
            break;
        }

        let Node { tableau: saved, branch, .. } = node;
        if let Some(t) = saved {
            tableau = *t;
        }
        if let Some((col, lo, hi)) = branch {
            tableau.set_bounds(col, lo, hi);
        }
        nodes += 1;
        let cutoff = inc.state.as_ref().map_or(f64::INFINITY, |b| {
            let best = b.objective();
            if integral_objective {
                best - 1.0 + 1e-6
            } else {
                best - 1e-6 * best.abs().max(1.0)
            }
        });
        let before = tableau.iterations();
        let status = tableau.optimize_with_cutoff(lp_iteration_limit, cutoff);
        lp_iterations += (tableau.iterations() - before) as u64;
        if nodes == 1 {
            if status == LpStatus::Optimal {
                root_lp = Some(tableau.result(status));
            }
            if status == LpStatus::Unbounded {
                unbounded = true;
                break;
            }
        }
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible | LpStatus::Cutoff => continue,
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                log::debug!("node {nodes}: relaxation {status:?}, dropping node");
                incomplete = true;
                continue;
            }
        }
        let bound = tableau.objective();
        if prunable(bound, &inc) {
            continue;
        }
        if cutoff.is_finite() {
            tableau.tighten_by_reduced_cost(cutoff - bound);
        }
        let values = tableau.var_values();
        match most_fractional(&discrete, &values) {
            None => {
                let mut x = values;
                for &k in &discrete {
                    x[k] = x[k].round();
                }
                if !instance.is_feasible(&x) {
                    log::debug!("node {nodes}: rounded relaxation infeasible, dropping node");
                    incomplete = true;
                    continue;
                }
                let Ok(candidate) = SolutionState::new(instance, x) else {
                    continue;
                };
                let improves = inc
                    .state
                    .as_ref()
                    .is_none_or(|b| candidate.objective() < b.objective());
                if improves {
                    trace.push(IncumbentEvent {
                        node: nodes,
                        lp_iterations,
                        elapsed: start.elapsed(),
                        objective: candidate.objective(),
                    });
                    inc.state = Some(candidate);
                }
                if limits.stop_at_first_feasible && !found_by_search {
                    found_by_search = true;
                    match first_feasible_grace {
                        Some(grace) => {
                            let cap = nodes + grace;
                            node_cap = Some(node_cap.map_or(cap, |c| c.min(cap)));
                        }
                        None => {
                            stopped_first = true;
                            for pending in &stack {
                                open_bound = open_bound.min(pending.parent_bound);
                            }
                            break;
                        }
                    }
                }
            }
            Some(k) => {
                let col = tableau
                    .column_of(k)
                    .expect("fractional variable has a column");
                let v = instance.variable(k);
                let x = values[k];
                stack.push(Node {
                    tableau: Some(Box::new(tableau.clone())),
                    branch: Some((col, x.ceil(), v.upper)),
                    parent_bound: bound,
                });
                current = Some(Node {
                    tableau: None,
                    branch: Some((col, v.lower, x.floor())),
                    parent_bound: bound,
                });
            }
        }
    }

    let best = inc.state;
    let best_obj = best.as_ref().map_or(f64::INFINITY, SolutionState::objective);
    let (status, dual_bound) = if unbounded {
        (MipStatus::Unbounded, f64::NEG_INFINITY)
    } else if stopped_first {
        (MipStatus::Feasible, open_bound.min(best_obj))
    } else if interrupted {
        let status = if best.is_some() {
            MipStatus::LimitReachedWithIncumbent
        } else {
            MipStatus::LimitReachedNoIncumbent
        };
        (status, open_bound.min(best_obj))
    } else if incomplete {
        // Some nodes could not be bounded; optimality is not proven.
        let status = if best.is_some() {
            MipStatus::LimitReachedWithIncumbent
        } else {
            MipStatus::LimitReachedNoIncumbent
        };
        (status, f64::NEG_INFINITY)
    } else if best.is_some() {
        (MipStatus::Optimal, best_obj)
    } else {
        (MipStatus::Infeasible, f64::INFINITY)
    };

    MipResult {
        status,
        best,
        dual_bound,
        nodes_explored: nodes,
        lp_iterations,
        wall_time: start.elapsed(),
        root_lp,
        incumbent_trace: trace,
    }
}

/// Index of the discrete variable whose fractional part is closest to 1/2,
/// or `None` when all are integral within tolerance.
fn most_fractional(discrete: &[usize], values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in discrete {
        let frac = values[k] - values[k].floor();
        let dist = frac.min(1.0 - frac);
        if dist <= FEAS_TOL {
            continue;
        }
        let score = (frac - 0.5).abs();
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

/// True when every objective term is an integer multiple of a discrete
/// variable, so objective values differ by integers.
fn objective_is_integral(instance: &MipInstance) -> bool {
    instance
        .objective_coeffs()
        .iter()
        .zip(instance.variables())
        .all(|(&c, v)| c == 0.0 || (v.kind.is_discrete() && c.fract() == 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{brute_force_binary, ks3};
    use crate::model::{LinearConstraint, Relation, SubMipDelta, Variable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks3_optimum() {
        let r = solve_mip(&ks3(), &SolveLimits::default());
        assert_eq!(r.status, MipStatus::Optimal);
        let best = r.best.unwrap();
        assert_eq!(best.values(), &[1.0, 0.0, 1.0]);
        assert_eq!(best.objective(), -8.0);
        assert!((r.dual_bound - best.objective()).abs() <= 1e-6);
        let root = r.root_lp.unwrap();
        assert!((root.objective + 28.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn ks3_with_x1_zero() {
        let mut d = SubMipDelta::default();
        d.added_constraints
            .push(LinearConstraint::new("x1_off", [(0, 1.0)], Relation::Eq, 0.0));
        let sub = ks3().apply_delta(&d).unwrap();
        let (x, f) = brute_force_binary(&sub).unwrap();
        let r = solve_mip(&sub, &SolveLimits::default());
        assert_eq!(r.status, MipStatus::Optimal);
        assert_eq!(r.best.as_ref().unwrap().values(), &x[..]);
        assert_eq!(r.best.unwrap().objective(), f);
        assert_eq!(f, -7.0);
    }

    #[test]
    fn empty_feasible_set() {
        let inst = MipInstance::new(
            "t",
            vec![Variable::binary("x")],
            vec![LinearConstraint::new("r", [(0, 1.0)], Relation::Ge, 2.0)],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let r = solve_mip(&inst, &SolveLimits::default());
        assert_eq!(r.status, MipStatus::Infeasible);
        assert!(r.best.is_none());
    }

    #[test]
    fn general_integers_and_continuous() {
        // max 3x + 2y + z, x + y + z <= 4.5, x - y <= 1.5, x,y int in [0,5], z in [0,1]
        let inst = MipInstance::new_maximize(
            "t",
            vec![
                Variable::integer("x", 0.0, 5.0),
                Variable::integer("y", 0.0, 5.0),
                Variable::continuous("z", 0.0, 1.0),
            ],
            vec![
                LinearConstraint::new("a", [(0, 1.0), (1, 1.0), (2, 1.0)], Relation::Le, 4.5),
                LinearConstraint::new("b", [(0, 1.0), (1, -1.0)], Relation::Le, 1.5),
            ],
            vec![3.0, 2.0, 1.0],
            0.0,
        )
        .unwrap();
        let r = solve_mip(&inst, &SolveLimits::default());
        assert_eq!(r.status, MipStatus::Optimal);
        // enumerate integer pairs, z = min(1, 4.5 - x - y)
        let mut best = f64::INFINITY;
        for x in 0..=5 {
            for y in 0..=5 {
                let (x, y) = (f64::from(x), f64::from(y));
                let z = (4.5 - x - y).min(1.0);
                if z >= 0.0 && x - y <= 1.5 {
                    best = best.min(-(3.0 * x + 2.0 * y + z));
                }
            }
        }
        assert!((r.best.unwrap().objective() - best).abs() < 1e-9);
    }

    #[test]
    fn node_limit_and_anytime_trace() {
        let inst = random_binary(&mut ChaCha8Rng::seed_from_u64(3), 12, 6);
        let r = solve_mip(&inst, &SolveLimits::nodes(3));
        assert!(r.nodes_explored <= 3);
        assert!(matches!(
            r.status,
            MipStatus::LimitReachedWithIncumbent | MipStatus::LimitReachedNoIncumbent | MipStatus::Optimal
        ));
        let full = solve_mip(&inst, &SolveLimits::default());
        let objs: Vec<f64> = full.incumbent_trace.iter().map(|e| e.objective).collect();
        assert!(objs.windows(2).all(|w| w[1] <= w[0]));
        assert!(full.dual_bound <= full.best.unwrap().objective() + 1e-9);
    }

    #[test]
    fn warm_start_prunes_and_dominates() {
        let inst = random_binary(&mut ChaCha8Rng::seed_from_u64(5), 10, 4);
        let zero = SolutionState::new(&inst, vec![0.0; 10]).unwrap();
        let limits = SolveLimits {
            node_limit: Some(2),
            incumbent_warm_start: Some(zero.clone()),
            ..Default::default()
        };
        let r = solve_mip(&inst, &limits);
        assert!(r.best.unwrap().objective() <= zero.objective());
    }

    #[test]
    fn find_initial_flags_tiny_instances() {
        let init = find_initial(&ks3(), &InitialBudget::default());
        assert!(init.solved_upfront);
        assert_eq!(init.result.best.unwrap().objective(), -8.0);

        let infeasible = MipInstance::new(
            "t",
            vec![Variable::binary("x")],
            vec![LinearConstraint::new("r", [(0, 1.0)], Relation::Ge, 2.0)],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let init = find_initial(&infeasible, &InitialBudget::default());
        assert!(!init.solved_upfront);
        assert!(init.result.best.is_none());
    }

    #[test]
    fn find_initial_without_probe_stops_at_first_feasible() {
        let inst = random_binary(&mut ChaCha8Rng::seed_from_u64(11), 12, 6);
        let budget = InitialBudget {
            probe_nodes: 0,
            ..Default::default()
        };
        let init = find_initial(&inst, &budget);
        assert!(init.result.best.is_some());
        assert_eq!(init.result.incumbent_trace.len(), 1);
    }

    /// Random pure-binary packing instance (all-zero is always feasible).
    pub(crate) fn random_binary(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MipInstance {
        let vars = (0..n).map(|k| Variable::binary(format!("x{k}"))).collect();
        let cons = (0..m)
            .map(|i| {
                let coeffs: Vec<_> = (0..n).map(|k| (k, f64::from(rng.random_range(0..10)))).collect();
                let total: f64 = coeffs.iter().map(|c| c.1).sum();
                LinearConstraint::new(format!("r{i}"), coeffs, Relation::Le, (total / 2.0).floor())
            })
            .collect();
        let c = (0..n).map(|_| -f64::from(rng.random_range(1..20))).collect();
        MipInstance::new("rand", vars, cons, c, 0.0).unwrap()
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..30 {
            let n = rng.random_range(2..=10);
            let m = rng.random_range(1..=5);
            let inst = random_binary(&mut rng, n, m);
            let (_, f) = brute_force_binary(&inst).unwrap();
            let r = solve_mip(&inst, &SolveLimits::default());
            assert_eq!(r.status, MipStatus::Optimal);
            assert_eq!(r.best.unwrap().objective(), f);
        }
    }
}
