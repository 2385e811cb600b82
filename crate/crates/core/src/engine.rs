//! The search loop: initial solve, then repeatedly select an arm, destroy,
//! repair, classify the outcome, accept or reject, and reward the arm.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::acceptance::{Criterion, CriterionState, OutcomeKind, ScheduleError};
use crate::bandit::{Bandit, BanditError, Policy, RewardScheme};
use crate::bnb::{find_initial, InitialBudget, MipResult, SolveLimits};
use crate::destroy::{destroy, random_objective, DestroyContext, OperatorKind, OperatorSpec};
use crate::model::{MipInstance, SolutionState, FEAS_TOL};
use crate::repair::{repair, Backend, RepairRequest};
use crate::simplex::{solve_lp, LpStatus};

/// Nominal seconds per unit of solver work on the deterministic clock.
pub const WORK_SECONDS_PER_UNIT: f64 = 1e-5;
/// Consecutive failed repairs after which the search gives up.
pub const MAX_CONSECUTIVE_BACKEND_ERRORS: usize = 10;
const ROOT_LP_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("portfolio is empty")]
    EmptyPortfolio,
    #[error("no operator in the portfolio applies to this instance ({0})")]
    NothingApplicable(String),
    #[error("duplicate operator label {0:?}")]
    DuplicateLabel(String),
    #[error("{0}")]
    Bandit(#[from] BanditError),
    #[error("{0}")]
    Schedule(#[from] ScheduleError),
    #[error("Thompson sampling needs a binary reward vector, got {0:?}")]
    NonBinaryRewards([f64; 4]),
    #[error("no stopping condition: set max iterations or max time")]
    NoStop,
    #[error("budget {0} must be positive")]
    ZeroBudget(&'static str),
}

/// How elapsed time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockKind {
    #[default]
    Wall,
    /// Simplex pivots plus branch-and-bound nodes, scaled by
    /// [`WORK_SECONDS_PER_UNIT`]. Reproducible across machines.
    Work,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub portfolio: Vec<OperatorSpec>,
    pub policy: Policy,
    pub rewards: RewardScheme,
    pub criterion: Criterion,
    pub backend: Backend,
    pub initial: InitialBudget,
    pub iteration_time: Duration,
    pub lb_iteration_time: Duration,
    pub iteration_nodes: Option<u64>,
    /// Share of the iteration budget given to the random-objective solve
    /// that feeds crossover.
    pub random_solution_share: f64,
    pub max_iterations: Option<u64>,
    pub max_time: Option<Duration>,
    pub clock: ClockKind,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            portfolio: OperatorSpec::paper16(),
            policy: Policy::Thompson,
            rewards: RewardScheme::ACCEPT_SAME,
            criterion: Criterion::SimulatedAnnealing(Default::default()),
            backend: Backend::Builtin,
            initial: InitialBudget::default(),
            iteration_time: Duration::from_secs(60),
            lb_iteration_time: Duration::from_secs(150),
            iteration_nodes: Some(5000),
            random_solution_share: 0.1,
            max_iterations: Some(200),
            max_time: None,
            clock: ClockKind::Wall,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.portfolio.is_empty() {
            return Err(ConfigError::EmptyPortfolio);
        }
        let mut seen = HashSet::new();
        for spec in &self.portfolio {
            if !seen.insert(spec.label()) {
                return Err(ConfigError::DuplicateLabel(spec.label().to_string()));
            }
        }
        self.policy.validate()?;
        if self.policy == Policy::Thompson && !self.rewards.is_binary() {
            return Err(ConfigError::NonBinaryRewards(self.rewards.values()));
        }
        CriterionState::new(self.criterion)?;
        if self.max_iterations.is_none() && self.max_time.is_none() {
            return Err(ConfigError::NoStop);
        }
        if self.iteration_time.is_zero() {
            return Err(ConfigError::ZeroBudget("iteration time"));
        }
        if self.lb_iteration_time.is_zero() {
            return Err(ConfigError::ZeroBudget("local branching iteration time"));
        }
        if self.initial.time_limit.is_zero() {
            return Err(ConfigError::ZeroBudget("initial time"));
        }
        if self.iteration_nodes == Some(0) {
            return Err(ConfigError::ZeroBudget("iteration nodes"));
        }
        Ok(())
    }
}

/// One (destroy, repair) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub destroy: OperatorSpec,
    pub repair: &'static str,
}

impl Arm {
    pub fn label(&self) -> &str {
        self.destroy.label()
    }
}

fn repair_label(backend: &Backend) -> &'static str {
    match backend {
        Backend::Builtin => "bnb",
        Backend::External(_) => "external",
    }
}

/// Keeps the operators whose variable-type requirements the instance meets.
pub fn filter_portfolio(
    instance: &MipInstance,
    portfolio: &[OperatorSpec],
    backend: &Backend,
) -> Result<Vec<Arm>, ConfigError> {
    if portfolio.is_empty() {
        return Err(ConfigError::EmptyPortfolio);
    }
    let sets = instance.index_sets();
    let arms: Vec<Arm> = portfolio
        .iter()
        .filter(|s| s.kind().is_applicable(&sets))
        .map(|s| Arm {
            destroy: s.clone(),
            repair: repair_label(backend),
        })
        .collect();
    if arms.is_empty() {
        let cause = format!(
            "{} binary, {} integer, {} continuous variables",
            sets.binary.len(),
            sets.integer.len(),
            sets.continuous.len()
        );
        return Err(ConfigError::NothingApplicable(cause));
    }
    Ok(arms)
}

/// Outcome classification, shared with the acceptance decision.
pub fn classify_outcome(
    criterion: &CriterionState,
    current: f64,
    candidate: f64,
    best: f64,
    rng: &mut impl rand::Rng,
) -> OutcomeKind {
    criterion.decide(current, candidate, best, rng).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub iteration: u64,
    /// Clock reading at the end of the iteration, in seconds.
    pub time: f64,
    /// Index into [`SearchTrace::arms`].
    pub arm: usize,
    /// Base objective of the repaired point, if repair produced one.
    pub candidate: Option<f64>,
    pub outcome: OutcomeKind,
    pub accepted: bool,
    pub current: f64,
    pub best: f64,
    pub temperature: Option<f64>,
    /// Why no candidate was produced, when that was an error.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTrace {
    pub arms: Vec<String>,
    /// Incumbent improvements during the initial solve as (time, objective).
    pub initial: Vec<(f64, f64)>,
    pub events: Vec<TraceEvent>,
}

impl SearchTrace {
    pub fn time_to_first_feasible(&self) -> Option<f64> {
        self.initial.first().map(|e| e.0)
    }

    /// `(time, best objective)` at every change of the best objective.
    pub fn best_breakpoints(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let points = self
            .initial
            .iter()
            .copied()
            .chain(self.events.iter().map(|e| (e.time, e.best)));
        for (t, v) in points {
            match out.last_mut() {
                Some(last) if v >= last.1 => {}
                Some(last) if t <= last.0 => last.1 = v,
                _ => out.push((t, v)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    Completed,
    SolvedUpfront,
    NoInitialFeasible,
    /// Too many consecutive repair failures.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub best: Option<SolutionState>,
    pub trace: SearchTrace,
    /// Clock reading when the search ended, in seconds.
    pub end_time: f64,
    pub root_lp_solves: u32,
    pub message: Option<String>,
}

struct Clock {
    kind: ClockKind,
    start: Instant,
    work: u64,
}

impl Clock {
    fn charge(&mut self, result: &MipResult) {
        self.work += result.lp_iterations + result.nodes_explored;
    }

    fn now(&self) -> f64 {
        match self.kind {
            ClockKind::Wall => self.start.elapsed().as_secs_f64(),
            ClockKind::Work => self.work as f64 * WORK_SECONDS_PER_UNIT,
        }
    }
}

fn scaled(d: Duration, share: f64) -> Duration {
    d.mul_f64(share).max(Duration::from_millis(1))
}

pub fn solve(instance: &MipInstance, config: &SearchConfig) -> Result<SearchResult, ConfigError> {
    config.validate()?;
    let arms = filter_portfolio(instance, &config.portfolio, &config.backend)?;
    let mut bandit = Bandit::new(config.policy, arms.len())?;
    let mut criterion = CriterionState::new(config.criterion)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clock = Clock {
        kind: config.clock,
        start: Instant::now(),
        work: 0,
    };
    let mut trace = SearchTrace {
        arms: arms.iter().map(|a| a.label().to_string()).collect(),
        ..Default::default()
    };

    let init = find_initial(instance, &config.initial);
    for ev in &init.result.incumbent_trace {
        let t = match clock.kind {
            ClockKind::Wall => ev.elapsed.as_secs_f64(),
            ClockKind::Work => (ev.lp_iterations + ev.node) as f64 * WORK_SECONDS_PER_UNIT,
        };
        trace.initial.push((t, ev.objective));
    }
    clock.charge(&init.result);
    let finish = |status, best, trace, clock: &Clock, root_lp_solves, message| {
        Ok(SearchResult {
            status,
            best,
            trace,
            end_time: clock.now(),
            root_lp_solves,
            message,
        })
    };
    let Some(initial) = init.result.best.clone() else {
        let msg = format!("initial solve ended {:?} without a feasible solution", init.result.status);
        return finish(SearchStatus::NoInitialFeasible, None, trace, &clock, 0, Some(msg));
    };
    if init.solved_upfront {
        return finish(SearchStatus::SolvedUpfront, Some(initial), trace, &clock, 0, None);
    }

    let mut root_lp_solves = 0;
    let root_lp = match init.result.root_lp.as_ref() {
        Some(lp) => lp.values.clone(),
        None => {
            root_lp_solves += 1;
            let lp = solve_lp(instance, ROOT_LP_ITERATIONS);
            if lp.status == LpStatus::Optimal {
                lp.values
            } else {
                initial.values().to_vec()
            }
        }
    };
    let sets = instance.index_sets();

    let mut current = initial.clone();
    let mut best = initial;
    let mut failures = 0usize;
    let mut iteration = 0u64;
    let mut aborted = None;
    loop {
        if config.max_iterations.is_some_and(|m| iteration >= m)
            || config.max_time.is_some_and(|t| clock.now() >= t.as_secs_f64())
        {
            break;
        }
        iteration += 1;
        let a = bandit.select(&mut rng);
        let spec = &arms[a].destroy;
        let is_lb = spec.kind() == OperatorKind::LocalBranching;
        let time = if is_lb { config.lb_iteration_time } else { config.iteration_time };
        let limits = SolveLimits {
            time_limit: Some(time),
            node_limit: config.iteration_nodes,
            ..Default::default()
        };

        let ctx = DestroyContext {
            base: instance,
            sets: &sets,
            previous: &current,
            root_lp: &root_lp,
        };
        let mut backend_failed = false;
        let x_rnd = if spec.kind() == OperatorKind::Crossover {
            let delta = random_objective(instance, &mut rng);
            let share = config.random_solution_share;
            let helper_limits = SolveLimits {
                time_limit: Some(scaled(time, share)),
                node_limit: config.iteration_nodes.map(|n| ((n as f64 * share).ceil() as u64).max(1)),
                ..Default::default()
            };
            let req = RepairRequest {
                base: instance,
                delta: &delta,
                limits: helper_limits,
                warm_start: None,
            };
            match repair(&req, &config.backend) {
                Ok(r) => {
                    clock.charge(&r.result);
                    r.candidate
                }
                Err(e) => {
                    log::warn!("iteration {iteration}: random solution for crossover failed: {e}");
                    backend_failed = true;
                    None
                }
            }
        } else {
            None
        };

        let (candidate, error) = match destroy(spec, &ctx, &mut rng, x_rnd.as_ref()) {
            Err(e) => (None, Some(e.to_string())),
            Ok(delta) => {
                let req = RepairRequest {
                    base: instance,
                    delta: &delta,
                    limits,
                    warm_start: Some(&current),
                };
                match repair(&req, &config.backend) {
                    Ok(r) => {
                        clock.charge(&r.result);
                        (r.candidate, None)
                    }
                    Err(e) => {
                        backend_failed = true;
                        (None, Some(e.to_string()))
                    }
                }
            }
        };
        if backend_failed {
            failures += 1;
        } else {
            failures = 0;
        }
        let candidate = candidate.filter(|c| {
            let ok = instance
                .check_feasibility(c.values(), FEAS_TOL)
                .is_ok_and(|r| r.is_feasible());
            if !ok {
                log::warn!("iteration {iteration}: repaired point violates the base model, discarded");
            }
            ok
        });

        let (outcome, accepted) = match &candidate {
            Some(c) => criterion.decide(current.objective(), c.objective(), best.objective(), &mut rng),
            None => (OutcomeKind::Rejected, false),
        };
        let reward = config.rewards.reward(outcome);
        bandit.update(a, reward)?;
        let candidate_obj = candidate.as_ref().map(SolutionState::objective);
        if accepted {
            let c = candidate.expect("accepted outcome has a candidate");
            if outcome == OutcomeKind::Best {
                best = c.clone();
            }
            current = c;
        }
        let temperature = criterion.temperature();
        criterion.advance();
        trace.events.push(TraceEvent {
            iteration,
            time: clock.now(),
            arm: a,
            candidate: candidate_obj,
            outcome,
            accepted,
            current: current.objective(),
            best: best.objective(),
            temperature,
            error: error.clone(),
        });
        if failures >= MAX_CONSECUTIVE_BACKEND_ERRORS {
            aborted = Some(format!(
                "{failures} consecutive repair failures; last: {}",
                error.unwrap_or_default()
            ));
            break;
        }
    }

    debug_assert!(instance.is_feasible(best.values()));
    let status = if aborted.is_some() {
        SearchStatus::Aborted
    } else {
        SearchStatus::Completed
    };
    finish(status, Some(best), trace, &clock, root_lp_solves, aborted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::preset;
    use crate::model::fixtures::ks3;
    use crate::model::{LinearConstraint, Relation, Variable};

    fn ks3_config(iterations: u64) -> SearchConfig {
        let (policy, rewards) = preset("TS_accept_same").unwrap();
        SearchConfig {
            policy,
            rewards,
            max_iterations: Some(iterations),
            seed: 7,
            initial: InitialBudget {
                probe_nodes: 0,
                ..Default::default()
            },
            clock: ClockKind::Work,
            ..Default::default()
        }
    }

    #[test]
    fn ks3_reaches_optimum() {
        let r = solve(&ks3(), &ks3_config(10)).unwrap();
        assert_eq!(r.status, SearchStatus::Completed);
        assert_eq!(r.best.unwrap().objective(), -8.0);
        assert_eq!(r.trace.events.len(), 10);
        assert!(r.root_lp_solves <= 1);
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let r = solve(&ks3(), &ks3_config(0)).unwrap();
        assert!(r.trace.events.is_empty());
        let first = r.trace.initial.last().unwrap().1;
        assert_eq!(r.best.unwrap().objective(), first);
    }

    #[test]
    fn solved_upfront_short_circuits() {
        let mut cfg = ks3_config(10);
        cfg.initial.probe_nodes = 1000;
        let r = solve(&ks3(), &cfg).unwrap();
        assert_eq!(r.status, SearchStatus::SolvedUpfront);
        assert!(r.trace.events.is_empty());
    }

    #[test]
    fn infeasible_has_no_initial() {
        let inst = MipInstance::new(
            "inf",
            vec![Variable::binary("x")],
            vec![LinearConstraint::new("r", [(0, 1.0)], Relation::Ge, 2.0)],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let r = solve(&inst, &ks3_config(5)).unwrap();
        assert_eq!(r.status, SearchStatus::NoInitialFeasible);
        assert!(r.best.is_none());
    }

    #[test]
    fn portfolio_filtering() {
        let paper = OperatorSpec::paper16();
        let integer = MipInstance::new(
            "i",
            vec![Variable::integer("y", 0.0, 5.0)],
            vec![],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let arms = filter_portfolio(&integer, &paper, &Backend::Builtin).unwrap();
        let labels: Vec<&str> = arms.iter().map(Arm::label).collect();
        assert_eq!(
            labels,
            [
                "crossover",
                "mutation_25",
                "mutation_50",
                "mutation_75",
                "rens_25",
                "rens_50",
                "rens_75",
                "rins_25",
                "rins_50",
                "rins_75"
            ]
        );
        assert_eq!(filter_portfolio(&ks3(), &paper, &Backend::Builtin).unwrap().len(), 16);
        let continuous = MipInstance::new(
            "c",
            vec![Variable::continuous("x", 0.0, 1.0)],
            vec![],
            vec![1.0],
            0.0,
        )
        .unwrap();
        assert!(matches!(
            filter_portfolio(&continuous, &paper, &Backend::Builtin),
            Err(ConfigError::NothingApplicable(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ks3_config(1);
        cfg.rewards = RewardScheme::LINEAR;
        assert!(matches!(cfg.validate(), Err(ConfigError::NonBinaryRewards(_))));
        let mut cfg = ks3_config(1);
        cfg.max_iterations = None;
        assert_eq!(cfg.validate(), Err(ConfigError::NoStop));
        let mut cfg = ks3_config(1);
        cfg.portfolio.push(cfg.portfolio[0].clone());
        assert!(matches!(cfg.validate(), Err(ConfigError::DuplicateLabel(_))));
    }

    #[test]
    fn breakpoints_keep_improvements_only() {
        let ev = |time, best| TraceEvent {
            iteration: 0,
            time,
            arm: 0,
            candidate: None,
            outcome: OutcomeKind::Rejected,
            accepted: false,
            current: best,
            best,
            temperature: None,
            error: None,
        };
        let trace = SearchTrace {
            arms: vec!["a".into()],
            initial: vec![(0.5, 0.0), (0.5, -1.0)],
            events: vec![ev(1.0, -1.0), ev(2.0, -3.0), ev(3.0, -3.0)],
        };
        assert_eq!(trace.best_breakpoints(), vec![(0.5, -1.0), (2.0, -3.0)]);
        assert_eq!(trace.time_to_first_feasible(), Some(0.5));
    }
}
