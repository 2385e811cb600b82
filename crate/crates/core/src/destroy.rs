//! Destroy operators. Each maps the maintained base model, the previous
//! state and the cached root relaxation to a [`SubMipDelta`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::model::{
    IndexSets, LinearConstraint, MipInstance, ObjectiveReplacement, Relation, SlackVar, SolutionState, SubMipDelta,
};

/// Tolerance for "same value" and "fractional" tests.
pub const INT_TOL: f64 = 1e-6;
/// Objective penalty on the proximity slack.
pub const PROXIMITY_PENALTY: f64 = 100.0;
/// Lower end of the local-branching flip range, as a fraction of |B|.
pub const LB_MIN_FRACTION: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DestroyError {
    #[error("unknown operator label {0:?}")]
    UnknownLabel(String),
    #[error("operator {label}: size parameter {delta} not in (0, 1]")]
    BadDelta { label: String, delta: f64 },
    #[error("operator {0} is not applicable to this instance")]
    Inapplicable(String),
    #[error("crossover needs a random feasible solution and none was found")]
    NoRandomSolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorKind {
    Crossover,
    Dins,
    LocalBranching,
    Mutation,
    Proximity,
    RandomObjective,
    Rens,
    Rins,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 8] = [
        OperatorKind::Crossover,
        OperatorKind::Dins,
        OperatorKind::LocalBranching,
        OperatorKind::Mutation,
        OperatorKind::Proximity,
        OperatorKind::RandomObjective,
        OperatorKind::Rens,
        OperatorKind::Rins,
    ];

    pub fn takes_delta(self) -> bool {
        !matches!(
            self,
            OperatorKind::Crossover | OperatorKind::Dins | OperatorKind::RandomObjective
        )
    }

    /// Prefix used in labels.
    pub fn prefix(self) -> &'static str {
        match self {
            OperatorKind::Crossover => "crossover",
            OperatorKind::Dins => "dins",
            OperatorKind::LocalBranching => "lb",
            OperatorKind::Mutation => "mutation",
            OperatorKind::Proximity => "proximity",
            OperatorKind::RandomObjective => "random_objective",
            OperatorKind::Rens => "rens",
            OperatorKind::Rins => "rins",
        }
    }

    /// Name used when size variants are grouped in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            OperatorKind::Crossover => "Crossover",
            OperatorKind::Dins => "DINS",
            OperatorKind::LocalBranching => "Local Branching",
            OperatorKind::Mutation => "Mutation",
            OperatorKind::Proximity => "Proximity",
            OperatorKind::RandomObjective => "Random Objective",
            OperatorKind::Rens => "RENS",
            OperatorKind::Rins => "RINS",
        }
    }

    pub fn needs_binaries(self) -> bool {
        matches!(self, OperatorKind::LocalBranching | OperatorKind::Proximity)
    }

    pub fn needs_discrete(self) -> bool {
        self != OperatorKind::RandomObjective
    }

    pub fn is_applicable(self, sets: &IndexSets) -> bool {
        if self.needs_binaries() {
            !sets.binary.is_empty()
        } else if self.needs_discrete() {
            !sets.discrete.is_empty()
        } else {
            true
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// An operator with its size parameter, e.g. `mutation_75`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kind: OperatorKind,
    delta: Option<f64>,
    label: String,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, delta: Option<f64>) -> Result<Self, DestroyError> {
        let label = match delta {
            Some(d) => format!("{}_{:02}", kind.prefix(), (d * 100.0).round() as i64),
            None => kind.prefix().to_string(),
        };
        match (kind.takes_delta(), delta) {
            (true, Some(d)) if d > 0.0 && d <= 1.0 => {}
            (true, d) => {
                return Err(DestroyError::BadDelta {
                    label,
                    delta: d.unwrap_or(f64::NAN),
                })
            }
            (false, None) => {}
            (false, Some(_)) => return Err(DestroyError::UnknownLabel(label)),
        }
        Ok(OperatorSpec { kind, delta, label })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The sixteen-arm portfolio.
    pub fn paper16() -> Vec<OperatorSpec> {
        use OperatorKind::*;
        let mut out = vec![OperatorSpec::new(Crossover, None).unwrap()];
        let variants: [(OperatorKind, [f64; 3]); 5] = [
            (LocalBranching, [0.10, 0.25, 0.50]),
            (Mutation, [0.25, 0.50, 0.75]),
            (Proximity, [0.05, 0.15, 0.30]),
            (Rens, [0.25, 0.50, 0.75]),
            (Rins, [0.25, 0.50, 0.75]),
        ];
        for (kind, deltas) in variants {
            for d in deltas {
                out.push(OperatorSpec::new(kind, Some(d)).unwrap());
            }
        }
        out
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for OperatorSpec {
    type Err = DestroyError;

    /// Accepts `crossover`, `dins`, `random_objective` and `<prefix>_<pct>`
    /// for the sized operators (`local_branching_<pct>` also works).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DestroyError::UnknownLabel(s.to_string());
        for kind in [OperatorKind::Crossover, OperatorKind::Dins, OperatorKind::RandomObjective] {
            if s == kind.prefix() {
                return OperatorSpec::new(kind, None);
            }
        }
        let (prefix, pct) = s.rsplit_once('_').ok_or_else(unknown)?;
        let kind = match prefix {
            "lb" | "local_branching" => OperatorKind::LocalBranching,
            "mutation" => OperatorKind::Mutation,
            "proximity" => OperatorKind::Proximity,
            "rens" => OperatorKind::Rens,
            "rins" => OperatorKind::Rins,
            _ => return Err(unknown()),
        };
        if pct.is_empty() || !pct.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let pct: u32 = pct.parse().map_err(|_| unknown())?;
        OperatorSpec::new(kind, Some(f64::from(pct) / 100.0))
    }
}

/// What an operator sees of the search.
#[derive(Debug, Clone, Copy)]
pub struct DestroyContext<'a> {
    pub base: &'a MipInstance,
    pub sets: &'a IndexSets,
    /// The previous state `x_{t-1}`.
    pub previous: &'a SolutionState,
    /// Root LP solution, solved once per search.
    pub root_lp: &'a [f64],
}

/// Builds the delta for `spec`. Crossover needs `x_rnd`, a random feasible
/// solution, in `random_solution`.
pub fn destroy(
    spec: &OperatorSpec,
    ctx: &DestroyContext<'_>,
    rng: &mut impl Rng,
    random_solution: Option<&SolutionState>,
) -> Result<SubMipDelta, DestroyError> {
    if !spec.kind.is_applicable(ctx.sets) {
        return Err(DestroyError::Inapplicable(spec.label.clone()));
    }
    let delta = spec.delta.unwrap_or(1.0);
    Ok(match spec.kind {
        OperatorKind::Crossover => {
            let x_rnd = random_solution.ok_or(DestroyError::NoRandomSolution)?;
            crossover(ctx, x_rnd.values())
        }
        OperatorKind::Dins => dins(ctx),
        OperatorKind::LocalBranching => local_branching(ctx, delta, rng),
        OperatorKind::Mutation => mutation(ctx, delta, rng),
        OperatorKind::Proximity => proximity(ctx, delta),
        OperatorKind::RandomObjective => random_objective(ctx.base, rng),
        OperatorKind::Rens => rens(ctx, delta, rng),
        OperatorKind::Rins => rins(ctx, delta, rng),
    })
}

/// `round(delta * size)` with halves rounded up, clamped to `[1, size]`.
pub fn destroy_count(delta: f64, size: usize) -> usize {
    if size == 0 {
        return 0;
    }
    ((delta * size as f64 + 0.5 + 1e-12).floor() as usize).clamp(1, size)
}

/// Inclusive range of the local-branching flip budget for `|B| = binaries`.
pub fn flip_range(delta: f64, binaries: usize) -> (usize, usize) {
    let b = binaries as f64;
    let lo = ((LB_MIN_FRACTION * b - 1e-9).ceil() as usize).max(1);
    let hi = ((delta * b + 1e-9).floor() as usize).max(1);
    (lo, hi.max(lo))
}

fn prev(ctx: &DestroyContext<'_>, k: usize) -> f64 {
    let x = ctx.previous.values()[k];
    if ctx.base.variable(k).kind.is_discrete() {
        x.round()
    } else {
        x
    }
}

/// Fixes every discrete variable except those in `free` to `x_{t-1}`.
fn fix_discrete_except(ctx: &DestroyContext<'_>, free: &[usize]) -> BTreeMap<usize, f64> {
    let mut keep = vec![false; ctx.base.num_vars()];
    for &k in free {
        keep[k] = true;
    }
    ctx.sets
        .discrete
        .iter()
        .filter(|&&k| !keep[k])
        .map(|&k| (k, prev(ctx, k)))
        .collect()
}

fn random_pick(rng: &mut impl Rng, pool: &[usize], count: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = sample(rng, pool.len(), count.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn is_fractional(x: f64) -> bool {
    (x - x.round()).abs() > INT_TOL
}

/// Fixes the discrete variables on which `x_{t-1}` and `x_rnd` agree.
pub fn crossover(ctx: &DestroyContext<'_>, x_rnd: &[f64]) -> SubMipDelta {
    let fixings = ctx
        .sets
        .discrete
        .iter()
        .filter(|&&k| (ctx.previous.values()[k] - x_rnd[k]).abs() <= INT_TOL)
        .map(|&k| (k, prev(ctx, k)))
        .collect();
    SubMipDelta {
        fixings,
        ..Default::default()
    }
}

/// Fixes variables whose previous value is within 0.5 of the relaxation and
/// confines the rest to move no further from `x_lp` than `x_{t-1}` is.
pub fn dins(ctx: &DestroyContext<'_>) -> SubMipDelta {
    let mut delta = SubMipDelta::default();
    for &k in &ctx.sets.discrete {
        let xp = prev(ctx, k);
        let lp = ctx.root_lp[k];
        let d = (xp - lp).abs();
        if d < 0.5 {
            delta.fixings.insert(k, xp);
            continue;
        }
        let v = ctx.base.variable(k);
        let lo = (lp - d + 1e-9).floor().max(v.lower);
        let hi = (lp + d - 1e-9).ceil().min(v.upper);
        if lo > v.lower || hi < v.upper {
            delta.bound_changes.insert(k, (lo, hi));
        }
    }
    delta
}

/// Hamming distance from `x_{t-1}` over the binaries, as `(coeffs, constant)`.
fn hamming(ctx: &DestroyContext<'_>) -> (Vec<(usize, f64)>, f64) {
    let mut coeffs = Vec::with_capacity(ctx.sets.binary.len());
    let mut ones = 0.0;
    for &k in &ctx.sets.binary {
        if prev(ctx, k) >= 0.5 {
            coeffs.push((k, -1.0));
            ones += 1.0;
        } else {
            coeffs.push((k, 1.0));
        }
    }
    (coeffs, ones)
}

/// Adds the Hamming ball `dist(x, x_{t-1}) <= kappa` over the binaries with
/// `kappa` drawn from [`flip_range`].
pub fn local_branching(ctx: &DestroyContext<'_>, delta: f64, rng: &mut impl Rng) -> SubMipDelta {
    let (lo, hi) = flip_range(delta, ctx.sets.binary.len());
    let kappa = rng.random_range(lo..=hi);
    local_branching_with(ctx, kappa)
}

pub fn local_branching_with(ctx: &DestroyContext<'_>, kappa: usize) -> SubMipDelta {
    let (coeffs, ones) = hamming(ctx);
    SubMipDelta {
        added_constraints: vec![LinearConstraint::new(
            "local_branching",
            coeffs,
            Relation::Le,
            kappa as f64 - ones,
        )],
        ..Default::default()
    }
}

/// Leaves a random `destroy_count(delta, |D|)` subset of the discrete
/// variables free and fixes the rest.
pub fn mutation(ctx: &DestroyContext<'_>, delta: f64, rng: &mut impl Rng) -> SubMipDelta {
    let count = destroy_count(delta, ctx.sets.discrete.len());
    let free = random_pick(rng, &ctx.sets.discrete, count);
    SubMipDelta {
        fixings: fix_discrete_except(ctx, &free),
        ..Default::default()
    }
}

/// Minimizes the Hamming distance to `x_{t-1}` subject to improving the
/// objective by `delta * max(|f|, 1)`, softened by a penalized slack.
pub fn proximity(ctx: &DestroyContext<'_>, delta: f64) -> SubMipDelta {
    let n = ctx.base.num_vars();
    let f = ctx.previous.objective();
    let target = f - delta * f.abs().max(1.0);
    let (coeffs, ones) = hamming(ctx);
    let mut row: Vec<(usize, f64)> = ctx
        .base
        .objective_coeffs()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(k, &c)| (k, c))
        .collect();
    row.push((n, -1.0));
    SubMipDelta {
        added_constraints: vec![LinearConstraint::new(
            "proximity_target",
            row,
            Relation::Le,
            target - ctx.base.objective_constant(),
        )],
        objective_replacement: Some(ObjectiveReplacement { coeffs, constant: ones }),
        slack_vars: vec![SlackVar {
            lower: 0.0,
            upper: f64::INFINITY,
            penalty: PROXIMITY_PENALTY,
        }],
        ..Default::default()
    }
}

/// Replaces the objective by one with coefficients uniform in [-1, 1].
pub fn random_objective(base: &MipInstance, rng: &mut impl Rng) -> SubMipDelta {
    let coeffs = (0..base.num_vars()).map(|k| (k, rng.random_range(-1.0..=1.0))).collect();
    SubMipDelta {
        objective_replacement: Some(ObjectiveReplacement { coeffs, constant: 0.0 }),
        ..Default::default()
    }
}

/// Relaxes a random part of the LP-fractional variables to their rounding
/// interval and fixes every other discrete variable.
pub fn rens(ctx: &DestroyContext<'_>, delta: f64, rng: &mut impl Rng) -> SubMipDelta {
    let fractional: Vec<usize> = ctx
        .sets
        .discrete
        .iter()
        .copied()
        .filter(|&k| is_fractional(ctx.root_lp[k]))
        .collect();
    let chosen = random_pick(rng, &fractional, destroy_count(delta, fractional.len()));
    let mut out = SubMipDelta {
        fixings: fix_discrete_except(ctx, &chosen),
        ..Default::default()
    };
    for &k in &chosen {
        let lp = ctx.root_lp[k];
        out.bound_changes.insert(k, (lp.floor(), lp.ceil()));
    }
    out
}

/// Frees a random part of the variables where `x_{t-1}` differs from the
/// relaxation and fixes every other discrete variable.
pub fn rins(ctx: &DestroyContext<'_>, delta: f64, rng: &mut impl Rng) -> SubMipDelta {
    let differing: Vec<usize> = ctx
        .sets
        .discrete
        .iter()
        .copied()
        .filter(|&k| (ctx.previous.values()[k] - ctx.root_lp[k]).abs() > INT_TOL)
        .collect();
    let chosen = random_pick(rng, &differing, destroy_count(delta, differing.len()));
    SubMipDelta {
        fixings: fix_discrete_except(ctx, &chosen),
        ..Default::default()
    }
}
