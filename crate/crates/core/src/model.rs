//! In-memory mixed-integer program: variables, sparse rows, objective,
//! evaluation, feasibility checking and sub-MIP materialization.
//!
//! Every instance is a minimization problem. Maximization models are
//! normalized at construction time by negating the objective.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Absolute tolerance used by default for bounds, rows and integrality.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("binary variable {name} has bounds [{lower}, {upper}] outside [0, 1]")]
    BinaryBounds { name: String, lower: f64, upper: f64 },
    #[error("constraint {name} references variable index {index} (only {len} variables)")]
    BadIndex { name: String, index: usize, len: usize },
    #[error("constraint {0} has no nonzero coefficients")]
    EmptyConstraint(String),
    #[error("objective has {got} coefficients for {expected} variables")]
    ObjectiveLength { expected: usize, got: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("invalid delta: {0}")]
    InvalidDelta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: Arc<str>,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

impl Variable {
    pub fn new(name: impl Into<Arc<str>>, lower: f64, upper: f64, kind: VarKind) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            kind,
        }
    }

    pub fn binary(name: impl Into<Arc<str>>) -> Self {
        Self::new(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn integer(name: impl Into<Arc<str>>, lower: f64, upper: f64) -> Self {
        Self::new(name, lower, upper, VarKind::Integer)
    }

    pub fn continuous(name: impl Into<Arc<str>>, lower: f64, upper: f64) -> Self {
        Self::new(name, lower, upper, VarKind::Continuous)
    }

    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One sparse row `coeffs · x (relation) rhs`. Coefficients are kept sorted
/// by variable index with duplicates merged and zeros dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: Arc<str>,
    coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(
        name: impl Into<Arc<str>>,
        coeffs: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, a) in coeffs {
            *merged.entry(k).or_insert(0.0) += a;
        }
        LinearConstraint {
            name: name.into(),
            coeffs: merged.into_iter().filter(|&(_, a)| a != 0.0).collect(),
            relation,
            rhs,
        }
    }

    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, a)| a * values[k]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Disjoint classification of variable indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub all: Vec<usize>,
    pub binary: Vec<usize>,
    pub integer: Vec<usize>,
    pub discrete: Vec<usize>,
    pub continuous: Vec<usize>,
}

/// Canonical minimization MIP.
///
/// Rows are stored as shared segments so that sub-MIPs built from a
/// [`SubMipDelta`] reuse the base rows and only own what the delta appends.
#[derive(Debug, Clone)]
pub struct MipInstance {
    name: String,
    variables: Arc<Vec<Variable>>,
    row_segments: Vec<Arc<Vec<LinearConstraint>>>,
    objective: Arc<Vec<f64>>,
    objective_constant: f64,
}

impl MipInstance {
    /// Builds and validates a minimization instance. Integer variables with
    /// bounds exactly `[0, 1]` are classified as binary.
    pub fn new(
        name: impl Into<String>,
        variables: Vec<Variable>,
        constraints: Vec<LinearConstraint>,
        objective: Vec<f64>,
        objective_constant: f64,
    ) -> Result<Self, ModelError> {
        let mut variables = variables;
        for v in &mut variables {
            if v.kind == VarKind::Integer && v.lower == 0.0 && v.upper == 1.0 {
                v.kind = VarKind::Binary;
            }
        }
        let inst = MipInstance {
            name: name.into(),
            variables: Arc::new(variables),
            row_segments: vec![Arc::new(constraints)],
            objective: Arc::new(objective),
            objective_constant,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Same as [`MipInstance::new`] for a maximization objective: the
    /// coefficients and constant are negated.
    pub fn new_maximize(
        name: impl Into<String>,
        variables: Vec<Variable>,
        constraints: Vec<LinearConstraint>,
        objective: Vec<f64>,
        objective_constant: f64,
    ) -> Result<Self, ModelError> {
        let objective = objective.into_iter().map(|c| -c).collect();
        Self::new(name, variables, constraints, objective, -objective_constant)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        for v in self.variables.iter() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ModelError::InvertedBounds {
                    name: v.name.to_string(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds {
                    name: v.name.to_string(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        if self.objective.len() != n {
            return Err(ModelError::ObjectiveLength {
                expected: n,
                got: self.objective.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) || !self.objective_constant.is_finite() {
            return Err(ModelError::NonFinite("objective".into()));
        }
        for row in self.constraints() {
            if row.coeffs.is_empty() {
                return Err(ModelError::EmptyConstraint(row.name.to_string()));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(ModelError::NonFinite(row.name.to_string()));
            }
            if let Some(&(k, _)) = row.coeffs.iter().find(|&&(k, _)| k >= n) {
                return Err(ModelError::BadIndex {
                    name: row.name.to_string(),
                    index: k,
                    len: n,
                });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.row_segments.iter().map(|s| s.len()).sum()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, k: usize) -> &Variable {
        &self.variables[k]
    }

    pub fn constraints(&self) -> impl Iterator<Item = &LinearConstraint> + '_ {
        self.row_segments.iter().flat_map(|s| s.iter())
    }

    pub fn objective_coeffs(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn index_sets(&self) -> IndexSets {
        let mut sets = IndexSets::default();
        for (k, v) in self.variables.iter().enumerate() {
            sets.all.push(k);
            match v.kind {
                VarKind::Binary => {
                    sets.binary.push(k);
                    sets.discrete.push(k);
                }
                VarKind::Integer => {
                    sets.integer.push(k);
                    sets.discrete.push(k);
                }
                VarKind::Continuous => sets.continuous.push(k),
            }
        }
        sets
    }

    pub fn find_variable(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| &*v.name == name)
    }

    fn check_len(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.num_vars() {
            return Err(ModelError::Dimension {
                expected: self.num_vars(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// `c · values + constant`.
    pub fn evaluate_objective(&self, values: &[f64]) -> Result<f64, ModelError> {
        self.check_len(values)?;
        Ok(self.objective_unchecked(values))
    }

    pub(crate) fn objective_unchecked(&self, values: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(values)
            .map(|(c, x)| c * x)
            .sum::<f64>()
            + self.objective_constant
    }

    pub fn check_feasibility(&self, values: &[f64], tol: f64) -> Result<FeasibilityReport, ModelError> {
        self.check_len(values)?;
        let mut violations = Vec::new();
        for (k, (v, &x)) in self.variables.iter().zip(values).enumerate() {
            if x < v.lower - tol {
                violations.push(Violation::Bound {
                    var: k,
                    amount: v.lower - x,
                });
            } else if x > v.upper + tol {
                violations.push(Violation::Bound {
                    var: k,
                    amount: x - v.upper,
                });
            }
            if v.kind.is_discrete() && (x - x.round()).abs() > tol {
                violations.push(Violation::Integrality {
                    var: k,
                    amount: (x - x.round()).abs(),
                });
            }
        }
        for (i, row) in self.constraints().enumerate() {
            let amount = row.violation(values);
            if amount > tol {
                violations.push(Violation::Constraint { row: i, amount });
            }
        }
        Ok(FeasibilityReport { violations })
    }

    pub fn is_feasible(&self, values: &[f64]) -> bool {
        self.check_feasibility(values, FEAS_TOL)
            .map(|r| r.is_feasible())
            .unwrap_or(false)
    }

    /// Materializes the sub-MIP described by `delta`. The base is untouched;
    /// rows are shared with it.
    pub fn apply_delta(&self, delta: &SubMipDelta) -> Result<MipInstance, ModelError> {
        let n = self.num_vars();
        let total = n + delta.slack_vars.len();
        let mut sub = self.clone();

        if !delta.fixings.is_empty() || !delta.bound_changes.is_empty() || !delta.slack_vars.is_empty() {
            let vars = Arc::make_mut(&mut sub.variables);
            for (&k, &value) in &delta.fixings {
                let v = vars
                    .get_mut(k)
                    .ok_or_else(|| ModelError::InvalidDelta(format!("fixing of unknown variable {k}")))?;
                if delta.bound_changes.contains_key(&k) {
                    return Err(ModelError::InvalidDelta(format!(
                        "variable {} both fixed and re-bounded",
                        v.name
                    )));
                }
                if !value.is_finite() || value < v.lower - FEAS_TOL || value > v.upper + FEAS_TOL {
                    return Err(ModelError::InvalidDelta(format!(
                        "fixing {} = {value} outside [{}, {}]",
                        v.name, v.lower, v.upper
                    )));
                }
                let value = if v.kind.is_discrete() {
                    if (value - value.round()).abs() > FEAS_TOL {
                        return Err(ModelError::InvalidDelta(format!(
                            "fixing discrete {} to non-integral {value}",
                            v.name
                        )));
                    }
                    value.round()
                } else {
                    value.clamp(v.lower, v.upper)
                };
                v.lower = value;
                v.upper = value;
            }
            for (&k, &(lo, hi)) in &delta.bound_changes {
                let v = vars
                    .get_mut(k)
                    .ok_or_else(|| ModelError::InvalidDelta(format!("bound change of unknown variable {k}")))?;
                let lo = lo.max(v.lower);
                let hi = hi.min(v.upper);
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(ModelError::InvalidDelta(format!(
                        "bound change on {} leaves empty domain [{lo}, {hi}]",
                        v.name
                    )));
                }
                v.lower = lo;
                v.upper = hi;
            }
            for (j, s) in delta.slack_vars.iter().enumerate() {
                vars.push(Variable::continuous(format!("_slack{j}"), s.lower, s.upper));
            }
        }

        let mut objective = match &delta.objective_replacement {
            Some(rep) => {
                let mut c = vec![0.0; total];
                for &(k, a) in &rep.coeffs {
                    if k >= n {
                        return Err(ModelError::InvalidDelta(format!(
                            "replacement objective references variable {k}"
                        )));
                    }
                    c[k] += a;
                }
                sub.objective_constant = rep.constant;
                c
            }
            None if delta.slack_vars.is_empty() => sub.objective.as_ref().clone(),
            None => {
                let mut c = sub.objective.as_ref().clone();
                c.resize(total, 0.0);
                c
            }
        };
        for (j, s) in delta.slack_vars.iter().enumerate() {
            objective[n + j] += s.penalty;
        }
        if delta.objective_replacement.is_some() || !delta.slack_vars.is_empty() {
            sub.objective = Arc::new(objective);
        }

        if !delta.added_constraints.is_empty() {
            sub.row_segments.push(Arc::new(delta.added_constraints.clone()));
        }
        sub.validate()
            .map_err(|e| ModelError::InvalidDelta(e.to_string()))?;
        Ok(sub)
    }
}

/// Structural equality over name, variables, objective and rows, ignoring how
/// the rows are segmented.
impl PartialEq for MipInstance {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.variables == other.variables
            && self.objective == other.objective
            && self.objective_constant == other.objective_constant
            && self.num_constraints() == other.num_constraints()
            && self.constraints().zip(other.constraints()).all(|(a, b)| a == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    Bound { var: usize, amount: f64 },
    Integrality { var: usize, amount: f64 },
    Constraint { row: usize, amount: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations
            .iter()
            .map(|v| match *v {
                Violation::Bound { amount, .. }
                | Violation::Integrality { amount, .. }
                | Violation::Constraint { amount, .. } => amount,
            })
            .fold(0.0, f64::max)
    }
}

/// A complete assignment together with its cached objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    values: Arc<[f64]>,
    objective: f64,
}

impl SolutionState {
    pub fn new(instance: &MipInstance, values: Vec<f64>) -> Result<Self, ModelError> {
        let objective = instance.evaluate_objective(&values)?;
        Ok(SolutionState {
            values: values.into(),
            objective,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }
}

impl fmt::Display for SolutionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj={} x={:?}", self.objective, &self.values[..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReplacement {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

/// Continuous variable appended to a sub-MIP, penalized in its objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackVar {
    pub lower: f64,
    pub upper: f64,
    pub penalty: f64,
}

/// Output of a destroy operator: how to turn the maintained base model into
/// the sub-MIP to re-optimize. Slack variable `j` has index `n + j` in the
/// sub-MIP, where `n` is the number of base variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubMipDelta {
    pub fixings: BTreeMap<usize, f64>,
    pub bound_changes: BTreeMap<usize, (f64, f64)>,
    pub added_constraints: Vec<LinearConstraint>,
    pub objective_replacement: Option<ObjectiveReplacement>,
    pub slack_vars: Vec<SlackVar>,
}

impl SubMipDelta {
    pub fn is_empty(&self) -> bool {
        self.fixings.is_empty()
            && self.bound_changes.is_empty()
            && self.added_constraints.is_empty()
            && self.objective_replacement.is_none()
            && self.slack_vars.is_empty()
    }

    /// Only shrinks the feasible region: no objective change and no slack.
    pub fn is_constraint_only(&self) -> bool {
        self.objective_replacement.is_none() && self.slack_vars.is_empty()
    }
}
