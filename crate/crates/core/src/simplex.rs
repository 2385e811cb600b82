//! Bounded-variable revised simplex with an explicit basis inverse.
//!
//! Every row `a·x (rel) b` gets a slack `s` with `a·x + s = b` and bounds
//! `[0, inf)` for `<=`, `(-inf, 0]` for `>=` and `[0, 0]` for `=`. The slack
//! basis is the starting point; equality slacks act as bounded artificials.
//! Phase 1 minimizes the total bound violation of the basic variables, phase
//! 2 the objective. The same machinery restarts from any basis after bound
//! changes, which is what branch-and-bound relies on.
//!
//! Rows and columns of `B^-1 [A | I]` are formed on demand from the dense
//! `m x m` inverse and the sparse structural columns.

use std::rc::Rc;

use crate::model::{MipInstance, Relation};

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERACY_THRESHOLD: usize = 50;
/// Pivots after which the dual simplex recomputes basic values before
/// declaring primal feasibility or a cutoff.
const VERIFY_AFTER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The objective provably exceeds the caller's cutoff.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Primal values of all instance variables (empty unless optimal).
    pub values: Vec<f64>,
    /// `c·x + constant` at `values` (NaN unless optimal).
    pub objective: f64,
    pub iterations: usize,
}

/// Solves the LP relaxation of `instance`.
pub fn solve_lp(instance: &MipInstance, iteration_limit: usize) -> LpResult {
    let mut tab = Tableau::new(instance);
    let status = tab.optimize(iteration_limit);
    tab.result(status)
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    m: usize,
    nstruct: usize,
    ncols: usize,
    /// Row-major `m x m` basis inverse; row `i` belongs to `basis[i]`.
    binv: Vec<f64>,
    /// Structural columns as `(row, coefficient)` lists.
    cols: Rc<[Vec<(usize, f64)>]>,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
    /// Phase-2 reduced costs.
    d: Vec<f64>,
    basis: Vec<usize>,
    /// Row of a basic column, `usize::MAX` when nonbasic.
    row_of: Vec<usize>,
    /// Instance variable of each structural column.
    var_of_col: Vec<usize>,
    col_of_var: Vec<Option<usize>>,
    fixed_value: Vec<f64>,
    /// Structural columns whose variable must take integral values.
    integral: Vec<bool>,
    objective_offset: f64,
    trivially_infeasible: bool,
    iterations: usize,
    pivots_since_refactor: usize,
    pivots_since_recompute: usize,
    degenerate_run: usize,
}

enum DualEnd {
    PrimalFeasible,
    Infeasible,
    Cutoff,
    IterationLimit,
    Stalled,
}

enum Step {
    Flip,
    Pivot { row: usize, to_upper: bool },
}

impl Tableau {
    /// Builds the slack-basis tableau. Variables with equal bounds are
    /// substituted out and do not get a column.
    pub(crate) fn new(instance: &MipInstance) -> Self {
        let nvars = instance.num_vars();
        let mut col_of_var = vec![None; nvars];
        let mut var_of_col = Vec::new();
        let mut fixed_value = vec![0.0; nvars];
        for (k, v) in instance.variables().iter().enumerate() {
            if v.is_fixed() {
                fixed_value[k] = v.lower;
            } else {
                col_of_var[k] = Some(var_of_col.len());
                var_of_col.push(k);
            }
        }
        let nstruct = var_of_col.len();
        let c = instance.objective_coeffs();
        let objective_offset = instance.objective_constant()
            + (0..nvars)
                .filter(|&k| col_of_var[k].is_none())
                .map(|k| c[k] * fixed_value[k])
                .sum::<f64>();

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nstruct];
        let mut b = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut cost = Vec::new();
        for &k in &var_of_col {
            let v = instance.variable(k);
            lower.push(v.lower);
            upper.push(v.upper);
            cost.push(c[k]);
        }
        let mut trivially_infeasible = false;
        for row in instance.constraints() {
            let mut rhs = row.rhs;
            let mut entries = Vec::new();
            for &(k, a) in row.coeffs() {
                match col_of_var[k] {
                    Some(j) => entries.push((j, a)),
                    None => rhs -= a * fixed_value[k],
                }
            }
            if entries.is_empty() {
                let tol = 1e-9 * (1.0 + rhs.abs());
                let ok = match row.relation {
                    Relation::Le => 0.0 <= rhs + tol,
                    Relation::Ge => 0.0 >= rhs - tol,
                    Relation::Eq => rhs.abs() <= tol,
                };
                trivially_infeasible |= !ok;
                continue;
            }
            let i = b.len();
            for (j, a) in entries {
                cols[j].push((i, a));
            }
            b.push(rhs);
            let (lo, hi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            cost.push(0.0);
        }

        let m = b.len();
        let ncols = nstruct + m;
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut value = vec![0.0; ncols];
        for j in 0..nstruct {
            value[j] = nonbasic_start(lower[j], upper[j]);
        }
        let basis: Vec<usize> = (nstruct..ncols).collect();
        let mut row_of = vec![usize::MAX; ncols];
        for (i, &col) in basis.iter().enumerate() {
            row_of[col] = i;
        }
        let d = cost.clone();
        let integral = var_of_col.iter().map(|&k| instance.variable(k).kind.is_discrete()).collect();
        let mut tab = Tableau {
            m,
            nstruct,
            ncols,
            binv,
            cols: cols.into(),
            b,
            lower,
            upper,
            cost,
            value,
            d,
            basis,
            row_of,
            var_of_col,
            col_of_var,
            fixed_value,
            integral,
            objective_offset,
            trivially_infeasible,
            iterations: 0,
            pivots_since_refactor: 0,
            pivots_since_recompute: 0,
            degenerate_run: 0,
        };
        tab.recompute_basic_values();
        tab
    }

    pub(crate) fn column_of(&self, var: usize) -> Option<usize> {
        self.col_of_var[var]
    }

    pub(crate) fn iterations(&self) -> usize {
        self.iterations
    }

    /// Replaces the bounds of a structural column, moving it to the nearest
    /// bound when nonbasic.
    pub(crate) fn set_bounds(&mut self, col: usize, lo: f64, hi: f64) {
        self.lower[col] = lo;
        self.upper[col] = hi;
        if self.row_of[col] == usize::MAX {
            let old = self.value[col];
            let new = if old < lo || (lo.is_finite() && lo == hi) {
                lo
            } else if old > hi {
                hi
            } else {
                old
            };
            if new != old {
                let delta = new - old;
                self.value[col] = new;
                let alpha = self.column(col);
                for (i, &coef) in alpha.iter().enumerate() {
                    if coef != 0.0 {
                        let bcol = self.basis[i];
                        self.value[bcol] -= coef * delta;
                    }
                }
            }
        }
    }

    /// Reduced-cost bound tightening at an optimal basis: a nonbasic
    /// integral column cannot move further from its bound than
    /// `slack / |d_j|` without pushing the objective past `objective + slack`.
    /// Returns the number of tightened columns.
    pub(crate) fn tighten_by_reduced_cost(&mut self, slack: f64) -> usize {
        if !(slack >= 0.0) || !slack.is_finite() {
            return 0;
        }
        let mut count = 0;
        for j in 0..self.nstruct {
            if !self.integral[j] || self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            if dj.abs() <= DUAL_TOL {
                continue;
            }
            let reach = (slack / dj.abs() + 1e-9).floor();
            let x = self.value[j];
            if dj > 0.0 && x <= self.lower[j] && self.lower[j] + reach < self.upper[j] {
                self.upper[j] = self.lower[j] + reach;
                count += 1;
            } else if dj < 0.0 && x >= self.upper[j] && self.upper[j] - reach > self.lower[j] {
                self.lower[j] = self.upper[j] - reach;
                count += 1;
            }
        }
        count
    }

    /// Values of all instance variables.
    pub(crate) fn var_values(&self) -> Vec<f64> {
        let mut out = self.fixed_value.clone();
        for (j, &k) in self.var_of_col.iter().enumerate() {
            out[k] = self.value[j];
        }
        out
    }

    pub(crate) fn objective(&self) -> f64 {
        self.objective_offset
            + (0..self.nstruct)
                .map(|j| self.cost[j] * self.value[j])
                .sum::<f64>()
    }

    pub(crate) fn result(&self, status: LpStatus) -> LpResult {
        if status == LpStatus::Optimal {
            LpResult {
                status,
                values: self.var_values(),
                objective: self.objective(),
                iterations: self.iterations,
            }
        } else {
            LpResult {
                status,
                values: Vec::new(),
                objective: f64::NAN,
                iterations: self.iterations,
            }
        }
    }

    #[inline]
    fn binv_row(&self, i: usize) -> &[f64] {
        &self.binv[i * self.m..(i + 1) * self.m]
    }

    /// `y · [A | I]` for a row vector `y` over the constraint rows.
    fn price_out(&self, y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ncols);
        out.extend(self.cols.iter().map(|c| c.iter().map(|&(i, a)| y[i] * a).sum::<f64>()));
        out.extend_from_slice(y);
        out
    }

    /// Column `q` of `B^-1 [A | I]`.
    fn column(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        if q >= self.nstruct {
            let k = q - self.nstruct;
            return (0..m).map(|i| self.binv[i * m + k]).collect();
        }
        let entries = &self.cols[q];
        (0..m)
            .map(|i| {
                let row = self.binv_row(i);
                entries.iter().map(|&(k, a)| row[k] * a).sum()
            })
            .collect()
    }

    /// Row `r` of `B^-1 [A | I]`.
    fn row(&self, r: usize) -> Vec<f64> {
        self.price_out(self.binv_row(r))
    }

    fn violation(&self, col: usize) -> f64 {
        let x = self.value[col];
        let (lo, hi) = (self.lower[col], self.upper[col]);
        if x < lo - PRIMAL_TOL * (1.0 + lo.abs()) {
            x - lo
        } else if x > hi + PRIMAL_TOL * (1.0 + hi.abs()) {
            x - hi
        } else {
            0.0
        }
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = B^-1 (b - N x_N)`.
    fn recompute_basic_values(&mut self) {
        let mut r = self.b.clone();
        for j in 0..self.nstruct {
            let x = self.value[j];
            if self.row_of[j] == usize::MAX && x != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * x;
                }
            }
        }
        for k in 0..self.m {
            let col = self.nstruct + k;
            if self.row_of[col] == usize::MAX {
                r[k] -= self.value[col];
            }
        }
        for i in 0..self.m {
            let v: f64 = self.binv_row(i).iter().zip(&r).map(|(p, q)| p * q).sum();
            let col = self.basis[i];
            self.value[col] = v;
        }
        self.pivots_since_recompute = 0;
    }

    /// Rebuilds row `r` of the tableau from the original data through its
    /// multipliers `y` and checks that `y·[A I] z = y·b` has no solution
    /// within the column bounds.
    fn row_proves_infeasible(&self, r: usize) -> bool {
        let y = self.binv_row(r);
        let rhs: f64 = y.iter().zip(&self.b).map(|(p, q)| p * q).sum();
        let alpha = self.price_out(y);
        let (mut lo, mut hi) = (0.0, 0.0);
        let mut scale = rhs.abs();
        for (j, &aj) in alpha.iter().enumerate() {
            if aj.abs() <= PIVOT_TOL {
                continue;
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            let (a, b) = if aj > 0.0 { (aj * l, aj * u) } else { (aj * u, aj * l) };
            lo += a;
            hi += b;
            for v in [a, b] {
                if v.is_finite() {
                    scale = scale.max(v.abs());
                }
            }
        }
        let tol = 1e-7 * (1.0 + scale);
        rhs < lo - tol || rhs > hi + tol
    }

    fn recompute_reduced_costs(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for (yk, &bik) in y.iter_mut().zip(self.binv_row(i)) {
                    *yk += cb * bik;
                }
            }
        }
        let priced = self.price_out(&y);
        for (j, dj) in self.d.iter_mut().enumerate() {
            *dj = self.cost[j] - priced[j];
        }
        for &col in &self.basis {
            self.d[col] = 0.0;
        }
    }

    /// Rebuilds the inverse for the current basis by Gauss-Jordan
    /// elimination on `[A | I]`, dropping columns that turn out singular.
    fn refactor(&mut self) {
        let (m, ncols, nstruct) = (self.m, self.ncols, self.nstruct);
        let mut t = vec![0.0; m * ncols];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * ncols + j] = a;
            }
        }
        for i in 0..m {
            t[i * ncols + nstruct + i] = 1.0;
        }
        let old_basis = std::mem::take(&mut self.basis);
        let mut assigned = vec![usize::MAX; m];
        let mut pending: Vec<usize> = Vec::new();
        for &col in &old_basis {
            let best = (0..m)
                .filter(|&i| assigned[i] == usize::MAX)
                .map(|i| (i, t[i * ncols + col].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1));
            match best {
                Some((i, mag)) if mag > 1e-9 => {
                    pivot_rows(&mut t, m, ncols, i, col);
                    assigned[i] = col;
                }
                _ => pending.push(col),
            }
        }
        for col in pending {
            self.row_of[col] = usize::MAX;
            self.value[col] = nonbasic_start(self.lower[col], self.upper[col]);
        }
        for i in 0..m {
            if assigned[i] != usize::MAX {
                continue;
            }
            let mut in_basis = vec![false; ncols];
            for &c in assigned.iter().filter(|&&c| c != usize::MAX) {
                in_basis[c] = true;
            }
            let col = (0..ncols)
                .rev()
                .filter(|&j| !in_basis[j])
                .max_by(|&x, &y| t[i * ncols + x].abs().total_cmp(&t[i * ncols + y].abs()))
                .expect("nonempty column set");
            pivot_rows(&mut t, m, ncols, i, col);
            assigned[i] = col;
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&t[i * ncols + nstruct..(i + 1) * ncols]);
        }
        self.row_of.iter_mut().for_each(|r| *r = usize::MAX);
        self.basis = assigned;
        for (i, &col) in self.basis.iter().enumerate() {
            self.row_of[col] = i;
        }
        self.recompute_basic_values();
        self.recompute_reduced_costs();
        self.pivots_since_refactor = 0;
    }

    /// Exchanges `basis[r]` for column `q`. `alpha_q` is column `q` of the
    /// tableau and `alpha_r` row `r`, both taken before the exchange.
    fn pivot(&mut self, r: usize, q: usize, alpha_q: &[f64], alpha_r: &[f64]) {
        let m = self.m;
        let piv = alpha_q[r];
        let dq = self.d[q];
        if dq != 0.0 {
            let f = dq / piv;
            for (dj, &a) in self.d.iter_mut().zip(alpha_r) {
                *dj -= f * a;
            }
        }
        self.d[q] = 0.0;
        let inv = 1.0 / piv;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|x| *x *= inv);
        for (k, other) in before.chunks_exact_mut(m).enumerate() {
            let f = alpha_q[k];
            if f != 0.0 {
                other.iter_mut().zip(prow.iter()).for_each(|(x, &p)| *x -= f * p);
            }
        }
        for (k, other) in after.chunks_exact_mut(m).enumerate() {
            let f = alpha_q[r + 1 + k];
            if f != 0.0 {
                other.iter_mut().zip(prow.iter()).for_each(|(x, &p)| *x -= f * p);
            }
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = usize::MAX;
        self.basis[r] = q;
        self.row_of[q] = r;
        self.pivots_since_refactor += 1;
        self.pivots_since_recompute += 1;
    }

    /// Picks an entering column for the reduced costs `dj`, returning the
    /// column and the direction it moves (+1 up, -1 down).
    fn price(&self, dj: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            if self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] {
                continue;
            }
            let x = self.value[j];
            let dir = if dj[j] < -DUAL_TOL && x < self.upper[j] {
                1.0
            } else if dj[j] > DUAL_TOL && x > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = dj[j].abs();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Harris-style ratio test along column `q` (`alpha` is its tableau
    /// column). In phase 1 infeasible basics may move freely away from
    /// feasibility and stop at the bound they violate.
    fn ratio_test(&self, q: usize, alpha: &[f64], dir: f64, phase1: bool, bland: bool) -> Option<(f64, Step)> {
        let mut limit = f64::INFINITY;
        let flip = if dir > 0.0 {
            self.upper[q] - self.value[q]
        } else {
            self.value[q] - self.lower[q]
        };
        // Pass 1: maximal step with bounds relaxed by the tolerance.
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (i, &alpha) in alpha.iter().enumerate() {
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let col = self.basis[i];
            let x = self.value[col];
            let (lo, hi) = (self.lower[col], self.upper[col]);
            let rate = -dir * alpha;
            let viol = if phase1 { self.violation(col) } else { 0.0 };
            let (bound, to_upper) = if viol < 0.0 {
                if rate > 0.0 { (lo, false) } else { continue }
            } else if viol > 0.0 {
                if rate < 0.0 { (hi, true) } else { continue }
            } else if rate < 0.0 {
                (lo, false)
            } else {
                (hi, true)
            };
            if !bound.is_finite() {
                continue;
            }
            let tol = PRIMAL_TOL * (1.0 + bound.abs());
            let exact = ((bound - x) / rate).max(0.0);
            let relaxed = if to_upper == (rate > 0.0) {
                ((bound - x + rate.signum() * tol) / rate).max(0.0)
            } else {
                exact
            };
            limit = limit.min(relaxed);
            cands.push((i, exact, alpha.abs(), to_upper));
        }
        if flip <= limit && flip.is_finite() {
            return Some((flip, Step::Flip));
        }
        if cands.is_empty() {
            return None;
        }
        // Pass 2: among rows blocking within the relaxed step, prefer the
        // largest pivot (or the lowest basic column under Bland's rule).
        let mut chosen: Option<(usize, f64, f64, bool)> = None;
        for &(i, exact, mag, up) in &cands {
            if exact > limit {
                continue;
            }
            let better = match chosen {
                None => true,
                Some((ci, _, cmag, _)) => {
                    if bland {
                        self.basis[i] < self.basis[ci]
                    } else {
                        mag > cmag
                    }
                }
            };
            if better {
                chosen = Some((i, exact, mag, up));
            }
        }
        let (row, theta, _, to_upper) = chosen?;
        Some((theta, Step::Pivot { row, to_upper }))
    }

    fn apply_step(&mut self, q: usize, alpha: &[f64], dir: f64, theta: f64, step: Step) {
        if theta != 0.0 {
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let col = self.basis[i];
                    self.value[col] -= dir * a * theta;
                }
            }
            self.value[q] += dir * theta;
        }
        match step {
            Step::Flip => {
                self.value[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            }
            Step::Pivot { row, to_upper } => {
                let leaving = self.basis[row];
                self.value[leaving] = if to_upper {
                    self.upper[leaving]
                } else {
                    self.lower[leaving]
                };
                let alpha_r = self.row(row);
                self.pivot(row, q, alpha, &alpha_r);
            }
        }
    }

    /// Optimizes from the current basis.
    pub(crate) fn optimize(&mut self, iteration_limit: usize) -> LpStatus {
        self.optimize_with_cutoff(iteration_limit, f64::INFINITY)
    }

    /// Like [`Tableau::optimize`], but when the basis is dual feasible the
    /// dual simplex runs first and stops with [`LpStatus::Cutoff`] once the
    /// objective exceeds `cutoff`.
    pub(crate) fn optimize_with_cutoff(&mut self, iteration_limit: usize, cutoff: f64) -> LpStatus {
        if self.trivially_infeasible {
            return LpStatus::Infeasible;
        }
        let start = self.iterations;
        if self.is_dual_feasible() {
            match self.dual(iteration_limit, cutoff) {
                DualEnd::PrimalFeasible | DualEnd::Stalled => {}
                DualEnd::Infeasible => return LpStatus::Infeasible,
                DualEnd::Cutoff => return LpStatus::Cutoff,
                DualEnd::IterationLimit => return LpStatus::IterationLimit,
            }
        }
        let used = self.iterations - start;
        self.primal(iteration_limit.saturating_sub(used))
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.ncols).all(|j| {
            if self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] {
                return true;
            }
            let x = self.value[j];
            let dj = self.d[j];
            let at_lower = x <= self.lower[j];
            let at_upper = x >= self.upper[j];
            match (at_lower, at_upper) {
                (true, _) => dj >= -DUAL_TOL,
                (_, true) => dj <= DUAL_TOL,
                _ => dj.abs() <= DUAL_TOL,
            }
        })
    }

    /// Bounded dual simplex: drives primal-infeasible basics to their
    /// violated bound while keeping reduced costs sign-feasible.
    fn dual(&mut self, iteration_limit: usize, cutoff: f64) -> DualEnd {
        let refactor_every = (2 * self.m).max(200);
        let start = self.iterations;
        let stall_limit = 10 * (self.m + self.ncols);
        let mut verified = false;
        let mut refactored = false;
        loop {
            if self.pivots_since_refactor >= refactor_every {
                self.refactor();
                if !self.is_dual_feasible() {
                    return DualEnd::Stalled;
                }
            }
            if self.objective() > cutoff {
                if self.pivots_since_recompute >= VERIFY_AFTER {
                    self.recompute_basic_values();
                }
                if self.objective() > cutoff {
                    return DualEnd::Cutoff;
                }
            }
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.violation(self.basis[i]);
                if v != 0.0 && leave.is_none_or(|(_, w)| v.abs() > w.abs()) {
                    leave = Some((i, v));
                }
            }
            let Some((r, viol)) = leave else {
                if !verified && self.pivots_since_recompute >= VERIFY_AFTER {
                    self.recompute_basic_values();
                    verified = true;
                    continue;
                }
                return DualEnd::PrimalFeasible;
            };
            verified = false;
            if self.iterations - start >= iteration_limit {
                return DualEnd::IterationLimit;
            }
            if self.iterations - start >= stall_limit {
                return DualEnd::Stalled;
            }
            // x_r must rise when below its lower bound (viol < 0).
            let need_up = viol < 0.0;
            let row = self.row(r);
            let mut limit = f64::INFINITY;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for (j, &alpha) in row.iter().enumerate() {
                if self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] || alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let x = self.value[j];
                let can_up = x < self.upper[j];
                let can_down = x > self.lower[j];
                // moving x_j by +1 changes x_r by -alpha
                let up_helps = (-alpha > 0.0) == need_up;
                let ok = if up_helps { can_up } else { can_down };
                if !ok {
                    continue;
                }
                let dj = self.d[j];
                let slack = if up_helps { dj.max(0.0) } else { (-dj).max(0.0) };
                let ratio = slack / alpha.abs();
                limit = limit.min((slack + DUAL_TOL) / alpha.abs());
                cands.push((j, ratio, alpha.abs()));
            }
            let chosen = cands
                .iter()
                .filter(|c| c.1 <= limit)
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
                .map(|c| c.0);
            let Some(q) = chosen else {
                if self.row_proves_infeasible(r) {
                    return DualEnd::Infeasible;
                }
                if !refactored {
                    refactored = true;
                    self.refactor();
                    if !self.is_dual_feasible() {
                        return DualEnd::Stalled;
                    }
                    continue;
                }
                return DualEnd::Infeasible;
            };
            refactored = false;
            self.iterations += 1;
            let alpha_q = self.column(q);
            let leaving = self.basis[r];
            let target = if need_up { self.lower[leaving] } else { self.upper[leaving] };
            let step = (self.value[leaving] - target) / alpha_q[r];
            for (i, &a) in alpha_q.iter().enumerate() {
                if a != 0.0 {
                    let col = self.basis[i];
                    self.value[col] -= a * step;
                }
            }
            self.value[q] += step;
            self.value[leaving] = target;
            self.pivot(r, q, &alpha_q, &row);
        }
    }

    /// Primal phase 1 and phase 2 from the current basis.
    fn primal(&mut self, iteration_limit: usize) -> LpStatus {
        if self.trivially_infeasible {
            return LpStatus::Infeasible;
        }
        let refactor_every = (2 * self.m).max(200);
        let start = self.iterations;
        let mut verified = false;
        loop {
            if self.pivots_since_refactor >= refactor_every {
                self.refactor();
            }
            // Phase-1 costs: +1 above the upper bound, -1 below the lower.
            let mut w = vec![0.0; self.m];
            let mut infeasible = false;
            for i in 0..self.m {
                let g = self.violation(self.basis[i]).signum();
                if self.violation(self.basis[i]) != 0.0 {
                    infeasible = true;
                    for (wk, &bik) in w.iter_mut().zip(self.binv_row(i)) {
                        *wk -= g * bik;
                    }
                }
            }
            let bland = self.degenerate_run >= DEGENERACY_THRESHOLD;
            let entering = if infeasible {
                let mut phase1_d = self.price_out(&w);
                for &col in &self.basis {
                    phase1_d[col] = 0.0;
                }
                self.price(&phase1_d, bland)
            } else {
                self.price(&self.d, bland)
            };
            let Some((q, dir)) = entering else {
                if !verified {
                    // Guard against drift before declaring a verdict.
                    self.recompute_basic_values();
                    self.recompute_reduced_costs();
                    verified = true;
                    continue;
                }
                return if infeasible {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };
            verified = false;
            if self.iterations - start >= iteration_limit {
                return LpStatus::IterationLimit;
            }
            self.iterations += 1;
            let alpha = self.column(q);
            let Some((theta, step)) = self.ratio_test(q, &alpha, dir, infeasible, bland) else {
                if infeasible {
                    // Cannot happen for exact arithmetic; rebuild and retry.
                    self.refactor();
                    continue;
                }
                return LpStatus::Unbounded;
            };
            if theta <= 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.apply_step(q, &alpha, dir, theta, step);
        }
    }

    /// Largest row residual and bound violation of the current point, in the
    /// original row space.
    #[cfg(test)]
    pub(crate) fn max_residual(&self) -> f64 {
        let mut lhs: Vec<f64> = (0..self.m).map(|i| self.value[self.nstruct + i]).collect();
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, a) in col {
                lhs[i] += a * self.value[j];
            }
        }
        let mut worst: f64 = lhs.iter().zip(&self.b).map(|(l, b)| (l - b).abs()).fold(0.0, f64::max);
        for j in 0..self.ncols {
            worst = worst.max(self.lower[j] - self.value[j]).max(self.value[j] - self.upper[j]);
        }
        worst
    }

    /// Largest reduced-cost sign violation at the current basis.
    #[cfg(test)]
    pub(crate) fn max_dual_infeasibility(&mut self) -> f64 {
        self.recompute_reduced_costs();
        let mut worst: f64 = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] {
                continue;
            }
            let x = self.value[j];
            if x < self.upper[j] {
                worst = worst.max(-self.d[j]);
            }
            if x > self.lower[j] {
                worst = worst.max(self.d[j]);
            }
        }
        worst
    }
}

fn nonbasic_start(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

fn pivot_rows(t: &mut [f64], m: usize, ncols: usize, r: usize, q: usize) {
    let piv = t[r * ncols + q];
    let inv = 1.0 / piv;
    {
        let row = &mut t[r * ncols..(r + 1) * ncols];
        row.iter_mut().for_each(|x| *x *= inv);
        row[q] = 1.0;
    }
    let (before, rest) = t.split_at_mut(r * ncols);
    let (prow, after) = rest.split_at_mut(ncols);
    for other in before.chunks_exact_mut(ncols).chain(after.chunks_exact_mut(ncols)) {
        let f = other[q];
        if f != 0.0 {
            for (x, &p) in other.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            other[q] = 0.0;
        }
    }
    debug_assert_eq!(t.len(), m * ncols);
}
