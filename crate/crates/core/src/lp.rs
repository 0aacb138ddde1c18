//! Linear programs `min cᵀx  s.t.  Ax ≤ b,  x ≥ 0` with at most one free
//! variable, solved by a two-phase revised simplex method.
//!
//! Columns are stored sparse and the basis inverse is kept dense, refreshed
//! from an LU factorization every [`REFACTOR_EVERY`] pivots and once more at
//! the optimum. Duals follow the `≤`-row convention of a minimization: every
//! multiplier is nonpositive and `cᵀx = yᵀb` at optimality.
//!
//! Pricing is Dantzig's most-negative reduced cost. Wide problems are priced
//! in rotating segments, taking the best candidate of the first segment that
//! has one, and a full scan confirms optimality. After `3 (rows + cols)`
//! pivots the solver switches to Bland's rule so degenerate cycling cannot
//! continue.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const DUALITY_TOL: f64 = 1e-6;
pub const PRICING_TOL: f64 = 1e-7;

const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const PARTIAL_PRICING_MIN: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    n_rows: usize,
    objective: Vec<f64>,
    /// Column `j` occupies `entries[starts[j]..starts[j + 1]]`.
    entries: Vec<(usize, f64)>,
    starts: Vec<usize>,
    rhs: Vec<f64>,
    free_variable: Option<usize>,
}

impl LpProblem {
    /// An LP with the given `≤` right-hand sides and no variables yet.
    pub fn new(rhs: Vec<f64>) -> Self {
        Self { n_rows: rhs.len(), objective: Vec::new(), entries: Vec::new(), starts: vec![0], rhs, free_variable: None }
    }

    /// Dense constructor; `rows[i][j]` is the coefficient of variable `j` in row `i`.
    pub fn from_dense(objective: Vec<f64>, rows: &[Vec<f64>], rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::Dimension(format!("{} rows but {} right-hand sides", rows.len(), rhs.len())));
        }
        let n = objective.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!("row {i} has {} coefficients, expected {n}", r.len())));
        }
        let mut lp = LpProblem::new(rhs);
        for (j, c) in objective.into_iter().enumerate() {
            let entries = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r[j] != 0.0)
                .map(|(i, r)| (i, r[j]))
                .collect();
            lp.add_column(c, entries)?;
        }
        Ok(lp)
    }

    /// Appends a variable with sparse `(row, coefficient)` entries; returns its index.
    pub fn add_column(&mut self, cost: f64, mut entries: Vec<(usize, f64)>) -> Result<usize> {
        if let Some(&(r, _)) = entries.iter().find(|(r, _)| *r >= self.n_rows) {
            return Err(Error::Dimension(format!("row index {r} outside {} rows", self.n_rows)));
        }
        entries.retain(|(_, v)| *v != 0.0);
        entries.sort_by_key(|(r, _)| *r);
        entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        self.objective.push(cost);
        self.entries.extend(entries);
        self.starts.push(self.entries.len());
        Ok(self.objective.len() - 1)
    }

    /// Marks variable `j` as unrestricted in sign.
    pub fn set_free(&mut self, j: usize) -> Result<()> {
        if j >= self.n_vars() {
            return Err(Error::Dimension(format!("free variable {j} outside {} variables", self.n_vars())));
        }
        self.free_variable = Some(j);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut [f64] {
        &mut self.rhs
    }

    pub fn free_variable(&self) -> Option<usize> {
        self.free_variable
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.entries[self.starts[j]..self.starts[j + 1]]
    }

    /// Row `i` of `A` as a dense vector.
    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        (0..self.n_vars())
            .map(|j| self.column(j).iter().find(|(r, _)| *r == i).map_or(0.0, |e| e.1))
            .collect()
    }

    /// `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.n_rows];
        for (j, &xj) in x.iter().enumerate().take(self.n_vars()) {
            for &(r, v) in self.column(j) {
                act[r] += v * xj;
            }
        }
        act
    }

    fn check(&self) -> Result<()> {
        let finite = self.objective.iter().chain(&self.rhs).all(|v| v.is_finite())
            && self.entries.iter().all(|(_, v)| v.is_finite());
        if !finite {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A member of a simplex basis, in terms of the user-facing problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisVar {
    Structural(usize),
    /// Negative part of the free variable.
    FreeNegative,
    Slack(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row, `≤ 0` at optimality.
    pub duals: Vec<f64>,
    pub basis: Vec<BasisVar>,
    pub pivots: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        LpSolution { status, x: vec![0.0; n], objective: f64::NAN, duals: vec![0.0; m], basis: vec![], pivots }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    solve_lp_warm(problem, None)
}

/// Solves from `basis` when it is a nonsingular, primal-feasible basis of
/// this problem; otherwise falls back to a cold two-phase start.
pub fn solve_lp_warm(problem: &LpProblem, basis: Option<&[BasisVar]>) -> Result<LpSolution> {
    problem.check()?;
    Simplex::new(problem).run(basis)
}

/// Internal column layout: structural `0..n`, then the negative copy of the
/// free variable (if any), then one slack per row, then artificials.
struct Simplex<'a> {
    lp: &'a LpProblem,
    m: usize,
    n: usize,
    neg_free: Option<usize>,
    slack0: usize,
    artificial_rows: Vec<usize>,
    total: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    price_offset: usize,
}

enum Phase {
    One,
    Two,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LpProblem) -> Self {
        let m = lp.n_rows;
        let n = lp.n_vars();
        let neg_free = lp.free_variable.map(|_| n);
        let slack0 = n + usize::from(neg_free.is_some());
        let artificial_rows: Vec<usize> = (0..m).filter(|&i| lp.rhs[i] < 0.0).collect();
        let total = slack0 + m + artificial_rows.len();
        Simplex {
            lp,
            m,
            n,
            neg_free,
            slack0,
            artificial_rows,
            total,
            basis: Vec::new(),
            is_basic: vec![false; total],
            binv: Vec::new(),
            xb: Vec::new(),
            pivots: 0,
            since_refactor: 0,
            price_offset: 0,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.slack0 + self.m
    }

    /// Calls `f(row, value)` for every nonzero of internal column `j`.
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(r, v) in self.lp.column(j) {
                f(r, v);
            }
        } else if Some(j) == self.neg_free {
            for &(r, v) in self.lp.column(self.lp.free_variable.unwrap()) {
                f(r, -v);
            }
        } else if j < self.slack0 + self.m {
            f(j - self.slack0, 1.0);
        } else {
            f(self.artificial_rows[j - self.slack0 - self.m], -1.0);
        }
    }

    fn cost(&self, j: usize, phase: &Phase) -> f64 {
        match phase {
            Phase::One => {
                if self.is_artificial(j) {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j < self.n {
                    self.lp.objective[j]
                } else if Some(j) == self.neg_free {
                    -self.lp.objective[self.lp.free_variable.unwrap()]
                } else {
                    0.0
                }
            }
        }
    }

    fn to_basis_var(&self, j: usize) -> BasisVar {
        if j < self.n {
            BasisVar::Structural(j)
        } else if Some(j) == self.neg_free {
            BasisVar::FreeNegative
        } else if j < self.slack0 + self.m {
            BasisVar::Slack(j - self.slack0)
        } else {
            // artificials only remain on redundant rows; report the row slack
            BasisVar::Slack(self.artificial_rows[j - self.slack0 - self.m])
        }
    }

    fn from_basis_var(&self, b: BasisVar) -> Option<usize> {
        match b {
            BasisVar::Structural(j) if j < self.n => Some(j),
            BasisVar::FreeNegative => self.neg_free,
            BasisVar::Slack(i) if i < self.m => Some(self.slack0 + i),
            _ => None,
        }
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.is_basic = vec![false; self.total];
        for &j in &basis {
            self.is_basic[j] = true;
        }
        self.basis = basis;
    }

    fn cold_basis(&mut self) {
        let mut basis: Vec<usize> = (0..self.m).map(|i| self.slack0 + i).collect();
        for (k, &r) in self.artificial_rows.iter().enumerate() {
            basis[r] = self.slack0 + self.m + k;
        }
        self.set_basis(basis);
        // B is diagonal with entries ±1, so B⁻¹ = B
        let m = self.m;
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = if self.is_artificial(self.basis[i]) { -1.0 } else { 1.0 };
        }
        self.recompute_xb();
        self.since_refactor = 0;
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        self.xb = (0..m)
            .map(|i| (0..m).map(|k| self.binv[i * m + k] * self.lp.rhs[k]).sum())
            .collect();
    }

    /// Rebuilds B⁻¹ from scratch; false if B is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        if m == 0 {
            return true;
        }
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (c, &j) in self.basis.iter().enumerate() {
            self.for_col(j, |r, v| b[(r, c)] = v);
        }
        let Some(inv) = b.lu().try_inverse() else {
            return false;
        };
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        self.recompute_xb();
        self.since_refactor = 0;
        true
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |r, v| {
            for i in 0..m {
                alpha[i] += self.binv[i * m + r] * v;
            }
        });
        alpha
    }

    fn duals(&self, phase: &Phase) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j, phase);
            if c != 0.0 {
                for k in 0..m {
                    y[k] += c * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], phase: &Phase) -> f64 {
        let mut d = self.cost(j, phase);
        self.for_col(j, |r, v| d -= y[r] * v);
        d
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let theta = self.xb[row] / alpha[row];
        for i in 0..m {
            if i != row {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[row] = theta;
        let p = alpha[row];
        for k in 0..m {
            self.binv[row * m + k] /= p;
        }
        for i in 0..m {
            if i == row || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[row * m + k];
            }
        }
        let leaving = self.basis[row];
        self.is_basic[leaving] = false;
        self.is_basic[entering] = true;
        self.basis[row] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn maybe_refactor(&mut self) -> Result<()> {
        if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
            return Err(Error::Lp("basis became singular during refactorization".into()));
        }
        Ok(())
    }

    fn excluded(&self, j: usize, phase: &Phase) -> bool {
        self.is_basic[j] || (matches!(phase, Phase::Two) && self.is_artificial(j))
    }

    /// First improving column in index order.
    fn price_bland(&self, y: &[f64], phase: &Phase) -> Option<usize> {
        (0..self.total).find(|&j| !self.excluded(j, phase) && self.reduced_cost(j, y, phase) < -OPTIMALITY_TOL)
    }

    /// Most negative reduced cost within the first segment, scanning from a
    /// rotating offset, that holds any improving column.
    fn price_partial(&mut self, y: &[f64], phase: &Phase) -> Option<usize> {
        let total = self.total;
        let segment = if total > PARTIAL_PRICING_MIN { (total / 8).max(PARTIAL_PRICING_MIN) } else { total };
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut j = self.price_offset % total.max(1);
        while scanned < total {
            if !self.excluded(j, phase) {
                let d = self.reduced_cost(j, y, phase);
                if d < -OPTIMALITY_TOL && best.is_none_or(|(_, b)| d < b) {
                    best = Some((j, d));
                }
            }
            scanned += 1;
            j += 1;
            if j == total {
                j = 0;
            }
            if scanned % segment == 0 && best.is_some() {
                break;
            }
        }
        self.price_offset = j;
        best.map(|(j, _)| j)
    }

    fn iterate(&mut self, phase: Phase) -> Result<Outcome> {
        let bland_after = 3 * (self.m + self.total);
        let hard_cap = 50 * (self.m + self.total) + 10_000;
        let start = self.pivots;
        loop {
            self.maybe_refactor()?;
            let done = self.pivots - start;
            if done > hard_cap {
                return Err(Error::Lp(format!("no convergence after {done} pivots")));
            }
            let bland = done >= bland_after;
            let y = self.duals(&phase);

            let entering = if bland { self.price_bland(&y, &phase) } else { self.price_partial(&y, &phase) };
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };

            let alpha = self.ftran(q);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                if alpha[i] <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / alpha[i];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio <= best_ratio + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                alpha[i] > alpha[l]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = best_ratio.min(ratio);
                }
            }
            let Some(r) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.xb[r] = self.xb[r].max(0.0);
            self.pivot(r, q, &alpha);
        }
    }

    /// Drives zero-level artificials out of the basis after phase one.
    fn purge_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.slack0 + m {
                if self.is_basic[j] {
                    continue;
                }
                let mut a = 0.0;
                self.for_col(j, |row, v| a += self.binv[r * m + row] * v);
                if a.abs() > PIVOT_TOL && best.is_none_or(|(_, b)| a.abs() > b.abs()) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha);
            }
        }
    }

    fn try_warm(&mut self, hint: &[BasisVar]) -> bool {
        let m = self.m;
        let wanted: Vec<usize> = hint.iter().filter_map(|b| self.from_basis_var(*b)).collect();
        if wanted.is_empty() {
            return false;
        }
        self.set_basis((0..m).map(|i| self.slack0 + i).collect());
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        let mut locked = vec![false; m];
        for j in wanted {
            if self.is_basic[j] {
                if let Some(r) = self.basis.iter().position(|&b| b == j) {
                    locked[r] = true;
                }
                continue;
            }
            let alpha = self.ftran(j);
            let row = (0..m)
                .filter(|&i| !locked[i] && alpha[i].abs() > 1e-7)
                .max_by(|&a, &b| alpha[a].abs().total_cmp(&alpha[b].abs()));
            if let Some(r) = row {
                // xb is rebuilt below, only B⁻¹ and the basis matter here
                self.xb = vec![0.0; m];
                self.pivot(r, j, &alpha);
                locked[r] = true;
            }
        }
        self.pivots = 0;
        if !self.refactor() {
            return false;
        }
        self.xb.iter().all(|&v| v >= -FEASIBILITY_TOL)
    }

    fn run(mut self, hint: Option<&[BasisVar]>) -> Result<LpSolution> {
        let (m, n) = (self.m, self.n);
        let warm = hint.is_some_and(|h| self.try_warm(h));
        if !warm {
            self.cold_basis();
            if !self.artificial_rows.is_empty() {
                self.iterate(Phase::One)?;
                if !self.refactor() {
                    return Err(Error::Lp("singular basis after phase one".into()));
                }
                let infeas: f64 = self
                    .basis
                    .iter()
                    .zip(&self.xb)
                    .filter(|(j, _)| self.is_artificial(**j))
                    .map(|(_, v)| v.max(0.0))
                    .sum();
                let scale = 1.0 + self.lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if infeas > 1e-8 * scale {
                    return Ok(LpSolution::non_optimal(LpStatus::Infeasible, n, m, self.pivots));
                }
                self.purge_artificials();
            }
        }
        if let Outcome::Unbounded = self.iterate(Phase::Two)? {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded, n, m, self.pivots));
        }
        if !self.refactor() {
            return Err(Error::Lp("singular optimal basis".into()));
        }
        // re-prices against the refreshed inverse; rarely needs further pivots
        if let Outcome::Unbounded = self.iterate(Phase::Two)? {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded, n, m, self.pivots));
        }

        let mut internal = vec![0.0; self.total];
        for (i, &j) in self.basis.iter().enumerate() {
            internal[j] = self.xb[i].max(0.0);
        }
        let mut x = internal[..n].to_vec();
        if let (Some(f), Some(neg)) = (self.lp.free_variable, self.neg_free) {
            x[f] -= internal[neg];
        }
        let objective = x.iter().zip(&self.lp.objective).map(|(a, c)| a * c).sum();
        let duals = self.duals(&Phase::Two);
        let basis = self.basis.iter().map(|&j| self.to_basis_var(j)).collect();
        Ok(LpSolution { status: LpStatus::Optimal, x, objective, duals, basis, pivots: self.pivots })
    }
}

/// Verifies an optimal solution's certificates: primal feasibility, dual
/// sign, dual feasibility and strong duality. Returns one line per violation.
pub fn check_duality(problem: &LpProblem, solution: &LpSolution) -> Vec<String> {
    let mut out = Vec::new();
    if solution.status != LpStatus::Optimal {
        out.push(format!("status is {:?}, not optimal", solution.status));
        return out;
    }
    if solution.x.len() != problem.n_vars() || solution.duals.len() != problem.n_rows() {
        out.push("solution dimensions do not match the problem".to_string());
        return out;
    }
    let act = problem.row_activity(&solution.x);
    for (i, (a, b)) in act.iter().zip(problem.rhs()).enumerate() {
        if *a > b + FEASIBILITY_TOL * (1.0 + b.abs()) {
            out.push(format!("primal infeasible row {i}: {a} > {b}"));
        }
    }
    for (j, &xj) in solution.x.iter().enumerate() {
        if Some(j) != problem.free_variable() && xj < -FEASIBILITY_TOL {
            out.push(format!("negative variable {j}: {xj}"));
        }
    }
    for (i, &y) in solution.duals.iter().enumerate() {
        if y > FEASIBILITY_TOL {
            out.push(format!("dual sign violation row {i}"));
        }
    }
    for j in 0..problem.n_vars() {
        let d = problem.objective()[j]
            - problem.column(j).iter().map(|&(r, v)| solution.duals[r] * v).sum::<f64>();
        let bad = if Some(j) == problem.free_variable() { d.abs() > PRICING_TOL } else { d < -PRICING_TOL };
        if bad {
            out.push(format!("dual feasibility violation column {j}: reduced cost {d:e}"));
        }
    }
    let dual_obj: f64 = solution.duals.iter().zip(problem.rhs()).map(|(y, b)| y * b).sum();
    let gap = (solution.objective - dual_obj).abs();
    if !(gap <= DUALITY_TOL * (1.0 + solution.objective.abs())) {
        out.push(format!("strong duality gap {gap:.3e}"));
    }
    out
}
