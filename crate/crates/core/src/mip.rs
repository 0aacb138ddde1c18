//! Integer route selection over a fixed column pool, by best-bound branch and
//! bound on the master LP.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::colgen::{master_entries, ColumnPool, MasterRows};
use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::lp::{solve_lp_warm, BasisVar, LpProblem, LpSolution, LpStatus};
use crate::model::{maxmin_value, Instance, ProfitSums};
use crate::routing::{tour_cost, Column, SiteSet, BUDGET_TOL};

pub const INTEGRALITY_TOL: f64 = 1e-6;
const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MipStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MipOptions {
    pub time_limit: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerSolution {
    pub selected: Vec<Column>,
    /// Pool indices of `selected`.
    pub selected_indices: Vec<usize>,
    pub z_value: f64,
    pub sums: ProfitSums,
    /// Best remaining bound on `z`; equals `z_value` when optimal.
    pub bound: f64,
    pub nodes: usize,
    pub status: MipStatus,
}

impl IntegerSolution {
    pub fn j_value(&self) -> f64 {
        -self.z_value
    }
}

/// Node of the search tree: columns fixed to one and to zero.
#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    seq: usize,
    ones: Vec<usize>,
    zeros: Vec<usize>,
    basis: Option<Vec<BasisVar>>,
    parent_cols: Rc<Vec<usize>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: larger bound first, then the older node
        self.bound.total_cmp(&other.bound).then(other.seq.cmp(&self.seq))
    }
}

struct NodeLp {
    lp: LpProblem,
    /// Pool index of each LP variable except the trailing `z`.
    cols: Vec<usize>,
}

struct Search<'a> {
    pool: &'a ColumnPool,
    instance: &'a Instance,
    rows: MasterRows,
    integral: bool,
    best: Option<(f64, Vec<usize>)>,
}

impl<'a> Search<'a> {
    fn node_lp(&self, ones: &[usize], zeros: &[usize]) -> NodeLp {
        let inst = self.instance;
        let rows = self.rows;
        let mut covered = SiteSet::new();
        let mut used = vec![0.0; rows.mission];
        let mut fixed_profit = vec![0.0; rows.stakeholders];
        for &j in ones {
            let c = self.pool.get(j);
            for i in c.sites.iter() {
                covered.insert(i);
            }
            for (u, h) in used.iter_mut().zip(&c.consumption) {
                *u += h;
            }
            for (f, r) in fixed_profit.iter_mut().zip(&c.profits) {
                *f += r;
            }
        }
        let remaining: Vec<f64> = inst.resources.mission_budget.iter().zip(&used).map(|(b, u)| b - u).collect();
        let routes_left = inst.max_routes.saturating_sub(ones.len());

        let mut rhs: Vec<f64> = (1..=rows.sites).map(|i| if covered.contains(i) { 0.0 } else { 1.0 }).collect();
        rhs.extend(remaining.iter().map(|r| r.max(0.0)));
        rhs.push(routes_left as f64);
        rhs.extend(&fixed_profit);
        let mut lp = LpProblem::new(rhs);
        let mut cols = Vec::new();
        if routes_left > 0 {
            for (j, c) in self.pool.columns().iter().enumerate() {
                if ones.contains(&j) || !c.sites.is_disjoint(&covered) {
                    continue;
                }
                if c.consumption.iter().zip(&remaining).any(|(h, r)| *h > r + BUDGET_TOL) {
                    continue;
                }
                // A column fixed to zero stays in the LP at a price above the
                // most z it could ever buy, so the parent basis remains a
                // feasible warm start and every optimum leaves it at zero.
                let cost = if zeros.contains(&j) { zero_penalty(c) } else { 0.0 };
                lp.add_column(cost, master_entries(c, &rows)).expect("rows in range");
                cols.push(j);
            }
        }
        let z = lp
            .add_column(-1.0, (0..rows.stakeholders).map(|k| (rows.profit(k), 1.0)).collect())
            .expect("rows in range");
        lp.set_free(z).expect("z exists");
        NodeLp { lp, cols }
    }

    fn effective_bound(&self, z: f64) -> f64 {
        if self.integral {
            (z + INTEGRALITY_TOL).floor()
        } else {
            z
        }
    }

    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0)
    }

    fn offer(&mut self, selection: Vec<usize>) {
        let cols: Vec<Column> = selection.iter().map(|&j| self.pool.get(j).clone()).collect();
        let check = evaluate_selection(&cols, self.instance);
        if !check.violations.is_empty() {
            return;
        }
        let z = maxmin_value(&check.sums).unwrap_or(0.0);
        if z > self.incumbent() + IMPROVEMENT_TOL {
            debug!("incumbent z = {z}");
            self.best = Some((z, selection));
        }
    }

    /// Take columns with `x ≥ 0.5` by descending value, skipping conflicts.
    fn greedy(&mut self, ones: &[usize], node: &NodeLp, x: &[f64]) {
        let mut cand: Vec<(usize, f64)> = node.cols.iter().zip(x).filter(|(_, v)| **v >= 0.5).map(|(j, v)| (*j, *v)).collect();
        cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut pick = ones.to_vec();
        for (j, _) in cand {
            let mut trial = pick.clone();
            trial.push(j);
            let cols: Vec<Column> = trial.iter().map(|&t| self.pool.get(t).clone()).collect();
            if evaluate_selection(&cols, self.instance).violations.is_empty() {
                pick = trial;
            }
        }
        self.offer(pick);
    }
}

/// Raising `x_j` by `t` lifts `z` by at most `t · max_k r_jk`.
fn zero_penalty(c: &Column) -> f64 {
    c.profits.iter().copied().fold(0.0, f64::max) + 1.0
}

fn map_basis(parent: &[BasisVar], parent_cols: &[usize], child_cols: &[usize]) -> Vec<BasisVar> {
    let z_parent = parent_cols.len();
    parent
        .iter()
        .filter_map(|b| match *b {
            BasisVar::Structural(j) if j == z_parent => Some(BasisVar::Structural(child_cols.len())),
            BasisVar::Structural(j) => {
                child_cols.binary_search(&parent_cols[j]).ok().map(BasisVar::Structural)
            }
            other => Some(other),
        })
        .collect()
}

/// Maximizes the smallest stakeholder total over selections from `pool`.
pub fn solve_restricted_mip(pool: &ColumnPool, instance: &Instance, options: &MipOptions) -> Result<IntegerSolution> {
    let start = Instant::now();
    let mut search = Search {
        pool,
        instance,
        rows: MasterRows::of(instance),
        integral: instance.has_integral_profits(),
        best: None,
    };
    // the empty selection is always feasible
    search.offer(Vec::new());

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node { bound: f64::INFINITY, seq, ones: vec![], zeros: vec![], basis: None, parent_cols: Rc::default() });
    let mut nodes = 0;
    let mut timed_out = false;
    let mut open_bound = f64::NEG_INFINITY;

    while let Some(node) = heap.pop() {
        if search.effective_bound(node.bound) <= search.incumbent() + IMPROVEMENT_TOL {
            continue;
        }
        if options.time_limit.is_some_and(|t| start.elapsed() >= t) {
            timed_out = true;
            open_bound = node.bound;
            break;
        }
        nodes += 1;
        let t_build = Instant::now();
        let nlp = search.node_lp(&node.ones, &node.zeros);
        let hint = node.basis.as_ref().map(|b| map_basis(b, &node.parent_cols, &nlp.cols));
        let build_s = t_build.elapsed().as_secs_f64();
        let t_solve = Instant::now();
        let sol: LpSolution = solve_lp_warm(&nlp.lp, hint.as_deref())?;
        debug!(
            "node {nodes}: {} columns, built in {build_s:.3} s, {} pivots in {:.3} s, warm hint {}",
            nlp.cols.len(),
            sol.pivots,
            t_solve.elapsed().as_secs_f64(),
            hint.is_some()
        );
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::Lp("node relaxation unbounded".into())),
        }
        let z = sol.x[nlp.cols.len()];
        let x = &sol.x[..nlp.cols.len()];
        if search.effective_bound(z) <= search.incumbent() + IMPROVEMENT_TOL {
            continue;
        }
        search.greedy(&node.ones, &nlp, x);

        let frac = x
            .iter()
            .enumerate()
            .filter(|(i, v)| **v > INTEGRALITY_TOL && **v < 1.0 - INTEGRALITY_TOL && !node.zeros.contains(&nlp.cols[*i]))
            .max_by(|(a, va), (b, vb)| {
                let da = (0.5 - (**va - 0.5).abs()) - (0.5 - (**vb - 0.5).abs());
                if da.abs() > 1e-12 {
                    return da.total_cmp(&0.0);
                }
                let pa = pool.get(nlp.cols[*a]).total_profit();
                let pb = pool.get(nlp.cols[*b]).total_profit();
                pa.total_cmp(&pb).then(b.cmp(a))
            })
            .map(|(i, _)| i);

        let Some(var) = frac else {
            let mut pick = node.ones.clone();
            pick.extend(nlp.cols.iter().zip(x).filter(|(j, v)| **v > 0.5 && !node.zeros.contains(j)).map(|(j, _)| *j));
            search.offer(pick);
            continue;
        };
        let j = nlp.cols[var];
        let mut ones = node.ones.clone();
        ones.push(j);
        let mut zeros = node.zeros.clone();
        zeros.push(j);
        let cols = Rc::new(nlp.cols);
        seq += 1;
        heap.push(Node {
            bound: z,
            seq,
            ones,
            zeros: node.zeros.clone(),
            basis: Some(sol.basis.clone()),
            parent_cols: Rc::clone(&cols),
        });
        seq += 1;
        heap.push(Node { bound: z, seq, ones: node.ones, zeros, basis: Some(sol.basis), parent_cols: cols });
    }

    let (z_value, selection) = search.best.clone().expect("empty selection is feasible");
    let selected: Vec<Column> = selection.iter().map(|&j| pool.get(j).clone()).collect();
    let sums = evaluate_selection(&selected, instance).sums;
    let (status, bound) = if timed_out {
        let rest = heap.iter().map(|n| n.bound).fold(open_bound, f64::max);
        (MipStatus::TimeLimit, rest.max(z_value))
    } else {
        (MipStatus::Optimal, z_value)
    };
    Ok(IntegerSolution { selected, selected_indices: selection, z_value, sums, bound, nodes, status })
}

/// Constraint report for a set of routes, recomputed from instance data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCheck {
    pub sums: ProfitSums,
    pub mission_consumption: Vec<f64>,
    pub mission_slack: Vec<f64>,
    pub route_count: usize,
    /// Per-route usage against the route budget.
    pub route_usage: Vec<Vec<f64>>,
    pub violations: Vec<String>,
}

impl SolutionCheck {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn evaluate_selection(selected: &[Column], instance: &Instance) -> SolutionCheck {
    let r = &instance.resources;
    let mut sums = ProfitSums::zeros(instance.n_stakeholders);
    let mut seen = SiteSet::new();
    let mut violations = Vec::new();
    let mut mission = vec![0.0; r.mission_budget.len()];
    let mut route_usage = Vec::with_capacity(selected.len());
    for (n, col) in selected.iter().enumerate() {
        for i in col.sites.iter() {
            if i > instance.n_sites() {
                violations.push(format!("route {n}: unknown site {i}"));
                continue;
            }
            if seen.contains(i) {
                violations.push(format!("site {i} visited by more than one route"));
            }
            seen.insert(i);
            sums.add(&instance.site(i).profits);
        }
        let stay: f64 = col.sites.iter().filter(|&i| i <= instance.n_sites()).map(|i| instance.site(i).stay_time).sum();
        let usage: Vec<f64> = r
            .on_arc_route
            .iter()
            .zip(&r.on_site_route)
            .map(|(a, s)| col.tsp_cost * a + stay * s)
            .collect();
        for (k, (u, b)) in usage.iter().zip(&r.route_budget).enumerate() {
            if *u > b + BUDGET_TOL {
                violations.push(format!("route {n}: budget {k} exceeded ({u} > {b})"));
            }
        }
        route_usage.push(usage);
        for (m, (a, s)) in r.on_arc_mission.iter().zip(&r.on_site_mission).enumerate() {
            mission[m] += col.tsp_cost * a + stay * s;
        }
    }
    let mission_slack: Vec<f64> = r.mission_budget.iter().zip(&mission).map(|(b, h)| b - h).collect();
    for (m, s) in mission_slack.iter().enumerate() {
        if *s < -BUDGET_TOL {
            violations.push(format!("mission budget {m} exceeded by {}", -s));
        }
    }
    if selected.len() > instance.max_routes {
        violations.push(format!("{} routes exceed the limit of {}", selected.len(), instance.max_routes));
    }
    SolutionCheck { sums, mission_consumption: mission, mission_slack, route_count: selected.len(), route_usage, violations }
}

/// Recomputes profit sums and every constraint from the instance, the matrix
/// and each route's tour order.
pub fn evaluate_solution(selected: &[Column], instance: &Instance, matrix: &CostMatrix) -> SolutionCheck {
    let mut rebuilt = Vec::with_capacity(selected.len());
    let mut tour_issues = Vec::new();
    for (n, col) in selected.iter().enumerate() {
        let mut c = col.clone();
        let order = &col.tour_order;
        let closed = order.len() >= 2 && order.first() == Some(&0) && order.last() == Some(&0);
        let visited = SiteSet::from_ids(order.iter().copied().filter(|&v| v != 0));
        let inner = order.len().saturating_sub(2);
        if !closed || visited != col.sites || inner != col.sites.len() {
            tour_issues.push(format!("route {n}: tour order does not visit its site set once"));
        }
        if order.iter().all(|&v| v < matrix.dimension()) {
            c.tsp_cost = tour_cost(order, matrix);
        } else {
            tour_issues.push(format!("route {n}: tour leaves the matrix"));
        }
        rebuilt.push(c);
    }
    let mut check = evaluate_selection(&rebuilt, instance);
    check.violations.extend(tour_issues);
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colgen::{init_columns, solve_relaxation, RelaxationOptions};
    use crate::cost::euclidean_matrix;
    use crate::model::tests::tiny_instance;
    use crate::model::{Point, Site};
    use crate::routing::TspCache;

    fn line_instance() -> Instance {
        let mut inst = tiny_instance();
        inst.n_stakeholders = 2;
        inst.depot = Point::new(0.0, 0.0);
        inst.sites = vec![
            Site { id: 1, location: Point::new(1.0, 0.0), profits: vec![3.0, 0.0], stay_time: 0.0 },
            Site { id: 2, location: Point::new(-1.0, 0.0), profits: vec![0.0, 2.0], stay_time: 0.0 },
            Site { id: 3, location: Point::new(0.0, 1.0), profits: vec![1.0, 1.0], stay_time: 0.0 },
        ];
        inst.resources.route_budget = vec![4.5];
        inst.max_routes = 2;
        inst
    }

    #[test]
    fn empty_selection_is_slack() {
        let inst = line_instance();
        let m = euclidean_matrix(&inst);
        let check = evaluate_solution(&[], &inst, &m);
        assert!(check.is_feasible());
        assert_eq!(check.sums.0, vec![0.0, 0.0]);
        assert_eq!(check.route_count, 0);
    }

    #[test]
    fn overlap_is_a_violation() {
        let inst = line_instance();
        let m = euclidean_matrix(&inst);
        let pool = init_columns(&inst, &m, &TspCache::new()).unwrap();
        let c = pool.get(0).clone();
        let check = evaluate_solution(&[c.clone(), c], &inst, &m);
        assert!(check.violations.iter().any(|v| v.contains("more than one route")));
    }

    #[test]
    fn integral_relaxation_needs_no_branching() {
        let mut inst = line_instance();
        inst.n_stakeholders = 1;
        for s in &mut inst.sites {
            s.profits.truncate(1);
        }
        inst.max_routes = 3;
        let m = euclidean_matrix(&inst);
        let pool = init_columns(&inst, &m, &TspCache::new()).unwrap();
        let sol = solve_restricted_mip(&pool, &inst, &MipOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert_eq!(sol.z_value, 4.0);
        assert_eq!(sol.nodes, 1);
        // site 2 is worth nothing to stakeholder 1
        assert_eq!(sol.selected.len(), 2);
    }

    #[test]
    fn matches_two_route_enumeration() {
        let inst = line_instance();
        let m = euclidean_matrix(&inst);
        let relax = solve_relaxation(&inst, &m, &RelaxationOptions::default()).unwrap();
        let sol = solve_restricted_mip(&relax.pool, &inst, &MipOptions::default()).unwrap();
        // hand check: {1,3} costs 1 + √2 + 1 ≈ 3.41 with (4,1); {1},{2} gives (3,2); {1,3},{2} gives (4,3)
        assert_eq!(sol.z_value, 3.0);
        assert!(sol.z_value <= relax.z_lp + 1e-6);
        let check = evaluate_solution(&sol.selected, &inst, &m);
        assert!(check.is_feasible());
        assert_eq!(maxmin_value(&check.sums).unwrap(), sol.z_value);
    }
}
