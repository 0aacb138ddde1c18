//! Column generation for the LP relaxation of the route-selection master.
//!
//! The restricted master over a pool of routes is
//!
//! ```text
//! min -z   s.t.  Σ_j a_ij x_j ≤ 1          (each site at most once)
//!                Σ_j h_j x_j ≤ b_m         (mission budget)
//!                Σ_j x_j ≤ n_R             (route count)
//!                -Σ_j r_jk x_j + z ≤ 0     (z below every stakeholder total)
//!                x ≥ 0, z free
//! ```
//!
//! A route outside the pool improves the master when its site scores
//! `u_i = q1_i - Σ_k w_k p_ik` satisfy `Σ_{i∈S} u_i + q2ᵀh + q3 > 0`. Only
//! sites with positive score can help, so pricing enumerates subsets of those
//! sites depth first and prunes with suffix sums of the scores.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::lp::{solve_lp_warm, BasisVar, LpProblem, LpSolution, LpStatus, PRICING_TOL};
use crate::model::Instance;
use crate::routing::{column_from_tour, Column, IncrementalTsp, RouteOracle, SiteSet, Tour, TspCache};

/// Feasible routes known to the master, without duplicate site sets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnPool {
    columns: Vec<Column>,
    #[serde(skip)]
    index: HashMap<SiteSet, usize>,
    /// Sites that no feasible route can visit.
    pub unreachable: Vec<usize>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column; returns false for infeasible columns and duplicates.
    pub fn push(&mut self, column: Column) -> bool {
        if !column.feasible || column.sites.is_empty() || self.index.contains_key(&column.sites) {
            return false;
        }
        self.index.insert(column.sites.clone(), self.columns.len());
        self.columns.push(column);
        true
    }

    pub fn contains(&self, sites: &SiteSet) -> bool {
        self.index.contains_key(sites)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn get(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    /// Rebuilds the lookup index, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.columns.iter().enumerate().map(|(j, c)| (c.sites.clone(), j)).collect();
    }
}

impl FromIterator<Column> for ColumnPool {
    fn from_iter<T: IntoIterator<Item = Column>>(iter: T) -> Self {
        let mut pool = ColumnPool::new();
        for c in iter {
            pool.push(c);
        }
        pool
    }
}

/// Master duals split by row block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q3: f64,
    pub w: Vec<f64>,
}

impl DualSolution {
    /// Splits the row duals of a master built by [`build_master`]. Stakeholder
    /// duals that drifted away from `Σ w = -1` are rescaled onto it.
    pub fn from_master(solution: &LpSolution, instance: &Instance) -> Result<Self> {
        let (nc, nm, ns) = (instance.n_sites(), instance.resources.mission_budget.len(), instance.n_stakeholders);
        if solution.duals.len() != nc + nm + 1 + ns {
            return Err(Error::Dimension(format!(
                "{} duals for a master with {} rows",
                solution.duals.len(),
                nc + nm + 1 + ns
            )));
        }
        let y = &solution.duals;
        let mut w = y[nc + nm + 1..].to_vec();
        let sum: f64 = w.iter().sum();
        if (sum + 1.0).abs() > 1e-7 && sum < 0.0 {
            for v in &mut w {
                *v *= -1.0 / sum;
            }
        }
        Ok(DualSolution { q1: y[..nc].to_vec(), q2: y[nc..nc + nm].to_vec(), q3: y[nc + nm], w })
    }

    pub fn weight_sum(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Reduced profit of a route: `q1ᵀa + q2ᵀh + q3 − wᵀr`. Positive values
    /// improve the master.
    pub fn violation(&self, column: &Column) -> f64 {
        let cover: f64 = column.sites.iter().map(|i| self.q1[i - 1]).sum();
        let mission: f64 = self.q2.iter().zip(&column.consumption).map(|(q, h)| q * h).sum();
        let profit: f64 = self.w.iter().zip(&column.profits).map(|(w, r)| w * r).sum();
        cover + mission + self.q3 - profit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingScores {
    /// `u[i - 1]` is the score of site `i`.
    pub u: Vec<f64>,
    /// Site ids by descending score, ties by ascending id.
    pub order: Vec<usize>,
}

impl PricingScores {
    pub fn score(&self, site: usize) -> f64 {
        self.u[site - 1]
    }
}

pub fn pricing_scores(duals: &DualSolution, instance: &Instance) -> PricingScores {
    let u: Vec<f64> = instance
        .sites
        .iter()
        .map(|s| duals.q1[s.id - 1] - duals.w.iter().zip(&s.profits).map(|(w, p)| w * p).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (1..=u.len()).collect();
    order.sort_by(|&a, &b| u[b - 1].total_cmp(&u[a - 1]).then(a.cmp(&b)));
    PricingScores { u, order }
}

/// All feasible singleton round trips. Sites without one are recorded as
/// unreachable.
pub fn init_columns(instance: &Instance, matrix: &CostMatrix, cache: &TspCache) -> Result<ColumnPool> {
    let oracle = RouteOracle::new(instance, matrix).with_cache(cache);
    init_with(&oracle)
}

fn init_with(oracle: &RouteOracle<'_>) -> Result<ColumnPool> {
    let mut pool = ColumnPool::new();
    for site in &oracle.instance().sites {
        let col = oracle.evaluate(&SiteSet::from_ids([site.id]))?;
        if !pool.push(col) {
            pool.unreachable.push(site.id);
        }
    }
    if pool.is_empty() {
        return Err(Error::NoReachableSite);
    }
    Ok(pool)
}

/// Row layout of the master LP.
#[derive(Debug, Clone, Copy)]
pub struct MasterRows {
    pub sites: usize,
    pub mission: usize,
    pub stakeholders: usize,
}

impl MasterRows {
    pub fn of(instance: &Instance) -> Self {
        MasterRows {
            sites: instance.n_sites(),
            mission: instance.resources.mission_budget.len(),
            stakeholders: instance.n_stakeholders,
        }
    }

    pub fn route_count(&self) -> usize {
        self.sites + self.mission
    }

    pub fn profit(&self, k: usize) -> usize {
        self.sites + self.mission + 1 + k
    }

    pub fn total(&self) -> usize {
        self.sites + self.mission + 1 + self.stakeholders
    }
}

/// Sparse master column for `col`.
pub fn master_entries(col: &Column, rows: &MasterRows) -> Vec<(usize, f64)> {
    let mut e: Vec<(usize, f64)> = col.sites.iter().map(|i| (i - 1, 1.0)).collect();
    e.extend(col.consumption.iter().enumerate().map(|(m, h)| (rows.sites + m, *h)));
    e.push((rows.route_count(), 1.0));
    e.extend(col.profits.iter().enumerate().map(|(k, r)| (rows.profit(k), -r)));
    e
}

/// Master LP over `pool`: one variable per column, then the free `z` last.
pub fn build_master(pool: &ColumnPool, instance: &Instance) -> LpProblem {
    let rows = MasterRows::of(instance);
    let mut rhs = vec![1.0; rows.sites];
    rhs.extend(&instance.resources.mission_budget);
    rhs.push(instance.max_routes as f64);
    rhs.extend(std::iter::repeat_n(0.0, rows.stakeholders));
    let mut lp = LpProblem::new(rhs);
    for col in pool.columns() {
        lp.add_column(0.0, master_entries(col, &rows)).expect("master rows in range");
    }
    let z = lp
        .add_column(-1.0, (0..rows.stakeholders).map(|k| (rows.profit(k), 1.0)).collect())
        .expect("master rows in range");
    lp.set_free(z).expect("z exists");
    lp
}

/// Violating routes in depth-first lexicographic order over the positive-score
/// sites, skipping routes already in `pool`. At most `cap` are returned.
pub fn generate_columns(
    scores: &PricingScores,
    duals: &DualSolution,
    oracle: &RouteOracle<'_>,
    pool: &ColumnPool,
    cap: Option<usize>,
) -> Result<Vec<Column>> {
    Pricer::new(scores, duals, oracle, pool, cap).run(false)
}

/// Same result as [`generate_columns`], with the top-level subtrees explored
/// on the current rayon pool.
pub fn generate_columns_parallel(
    scores: &PricingScores,
    duals: &DualSolution,
    oracle: &RouteOracle<'_>,
    pool: &ColumnPool,
    cap: Option<usize>,
) -> Result<Vec<Column>> {
    Pricer::new(scores, duals, oracle, pool, cap).run(true)
}

struct Pricer<'p, 'a> {
    duals: &'p DualSolution,
    oracle: &'p RouteOracle<'a>,
    pool: &'p ColumnPool,
    cap: usize,
    /// Positive-score sites in enumeration order, with their scores.
    sites: Vec<(usize, f64)>,
    /// `rest[t]` = sum of scores from position `t` on.
    rest: Vec<f64>,
}

impl<'p, 'a> Pricer<'p, 'a> {
    fn new(
        scores: &PricingScores,
        duals: &'p DualSolution,
        oracle: &'p RouteOracle<'a>,
        pool: &'p ColumnPool,
        cap: Option<usize>,
    ) -> Self {
        let unreachable = &pool.unreachable;
        let sites: Vec<(usize, f64)> = scores
            .order
            .iter()
            .map(|&i| (i, scores.score(i)))
            .filter(|&(i, u)| u > 0.0 && !unreachable.contains(&i))
            .collect();
        let mut rest = vec![0.0; sites.len() + 1];
        for t in (0..sites.len()).rev() {
            rest[t] = rest[t + 1] + sites[t].1;
        }
        Pricer { duals, oracle, pool, cap: cap.unwrap_or(usize::MAX), sites, rest }
    }

    fn mission_term(&self, consumption: &[f64]) -> f64 {
        self.duals.q2.iter().zip(consumption).map(|(q, h)| q * h).sum()
    }

    fn run(&self, parallel: bool) -> Result<Vec<Column>> {
        if self.cap == 0 || self.sites.is_empty() {
            return Ok(Vec::new());
        }
        let zero = vec![0.0; self.duals.q2.len()];
        let matrix = self.oracle.matrix();
        if !parallel {
            let mut out = Vec::new();
            let mut tsp = IncrementalTsp::new(matrix);
            self.expand(&mut tsp, &SiteSet::new(), 0.0, &zero, 0, &mut out)?;
            return Ok(out);
        }
        let roots: Vec<usize> = (0..self.sites.len()).collect();
        let parts: Vec<Result<Vec<Column>>> = roots
            .par_iter()
            .map(|&t| {
                let mut out = Vec::new();
                let mut tsp = IncrementalTsp::new(matrix);
                self.branch(&mut tsp, &SiteSet::new(), 0.0, &zero, t, &mut out)?;
                Ok(out)
            })
            .collect();
        let mut out = Vec::new();
        for part in parts {
            out.extend(part?);
            if out.len() >= self.cap {
                out.truncate(self.cap);
                break;
            }
        }
        Ok(out)
    }

    /// Children of `set` at positions `from..`.
    fn expand(
        &self,
        tsp: &mut IncrementalTsp<'_>,
        set: &SiteSet,
        su: f64,
        h_lb: &[f64],
        from: usize,
        out: &mut Vec<Column>,
    ) -> Result<bool> {
        for t in from..self.sites.len() {
            if su + self.rest[t] + self.mission_term(h_lb) + self.duals.q3 <= PRICING_TOL {
                break;
            }
            if !self.branch(tsp, set, su, h_lb, t, out)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Visits `set ∪ {sites[t]}` and its subtree. Returns false once the cap is reached.
    fn branch(
        &self,
        tsp: &mut IncrementalTsp<'_>,
        set: &SiteSet,
        su: f64,
        h_lb: &[f64],
        t: usize,
        out: &mut Vec<Column>,
    ) -> Result<bool> {
        if su + self.rest[t] + self.mission_term(h_lb) + self.duals.q3 <= PRICING_TOL {
            return Ok(true);
        }
        let (site, u) = self.sites[t];
        let next = set.with(site);
        if next.len() > self.oracle.max_route_sites() || self.oracle.quick_infeasible(&next) {
            return Ok(true);
        }
        let cost = tsp.push(site)?;
        let result = self.visit(tsp, &next, cost, su + u, t, out);
        tsp.pop();
        result
    }

    fn visit(
        &self,
        tsp: &mut IncrementalTsp<'_>,
        next: &SiteSet,
        cost: f64,
        su: f64,
        t: usize,
        out: &mut Vec<Column>,
    ) -> Result<bool> {
        let instance = self.oracle.instance();
        let col = column_from_tour(next, Tour { cost, order: Vec::new() }, instance);
        if col.feasible
            && su + self.mission_term(&col.consumption) + self.duals.q3 > PRICING_TOL
            && !self.pool.contains(next)
        {
            let mut recorded = col.clone();
            recorded.tour_order = tsp.tour().order;
            out.push(recorded);
            if out.len() >= self.cap {
                return Ok(false);
            }
        }
        if !self.oracle.superset_may_be_feasible(&col) {
            return Ok(true);
        }
        let lb = self.oracle.superset_consumption_lb(&col);
        self.expand(tsp, next, su, &lb, t + 1, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxationOptions {
    /// Columns added per pricing round; `None` adds every violating route found.
    pub max_columns: Option<usize>,
    pub iteration_cap: usize,
    /// Pricing threads; 1 keeps everything on the calling thread.
    pub workers: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions { max_columns: None, iteration_cap: 10_000, workers: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationResult {
    /// `max z` of the LP relaxation; the min-form objective is `-z_lp`.
    pub z_lp: f64,
    pub pool: ColumnPool,
    /// Column values of the final master, aligned with `pool`.
    pub x: Vec<f64>,
    pub duals: DualSolution,
    pub iterations: usize,
    pub initial_columns: usize,
    pub columns_per_iteration: Vec<usize>,
    /// Restricted-master objective after each master solve.
    pub z_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
}

impl RelaxationResult {
    pub fn j_lp(&self) -> f64 {
        -self.z_lp
    }

    pub fn generated_columns(&self) -> usize {
        self.pool.len() - self.initial_columns
    }
}

/// Column generation from the singleton pool to LP optimality.
pub fn solve_relaxation(instance: &Instance, matrix: &CostMatrix, options: &RelaxationOptions) -> Result<RelaxationResult> {
    let cache = TspCache::new();
    solve_relaxation_cached(instance, matrix, &cache, options)
}

pub fn solve_relaxation_cached(
    instance: &Instance,
    matrix: &CostMatrix,
    cache: &TspCache,
    options: &RelaxationOptions,
) -> Result<RelaxationResult> {
    let start = Instant::now();
    let oracle = RouteOracle::new(instance, matrix).with_cache(cache);
    let mut pool = init_with(&oracle)?;
    let initial_columns = pool.len();
    let threads = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut basis: Option<Vec<BasisVar>> = None;
    let mut per_iter = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let t_lp = Instant::now();
        let lp = build_master(&pool, instance);
        let sol = solve_lp_warm(&lp, basis.as_deref())?;
        let t_lp = t_lp.elapsed();
        if sol.status != LpStatus::Optimal {
            return Err(Error::Lp(format!("restricted master is {:?}", sol.status)));
        }
        iterations += 1;
        let z = -sol.objective;
        history.push(z);
        let duals = DualSolution::from_master(&sol, instance)?;
        let scores = pricing_scores(&duals, instance);
        let converged_or_capped = iterations > options.iteration_cap;
        let t_price = Instant::now();
        let new_cols = if converged_or_capped {
            Vec::new()
        } else if let Some(tp) = &threads {
            tp.install(|| generate_columns_parallel(&scores, &duals, &oracle, &pool, options.max_columns))?
        } else {
            generate_columns(&scores, &duals, &oracle, &pool, options.max_columns)?
        };
        debug!(
            "master {iterations}: z = {z:.6}, {} pivots in {:.3} s, {} new columns in {:.3} s",
            sol.pivots,
            t_lp.as_secs_f64(),
            new_cols.len(),
            t_price.elapsed().as_secs_f64()
        );
        if new_cols.is_empty() {
            let n = pool.len();
            info!("column generation finished: z_lp = {z:.6} after {iterations} masters, {n} columns");
            return Ok(RelaxationResult {
                z_lp: z,
                x: sol.x[..n].to_vec(),
                pool,
                duals,
                iterations,
                initial_columns,
                columns_per_iteration: per_iter,
                z_history: history,
                converged: !converged_or_capped,
                wall_time: start.elapsed(),
            });
        }
        per_iter.push(new_cols.len());
        let old_z = pool.len();
        for c in new_cols {
            pool.push(c);
        }
        let new_z = pool.len();
        basis = Some(
            sol.basis
                .iter()
                .map(|b| match *b {
                    BasisVar::Structural(j) if j == old_z => BasisVar::Structural(new_z),
                    other => other,
                })
                .collect(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::euclidean_matrix;
    use crate::lp::check_duality;
    use crate::model::tests::tiny_instance;
    use crate::model::{Point, Site};

    /// Depot at the origin, A at (1,0) worth (1,0), B at (-1,0) worth (0,1).
    fn toy() -> Instance {
        let mut inst = tiny_instance();
        inst.n_stakeholders = 2;
        inst.sites = vec![
            Site { id: 1, location: Point::new(1.0, 0.0), profits: vec![1.0, 0.0], stay_time: 0.0 },
            Site { id: 2, location: Point::new(-1.0, 0.0), profits: vec![0.0, 1.0], stay_time: 0.0 },
        ];
        inst.depot = Point::new(0.0, 0.0);
        inst.resources.route_budget = vec![100.0];
        inst.max_routes = 1;
        inst
    }

    #[test]
    fn master_dimensions() {
        let mut inst = toy();
        inst.max_routes = 2;
        let m = euclidean_matrix(&inst);
        let cache = TspCache::new();
        let oracle = RouteOracle::new(&inst, &m).with_cache(&cache);
        let pool: ColumnPool = [vec![1], vec![2], vec![1, 2]]
            .into_iter()
            .map(|ids| oracle.evaluate(&SiteSet::from_ids(ids)).unwrap())
            .collect();
        let lp = build_master(&pool, &inst);
        assert_eq!((lp.n_vars(), lp.n_rows()), (4, 5));
        assert_eq!(lp.free_variable(), Some(3));
        assert_eq!(lp.rhs(), &[1.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_rejects_duplicates_and_infeasible() {
        let inst = toy();
        let m = euclidean_matrix(&inst);
        let cache = TspCache::new();
        let pool = init_columns(&inst, &m, &cache).unwrap();
        assert_eq!(pool.len(), 2);
        let mut pool2 = pool.clone();
        assert!(!pool2.push(pool.get(0).clone()));
        let mut bad = pool.get(0).clone();
        bad.sites = SiteSet::from_ids([1, 2]);
        bad.feasible = false;
        assert!(!pool2.push(bad));
    }

    #[test]
    fn unreachable_sites_are_recorded() {
        let mut inst = toy();
        inst.sites[1].location = Point::new(-60.0, 0.0);
        let m = euclidean_matrix(&inst);
        let pool = init_columns(&inst, &m, &TspCache::new()).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.unreachable, vec![2]);
        inst.sites[0].location = Point::new(70.0, 0.0);
        let m = euclidean_matrix(&inst);
        assert!(matches!(init_columns(&inst, &m, &TspCache::new()), Err(Error::NoReachableSite)));
    }

    #[test]
    fn scores_follow_the_formula() {
        let inst = toy();
        let duals = DualSolution { q1: vec![0.0, 0.0], q2: vec![], q3: 0.0, w: vec![-1.0, 0.0] };
        let s = pricing_scores(&duals, &inst);
        assert_eq!(s.u, vec![1.0, 0.0]);
        assert_eq!(s.order, vec![1, 2]);
        let duals = DualSolution { q1: vec![-0.5, 0.0], q2: vec![], q3: 0.0, w: vec![-0.5, -0.5] };
        let s = pricing_scores(&duals, &inst);
        assert_eq!(s.u, vec![0.0, 0.5]);
        assert_eq!(s.order, vec![2, 1]);
    }

    #[test]
    fn nonpositive_scores_price_out() {
        let inst = toy();
        let m = euclidean_matrix(&inst);
        let oracle = RouteOracle::new(&inst, &m);
        let duals = DualSolution { q1: vec![-1.0, -1.0], q2: vec![], q3: 0.0, w: vec![-0.5, -0.5] };
        let scores = pricing_scores(&duals, &inst);
        let cols = generate_columns(&scores, &duals, &oracle, &ColumnPool::new(), None).unwrap();
        assert!(cols.is_empty());
    }

    #[test]
    fn toy_generates_the_pair_and_converges() {
        let inst = toy();
        let m = euclidean_matrix(&inst);
        let cache = TspCache::new();
        let pool = init_columns(&inst, &m, &cache).unwrap();
        let sol = crate::lp::solve_lp(&build_master(&pool, &inst)).unwrap();
        let duals = DualSolution::from_master(&sol, &inst).unwrap();
        assert!((duals.weight_sum() + 1.0).abs() < 1e-9);
        let scores = pricing_scores(&duals, &inst);
        let oracle = RouteOracle::new(&inst, &m).with_cache(&cache);
        let cols = generate_columns(&scores, &duals, &oracle, &pool, None).unwrap();
        assert!(cols.iter().any(|c| c.sites == SiteSet::from_ids([1, 2])));
        let capped = generate_columns(&scores, &duals, &oracle, &pool, Some(1)).unwrap();
        assert_eq!(capped.len(), 1);
        assert_eq!(capped[0].sites, cols[0].sites);

        let res = solve_relaxation(&inst, &m, &RelaxationOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.z_lp - 1.0).abs() < 1e-9);
        assert!(res.z_history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let lp = build_master(&res.pool, &inst);
        let sol = crate::lp::solve_lp(&lp).unwrap();
        assert!(check_duality(&lp, &sol).is_empty());
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let inst = toy();
        let m = euclidean_matrix(&inst);
        let opts = RelaxationOptions { iteration_cap: 0, ..Default::default() };
        let res = solve_relaxation(&inst, &m, &opts).unwrap();
        assert!(!res.converged);
        assert!(res.z_lp <= 1.0);
    }
}
