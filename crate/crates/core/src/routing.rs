//! Exact route costs and column evaluation.
//!
//! A route is a set of sites visited on one closed tour from the depot. Its
//! cost is the exact TSP optimum over the depot and the set, found with the
//! Held-Karp dynamic program.

use std::fmt;

use dashmap::DashMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::model::Instance;

/// Largest site set handed to Held-Karp.
pub const MAX_TSP_SITES: usize = 20;

/// Slack on route budgets.
pub const BUDGET_TOL: f64 = 1e-9;

/// Bitset over 1-based site ids. Trailing zero words are never stored, so
/// equal sets compare and hash equal.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteSet {
    words: SmallVec<[u64; 2]>,
}

impl SiteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new();
        for id in ids {
            s.insert(id);
        }
        s
    }

    pub fn insert(&mut self, id: usize) {
        assert!(id >= 1, "site ids start at 1");
        let bit = id - 1;
        let w = bit / 64;
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1u64 << (bit % 64);
    }

    pub fn with(&self, id: usize) -> Self {
        let mut s = self.clone();
        s.insert(id);
        s
    }

    pub fn contains(&self, id: usize) -> bool {
        if id == 0 {
            return false;
        }
        let bit = id - 1;
        self.words
            .get(bit / 64)
            .is_some_and(|w| w & (1u64 << (bit % 64)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_disjoint(&self, other: &SiteSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.words.iter().enumerate().all(|(i, &a)| {
            let b = other.words.get(i).copied().unwrap_or(0);
            a & !b == 0
        })
    }

    /// Site ids in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + b + 1)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for SiteSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for SiteSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(d)?;
        if ids.contains(&0) {
            return Err(serde::de::Error::custom("site ids start at 1"));
        }
        Ok(SiteSet::from_ids(ids))
    }
}

/// A closed tour: `order` starts and ends at the depot (node 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub cost: f64,
    pub order: Vec<usize>,
}

/// Exact minimum-cost closed tour through the depot and `sites`.
///
/// Works on asymmetric matrices. Costs accumulate along the tour from the
/// depot, so the result equals a left-to-right sum over the optimal sequence.
pub fn tsp_exact(sites: &SiteSet, matrix: &CostMatrix) -> Result<Tour> {
    let nodes = sites.to_vec();
    let k = nodes.len();
    if k > MAX_TSP_SITES {
        return Err(Error::SubsetTooLarge { size: k, limit: MAX_TSP_SITES });
    }
    if let Some(&max) = nodes.last() {
        if max >= matrix.dimension() {
            return Err(Error::Dimension(format!(
                "site {max} is outside a {}-node matrix",
                matrix.dimension()
            )));
        }
    }
    match k {
        0 => return Ok(Tour { cost: 0.0, order: vec![0] }),
        1 => {
            let s = nodes[0];
            return Ok(Tour { cost: matrix.get(0, s) + matrix.get(s, 0), order: vec![0, s, 0] });
        }
        _ => {}
    }

    let full = (1usize << k) - 1;
    let mut dp = vec![f64::INFINITY; (full + 1) * k];
    let mut parent = vec![u8::MAX; (full + 1) * k];
    for (a, &s) in nodes.iter().enumerate() {
        dp[(1 << a) * k + a] = matrix.get(0, s);
    }
    for mask in 1..=full {
        for last in 0..k {
            if mask & (1 << last) == 0 {
                continue;
            }
            let here = dp[mask * k + last];
            if here == f64::INFINITY {
                continue;
            }
            let from = nodes[last];
            let mut rest = full & !mask;
            while rest != 0 {
                let next = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let m2 = mask | (1 << next);
                let cand = here + matrix.get(from, nodes[next]);
                let slot = m2 * k + next;
                if cand < dp[slot] {
                    dp[slot] = cand;
                    parent[slot] = last as u8;
                }
            }
        }
    }

    let mut best = f64::INFINITY;
    let mut best_last = 0;
    for (last, &s) in nodes.iter().enumerate() {
        let c = dp[full * k + last] + matrix.get(s, 0);
        if c < best {
            best = c;
            best_last = last;
        }
    }

    let mut rev = Vec::with_capacity(k);
    let (mut mask, mut last) = (full, best_last);
    loop {
        rev.push(nodes[last]);
        let p = parent[mask * k + last];
        mask &= !(1 << last);
        if p == u8::MAX {
            break;
        }
        last = p as usize;
    }
    let mut order = Vec::with_capacity(k + 2);
    order.push(0);
    order.extend(rev.into_iter().rev());
    order.push(0);
    Ok(Tour { cost: best, order })
}

/// Held-Karp table grown one site at a time, for depth-first enumeration.
///
/// Bits are assigned in insertion order, so pushing a site only fills the
/// masks that contain it and popping discards nothing. Costs equal
/// [`tsp_exact`] bit for bit.
pub struct IncrementalTsp<'m> {
    matrix: &'m CostMatrix,
    nodes: Vec<usize>,
    costs: Vec<f64>,
    dp: Vec<f64>,
}

impl<'m> IncrementalTsp<'m> {
    pub fn new(matrix: &'m CostMatrix) -> Self {
        IncrementalTsp { matrix, nodes: Vec::new(), costs: Vec::new(), dp: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds `site` and returns the optimal tour cost of the enlarged set.
    pub fn push(&mut self, site: usize) -> Result<f64> {
        let k = self.nodes.len();
        if k >= MAX_TSP_SITES {
            return Err(Error::SubsetTooLarge { size: k + 1, limit: MAX_TSP_SITES });
        }
        if site == 0 || site >= self.matrix.dimension() {
            return Err(Error::Dimension(format!("site {site} is outside a {}-node matrix", self.matrix.dimension())));
        }
        const W: usize = MAX_TSP_SITES;
        let base = 1usize << k;
        if self.dp.len() < 2 * base * W {
            self.dp.resize(2 * base * W, f64::INFINITY);
        }
        self.nodes.push(site);
        let m = self.matrix;
        let nodes = &self.nodes;
        for mask in base..2 * base {
            let mut lasts = mask;
            while lasts != 0 {
                let last = lasts.trailing_zeros() as usize;
                lasts &= lasts - 1;
                let prev_mask = mask ^ (1 << last);
                let v = if prev_mask == 0 {
                    m.get(0, nodes[last])
                } else {
                    let mut best = f64::INFINITY;
                    let mut prevs = prev_mask;
                    while prevs != 0 {
                        let p = prevs.trailing_zeros() as usize;
                        prevs &= prevs - 1;
                        let c = self.dp[prev_mask * W + p] + m.get(nodes[p], nodes[last]);
                        if c < best {
                            best = c;
                        }
                    }
                    best
                };
                self.dp[mask * W + last] = v;
            }
        }
        let full = 2 * base - 1;
        let mut best = f64::INFINITY;
        for (last, &s) in nodes.iter().enumerate() {
            let c = self.dp[full * W + last] + m.get(s, 0);
            if c < best {
                best = c;
            }
        }
        self.costs.push(best);
        Ok(best)
    }

    pub fn pop(&mut self) {
        self.nodes.pop();
        self.costs.pop();
    }

    pub fn cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }

    /// An optimal closed tour through the current sites.
    pub fn tour(&self) -> Tour {
        const W: usize = MAX_TSP_SITES;
        let k = self.nodes.len();
        if k == 0 {
            return Tour { cost: 0.0, order: vec![0] };
        }
        let m = self.matrix;
        let nodes = &self.nodes;
        let mut mask = (1usize << k) - 1;
        let cost = self.cost();
        let mut last = (0..k)
            .find(|&l| self.dp[mask * W + l] + m.get(nodes[l], 0) == cost)
            .expect("optimum is attained");
        let mut rev = vec![nodes[last]];
        while mask != 1 << last {
            let here = self.dp[mask * W + last];
            let prev_mask = mask ^ (1 << last);
            let prev = (0..k)
                .filter(|p| prev_mask & (1 << p) != 0)
                .find(|&p| self.dp[prev_mask * W + p] + m.get(nodes[p], nodes[last]) == here)
                .expect("predecessor is attained");
            rev.push(nodes[prev]);
            mask = prev_mask;
            last = prev;
        }
        let mut order = Vec::with_capacity(k + 2);
        order.push(0);
        order.extend(rev.into_iter().rev());
        order.push(0);
        Tour { cost, order }
    }
}

/// Cost of following `order` (summed in sequence).
pub fn tour_cost(order: &[usize], matrix: &CostMatrix) -> f64 {
    order.windows(2).fold(0.0, |acc, w| acc + matrix.get(w[0], w[1]))
}

/// Memoized TSP results keyed by site set. Safe for concurrent use; racing
/// writers store identical values.
#[derive(Debug, Default)]
pub struct TspCache {
    map: DashMap<SiteSet, Tour>,
}

impl TspCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get_or_compute(&self, sites: &SiteSet, matrix: &CostMatrix) -> Result<Tour> {
        if let Some(t) = self.map.get(sites) {
            return Ok(t.clone());
        }
        let tour = tsp_exact(sites, matrix)?;
        self.map.insert(sites.clone(), tour.clone());
        Ok(tour)
    }
}

/// A candidate route with everything the master problems need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub sites: SiteSet,
    pub tsp_cost: f64,
    pub tour_order: Vec<usize>,
    /// Left-hand side of the per-route budget check.
    pub route_usage: Vec<f64>,
    /// Mission-budget consumption of this route.
    pub consumption: Vec<f64>,
    /// Per-stakeholder profit collected on this route.
    pub profits: Vec<f64>,
    pub feasible: bool,
}

impl Column {
    /// 0/1 indicator over sites `1..=n_sites`.
    pub fn incidence(&self, n_sites: usize) -> Vec<f64> {
        (1..=n_sites).map(|i| if self.sites.contains(i) { 1.0 } else { 0.0 }).collect()
    }

    pub fn total_profit(&self) -> f64 {
        self.profits.iter().sum()
    }
}

fn stay_sum(sites: &SiteSet, instance: &Instance) -> f64 {
    sites.iter().map(|i| instance.site(i).stay_time).sum()
}

fn profit_sum(sites: &SiteSet, instance: &Instance) -> Vec<f64> {
    let mut p = vec![0.0; instance.n_stakeholders];
    for i in sites.iter() {
        for (acc, v) in p.iter_mut().zip(&instance.site(i).profits) {
            *acc += v;
        }
    }
    p
}

fn linear(tsp: f64, stay: f64, arc: &[f64], site: &[f64]) -> Vec<f64> {
    arc.iter().zip(site).map(|(a, s)| tsp * a + stay * s).collect()
}

fn within(usage: &[f64], budget: &[f64]) -> bool {
    usage.iter().zip(budget).all(|(u, b)| *u <= b + BUDGET_TOL)
}

/// Column for `sites` toured along `tour`.
pub fn column_from_tour(sites: &SiteSet, tour: Tour, instance: &Instance) -> Column {
    let r = &instance.resources;
    let stay = stay_sum(sites, instance);
    let route_usage = linear(tour.cost, stay, &r.on_arc_route, &r.on_site_route);
    let consumption = linear(tour.cost, stay, &r.on_arc_mission, &r.on_site_mission);
    let feasible = within(&route_usage, &r.route_budget);
    Column {
        sites: sites.clone(),
        tsp_cost: tour.cost,
        tour_order: tour.order,
        route_usage,
        consumption,
        profits: profit_sum(sites, instance),
        feasible,
    }
}

/// Full evaluation of a route: exact TSP, budget check, consumption and profits.
pub fn evaluate_column(sites: &SiteSet, instance: &Instance, matrix: &CostMatrix, cache: &TspCache) -> Result<Column> {
    if sites.is_empty() {
        return Err(Error::InvalidArgument("a column needs at least one site".into()));
    }
    let tour = cache.get_or_compute(sites, matrix)?;
    Ok(column_from_tour(sites, tour, instance))
}

/// Per-route budget check. The empty route is feasible.
pub fn is_route_feasible(sites: &SiteSet, instance: &Instance, matrix: &CostMatrix, cache: &TspCache) -> Result<bool> {
    RouteOracle::new(instance, matrix).with_cache(cache).is_feasible(sites)
}

/// Route evaluation bound to one instance and matrix, with cheap
/// infeasibility shortcuts and superset pruning tests.
///
/// `tau` is the largest triangle-inequality violation of the matrix. Removing
/// one site from a tour lengthens it by at most `tau`, so
/// `TSP(S) <= TSP(T) + (|T| - |S|) * tau` for `S ⊆ T`. All lower bounds below
/// are shifted by that amount, which keeps them valid on truncated or
/// non-metric matrices (where they simply prune less).
pub struct RouteOracle<'a> {
    instance: &'a Instance,
    matrix: &'a CostMatrix,
    cache: CacheRef<'a>,
    tau: f64,
    max_route_sites: usize,
}

enum CacheRef<'a> {
    Owned(TspCache),
    Borrowed(&'a TspCache),
}

impl<'a> RouteOracle<'a> {
    pub fn new(instance: &'a Instance, matrix: &'a CostMatrix) -> Self {
        let tau = matrix.triangle_violation().max(0.0);
        let tau = if tau <= 1e-12 { 0.0 } else { tau };
        Self {
            instance,
            matrix,
            cache: CacheRef::Owned(TspCache::new()),
            tau,
            max_route_sites: max_route_sites(instance),
        }
    }

    pub fn with_cache(mut self, cache: &'a TspCache) -> Self {
        self.cache = CacheRef::Borrowed(cache);
        self
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn matrix(&self) -> &'a CostMatrix {
        self.matrix
    }

    pub fn cache(&self) -> &TspCache {
        match &self.cache {
            CacheRef::Owned(c) => c,
            CacheRef::Borrowed(c) => c,
        }
    }

    /// Largest triangle violation found in the matrix.
    pub fn triangle_slack(&self) -> f64 {
        self.tau
    }

    /// Upper bound on the number of sites any feasible route can hold.
    pub fn max_route_sites(&self) -> usize {
        self.max_route_sites
    }

    pub fn evaluate(&self, sites: &SiteSet) -> Result<Column> {
        evaluate_column(sites, self.instance, self.matrix, self.cache())
    }

    /// Stay-time and depot round-trip bound; true means provably infeasible.
    pub fn quick_infeasible(&self, sites: &SiteSet) -> bool {
        let r = &self.instance.resources;
        let stay = stay_sum(sites, self.instance);
        let k = sites.len();
        let round_trip = sites
            .iter()
            .map(|i| self.matrix.get(0, i) + self.matrix.get(i, 0))
            .fold(0.0, f64::max);
        let tsp_lb = (round_trip - k.saturating_sub(1) as f64 * self.tau).max(0.0);
        r.route_budget
            .iter()
            .zip(&r.on_arc_route)
            .zip(&r.on_site_route)
            .any(|((b, ca), cs)| tsp_lb * ca + stay * cs > b + BUDGET_TOL)
    }

    /// Evaluates a candidate, returning `None` when it breaks the route budget.
    pub fn feasible_column(&self, sites: &SiteSet) -> Result<Option<Column>> {
        if self.quick_infeasible(sites) {
            return Ok(None);
        }
        let col = self.evaluate(sites)?;
        Ok(col.feasible.then_some(col))
    }

    pub fn is_feasible(&self, sites: &SiteSet) -> Result<bool> {
        if sites.is_empty() {
            return Ok(true);
        }
        if self.quick_infeasible(sites) || sites.len() > self.max_route_sites {
            return Ok(false);
        }
        Ok(self.evaluate(sites)?.feasible)
    }

    /// Lower bound on the TSP cost of any superset of `col.sites` that a
    /// feasible route could have.
    fn superset_tsp_lb(&self, col: &Column) -> f64 {
        let extra = self.max_route_sites.saturating_sub(col.sites.len()) as f64;
        (col.tsp_cost - extra * self.tau).max(0.0)
    }

    /// False when no superset of `col.sites` can satisfy the route budget.
    pub fn superset_may_be_feasible(&self, col: &Column) -> bool {
        if col.sites.len() >= self.max_route_sites {
            return false;
        }
        let r = &self.instance.resources;
        let lb = self.superset_tsp_lb(col);
        let stay = stay_sum(&col.sites, self.instance);
        r.route_budget
            .iter()
            .zip(&r.on_arc_route)
            .zip(&r.on_site_route)
            .all(|((b, ca), cs)| lb * ca + stay * cs <= b + BUDGET_TOL)
    }

    /// Componentwise lower bound on the mission consumption of any superset.
    pub fn superset_consumption_lb(&self, col: &Column) -> Vec<f64> {
        let r = &self.instance.resources;
        let lb = self.superset_tsp_lb(col);
        let stay = stay_sum(&col.sites, self.instance);
        linear(lb, stay, &r.on_arc_mission, &r.on_site_mission)
    }
}

/// Most sites a feasible route may contain, from stay times alone.
fn max_route_sites(instance: &Instance) -> usize {
    let mut stays: Vec<f64> = instance.sites.iter().map(|s| s.stay_time).collect();
    stays.sort_by(f64::total_cmp);
    let r = &instance.resources;
    let mut cap = instance.n_sites();
    for (b, cs) in r.route_budget.iter().zip(&r.on_site_route) {
        if *cs <= 0.0 {
            continue;
        }
        let mut acc = 0.0;
        let mut m = 0;
        for s in &stays {
            if (acc + s) * cs > b + BUDGET_TOL {
                break;
            }
            acc += s;
            m += 1;
        }
        cap = cap.min(m);
    }
    cap
}
