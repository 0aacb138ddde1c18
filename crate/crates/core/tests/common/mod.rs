//! Independent oracles shared by the integration tests: permutation TSP,
//! exhaustive route enumeration and a dense full-enumeration master LP.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrpvp::cost::euclidean_matrix;
use vrpvp::lp::{solve_lp, LpProblem, LpStatus};
use vrpvp::{CostMatrix, Instance, Metric, Point, ResourceModel, Site};

pub const TOL: f64 = 1e-9;

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Cheapest depot-anchored tour over `sites`, summing arcs left to right.
pub fn brute_tsp(sites: &[usize], m: &CostMatrix) -> f64 {
    fn go(prev: usize, acc: f64, rest: &mut Vec<usize>, m: &CostMatrix, best: &mut f64) {
        if rest.is_empty() {
            let total = acc + m.get(prev, 0);
            if total < *best {
                *best = total;
            }
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            go(v, acc + m.get(prev, v), rest, m, best);
            rest.insert(i, v);
        }
    }
    if sites.is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    go(0, 0.0, &mut sites.to_vec(), m, &mut best);
    best
}

#[derive(Debug, Clone)]
pub struct Route {
    pub mask: u32,
    pub sites: Vec<usize>,
    pub cost: f64,
    pub consumption: Vec<f64>,
    pub profits: Vec<f64>,
}

/// Every nonempty site subset whose optimal tour meets the route budget.
pub fn feasible_routes(inst: &Instance, m: &CostMatrix) -> Vec<Route> {
    let n = inst.n_sites();
    let r = &inst.resources;
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let sites: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
        let stay: f64 = sites.iter().map(|&i| inst.sites[i - 1].stay_time).sum();
        let cost = brute_tsp(&sites, m);
        let ok = (0..r.route_budget.len())
            .all(|b| cost * r.on_arc_route[b] + stay * r.on_site_route[b] <= r.route_budget[b] + TOL);
        if !ok {
            continue;
        }
        let consumption =
            (0..r.mission_budget.len()).map(|b| cost * r.on_arc_mission[b] + stay * r.on_site_mission[b]).collect();
        let mut profits = vec![0.0; inst.n_stakeholders];
        for &i in &sites {
            for (k, p) in inst.sites[i - 1].profits.iter().enumerate() {
                profits[k] += p;
            }
        }
        out.push(Route { mask, sites, cost, consumption, profits });
    }
    out
}

/// Best max-min value over all combinations of at most `max_routes` disjoint
/// feasible routes within the mission budget. The empty plan scores 0.
pub fn exhaustive_maxmin(inst: &Instance, routes: &[Route]) -> f64 {
    struct Ctx<'a> {
        inst: &'a Instance,
        routes: &'a [Route],
        best: f64,
    }
    fn go(c: &mut Ctx, start: usize, used: u32, count: usize, sums: &mut Vec<f64>, cons: &mut Vec<f64>) {
        let value = sums.iter().copied().fold(f64::INFINITY, f64::min);
        if value > c.best {
            c.best = value;
        }
        if count == c.inst.max_routes {
            return;
        }
        for j in start..c.routes.len() {
            let r = &c.routes[j];
            if r.mask & used != 0 {
                continue;
            }
            let within = cons
                .iter()
                .zip(&r.consumption)
                .zip(&c.inst.resources.mission_budget)
                .all(|((a, h), b)| a + h <= b + TOL);
            if !within {
                continue;
            }
            for (s, p) in sums.iter_mut().zip(&r.profits) {
                *s += p;
            }
            for (a, h) in cons.iter_mut().zip(&r.consumption) {
                *a += h;
            }
            go(c, j + 1, used | r.mask, count + 1, sums, cons);
            for (s, p) in sums.iter_mut().zip(&r.profits) {
                *s -= p;
            }
            for (a, h) in cons.iter_mut().zip(&r.consumption) {
                *a -= h;
            }
        }
    }
    let mut c = Ctx { inst, routes, best: 0.0 };
    let mut sums = vec![0.0; inst.n_stakeholders];
    let mut cons = vec![0.0; inst.resources.mission_budget.len()];
    go(&mut c, 0, 0, 0, &mut sums, &mut cons);
    c.best
}

/// LP relaxation of the route-selection problem over every feasible route,
/// assembled densely from scratch. Returns `max z`.
pub fn enumeration_lp(inst: &Instance, routes: &[Route]) -> f64 {
    let n = inst.n_sites();
    let nm = inst.resources.mission_budget.len();
    let ns = inst.n_stakeholders;
    let nv = routes.len() + 1;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 1..=n {
        let mut row = vec![0.0; nv];
        for (j, r) in routes.iter().enumerate() {
            if r.sites.contains(&i) {
                row[j] = 1.0;
            }
        }
        rows.push(row);
        rhs.push(1.0);
    }
    for b in 0..nm {
        let mut row: Vec<f64> = routes.iter().map(|r| r.consumption[b]).collect();
        row.push(0.0);
        rows.push(row);
        rhs.push(inst.resources.mission_budget[b]);
    }
    let mut count = vec![1.0; nv];
    count[nv - 1] = 0.0;
    rows.push(count);
    rhs.push(inst.max_routes as f64);
    for k in 0..ns {
        let mut row: Vec<f64> = routes.iter().map(|r| -r.profits[k]).collect();
        row.push(1.0);
        rows.push(row);
        rhs.push(0.0);
    }
    let mut c = vec![0.0; nv];
    c[nv - 1] = -1.0;
    let mut lp = LpProblem::from_dense(c, &rows, rhs).unwrap();
    lp.set_free(nv - 1).unwrap();
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    -sol.objective
}

/// A small random instance: integer profits, optional mission budget.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_c = rng.random_range(4..=8);
    let n_s = rng.random_range(2..=4);
    let n_r = rng.random_range(1..=3);
    let sites = (1..=n_c)
        .map(|id| Site {
            id,
            location: Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
            profits: (0..n_s).map(|_| rng.random_range(0..10) as f64).collect(),
            stay_time: rng.random_range(0.0..2.0),
        })
        .collect();
    let mut resources = ResourceModel {
        route_budget: vec![rng.random_range(8.0..24.0)],
        on_arc_route: vec![1.0],
        on_site_route: vec![1.0],
        ..Default::default()
    };
    if rng.random_bool(0.5) {
        resources.mission_budget = vec![rng.random_range(10.0..40.0)];
        resources.on_arc_mission = vec![1.0];
        resources.on_site_mission = vec![0.5];
    }
    Instance {
        name: format!("random-{seed}"),
        depot: Point::new(5.0, 5.0),
        sites,
        n_stakeholders: n_s,
        max_routes: n_r,
        resources,
        metric: Metric::Euclidean,
        arc_precision: None,
    }
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, symmetric: bool, integral: bool) -> CostMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || (symmetric && j < i) {
                continue;
            }
            let v = if integral { rng.random_range(1..50) as f64 } else { rng.random_range(0.1..20.0) };
            rows[i][j] = v;
            if symmetric {
                rows[j][i] = v;
            }
        }
    }
    CostMatrix::from_rows(rows, vrpvp::CostUnit::Km).unwrap()
}

pub fn euclidean_points(rng: &mut impl Rng, n: usize) -> CostMatrix {
    let inst = Instance {
        name: "points".into(),
        depot: Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
        sites: (1..n)
            .map(|id| Site {
                id,
                location: Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
                profits: vec![1.0],
                stay_time: 0.0,
            })
            .collect(),
        n_stakeholders: 1,
        max_routes: 1,
        resources: ResourceModel { route_budget: vec![1.0], on_arc_route: vec![1.0], on_site_route: vec![0.0], ..Default::default() },
        metric: Metric::Euclidean,
        arc_precision: None,
    };
    euclidean_matrix(&inst)
}
