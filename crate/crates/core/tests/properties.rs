mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_tsp, random_instance, random_matrix};
use vrpvp::colgen::{solve_relaxation, solve_relaxation_cached, RelaxationOptions};
use vrpvp::cost::euclidean_matrix;
use vrpvp::lp::{check_duality, solve_lp, LpProblem, LpStatus};
use vrpvp::model::{parse_instance, serialize_instance};
use vrpvp::routing::{tsp_exact, tour_cost, IncrementalTsp};
use vrpvp::{solve_vrpvp, Point, SiteSet, SolveOptions, TspCache};

fn subset(n: usize, bits: u32) -> Vec<usize> {
    (1..n).filter(|i| bits & (1 << (i - 1)) != 0).collect()
}

/// Best objective over every vertex of `{x ≥ 0, Ax ≤ b}`, or `None` when the
/// region is empty. Assumes the region is bounded.
fn vertex_optimum(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push((e, 0.0));
    }
    let total = rows.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn combos(start: usize, depth: usize, total: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for i in start..total {
            pick[depth] = i;
            combos(i + 1, depth + 1, total, pick, f);
        }
    }
    combos(0, 0, total, &mut pick, &mut |idx| {
        let m = DMatrix::from_fn(n, n, |r, col| rows[idx[r]].0[col]);
        let rhs = DVector::from_fn(n, |r, _| rows[idx[r]].1);
        let Some(x) = m.lu().solve(&rhs) else { return };
        let feasible = rows.iter().all(|(row, bi)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-7);
        if feasible {
            let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    });
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn held_karp_matches_permutations(seed in any::<u64>(), n in 2usize..9, bits in any::<u32>(), symmetric in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n, symmetric, false);
        let sites = subset(n, bits);
        let tour = tsp_exact(&SiteSet::from_ids(sites.iter().copied()), &m).unwrap();
        prop_assert_eq!(tour.cost, brute_tsp(&sites, &m));
        prop_assert_eq!(tour_cost(&tour.order, &m), tour.cost);
        prop_assert_eq!(tour.order.first(), Some(&0));
        prop_assert_eq!(tour.order.last(), Some(&0));
        if !sites.is_empty() {
            prop_assert_eq!(tour.order.len(), sites.len() + 2);
        }
    }

    #[test]
    fn incremental_table_tracks_exact_tsp(seed in any::<u64>(), n in 2usize..11, perm_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n, seed % 2 == 0, false);
        let mut order: Vec<usize> = (1..n).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rand::Rng::random_range(&mut prng, 0..=i));
        }
        let mut inc = IncrementalTsp::new(&m);
        for (depth, &v) in order.iter().enumerate() {
            let cost = inc.push(v).unwrap();
            let exact = tsp_exact(&SiteSet::from_ids(order[..=depth].iter().copied()), &m).unwrap();
            prop_assert_eq!(cost, exact.cost);
            prop_assert_eq!(inc.tour().cost, exact.cost);
            prop_assert_eq!(tour_cost(&inc.tour().order, &m), exact.cost);
        }
        while inc.len() > 1 {
            inc.pop();
            let exact = tsp_exact(&SiteSet::from_ids(order[..inc.len()].iter().copied()), &m).unwrap();
            prop_assert_eq!(inc.cost(), exact.cost);
        }
    }

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>(), m in 1usize..4, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-3.0..4.0)).collect()).collect();
        let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..8.0)).collect();
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            a.push(row);
            b.push(10.0);
        }
        let lp = LpProblem::from_dense(c.clone(), &a, b.clone()).unwrap();
        let sol = solve_lp(&lp).unwrap();
        match vertex_optimum(&c, &a, &b) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - v).abs() <= 1e-6, "simplex {} vertices {}", sol.objective, v);
                prop_assert!(check_duality(&lp, &sol).is_empty());
            }
        }
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let back = parse_instance(&serialize_instance(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn translation_leaves_objectives_unchanged(seed in 0u64..10_000, dx in -20i32..20, dy in -20i32..20) {
        let mut inst = random_instance(seed);
        let snap = |p: &mut Point| {
            p.x = (p.x * 2.0).round() / 2.0;
            p.y = (p.y * 2.0).round() / 2.0;
        };
        snap(&mut inst.depot);
        for s in &mut inst.sites {
            snap(&mut s.location);
        }
        let mut moved = inst.clone();
        moved.depot = Point::new(inst.depot.x + dx as f64, inst.depot.y + dy as f64);
        for s in &mut moved.sites {
            s.location = Point::new(s.location.x + dx as f64, s.location.y + dy as f64);
        }
        let a = solve_vrpvp(&inst, &euclidean_matrix(&inst), &SolveOptions::default()).unwrap();
        let b = solve_vrpvp(&moved, &euclidean_matrix(&moved), &SolveOptions::default()).unwrap();
        prop_assert_eq!(a.z_mip, b.z_mip);
        prop_assert!((a.z_lp - b.z_lp).abs() <= 1e-9);
    }

    #[test]
    fn warm_cache_does_not_change_relaxation(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let m = euclidean_matrix(&inst);
        let opts = RelaxationOptions::default();
        let cold = solve_relaxation(&inst, &m, &opts).unwrap();
        let cache = TspCache::new();
        let first = solve_relaxation_cached(&inst, &m, &cache, &opts).unwrap();
        let filled = cache.len();
        let second = solve_relaxation_cached(&inst, &m, &cache, &opts).unwrap();
        prop_assert_eq!(cache.len(), filled);
        prop_assert_eq!(cold.z_lp, first.z_lp);
        prop_assert_eq!(first.z_lp, second.z_lp);
        prop_assert_eq!(first.pool.len(), second.pool.len());
    }

    #[test]
    fn parallel_pricing_agrees_with_serial(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let m = euclidean_matrix(&inst);
        let serial = solve_relaxation(&inst, &m, &RelaxationOptions::default()).unwrap();
        let parallel = solve_relaxation(&inst, &m, &RelaxationOptions { workers: 3, ..Default::default() }).unwrap();
        prop_assert!((serial.z_lp - parallel.z_lp).abs() <= 1e-9);
    }
}
