//! End-to-end solves, objective modes, the optimality gap and the benchmark
//! harness.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colgen::{solve_relaxation_cached, RelaxationOptions, RelaxationResult};
use crate::cost::{euclidean_matrix, CostMatrix};
use crate::error::{Error, Result};
use crate::mip::{evaluate_solution, solve_restricted_mip, IntegerSolution, MipOptions, MipStatus};
use crate::model::{convert_chao, maxmin_value, Instance};
use crate::routing::{Column, SiteSet, TspCache};

/// Which scalar objective the pipeline maximizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Smallest stakeholder total.
    MaxMin,
    /// Total of one stakeholder (1-based).
    Stakeholder(usize),
    /// Weighted sum of the stakeholder totals.
    WeightedSum(Vec<f64>),
}

impl ObjectiveMode {
    pub fn check(&self, n_stakeholders: usize) -> Result<()> {
        match self {
            ObjectiveMode::MaxMin => Ok(()),
            ObjectiveMode::Stakeholder(k) if (1..=n_stakeholders).contains(k) => Ok(()),
            ObjectiveMode::Stakeholder(k) => Err(Error::InvalidArgument(format!(
                "stakeholder {k} outside 1..={n_stakeholders}"
            ))),
            ObjectiveMode::WeightedSum(w) => {
                if w.len() != n_stakeholders {
                    return Err(Error::InvalidArgument(format!(
                        "{} weights for {n_stakeholders} stakeholders",
                        w.len()
                    )));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                    return Err(Error::InvalidArgument("weights must be nonnegative and not all zero".into()));
                }
                Ok(())
            }
        }
    }

    /// The instance the pipeline actually solves under this mode.
    pub fn project(&self, instance: &Instance) -> Result<Instance> {
        self.check(instance.n_stakeholders)?;
        Ok(match self {
            ObjectiveMode::MaxMin => instance.clone(),
            ObjectiveMode::Stakeholder(k) => instance.with_projected_profits(1, |p| vec![p[k - 1]]),
            ObjectiveMode::WeightedSum(w) => {
                instance.with_projected_profits(1, |p| vec![p.iter().zip(w).map(|(a, b)| a * b).sum()])
            }
        })
    }
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveMode::MaxMin => write!(f, "maxmin"),
            ObjectiveMode::Stakeholder(k) => write!(f, "stakeholder={k}"),
            ObjectiveMode::WeightedSum(w) => {
                let parts: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                write!(f, "sum={}", parts.join(","))
            }
        }
    }
}

impl FromStr for ObjectiveMode {
    type Err = Error;

    /// `maxmin`, `stakeholder=K`, `sum` (unit weights, resolved later) or `sum=w1,..,wn`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "maxmin" {
            return Ok(ObjectiveMode::MaxMin);
        }
        if s == "sum" {
            return Ok(ObjectiveMode::WeightedSum(Vec::new()));
        }
        if let Some(k) = s.strip_prefix("stakeholder=") {
            let k = k.parse().map_err(|_| Error::Parse(format!("bad stakeholder index {k:?}")))?;
            return Ok(ObjectiveMode::Stakeholder(k));
        }
        if let Some(w) = s.strip_prefix("sum=") {
            let w = w
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad weight {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            return Ok(ObjectiveMode::WeightedSum(w));
        }
        Err(Error::Parse(format!("unknown objective {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub objective: ObjectiveMode,
    /// Columns added per pricing round; `None` adds every violating route.
    pub max_columns: Option<usize>,
    pub iteration_cap: usize,
    pub time_limit: Option<Duration>,
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { objective: ObjectiveMode::MaxMin, max_columns: None, iteration_cap: 10_000, time_limit: None, workers: 1 }
    }
}

impl SolveOptions {
    /// Fills in unit weights for a bare `sum` objective.
    pub fn resolved(&self, n_stakeholders: usize) -> SolveOptions {
        let mut out = self.clone();
        if let ObjectiveMode::WeightedSum(w) = &out.objective {
            if w.is_empty() {
                out.objective = ObjectiveMode::WeightedSum(vec![1.0; n_stakeholders]);
            }
        }
        out
    }
}

/// Optimality gap between the LP bound and the integer objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gap {
    Percent(f64),
    /// The LP bound is zero but the integer value differs from it.
    UnboundedRelative { difference: f64 },
}

impl Gap {
    pub fn percent(&self) -> Option<f64> {
        match self {
            Gap::Percent(p) => Some(*p),
            Gap::UnboundedRelative { .. } => None,
        }
    }
}

/// `(J_L − J_A) / J_L × 100` on min-form values (`J = −z`).
pub fn optimality_gap(j_lp: f64, j_mip: f64) -> Gap {
    if j_lp.abs() <= 1e-12 {
        let d = (j_mip - j_lp).abs();
        return if d <= 1e-9 { Gap::Percent(0.0) } else { Gap::UnboundedRelative { difference: d } };
    }
    // Adding 0.0 turns a signed zero from equal values into +0.
    Gap::Percent((j_lp - j_mip) / j_lp * 100.0 + 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub sites: Vec<usize>,
    /// Closed tour starting and ending at the depot (node 0).
    pub tour: Vec<usize>,
    pub tsp_cost: f64,
    /// Usage against each route budget; the first entry is the route time.
    pub usage: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Profit collected per original stakeholder.
    pub profits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub relaxation_s: f64,
    pub mip_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub instance: String,
    pub objective: String,
    /// LP bound, in maximization form.
    pub z_lp: f64,
    /// Integer objective over the generated columns, in maximization form.
    pub z_mip: f64,
    /// Gap in percent; `None` when the LP bound is zero and differs from `z_mip`.
    pub gap_pct: Option<f64>,
    pub gap_abs: f64,
    pub converged: bool,
    pub mip_status: MipStatus,
    pub mip_bound: f64,
    pub routes: Vec<RouteReport>,
    /// Per original stakeholder.
    pub profit_sums: Vec<f64>,
    pub mission_consumption: Vec<f64>,
    pub iterations: usize,
    pub initial_columns: usize,
    pub generated_columns: usize,
    pub pool_size: usize,
    pub nodes: usize,
    pub unreachable_sites: Vec<usize>,
    pub timings: Timings,
}

impl SolveReport {
    pub fn j_lp(&self) -> f64 {
        -self.z_lp
    }

    pub fn j_mip(&self) -> f64 {
        -self.z_mip
    }

    pub fn min_profit(&self) -> f64 {
        self.profit_sums.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn total_profit(&self) -> f64 {
        self.profit_sums.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Route table: sites in visiting order, route time and profit vector.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "instance   {}", self.instance);
        let _ = writeln!(s, "objective  {}", self.objective);
        let _ = writeln!(s, "z_lp       {:.4}", self.z_lp);
        let _ = writeln!(s, "z_mip      {:.4}", self.z_mip);
        match self.gap_pct {
            Some(g) => {
                let _ = writeln!(s, "gap        {g:.3} %");
            }
            None => {
                let _ = writeln!(s, "gap        unbounded-relative (|J_L - J_A| = {:.4})", self.gap_abs);
            }
        }
        if !self.converged {
            let _ = writeln!(s, "warning    column generation hit the iteration cap; z_lp is the last restricted bound");
        }
        if self.mip_status != MipStatus::Optimal {
            let _ = writeln!(s, "warning    branch and bound stopped early, bound {:.4}", self.mip_bound);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "route  sequence                                  time      profits");
        for (n, r) in self.routes.iter().enumerate() {
            let seq: Vec<String> = r.tour.iter().map(|v| if *v == 0 { "D".to_string() } else { v.to_string() }).collect();
            let prof: Vec<String> = r.profits.iter().map(|p| format!("{p}")).collect();
            let _ = writeln!(
                s,
                "{:<6} {:<41} {:<9.3} ({})",
                n + 1,
                seq.join("-"),
                r.usage.first().copied().unwrap_or(r.tsp_cost),
                prof.join(", ")
            );
        }
        let total_time: f64 = self.routes.iter().map(|r| r.usage.first().copied().unwrap_or(r.tsp_cost)).sum();
        let sums: Vec<String> = self.profit_sums.iter().map(|p| format!("{p}")).collect();
        let _ = writeln!(s, "{:<6} {:<41} {:<9.3} ({})", "total", "", total_time, sums.join(", "));
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "masters {}  columns {} (+{} generated)  nodes {}  time {:.2} s",
            self.iterations, self.pool_size, self.generated_columns, self.nodes, self.timings.total_s
        );
        if !self.unreachable_sites.is_empty() {
            let ids: Vec<String> = self.unreachable_sites.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "unreachable sites: {}", ids.join(" "));
        }
        s
    }
}

fn route_report(col: &Column, original: &Instance) -> RouteReport {
    let mut profits = vec![0.0; original.n_stakeholders];
    for i in col.sites.iter() {
        for (acc, p) in profits.iter_mut().zip(&original.site(i).profits) {
            *acc += p;
        }
    }
    RouteReport {
        sites: col.sites.to_vec(),
        tour: col.tour_order.clone(),
        tsp_cost: col.tsp_cost,
        usage: col.route_usage.clone(),
        consumption: col.consumption.clone(),
        profits,
    }
}

/// Runs column generation and branch and bound under `options.objective`.
pub fn solve_vrpvp(instance: &Instance, matrix: &CostMatrix, options: &SolveOptions) -> Result<SolveReport> {
    let errors = instance.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidInstance(errors));
    }
    if matrix.dimension() != instance.n_sites() + 1 {
        return Err(Error::Dimension(format!(
            "matrix has {} nodes, instance needs {}",
            matrix.dimension(),
            instance.n_sites() + 1
        )));
    }
    let options = options.resolved(instance.n_stakeholders);
    let working = options.objective.project(instance)?;
    let start = Instant::now();
    let cache = TspCache::new();
    let relax_opts = RelaxationOptions {
        max_columns: options.max_columns,
        iteration_cap: options.iteration_cap,
        workers: options.workers.max(1),
    };
    let relax = match solve_relaxation_cached(&working, matrix, &cache, &relax_opts) {
        Ok(r) => r,
        Err(Error::NoReachableSite) => return Ok(empty_report(instance, &options, start.elapsed())),
        Err(e) => return Err(e),
    };
    let relaxation_s = start.elapsed().as_secs_f64();

    let mip_start = Instant::now();
    let mip_opts = MipOptions {
        time_limit: options.time_limit.map(|t| t.saturating_sub(start.elapsed()).max(Duration::from_millis(1))),
    };
    let mip = solve_restricted_mip(&relax.pool, &working, &mip_opts)?;
    let mip_s = mip_start.elapsed().as_secs_f64();
    Ok(assemble(instance, matrix, &options, &relax, &mip, relaxation_s, mip_s, start.elapsed()))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    instance: &Instance,
    matrix: &CostMatrix,
    options: &SolveOptions,
    relax: &RelaxationResult,
    mip: &IntegerSolution,
    relaxation_s: f64,
    mip_s: f64,
    total: Duration,
) -> SolveReport {
    let check = evaluate_solution(&mip.selected, instance, matrix);
    let gap = optimality_gap(relax.j_lp(), mip.j_value());
    SolveReport {
        instance: instance.name.clone(),
        objective: options.objective.to_string(),
        z_lp: relax.z_lp,
        z_mip: mip.z_value,
        gap_pct: gap.percent(),
        gap_abs: (relax.z_lp - mip.z_value).abs(),
        converged: relax.converged,
        mip_status: mip.status,
        mip_bound: mip.bound,
        routes: mip.selected.iter().map(|c| route_report(c, instance)).collect(),
        profit_sums: check.sums.0,
        mission_consumption: check.mission_consumption,
        iterations: relax.iterations,
        initial_columns: relax.initial_columns,
        generated_columns: relax.generated_columns(),
        pool_size: relax.pool.len(),
        nodes: mip.nodes,
        unreachable_sites: relax.pool.unreachable.clone(),
        timings: Timings { relaxation_s, mip_s, total_s: total.as_secs_f64() },
    }
}

/// No site has a feasible round trip: the only solution visits nothing.
fn empty_report(instance: &Instance, options: &SolveOptions, elapsed: Duration) -> SolveReport {
    SolveReport {
        instance: instance.name.clone(),
        objective: options.objective.to_string(),
        z_lp: 0.0,
        z_mip: 0.0,
        gap_pct: Some(0.0),
        gap_abs: 0.0,
        converged: true,
        mip_status: MipStatus::Optimal,
        mip_bound: 0.0,
        routes: Vec::new(),
        profit_sums: vec![0.0; instance.n_stakeholders],
        mission_consumption: vec![0.0; instance.resources.mission_budget.len()],
        iterations: 0,
        initial_columns: 0,
        generated_columns: 0,
        pool_size: 0,
        nodes: 0,
        unreachable_sites: (1..=instance.n_sites()).collect(),
        timings: Timings { relaxation_s: 0.0, mip_s: 0.0, total_s: elapsed.as_secs_f64() },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: String,
    /// Value of the mode's own objective.
    pub objective: f64,
    /// Per-stakeholder totals of the mode's solution.
    pub sums: Vec<f64>,
    pub minimum: f64,
    pub total: f64,
    pub routes: Vec<Vec<usize>>,
}

/// Solves under max-min, each single stakeholder and the unit-weight sum.
pub fn compare_modes(instance: &Instance, matrix: &CostMatrix, options: &SolveOptions) -> Result<Vec<ModeRow>> {
    let mut modes = vec![ObjectiveMode::MaxMin];
    modes.extend((1..=instance.n_stakeholders).map(ObjectiveMode::Stakeholder));
    modes.push(ObjectiveMode::WeightedSum(vec![1.0; instance.n_stakeholders]));
    modes
        .into_iter()
        .map(|mode| {
            let opts = SolveOptions { objective: mode.clone(), ..options.clone() };
            let report = solve_vrpvp(instance, matrix, &opts)?;
            let cols: Vec<Column> = report
                .routes
                .iter()
                .map(|r| Column {
                    sites: SiteSet::from_ids(r.sites.iter().copied()),
                    tsp_cost: r.tsp_cost,
                    tour_order: r.tour.clone(),
                    route_usage: r.usage.clone(),
                    consumption: r.consumption.clone(),
                    profits: r.profits.clone(),
                    feasible: true,
                })
                .collect();
            let check = evaluate_solution(&cols, instance, matrix);
            if !check.is_feasible() {
                return Err(Error::InvalidArgument(format!("{mode} solution infeasible: {:?}", check.violations)));
            }
            let sums = check.sums;
            Ok(ModeRow {
                mode: mode.to_string(),
                objective: report.z_mip,
                minimum: maxmin_value(&sums)?,
                total: sums.total(),
                sums: sums.0,
                routes: report.routes.iter().map(|r| r.sites.clone()).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub name: String,
    pub n_sites: usize,
    pub n_routes: usize,
    pub budget: f64,
    pub z_lp: f64,
    pub z_mip: f64,
    pub gap_pct: f64,
    pub time_s: f64,
    pub columns: usize,
    /// Per-stakeholder profit totals of the converted instance.
    pub profit_totals: Vec<f64>,
}

pub const BENCHMARK_HEADER: &str = "name,n_sites,n_routes,budget,z_lp,z_mip,gap_pct,time_s,columns";

impl BenchmarkRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.3},{}",
            self.name, self.n_sites, self.n_routes, self.budget, self.z_lp, self.z_mip, self.gap_pct, self.time_s, self.columns
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub rows: Vec<BenchmarkRow>,
    /// Files that converted but failed to solve, with the error.
    pub failures: Vec<(String, String)>,
    /// Files that could not be read or converted.
    pub skipped: Vec<(String, String)>,
}

impl BenchmarkOutcome {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(BENCHMARK_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

enum FileResult {
    Row(BenchmarkRow),
    Failed(String, String),
    Skipped(String, String),
}

fn bench_file(path: &Path, n_stakeholders: usize, seed: u64, options: &SolveOptions) -> FileResult {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return FileResult::Skipped(name, e.to_string()),
    };
    let mut inst = match convert_chao(&text, n_stakeholders, seed) {
        Ok(i) => i,
        Err(e) => return FileResult::Skipped(name, e.to_string()),
    };
    inst.name = name.clone();
    let matrix = euclidean_matrix(&inst);
    let opts = SolveOptions { objective: ObjectiveMode::MaxMin, workers: 1, ..options.clone() };
    let start = Instant::now();
    match solve_vrpvp(&inst, &matrix, &opts) {
        Ok(rep) => FileResult::Row(BenchmarkRow {
            name,
            n_sites: inst.n_sites(),
            n_routes: inst.max_routes,
            budget: inst.resources.route_budget[0],
            z_lp: rep.z_lp,
            z_mip: rep.z_mip,
            gap_pct: rep.gap_pct.unwrap_or(f64::NAN),
            time_s: start.elapsed().as_secs_f64(),
            columns: rep.pool_size,
            profit_totals: inst.profit_totals().0,
        }),
        Err(e) => FileResult::Failed(name, e.to_string()),
    }
}

/// Converts and solves every file in `dir` (sorted by name), `options.workers`
/// files at a time, each with its own cache.
pub fn run_benchmark(dir: &Path, n_stakeholders: usize, seed: u64, options: &SolveOptions) -> Result<BenchmarkOutcome> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<FileResult> =
        pool.install(|| paths.par_iter().map(|p| bench_file(p, n_stakeholders, seed, options)).collect());
    let mut out = BenchmarkOutcome::default();
    for r in results {
        match r {
            FileResult::Row(row) => out.rows.push(row),
            FileResult::Failed(n, e) => out.failures.push((n, e)),
            FileResult::Skipped(n, e) => {
                warn!("skipping {n}: {e}");
                out.skipped.push((n, e));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert!((optimality_gap(-325.59, -318.0).percent().unwrap() - 2.331).abs() < 0.001);
        let g = optimality_gap(-38.25, -38.0).percent().unwrap();
        assert!((0.65..=0.66).contains(&g), "{g}");
        assert_eq!(optimality_gap(-7.0, -7.0), Gap::Percent(0.0));
        assert_eq!(optimality_gap(0.0, 0.0), Gap::Percent(0.0));
        assert_eq!(optimality_gap(0.0, -1.0), Gap::UnboundedRelative { difference: 1.0 });
    }

    #[test]
    fn objective_parsing() {
        assert_eq!("maxmin".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::MaxMin);
        assert_eq!("stakeholder=3".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::Stakeholder(3));
        assert_eq!("sum=1,2".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::WeightedSum(vec![1.0, 2.0]));
        assert!("sum=a".parse::<ObjectiveMode>().is_err());
        assert!("best".parse::<ObjectiveMode>().is_err());
        let opts = SolveOptions { objective: "sum".parse().unwrap(), ..Default::default() };
        assert_eq!(opts.resolved(3).objective, ObjectiveMode::WeightedSum(vec![1.0; 3]));
        assert_eq!(ObjectiveMode::Stakeholder(2).to_string(), "stakeholder=2");
    }

    #[test]
    fn mode_checks() {
        assert!(ObjectiveMode::Stakeholder(0).check(2).is_err());
        assert!(ObjectiveMode::Stakeholder(3).check(2).is_err());
        assert!(ObjectiveMode::WeightedSum(vec![0.0, 0.0]).check(2).is_err());
        assert!(ObjectiveMode::WeightedSum(vec![-1.0, 2.0]).check(2).is_err());
        assert!(ObjectiveMode::WeightedSum(vec![1.0]).check(2).is_err());
        assert!(ObjectiveMode::WeightedSum(vec![0.0, 2.0]).check(2).is_ok());
    }
}
