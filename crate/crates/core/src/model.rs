//! Domain types, the native JSON instance format and TOP benchmark conversion.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A candidate site. For geographic instances `location.x` is the longitude
/// and `location.y` the latitude, both in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: usize,
    pub location: Point,
    pub profits: Vec<f64>,
    /// Hours spent on site to collect its profits.
    pub stay_time: f64,
}

/// Resource budgets and consumption coefficients.
///
/// Route usage of a tour is `tsp_cost * on_arc_route + stay * on_site_route`
/// and must not exceed `route_budget` componentwise. Mission consumption uses
/// the `*_mission` coefficients against `mission_budget`, summed over routes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResourceModel {
    pub route_budget: Vec<f64>,
    pub mission_budget: Vec<f64>,
    pub on_arc_route: Vec<f64>,
    pub on_site_route: Vec<f64>,
    pub on_arc_mission: Vec<f64>,
    pub on_site_mission: Vec<f64>,
}

/// Where arc costs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Planar distance in km.
    Euclidean,
    /// Great-circle distance divided by a travel speed, in hours.
    Haversine { km_per_hour: f64 },
    /// A CSV matrix file; relative paths resolve against the instance file.
    Matrix { path: PathBuf },
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean => write!(f, "euclidean"),
            Metric::Haversine { km_per_hour } => write!(f, "haversine:{km_per_hour}"),
            Metric::Matrix { path } => write!(f, "matrix:{}", path.display()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "euclidean" {
            return Ok(Metric::Euclidean);
        }
        if let Some(speed) = s.strip_prefix("haversine:") {
            let km_per_hour: f64 = speed
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad haversine speed {speed:?}")))?;
            return Ok(Metric::Haversine { km_per_hour });
        }
        if let Some(path) = s.strip_prefix("matrix:") {
            if path.is_empty() {
                return Err(Error::Parse("matrix metric needs a path".into()));
            }
            return Ok(Metric::Matrix { path: PathBuf::from(path) });
        }
        Err(Error::Parse(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub depot: Point,
    /// Site `i` (1-based id) is stored at position `i - 1`.
    pub sites: Vec<Site>,
    pub n_stakeholders: usize,
    pub max_routes: usize,
    pub resources: ResourceModel,
    pub metric: Metric,
    /// When set, every arc cost is truncated to this many decimals before
    /// routing, the way integer-cost TSP codes see a scaled distance matrix.
    pub arc_precision: Option<u32>,
}

impl Instance {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, id: usize) -> &Site {
        &self.sites[id - 1]
    }

    /// Checks every structural invariant. An empty list means the instance is valid.
    pub fn validate(&self) -> Vec<String> {
        validate(self)
    }

    /// Copy of the instance whose profit vectors are replaced by `project(p_i)`.
    pub fn with_projected_profits(&self, width: usize, project: impl Fn(&[f64]) -> Vec<f64>) -> Instance {
        let mut out = self.clone();
        out.n_stakeholders = width;
        for site in &mut out.sites {
            site.profits = project(&site.profits);
        }
        out
    }

    /// Sum over sites of every stakeholder's profit.
    pub fn profit_totals(&self) -> ProfitSums {
        let mut sums = vec![0.0; self.n_stakeholders];
        for site in &self.sites {
            for (acc, p) in sums.iter_mut().zip(&site.profits) {
                *acc += p;
            }
        }
        ProfitSums(sums)
    }

    /// True when all profits are integers, which lets branch and bound round its bounds down.
    pub fn has_integral_profits(&self) -> bool {
        self.sites
            .iter()
            .flat_map(|s| s.profits.iter())
            .all(|p| p.fract() == 0.0 && p.abs() < 1e15)
    }
}

/// Per-stakeholder profit totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfitSums(pub Vec<f64>);

impl ProfitSums {
    pub fn zeros(n: usize) -> Self {
        ProfitSums(vec![0.0; n])
    }

    pub fn add(&mut self, other: &[f64]) {
        for (acc, v) in self.0.iter_mut().zip(other) {
            *acc += v;
        }
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// The max-min objective value: the smallest stakeholder total.
pub fn maxmin_value(sums: &ProfitSums) -> Result<f64> {
    sums.0
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidArgument("empty profit-sum vector".into()))
}

pub fn validate(instance: &Instance) -> Vec<String> {
    let mut v = Vec::new();
    let ns = instance.n_stakeholders;
    if ns < 1 {
        v.push("n_stakeholders must be ≥ 1".to_string());
    }
    if instance.max_routes < 1 {
        v.push("max_routes must be ≥ 1".to_string());
    }
    if instance.sites.is_empty() {
        v.push("at least one site is required".to_string());
    }
    if !(instance.depot.x.is_finite() && instance.depot.y.is_finite()) {
        v.push("depot: coordinates must be finite".to_string());
    }
    for (pos, site) in instance.sites.iter().enumerate() {
        let id = site.id;
        if id != pos + 1 {
            v.push(format!("site {id}: id must equal its 1-based position {}", pos + 1));
        }
        if !(site.location.x.is_finite() && site.location.y.is_finite()) {
            v.push(format!("site {id}: coordinates must be finite"));
        }
        if !site.stay_time.is_finite() {
            v.push(format!("site {id}: stay_time must be finite"));
        } else if site.stay_time < 0.0 {
            v.push(format!("site {id}: stay_time negative"));
        }
        if site.profits.len() != ns {
            v.push(format!(
                "site {id}: profits has {} entries, expected {ns}",
                site.profits.len()
            ));
        }
        for (k, p) in site.profits.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                v.push(format!("site {id}: profit {} must be finite and nonnegative", k + 1));
            }
        }
    }

    let r = &instance.resources;
    if r.route_budget.is_empty() {
        v.push("route_budget must have at least one entry".to_string());
    }
    check_nonneg(&mut v, "route_budget", &r.route_budget);
    check_nonneg(&mut v, "mission_budget", &r.mission_budget);
    for (name, coef, expect) in [
        ("coef.c_d", &r.on_arc_route, r.route_budget.len()),
        ("coef.c_r", &r.on_site_route, r.route_budget.len()),
        ("coef.d_d", &r.on_arc_mission, r.mission_budget.len()),
        ("coef.d_r", &r.on_site_mission, r.mission_budget.len()),
    ] {
        if coef.len() != expect {
            v.push(format!("{name} has {} entries, expected {expect}", coef.len()));
        }
        check_nonneg(&mut v, name, coef);
    }
    match &instance.metric {
        Metric::Haversine { km_per_hour } if !(*km_per_hour > 0.0 && km_per_hour.is_finite()) => {
            v.push("metric: haversine speed must be positive".to_string());
        }
        _ => {}
    }
    if let Some(d) = instance.arc_precision {
        if d > 12 {
            v.push("arc_precision must be at most 12 decimals".to_string());
        }
    }
    v
}

fn check_nonneg(v: &mut Vec<String>, name: &str, values: &[f64]) {
    for (i, x) in values.iter().enumerate() {
        if !x.is_finite() || *x < 0.0 {
            v.push(format!("{name}[{i}] must be finite and nonnegative"));
        }
    }
}

// ---------------------------------------------------------------------------
// Native JSON format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    name: String,
    n_stakeholders: usize,
    max_routes: usize,
    depot: Point,
    metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arc_precision: Option<u32>,
    route_budget: Vec<f64>,
    #[serde(default)]
    mission_budget: Vec<f64>,
    coef: CoefDoc,
    sites: Vec<SiteDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefDoc {
    c_d: Vec<f64>,
    c_r: Vec<f64>,
    #[serde(default)]
    d_d: Vec<f64>,
    #[serde(default)]
    d_r: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteDoc {
    id: usize,
    x: f64,
    y: f64,
    stay_hours: f64,
    profits: Vec<f64>,
}

/// Parses and validates a native instance document.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let instance = Instance {
        name: doc.name,
        depot: doc.depot,
        sites: doc
            .sites
            .into_iter()
            .map(|s| Site {
                id: s.id,
                location: Point::new(s.x, s.y),
                profits: s.profits,
                stay_time: s.stay_hours,
            })
            .collect(),
        n_stakeholders: doc.n_stakeholders,
        max_routes: doc.max_routes,
        resources: ResourceModel {
            route_budget: doc.route_budget,
            mission_budget: doc.mission_budget,
            on_arc_route: doc.coef.c_d,
            on_site_route: doc.coef.c_r,
            on_arc_mission: doc.coef.d_d,
            on_site_mission: doc.coef.d_r,
        },
        metric: doc.metric.parse()?,
        arc_precision: doc.arc_precision,
    };
    let violations = instance.validate();
    if violations.is_empty() {
        Ok(instance)
    } else {
        Err(Error::InvalidInstance(violations))
    }
}

pub fn serialize_instance(instance: &Instance) -> String {
    let r = &instance.resources;
    let doc = InstanceDoc {
        name: instance.name.clone(),
        n_stakeholders: instance.n_stakeholders,
        max_routes: instance.max_routes,
        depot: instance.depot,
        metric: instance.metric.to_string(),
        arc_precision: instance.arc_precision,
        route_budget: r.route_budget.clone(),
        mission_budget: r.mission_budget.clone(),
        coef: CoefDoc {
            c_d: r.on_arc_route.clone(),
            c_r: r.on_site_route.clone(),
            d_d: r.on_arc_mission.clone(),
            d_r: r.on_site_mission.clone(),
        },
        sites: instance
            .sites
            .iter()
            .map(|s| SiteDoc {
                id: s.id,
                x: s.location.x,
                y: s.location.y,
                stay_hours: s.stay_time,
                profits: s.profits.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("instance document serializes")
}

// ---------------------------------------------------------------------------
// Chao et al. team orienteering benchmark files

struct TopDocument {
    routes: usize,
    tmax: f64,
    nodes: Vec<(f64, f64, f64)>,
}

fn parse_top(text: &str) -> Result<TopDocument> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut header = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("TOP header: missing `{key}` line")))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k == key => Ok(v.to_string()),
            _ => Err(Error::Parse(format!("TOP header: expected `{key} <value>`, got {line:?}"))),
        }
    };
    let count: usize = header("n")?
        .parse()
        .map_err(|_| Error::Parse("TOP header: node count is not an integer".into()))?;
    let routes: usize = header("m")?
        .parse()
        .map_err(|_| Error::Parse("TOP header: route count is not an integer".into()))?;
    let tmax: f64 = header("tmax")?
        .parse()
        .map_err(|_| Error::Parse("TOP header: tmax is not a number".into()))?;

    let mut nodes = Vec::with_capacity(count);
    for line in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("TOP node line {line:?} is not numeric")))?;
        if vals.len() != 3 {
            return Err(Error::Parse(format!("TOP node line {line:?} needs `x y score`")));
        }
        nodes.push((vals[0], vals[1], vals[2]));
    }
    if nodes.len() != count {
        return Err(Error::Parse(format!(
            "TOP document declares {count} nodes but lists {}",
            nodes.len()
        )));
    }
    if count < 3 {
        return Err(Error::Parse("TOP document needs a start node, an end node and a site".into()));
    }
    Ok(TopDocument { routes, tmax, nodes })
}

/// In-place Fisher-Yates shuffle driven by ChaCha8 (five-round-pair ChaCha
/// stream cipher seeded through `seed_from_u64`).
fn fisher_yates(values: &mut [f64], rng: &mut ChaCha8Rng) {
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
}

/// Converts a Chao TOP document into a vector-profit instance.
///
/// The first node becomes the depot and the last node (the TOP end point) is
/// dropped. Stakeholder 1 keeps the original scores; stakeholders
/// `2..=n_stakeholders` each receive an independent shuffle of the score
/// column from one ChaCha8 stream seeded with `seed`, so every stakeholder's
/// profit total is the same. Budget is `[tmax]` on distance with no mission
/// budget and zero stay times.
pub fn convert_chao(text: &str, n_stakeholders: usize, seed: u64) -> Result<Instance> {
    if n_stakeholders < 2 {
        return Err(Error::InvalidArgument("TOP conversion needs at least 2 stakeholders".into()));
    }
    let doc = parse_top(text)?;
    let start = doc.nodes[0];
    let sites_raw = &doc.nodes[1..doc.nodes.len() - 1];
    let scores: Vec<f64> = sites_raw.iter().map(|n| n.2).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![scores.clone()];
    for _ in 1..n_stakeholders {
        let mut col = scores.clone();
        fisher_yates(&mut col, &mut rng);
        columns.push(col);
    }

    let sites = sites_raw
        .iter()
        .enumerate()
        .map(|(i, &(x, y, _))| Site {
            id: i + 1,
            location: Point::new(x, y),
            profits: columns.iter().map(|c| c[i]).collect(),
            stay_time: 0.0,
        })
        .collect();

    let instance = Instance {
        name: "top".to_string(),
        depot: Point::new(start.0, start.1),
        sites,
        n_stakeholders,
        max_routes: doc.routes,
        resources: ResourceModel {
            route_budget: vec![doc.tmax],
            mission_budget: vec![],
            on_arc_route: vec![1.0],
            on_site_route: vec![0.0],
            on_arc_mission: vec![],
            on_site_mission: vec![],
        },
        metric: Metric::Euclidean,
        arc_precision: None,
    };
    let violations = instance.validate();
    if violations.is_empty() {
        Ok(instance)
    } else {
        Err(Error::InvalidInstance(violations))
    }
}
