//! Arc-cost matrices over the depot (index 0) and the sites (index = site id).

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Metric, Point};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_WALKING_KMH: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostUnit {
    Km,
    Hours,
}

impl CostUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            CostUnit::Km => "km",
            CostUnit::Hours => "hours",
        }
    }
}

/// Dense square matrix of nonnegative travel costs. Rows are origins.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    dim: usize,
    cost: Vec<f64>,
    unit: CostUnit,
    symmetric: bool,
}

impl CostMatrix {
    /// Builds a matrix from row-major values, checking shape, sign and diagonal.
    pub fn from_rows(rows: Vec<Vec<f64>>, unit: CostUnit) -> Result<Self> {
        let dim = rows.len();
        let mut cost = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) = {c} must be finite and nonnegative"
                    )));
                }
                if i == j && c != 0.0 {
                    return Err(Error::InvalidArgument(format!("diagonal entry ({i},{i}) must be 0")));
                }
            }
            cost.extend_from_slice(row);
        }
        Ok(Self::from_flat(dim, cost, unit))
    }

    fn from_flat(dim: usize, cost: Vec<f64>, unit: CostUnit) -> Self {
        let symmetric = (0..dim).all(|i| (0..i).all(|j| cost[i * dim + j] == cost[j * dim + i]));
        CostMatrix { dim, cost, unit, symmetric }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn unit(&self) -> CostUnit {
        self.unit
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.cost[from * self.dim + to]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.cost.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Truncates every entry toward zero at `decimals` decimal places.
    pub fn truncated(&self, decimals: u32) -> CostMatrix {
        let scale = 10f64.powi(decimals as i32);
        let cost = self.cost.iter().map(|c| (c * scale).floor() / scale).collect();
        Self::from_flat(self.dim, cost, self.unit)
    }

    /// Largest amount by which `cost[i][k] > cost[i][j] + cost[j][k]`, or 0.
    ///
    /// Exhaustive for up to 160 nodes, otherwise a fixed-seed sample of
    /// 500 000 triples.
    pub fn triangle_violation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        if n <= 160 {
            for j in 0..n {
                for i in 0..n {
                    let ij = self.get(i, j);
                    for k in 0..n {
                        worst = worst.max(self.get(i, k) - ij - self.get(j, k));
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7269_616e_676c_65);
            for _ in 0..500_000 {
                let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
                worst = worst.max(self.get(i, k) - self.get(i, j) - self.get(j, k));
            }
        }
        worst
    }

    pub fn satisfies_triangle_inequality(&self, tol: f64) -> bool {
        self.triangle_violation() <= tol
    }

    /// CSV text accepted by [`load_matrix_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = format!("unit,{}\n", self.unit.as_str());
        for row in self.cost.chunks(self.dim) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

fn nodes(instance: &Instance) -> Vec<Point> {
    std::iter::once(instance.depot)
        .chain(instance.sites.iter().map(|s| s.location))
        .collect()
}

/// Planar distances in km.
pub fn euclidean_matrix(instance: &Instance) -> CostMatrix {
    let pts = nodes(instance);
    let dim = pts.len();
    let mut cost = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..i {
            let d = (pts[i].x - pts[j].x).hypot(pts[i].y - pts[j].y);
            cost[i * dim + j] = d;
            cost[j * dim + i] = d;
        }
    }
    CostMatrix::from_flat(dim, cost, CostUnit::Km)
}

/// Great-circle distance in km between two (lon, lat) points in degrees.
pub fn great_circle_km(a: Point, b: Point) -> f64 {
    let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Travel times in hours at constant `speed` km/h over great-circle distance.
pub fn haversine_matrix(instance: &Instance, speed: f64) -> Result<CostMatrix> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::InvalidArgument(format!("speed must be positive, got {speed}")));
    }
    let pts = nodes(instance);
    let dim = pts.len();
    let mut cost = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..i {
            let t = great_circle_km(pts[i], pts[j]) / speed;
            cost[i * dim + j] = t;
            cost[j * dim + i] = t;
        }
    }
    Ok(CostMatrix::from_flat(dim, cost, CostUnit::Hours))
}

/// Loads a CSV matrix: a `unit,km` or `unit,hours` header, then one row per
/// node. Blank lines and lines starting with `#` are ignored.
pub fn load_matrix_csv(text: &str, expected_dimension: usize) -> Result<CostMatrix> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let unit = match lines.next().map(|l| l.split(',').map(str::trim).collect::<Vec<_>>()) {
        Some(h) if h.len() == 2 && h[0] == "unit" && h[1] == "km" => CostUnit::Km,
        Some(h) if h.len() == 2 && h[0] == "unit" && h[1] == "hours" => CostUnit::Hours,
        _ => return Err(Error::Parse("matrix CSV must start with `unit,km` or `unit,hours`".into())),
    };
    let rows: Vec<Vec<f64>> = lines
        .enumerate()
        .map(|(r, line)| {
            line.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("matrix row {r}: {t:?} is not a number")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != expected_dimension {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, expected {expected_dimension}",
            rows.len()
        )));
    }
    CostMatrix::from_rows(rows, unit)
}

#[derive(Deserialize)]
struct TableResponse {
    #[serde(default)]
    code: Option<String>,
    durations: Option<Vec<Vec<Option<f64>>>>,
}

/// Requests an OSRM-style duration table and converts seconds to hours.
///
/// `coordinates` are (lon, lat) points, depot first.
pub fn fetch_remote_table(endpoint: &str, coordinates: &[Point]) -> Result<CostMatrix> {
    let coords: Vec<String> = coordinates.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
    let url = format!(
        "{}/table/v1/driving/{}",
        endpoint.trim_end_matches('/'),
        coords.join(";")
    );
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let resp = client.get(&url).send().map_err(|e| Error::Transport(e.to_string()))?;
    let status = resp.status();
    let body = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(Error::Remote { status: status.as_u16(), body });
    }
    let parsed: TableResponse = serde_json::from_str(&body)?;
    if let Some(code) = parsed.code.as_deref() {
        if code != "Ok" {
            return Err(Error::Remote { status: status.as_u16(), body });
        }
    }
    let durations = parsed
        .durations
        .ok_or_else(|| Error::Parse("response has no `durations` array".into()))?;
    if durations.len() != coordinates.len() {
        return Err(Error::Dimension(format!(
            "table has {} rows for {} coordinates",
            durations.len(),
            coordinates.len()
        )));
    }
    let rows = durations
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, v)| {
                    v.map(|s| if i == j { 0.0 } else { s / 3600.0 })
                        .ok_or_else(|| Error::Remote {
                            status: status.as_u16(),
                            body: format!("no route between nodes {i} and {j}"),
                        })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    CostMatrix::from_rows(rows, CostUnit::Hours)
}

/// Builds the matrix named by the instance metric and applies `arc_precision`.
///
/// Relative `matrix:` paths are resolved against `base_dir`.
pub fn matrix_for_instance(instance: &Instance, base_dir: Option<&Path>) -> Result<CostMatrix> {
    let matrix = match &instance.metric {
        Metric::Euclidean => euclidean_matrix(instance),
        Metric::Haversine { km_per_hour } => haversine_matrix(instance, *km_per_hour)?,
        Metric::Matrix { path } => {
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let text = std::fs::read_to_string(&full)?;
            load_matrix_csv(&text, instance.n_sites() + 1)?
        }
    };
    Ok(apply_precision(instance, matrix))
}

pub fn apply_precision(instance: &Instance, matrix: CostMatrix) -> CostMatrix {
    match instance.arc_precision {
        Some(d) => matrix.truncated(d),
        None => matrix,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResourceModel, Site};

    fn planar(points: &[(f64, f64)]) -> Instance {
        Instance {
            name: "t".into(),
            depot: Point::new(points[0].0, points[0].1),
            sites: points[1..]
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Site { id: i + 1, location: Point::new(x, y), profits: vec![1.0], stay_time: 0.0 })
                .collect(),
            n_stakeholders: 1,
            max_routes: 1,
            resources: ResourceModel {
                route_budget: vec![1.0],
                on_arc_route: vec![1.0],
                on_site_route: vec![0.0],
                ..Default::default()
            },
            metric: Metric::Euclidean,
            arc_precision: None,
        }
    }

    #[test]
    fn euclidean_entries() {
        // depot and sites 55, 14, 57 of the planetary case
        let m = euclidean_matrix(&planar(&[(35.0, 35.0), (26.0, 35.0), (26.0, 27.0), (25.0, 24.0)]));
        assert_eq!(m.get(0, 1), 9.0);
        assert!((m.get(2, 3) - 10f64.sqrt()).abs() < 1e-12);
        assert!((m.get(2, 3) - 3.1623).abs() < 1e-4);
        for i in 0..4 {
            assert_eq!(m.get(i, i), 0.0);
        }
        assert!(m.is_symmetric());
        assert_eq!(m.unit(), CostUnit::Km);
    }

    #[test]
    fn haversine_one_degree_on_equator() {
        let inst = planar(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        let m = haversine_matrix(&inst, 111.195).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-5);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.unit(), CostUnit::Hours);
        assert!(haversine_matrix(&inst, 0.0).is_err());
        assert!(haversine_matrix(&inst, -3.0).is_err());
    }

    #[test]
    fn csv_loading() {
        let m = load_matrix_csv("unit,hours\n0,1\n1,0", 2).unwrap();
        assert!(m.is_symmetric());
        assert_eq!(m.unit(), CostUnit::Hours);
        assert!(matches!(load_matrix_csv("unit,km\n0,1,2\n1,0,2\n2,2,0", 4), Err(Error::Dimension(_))));
        let a = load_matrix_csv("# comment\nunit,km\n0,1,2\n3,0,4\n5,6,0\n", 3).unwrap();
        assert!(!a.is_symmetric());
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(2, 1), 6.0);
        assert!(load_matrix_csv("0,1\n1,0", 2).is_err());
        assert!(load_matrix_csv("unit,km\n0,-1\n1,0", 2).is_err());
    }

    #[test]
    fn truncation_floors_entries() {
        let m = load_matrix_csv("unit,km\n0,3.16227\n3.16999,0", 2).unwrap().truncated(2);
        assert_eq!(m.get(0, 1), 3.16);
        assert_eq!(m.get(1, 0), 3.16);
        assert!(m.is_symmetric());
    }

    #[test]
    fn triangle_check_detects_shortcut() {
        let m = load_matrix_csv("unit,km\n0,1,5\n1,0,1\n5,1,0", 3).unwrap();
        assert!((m.triangle_violation() - 3.0).abs() < 1e-12);
        assert!(!m.satisfies_triangle_inequality(1e-9));
    }
}
