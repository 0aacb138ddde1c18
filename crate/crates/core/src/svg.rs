//! SVG route maps.

use std::fmt::Write as _;

use crate::driver::SolveReport;
use crate::model::{Instance, Point};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const WIDTH: f64 = 800.0;

/// Draws the depot as a square, sites as circles (hollow when unvisited) and
/// each route as a closed polyline. The y axis points up.
pub fn render_svg(instance: &Instance, report: &SolveReport) -> String {
    let pts: Vec<Point> = std::iter::once(instance.depot).chain(instance.sites.iter().map(|s| s.location)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let (mx, my) = (span_x * 0.05, span_y * 0.05);
    let (vx, vy, vw, vh) = (x0 - mx, -(y1 + my), span_x + 2.0 * mx, span_y + 2.0 * my);
    let height = WIDTH * vh / vw;
    let r = 0.008 * vw.max(vh);
    let stroke = 0.003 * vw.max(vh);

    let mut visited = vec![false; pts.len()];
    for route in &report.routes {
        for &i in &route.sites {
            if i < visited.len() {
                visited[i] = true;
            }
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="{vx:.6} {vy:.6} {vw:.6} {vh:.6}" style="background:white">"#
    );
    for (n, route) in report.routes.iter().enumerate() {
        let coords: Vec<String> = route
            .tour
            .iter()
            .filter(|&&v| v < pts.len())
            .map(|&v| format!("{:.6},{:.6}", pts[v].x, -pts[v].y))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{stroke:.6}"/>"#,
            coords.join(" "),
            PALETTE[n % PALETTE.len()]
        );
    }
    for (i, p) in pts.iter().enumerate().skip(1) {
        let fill = if visited[i] { "black" } else { "none" };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.6}" cy="{:.6}" r="{r:.6}" fill="{fill}" stroke="black" stroke-width="{:.6}"><title>{i}</title></circle>"#,
            p.x,
            -p.y,
            stroke / 2.0
        );
    }
    let d = pts[0];
    let side = 2.5 * r;
    let _ = writeln!(
        s,
        r#"<rect x="{:.6}" y="{:.6}" width="{side:.6}" height="{side:.6}" fill="black"><title>depot</title></rect>"#,
        d.x - side / 2.0,
        -d.y - side / 2.0
    );
    s.push_str("</svg>\n");
    s
}
