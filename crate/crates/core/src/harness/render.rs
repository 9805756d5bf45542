//! Top-down SVG of a planning result.

use std::fmt::Write as _;
use std::path::Path;

use crate::bspline::UniformBspline;
use crate::grid::{OccupancyGrid, Point};

use super::csv_times;

/// Pixels per meter.
const SCALE: f64 = 40.0;

/// Polylines drawn over the map, all optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layers {
    pub guide: Vec<Point>,
    pub phi_s: Vec<Point>,
    pub phi_f: Vec<Point>,
    pub track: Vec<Point>,
    pub start: Option<Point>,
    pub goal: Option<Point>,
}

/// Positions on the trajectory CSV time grid.
pub fn spline_polyline(spline: &UniformBspline) -> Vec<Point> {
    csv_times(spline.duration()).map(|t| spline.eval_unchecked(t, 0)).collect()
}

fn polyline(out: &mut String, pts: &[Point], class: &str, style: &str, to_px: impl Fn(&Point) -> (f64, f64)) {
    if pts.len() < 2 {
        return;
    }
    let _ = write!(out, r#"<polyline class="{class}" fill="none" {style} points=""#);
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = to_px(p);
        let _ = write!(out, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    out.push_str("\"/>\n");
}

/// One square per occupied (x, y) column of `grid`, then the layers.
pub fn render_svg(grid: &OccupancyGrid, layers: &Layers) -> String {
    let b = grid.bounds();
    let (w, h) = ((b.max.x - b.min.x) * SCALE, (b.max.y - b.min.y) * SCALE);
    let to_px = |p: &Point| ((p.x - b.min.x) * SCALE, (b.max.y - p.y) * SCALE);
    let cell = grid.resolution() * SCALE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(out, r#"<rect class="background" x="0" y="0" width="{w:.2}" height="{h:.2}" fill="white"/>"#);
    for (x, y) in grid.occupied_columns() {
        let px = x as f64 * cell;
        let py = h - (y as f64 + 1.0) * cell;
        let _ = writeln!(out, r#"<rect class="obstacle" x="{px:.2}" y="{py:.2}" width="{cell:.2}" height="{cell:.2}" fill="gray"/>"#);
    }
    polyline(&mut out, &layers.guide, "guide", r#"stroke="green" stroke-width="2" stroke-dasharray="6,4""#, to_px);
    polyline(&mut out, &layers.phi_s, "phi_s", r#"stroke="blue" stroke-width="2""#, to_px);
    polyline(&mut out, &layers.phi_f, "phi_f", r#"stroke="red" stroke-width="2""#, to_px);
    polyline(&mut out, &layers.track, "track", r#"stroke="black" stroke-width="1""#, to_px);
    for (class, p, color) in [("start", layers.start, "green"), ("goal", layers.goal, "red")] {
        if let Some(p) = p {
            let (x, y) = to_px(&p);
            let _ = writeln!(out, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="6" fill="{color}"/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn render(grid: &OccupancyGrid, layers: &Layers, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_svg(grid, layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Aabb, Cell};

    fn grid() -> OccupancyGrid {
        OccupancyGrid::empty(Aabb::new(Point::zeros(), Point::new(4.0, 3.0, 1.0)), 0.5).unwrap()
    }

    #[test]
    fn empty_map_has_no_obstacles() {
        let svg = render_svg(&grid(), &Layers { start: Some(Point::new(0.5, 0.5, 0.5)), ..Default::default() });
        assert!(!svg.contains("obstacle"));
        assert!(svg.contains(r#"class="start""#));
    }

    #[test]
    fn one_square_per_column() {
        let mut g = grid();
        g.set_occupied(Cell([1, 2, 0]), true);
        g.set_occupied(Cell([1, 2, 1]), true);
        g.set_occupied(Cell([7, 0, 0]), true);
        let svg = render_svg(&g, &Layers::default());
        assert_eq!(svg.matches(r#"class="obstacle""#).count(), 2);
        // Column (1, 2) spans y in [1, 1.5], i.e. 60..80 px from the top.
        assert!(svg.contains(r#"x="20.00" y="60.00""#));
    }

    #[test]
    fn curves_use_distinct_strokes() {
        let line = vec![Point::zeros(), Point::new(1.0, 1.0, 0.0)];
        let l = Layers { guide: line.clone(), phi_s: line.clone(), phi_f: line, ..Default::default() };
        let svg = render_svg(&grid(), &l);
        for c in ["guide", "phi_s", "phi_f"] {
            assert_eq!(svg.matches(&format!(r#"class="{c}""#)).count(), 1);
        }
        assert!(!svg.contains("track"));
    }
}
