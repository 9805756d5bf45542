//! Command-line harness: scenarios, planning, simulation, benchmarks,
//! gradient checks and artifact output.

pub mod bench;
pub mod gradcheck;
pub mod plan;
pub mod render;
pub mod scenario;
pub mod sim;

use std::fmt::Write as _;

use crate::bspline::UniformBspline;
use crate::grid::Point;

/// Sampling interval of trajectory CSV files, seconds.
pub const CSV_STEP: f64 = 0.01;
/// Planar speed below which yaw is held, m/s.
pub const YAW_HOLD_SPEED: f64 = 1e-6;

/// Times `0, CSV_STEP, 2 CSV_STEP, ...` up to the duration.
pub fn csv_times(duration: f64) -> impl Iterator<Item = f64> {
    let n = (duration / CSV_STEP + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * CSV_STEP)
}

fn planar_yaw(spline: &UniformBspline, t: f64) -> Option<f64> {
    let v = spline.eval_unchecked(t, 1);
    (v.x.hypot(v.y) >= YAW_HOLD_SPEED).then(|| v.y.atan2(v.x))
}

/// Heading of the planar velocity at `t`. While the planar speed is below
/// [`YAW_HOLD_SPEED`] the last defined heading on the [`CSV_STEP`] grid at or
/// before `t` is held, or 0 if there is none.
pub fn yaw_from_velocity(spline: &UniformBspline, t: f64) -> f64 {
    if let Some(y) = planar_yaw(spline, t) {
        return y;
    }
    let k = (t / CSV_STEP + 1e-9).floor() as i64;
    (0..=k).rev().find_map(|j| planar_yaw(spline, j as f64 * CSV_STEP)).unwrap_or(0.0)
}

/// `t,x,y,z,vx,vy,vz,ax,ay,az,yaw` rows at [`CSV_STEP`] spacing.
pub fn trajectory_csv(spline: &UniformBspline) -> String {
    let mut out = String::from("t,x,y,z,vx,vy,vz,ax,ay,az,yaw\n");
    let mut yaw = 0.0;
    for t in csv_times(spline.duration()) {
        let (p, v, a) = (spline.eval_unchecked(t, 0), spline.eval_unchecked(t, 1), spline.eval_unchecked(t, 2));
        if let Some(y) = planar_yaw(spline, t) {
            yaw = y;
        }
        let _ = writeln!(
            out,
            "{t:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{yaw:.6}",
            p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z
        );
    }
    out
}

/// `x,y,z` rows.
pub fn points_csv(points: &[Point]) -> String {
    let mut out = String::from("x,y,z\n");
    for p in points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.x, p.y, p.z);
    }
    out
}

/// Positions from any CSV with `x`, `y` and `z` columns.
pub fn parse_points_csv(text: &str) -> Result<Vec<Point>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("missing column {name}"));
    let idx = [col("x")?, col("y")?, col("z")?];
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let get = |i: usize| f.get(i).and_then(|v| v.trim().parse::<f64>().ok()).ok_or(format!("bad row {}", k + 2));
            Ok(Point::new(get(idx[0])?, get(idx[1])?, get(idx[2])?))
        })
        .collect()
}
