//! Penalty-based trajectory optimization over B-spline control points.
//!
//! The objective is `lambda_s J_s + lambda_c J_c + lambda_d J_d`. The first
//! and last three control points carry the boundary states and are held
//! fixed. Collision anchors are regenerated between solver runs whenever the
//! current iterate still hits the map.

pub mod lbfgs;
pub mod penalty;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor::{find_collision_segments_with, generate_anchor_or_nearest, signed_dist, AnchorSet};
use crate::bspline::UniformBspline;
use crate::grid::{OccupancyGrid, Point};

pub use lbfgs::{minimize, Minimum, SolverConfig, Status};
pub use penalty::{collision, feasibility, smoothness, CollisionBranch, FeasibilityBranch, FeasibilityPenalty, Gradient, Limits};

/// Control points at each end held fixed by the boundary states.
pub const FIXED: usize = 3;
/// Slack on the anchor clearance before the collision weight is escalated.
pub const CLEARANCE_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("weight {0} must be finite and nonnegative")]
    Weight(&'static str),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("need 0 < lambda_e < 1 <= c_j_factor")]
    Elastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub lambda_f: f64,
    pub s_f: f64,
    pub v_m: f64,
    pub a_m: f64,
    pub j_m: f64,
    pub lambda_e: f64,
    pub c_j_factor: f64,
    pub solver: SolverConfig,
    /// Target spacing of the initial control points along the guide, meters.
    pub ctrl_spacing: f64,
    /// Curve samples checked between consecutive control points.
    pub collision_samples: usize,
    /// Extra inflation of the map used for the guide search, so the guide
    /// keeps some clearance; 0 disables it.
    pub guide_margin: f64,
    /// Factor applied to `lambda_c` after a round that leaves collisions
    /// behind without producing any new anchor.
    pub collision_escalation: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_c: 1000.0,
            lambda_d: 1.0,
            lambda_f: 1000.0,
            s_f: 0.3,
            v_m: 2.0,
            a_m: 3.0,
            j_m: 6.0,
            lambda_e: 0.95,
            c_j_factor: 1.2,
            solver: SolverConfig::default(),
            ctrl_spacing: 0.5,
            collision_samples: 4,
            guide_margin: 0.3,
            collision_escalation: 10.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, w) in [
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
            ("lambda_d", self.lambda_d),
            ("lambda_f", self.lambda_f),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ConfigError::Weight(name));
            }
        }
        for (name, v) in [
            ("s_f", self.s_f),
            ("v_m", self.v_m),
            ("a_m", self.a_m),
            ("j_m", self.j_m),
            ("ctrl_spacing", self.ctrl_spacing),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if !(self.lambda_e > 0.0 && self.lambda_e < 1.0 && self.c_j_factor >= 1.0) {
            return Err(ConfigError::Elastic);
        }
        if !(self.guide_margin >= 0.0) {
            return Err(ConfigError::Weight("guide_margin"));
        }
        if !(self.collision_escalation >= 1.0) {
            return Err(ConfigError::NotPositive("collision_escalation - 1"));
        }
        Ok(())
    }

    pub fn limits(&self) -> Limits {
        Limits { v_m: self.v_m, a_m: self.a_m, j_m: self.j_m, lambda_e: self.lambda_e, cj_factor: self.c_j_factor }
    }
}

/// Unweighted term values, for reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Terms {
    pub smoothness: f64,
    pub collision: f64,
    pub feasibility: f64,
}

pub fn terms(spline: &UniformBspline, anchors: &AnchorSet, config: &PlannerConfig) -> Terms {
    Terms {
        smoothness: smoothness(spline).0,
        collision: collision(spline, anchors, config.s_f).0,
        feasibility: feasibility(spline, &config.limits()).0,
    }
}

/// Zeroes the gradient of the fixed boundary control points.
pub fn clamp_boundary(grad: &mut [Vector3<f64>]) {
    let n = grad.len();
    for (i, g) in grad.iter_mut().enumerate() {
        if i < FIXED || i + FIXED >= n {
            *g = Vector3::zeros();
        }
    }
}

fn weighted_sum(terms: [(f64, (f64, Gradient)); 3], n: usize) -> (f64, Gradient) {
    let mut cost = 0.0;
    let mut grad = vec![Vector3::zeros(); n];
    for (w, (c, g)) in terms {
        if w == 0.0 {
            continue;
        }
        cost += w * c;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
    }
    clamp_boundary(&mut grad);
    (cost, grad)
}

/// `lambda_s J_s + lambda_c J_c + lambda_d J_d` with its gradient.
pub fn total_objective(spline: &UniformBspline, anchors: &AnchorSet, config: &PlannerConfig) -> (f64, Gradient) {
    weighted_objective(spline, anchors, config, config.lambda_c)
}

fn weighted_objective(
    spline: &UniformBspline,
    anchors: &AnchorSet,
    config: &PlannerConfig,
    lambda_c: f64,
) -> (f64, Gradient) {
    weighted_sum(
        [
            (config.lambda_s, smoothness(spline)),
            (lambda_c, collision(spline, anchors, config.s_f)),
            (config.lambda_d, feasibility(spline, &config.limits())),
        ],
        spline.len(),
    )
}

/// Interior control points as a flat vector.
pub fn pack(spline: &UniformBspline) -> Vec<f64> {
    let n = spline.len();
    spline.ctrl()[FIXED..n.saturating_sub(FIXED).max(FIXED)].iter().flat_map(|q| [q.x, q.y, q.z]).collect()
}

/// Copy of `base` with the interior control points taken from `x`.
pub fn unpack(base: &UniformBspline, x: &[f64]) -> UniformBspline {
    let mut ctrl = base.ctrl().to_vec();
    for (k, c) in x.chunks_exact(3).enumerate() {
        ctrl[FIXED + k] = Point::new(c[0], c[1], c[2]);
    }
    base.with_ctrl(ctrl).expect("same length")
}

/// Minimizes `objective` over the interior control points of `start`.
pub fn solve<F>(start: &UniformBspline, cfg: &SolverConfig, mut objective: F) -> (UniformBspline, Minimum)
where
    F: FnMut(&UniformBspline) -> (f64, Gradient),
{
    let m = minimize(
        pack(start),
        |x, g| {
            let s = unpack(start, x);
            let (f, grad) = objective(&s);
            for (k, v) in grad[FIXED..FIXED + g.len() / 3].iter().enumerate() {
                g[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
            }
            f
        },
        cfg,
    );
    (unpack(start, &m.x), m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimized {
    pub spline: UniformBspline,
    pub anchors: AnchorSet,
    pub rounds: usize,
    pub iterations: usize,
    /// Objective after each accepted step, all rounds concatenated.
    pub trace: Vec<f64>,
    /// Collision weight in effect at the end.
    pub lambda_c: f64,
}

impl Optimized {
    /// Smallest signed distance over anchored interior control points.
    pub fn min_anchor_distance(&self) -> Option<f64> {
        let n = self.spline.len();
        self.anchors
            .iter()
            .filter(|(i, _)| *i >= FIXED && *i + FIXED < n)
            .map(|(i, p)| signed_dist(&self.spline.ctrl()[i], p))
            .reduce(f64::min)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("collisions remain after {} anchor rounds", .best.rounds)]
    PlanningFailed { best: Box<Optimized> },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Tangent used for anchor planes: curve velocity at the Greville time, or
/// the neighbouring control-point chord when the curve is at rest there.
fn tangent_at(spline: &UniformBspline, i: usize) -> Vector3<f64> {
    let v = spline.eval_unchecked(spline.greville_time(i), 1);
    if v.norm() > 1e-9 {
        return v;
    }
    let q = spline.ctrl();
    let (a, b) = (i.saturating_sub(1), (i + 1).min(q.len() - 1));
    q[b] - q[a]
}

/// An occupied point standing in for control point `i`: the point itself,
/// the curve at its Greville time, or the first occupied curve sample around
/// that time.
fn collision_origin(spline: &UniformBspline, grid: &OccupancyGrid, i: usize, samples: usize) -> Option<Point> {
    let q = spline.ctrl()[i];
    if grid.is_occupied(&q) {
        return Some(q);
    }
    let n = spline.len();
    let t0 = spline.greville_time(i.saturating_sub(1));
    let t1 = spline.greville_time((i + 1).min(n - 1));
    let k = 2 * (samples + 1);
    std::iter::once(spline.greville_time(i))
        .chain((0..=k).map(|j| t0 + (t1 - t0) * j as f64 / k as f64))
        .map(|t| spline.eval_unchecked(t, 0))
        .find(|p| grid.is_occupied(p))
}

/// Curve samples per control interval: at least the configured count, and
/// enough that consecutive samples on the control polygon are at most half
/// a cell apart.
fn detection_samples(spline: &UniformBspline, grid: &OccupancyGrid, config: &PlannerConfig) -> usize {
    let chord = spline.ctrl().windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
    config.collision_samples.max((2.0 * chord / grid.resolution()).ceil() as usize)
}

/// Anchor rounds: detect collisions, attach anchors, minimize, repeat.
pub fn optimize(
    spline: &UniformBspline,
    grid: &OccupancyGrid,
    guide: &[Point],
    config: &PlannerConfig,
) -> Result<Optimized, OptimizeError> {
    config.validate()?;
    let n = spline.len();
    let mut out = Optimized {
        spline: spline.clone(),
        anchors: AnchorSet::new(n),
        rounds: 0,
        iterations: 0,
        trace: Vec::new(),
        lambda_c: config.lambda_c,
    };
    // Last collision-free iterate, kept while the clearance is pushed further.
    let mut free: Option<Optimized> = None;
    for round in 0..=config.solver.max_anchor_rounds {
        let samples = detection_samples(&out.spline, grid, config);
        let runs = find_collision_segments_with(&out.spline, grid, samples);
        let mut added = 0;
        for run in &runs {
            for i in run.clone() {
                if i < FIXED || i + FIXED >= n {
                    continue;
                }
                let Some(origin) = collision_origin(&out.spline, grid, i, samples) else {
                    continue;
                };
                let tangent = tangent_at(&out.spline, i);
                if let Ok(pair) = generate_anchor_or_nearest(&origin, guide, &tangent, grid) {
                    added += usize::from(out.anchors.push(i, pair));
                }
            }
        }
        // The first pass always runs, so a free start is still smoothed.
        // A collision-free result with anchored points short of the
        // clearance keeps escalating while rounds remain.
        let short = out.min_anchor_distance().is_some_and(|d| d < config.s_f - CLEARANCE_TOL);
        if round > 0 && runs.is_empty() {
            if !short || round == config.solver.max_anchor_rounds {
                return Ok(out);
            }
            free = Some(out.clone());
        }
        if round == config.solver.max_anchor_rounds {
            break;
        }
        if round > 0 && added == 0 {
            out.lambda_c *= config.collision_escalation;
        }
        let lambda_c = out.lambda_c;
        let anchors = out.anchors.clone();
        let (s, m) = solve(&out.spline, &config.solver, |s| weighted_objective(s, &anchors, config, lambda_c));
        out.spline = s;
        out.rounds += 1;
        out.iterations += m.iterations;
        out.trace.extend(m.trace);
    }
    match free {
        Some(f) => Ok(f),
        None => Err(OptimizeError::PlanningFailed { best: Box::new(out) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{fit_from_waypoints, BoundaryState};
    use crate::grid::Aabb;

    #[test]
    fn zero_weights_give_zero_objective() {
        let cfg = PlannerConfig { lambda_s: 0.0, lambda_c: 0.0, lambda_d: 0.0, ..Default::default() };
        let s = UniformBspline::new((0..8).map(|i| Point::new((i * i) as f64, 0.0, 1.0)).collect(), 0.2).unwrap();
        let (f, g) = total_objective(&s, &AnchorSet::new(8), &cfg);
        assert_eq!(f, 0.0);
        assert!(g.iter().all(|v| *v == Vector3::zeros()));
    }

    #[test]
    fn total_is_additive_without_collisions() {
        let cfg = PlannerConfig::default();
        let s = UniformBspline::new((0..9).map(|i| Point::new((i * i) as f64 * 0.3, i as f64, 1.0)).collect(), 0.3).unwrap();
        let (f, _) = total_objective(&s, &AnchorSet::new(9), &cfg);
        let expect = cfg.lambda_s * smoothness(&s).0 + cfg.lambda_d * feasibility(&s, &cfg.limits()).0;
        assert_eq!(f, expect);
    }

    #[test]
    fn boundary_gradient_is_zero() {
        let s = UniformBspline::new((0..9).map(|i| Point::new((i * i) as f64, 0.0, 1.0)).collect(), 0.2).unwrap();
        let (_, g) = total_objective(&s, &AnchorSet::new(9), &PlannerConfig::default());
        for i in [0, 1, 2, 6, 7, 8] {
            assert_eq!(g[i], Vector3::zeros());
        }
        assert!(g[4].norm() > 0.0);
    }

    fn free_grid() -> OccupancyGrid {
        OccupancyGrid::empty(Aabb::new(Point::new(-1.0, -3.0, 0.0), Point::new(11.0, 3.0, 2.0)), 0.1).unwrap()
    }

    #[test]
    fn free_map_straight_guide_descends() {
        let g = free_grid();
        let (a, b) = (Point::new(0.0, 0.0, 1.0), Point::new(10.0, 0.0, 1.0));
        // A wobbly but collision-free initial fit.
        let wps: Vec<Point> = (0..=20).map(|k| a.lerp(&b, k as f64 / 20.0) + Vector3::new(0.0, 0.2 * (k as f64).sin(), 0.0)).collect();
        let s = fit_from_waypoints(&wps, 0.3, &BoundaryState::at_rest(a), &BoundaryState::at_rest(b)).unwrap();
        let cfg = PlannerConfig::default();
        let out = optimize(&s, &g, &[a, b], &cfg).unwrap();
        assert!(smoothness(&out.spline).0 <= smoothness(&s).0);
        assert!(out.anchors.is_empty());
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        for (x, y) in out.spline.ctrl()[..3].iter().zip(&s.ctrl()[..3]) {
            assert_eq!(x, y);
        }
    }
}
