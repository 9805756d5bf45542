//! Obstacle anchors `{p, v}` that stand in for distance-field queries.
//!
//! A control point found inside an obstacle is pushed out along `v`, the
//! direction from the point to where the guide path crosses the plane normal
//! to the trajectory's tangent. `p` is where that ray leaves the obstacle.

use std::ops::Range;

use nalgebra::Vector3;
use thiserror::Error;

use crate::bspline::UniformBspline;
use crate::grid::{OccupancyGrid, Point};

pub const DEFAULT_CAP: usize = 8;
/// Pairs whose directions are closer than this (radians) count as duplicates.
pub const DEDUPE_ANGLE: f64 = 10.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("guide path never crosses the plane through the control point")]
    NoPlaneCrossing,
    #[error("guide crossing coincides with the control point")]
    DegenerateDirection,
    #[error("tangent has zero length")]
    ZeroTangent,
    #[error("no obstacle surface between the control point and the guide")]
    NoSurface,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorPair {
    pub p: Point,
    pub v: Vector3<f64>,
}

/// `d = (Q - p) . v`: negative on the obstacle side of the surface plane.
pub fn signed_dist(q: &Point, pair: &AnchorPair) -> f64 {
    (q - pair.p).dot(&pair.v)
}

/// Anchor pairs per control point index.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<Vec<AnchorPair>>,
    cap: usize,
}

impl AnchorSet {
    pub fn new(n: usize) -> Self {
        Self::with_cap(n, DEFAULT_CAP)
    }

    pub fn with_cap(n: usize, cap: usize) -> Self {
        Self { pairs: vec![Vec::new(); n], cap }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.iter().all(Vec::is_empty)
    }

    pub fn total(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize) -> &[AnchorPair] {
        &self.pairs[i]
    }

    /// Adds a pair unless the index is full or already holds a pair with a
    /// direction within [`DEDUPE_ANGLE`]. Returns whether it was added.
    pub fn push(&mut self, i: usize, pair: AnchorPair) -> bool {
        let list = &mut self.pairs[i];
        let cos = DEDUPE_ANGLE.cos();
        if list.len() >= self.cap || list.iter().any(|q| q.v.dot(&pair.v) > cos) {
            return false;
        }
        list.push(pair);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &AnchorPair)> {
        self.pairs.iter().enumerate().flat_map(|(i, l)| l.iter().map(move |p| (i, p)))
    }
}

/// Maximal runs of control points that sit in occupied cells, with one
/// curve sample between consecutive control points also checked.
pub fn find_collision_segments(spline: &UniformBspline, grid: &OccupancyGrid) -> Vec<Range<usize>> {
    find_collision_segments_with(spline, grid, 1)
}

/// As [`find_collision_segments`] with `samples` curve checks between each
/// pair of consecutive Greville times. An occupied sample marks both
/// neighbouring control points.
pub fn find_collision_segments_with(
    spline: &UniformBspline,
    grid: &OccupancyGrid,
    samples: usize,
) -> Vec<Range<usize>> {
    let n = spline.len();
    let mut hit: Vec<bool> = spline.ctrl().iter().map(|q| grid.is_occupied(q)).collect();
    for i in 0..n - 1 {
        let (t0, t1) = (spline.greville_time(i), spline.greville_time(i + 1));
        if t1 <= t0 {
            continue;
        }
        for k in 1..=samples {
            let t = t0 + (t1 - t0) * k as f64 / (samples + 1) as f64;
            if grid.is_occupied(&spline.eval_unchecked(t, 0)) {
                hit[i] = true;
                hit[i + 1] = true;
            }
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if hit[i] {
            let s = i;
            while i < n && hit[i] {
                i += 1;
            }
            out.push(s..i);
        } else {
            i += 1;
        }
    }
    out
}

/// First point where the polyline crosses the plane through `q` with normal
/// `r`, walking segment by segment.
pub fn plane_crossing(q: &Point, r: &Vector3<f64>, guide: &[Point]) -> Option<Point> {
    let f = |x: &Point| (x - q).dot(r);
    if let [only] = guide {
        return (f(only) == 0.0).then_some(*only);
    }
    for w in guide.windows(2) {
        let (fa, fb) = (f(&w[0]), f(&w[1]));
        if fa == 0.0 {
            return Some(w[0]);
        }
        if fa * fb < 0.0 || fb == 0.0 {
            return Some(w[0] + (w[1] - w[0]) * (fa / (fa - fb)));
        }
    }
    None
}

/// Closest point to `q` on the polyline; ties keep the earliest segment.
pub fn nearest_on_polyline(q: &Point, guide: &[Point]) -> Option<Point> {
    if guide.len() == 1 {
        return Some(guide[0]);
    }
    let mut best: Option<(f64, Point)> = None;
    for w in guide.windows(2) {
        let d = w[1] - w[0];
        let l2 = d.norm_squared();
        let s = if l2 > 0.0 { ((q - w[0]).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let x = w[0] + d * s;
        let dist = (x - q).norm();
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, x));
        }
    }
    best.map(|(_, x)| x)
}

fn pair_towards(q: &Point, s: &Point, grid: &OccupancyGrid) -> Result<AnchorPair, AnchorError> {
    let d = s - q;
    let len = d.norm();
    if len < 1e-9 {
        return Err(AnchorError::DegenerateDirection);
    }
    let v = d / len;
    let p = grid.last_exit(q, s).ok_or(AnchorError::NoSurface)?;
    Ok(AnchorPair { p, v })
}

/// Anchor for an in-collision control point `q`. `s` is the first crossing
/// of the guide through the plane normal to `tangent`; `p` is the last exit
/// from occupied space on the way from `q` to `s`.
pub fn generate_anchor(
    q: &Point,
    guide: &[Point],
    tangent: &Vector3<f64>,
    grid: &OccupancyGrid,
) -> Result<AnchorPair, AnchorError> {
    let len = tangent.norm();
    if !(len > 0.0) {
        return Err(AnchorError::ZeroTangent);
    }
    let s = plane_crossing(q, &(tangent / len), guide).ok_or(AnchorError::NoPlaneCrossing)?;
    pair_towards(q, &s, grid)
}

/// [`generate_anchor`], falling back to the nearest guide point when the
/// guide never crosses the plane (or the tangent vanishes).
pub fn generate_anchor_or_nearest(
    q: &Point,
    guide: &[Point],
    tangent: &Vector3<f64>,
    grid: &OccupancyGrid,
) -> Result<AnchorPair, AnchorError> {
    match generate_anchor(q, guide, tangent, grid) {
        Err(AnchorError::NoPlaneCrossing | AnchorError::ZeroTangent) => {
            let s = nearest_on_polyline(q, guide).ok_or(AnchorError::NoPlaneCrossing)?;
            pair_towards(q, &s, grid)
        }
        other => other,
    }
}
