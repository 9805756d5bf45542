//! Uniform cubic B-spline trajectories.
//!
//! A trajectory is a knot interval `dt` plus control points `Q_0..Q_{n-1}`.
//! Segment `m` covers `t in [m dt, (m+1) dt]` and is shaped by
//! `Q_m..Q_{m+3}`, so the duration is `(n - 3) dt`. Velocity, acceleration
//! and jerk control points are plain forward differences of `Q` divided by
//! `dt`, and by the convex hull property they bound the corresponding
//! derivatives of the whole curve.

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::grid::Point;

pub const DEGREE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("knot interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("time {t} outside [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("derivative order {0} not supported (0..=3)")]
    InvalidOrder(usize),
    #[error("least-squares fit failed")]
    FitFailed,
}

/// Position, velocity and acceleration at one end of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryState {
    pub pos: Point,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(pos: Point) -> Self {
        Self { pos, vel: Vector3::zeros(), acc: Vector3::zeros() }
    }
}

/// Velocity, acceleration and jerk control points.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativePoints {
    pub vel: Vec<Vector3<f64>>,
    pub acc: Vec<Vector3<f64>>,
    pub jerk: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformBspline {
    dt: f64,
    ctrl: Vec<Point>,
}

fn differences(pts: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    pts.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

impl UniformBspline {
    pub fn new(ctrl: Vec<Point>, dt: f64) -> Result<Self, SplineError> {
        if ctrl.len() < DEGREE + 1 {
            return Err(SplineError::TooFewPoints { need: DEGREE + 1, got: ctrl.len() });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SplineError::InvalidInterval(dt));
        }
        Ok(Self { dt, ctrl })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ctrl(&self) -> &[Point] {
        &self.ctrl
    }

    pub fn len(&self) -> usize {
        self.ctrl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ctrl.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.ctrl.len() - DEGREE) as f64 * self.dt
    }

    /// Same control points, new knot interval.
    pub fn with_dt(&self, dt: f64) -> Result<Self, SplineError> {
        Self::new(self.ctrl.clone(), dt)
    }

    /// Same knot interval, new control points.
    pub fn with_ctrl(&self, ctrl: Vec<Point>) -> Result<Self, SplineError> {
        Self::new(ctrl, self.dt)
    }

    pub fn derivative_ctrl_points(&self) -> DerivativePoints {
        let vel = differences(&self.ctrl, self.dt);
        let acc = differences(&vel, self.dt);
        let jerk = differences(&acc, self.dt);
        DerivativePoints { vel, acc, jerk }
    }

    /// Trajectory time associated with control point `i` (its Greville
    /// abscissa), clamped to the curve's domain.
    pub fn greville_time(&self, i: usize) -> f64 {
        ((i as f64 - 1.0) * self.dt).clamp(0.0, self.duration())
    }

    /// Active segment and local parameter `u in [0, 1]` for time `t`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.ctrl.len() - DEGREE - 1;
        let s = (t / self.dt).max(0.0);
        let m = (s.floor() as usize).min(last);
        (m, s - m as f64)
    }

    /// Weights of `Q_m..Q_{m+3}` for the derivative of the given order at
    /// time `t`, including the `1/dt^order` factor.
    pub fn basis(&self, t: f64, order: usize) -> (usize, [f64; 4]) {
        let (m, u) = self.locate(t);
        let w = basis_weights(u, order);
        let scale = self.dt.powi(order as i32).recip();
        (m, w.map(|b| b * scale))
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vector3<f64>, SplineError> {
        if order > 3 {
            return Err(SplineError::InvalidOrder(order));
        }
        let duration = self.duration();
        let tol = 1e-12 * duration.max(1.0);
        if !(t >= -tol && t <= duration + tol) {
            return Err(SplineError::OutOfDomain { t, duration });
        }
        Ok(self.eval_unchecked(t.clamp(0.0, duration), order))
    }

    /// Evaluation without the domain check; `t` is clamped to the domain.
    pub fn eval_unchecked(&self, t: f64, order: usize) -> Vector3<f64> {
        let (m, w) = self.basis(t.clamp(0.0, self.duration()), order);
        (0..4).fold(Vector3::zeros(), |acc, j| acc + self.ctrl[m + j] * w[j])
    }

    /// `n` uniformly spaced samples over the full duration (both ends
    /// included).
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let d = self.duration();
        match n {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..n).map(|k| d * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Uniform cubic basis (or its `order`-th derivative in `u`).
pub fn basis_weights(u: f64, order: usize) -> [f64; 4] {
    let (u2, u3) = (u * u, u * u * u);
    match order {
        0 => [
            (1.0 - u).powi(3) / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0,
        ],
        1 => [
            -(1.0 - u).powi(2) / 2.0,
            (3.0 * u2 - 4.0 * u) / 2.0,
            (-3.0 * u2 + 2.0 * u + 1.0) / 2.0,
            u2 / 2.0,
        ],
        2 => [1.0 - u, 3.0 * u - 2.0, 1.0 - 3.0 * u, u],
        3 => [-1.0, 3.0, -3.0, 1.0],
        _ => [0.0; 4],
    }
}

/// Three control points reproducing `state` at the curve end they sit at.
/// Returned in curve order: for the start they are `Q_0, Q_1, Q_2`; for the
/// end they are `Q_{n-3}, Q_{n-2}, Q_{n-1}`.
pub fn boundary_ctrl(state: &BoundaryState, dt: f64) -> [Point; 3] {
    // p = (Q0 + 4 Q1 + Q2) / 6, v = (Q2 - Q0) / 2dt, a = (Q0 - 2 Q1 + Q2) / dt^2
    let q1 = state.pos - state.acc * (dt * dt / 6.0);
    let sum = state.acc * (dt * dt) + q1 * 2.0;
    let diff = state.vel * (2.0 * dt);
    [(sum - diff) / 2.0, q1, (sum + diff) / 2.0]
}

pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// `n >= 2` points spaced uniformly in arc length along the polyline.
pub fn resample_polyline(points: &[Point], n: usize) -> Vec<Point> {
    assert!(n >= 2 && !points.is_empty());
    let total = polyline_length(points);
    if total == 0.0 || points.len() == 1 {
        return vec![points[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 1 < points.len() - 1 && seg_start + (points[seg + 1] - points[seg]).norm() < s {
            seg_start += (points[seg + 1] - points[seg]).norm();
            seg += 1;
        }
        let len = (points[seg + 1] - points[seg]).norm();
        let f = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * f);
    }
    *out.last_mut().unwrap() = *points.last().unwrap();
    out
}

/// Fits a spline that starts in `start`, ends in `goal`, and passes near
/// the waypoints, waypoint `k` being assigned time `k dt`.
///
/// The three control points at each end are pinned by the boundary states;
/// the interior ones solve the least-squares interpolation of the interior
/// waypoints. Inputs with fewer than four waypoints are first resampled to
/// four points along the polyline.
/// Splits every leg into `pieces` equal parts, keeping the original points.
fn subdivide(points: &[Point], pieces: usize) -> Vec<Point> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        for k in 1..=pieces {
            out.push(w[0].lerp(&w[1], k as f64 / pieces as f64));
        }
    }
    out
}

pub fn fit_from_waypoints(
    waypoints: &[Point],
    dt: f64,
    start: &BoundaryState,
    goal: &BoundaryState,
) -> Result<UniformBspline, SplineError> {
    if waypoints.len() < 2 {
        return Err(SplineError::TooFewPoints { need: 2, got: waypoints.len() });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SplineError::InvalidInterval(dt));
    }
    let pts = if waypoints.len() < 4 { subdivide(waypoints, 3usize.div_ceil(waypoints.len() - 1)) } else { waypoints.to_vec() };
    let segments = pts.len() - 1;
    let n = segments + DEGREE;
    let mut ctrl = vec![Point::zeros(); n];
    let head = boundary_ctrl(start, dt);
    let tail = boundary_ctrl(goal, dt);
    ctrl[..3].copy_from_slice(&head);
    ctrl[n - 3..].copy_from_slice(&tail);

    let free = n - 6;
    if free > 0 {
        // Rows: position at knot k = (Q_k + 4 Q_{k+1} + Q_{k+2}) / 6, k = 1..segments-1.
        let rows = segments - 1;
        let mut a = DMatrix::<f64>::zeros(rows, free);
        let mut b = DMatrix::<f64>::zeros(rows, 3);
        for (r, k) in (1..segments).enumerate() {
            let mut rhs = pts[k];
            for (j, w) in [(k, 1.0 / 6.0), (k + 1, 4.0 / 6.0), (k + 2, 1.0 / 6.0)] {
                if (3..n - 3).contains(&j) {
                    a[(r, j - 3)] += w;
                } else {
                    rhs -= ctrl[j] * w;
                }
            }
            for c in 0..3 {
                b[(r, c)] = rhs[c];
            }
        }
        let x = a.svd(true, true).solve(&b, 1e-12).map_err(|_| SplineError::FitFailed)?;
        for i in 0..free {
            ctrl[3 + i] = Point::new(x[(i, 0)], x[(i, 1)], x[(i, 2)]);
        }
    }
    UniformBspline::new(ctrl, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spline(rng: &mut ChaCha8Rng, n: usize) -> UniformBspline {
        let ctrl = (0..n)
            .map(|_| Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        UniformBspline::new(ctrl, rng.gen_range(0.1..1.0)).unwrap()
    }

    /// Textbook de Boor evaluation on an explicit knot vector.
    fn de_boor(ctrl: &[Vector3<f64>], knots: &[f64], p: usize, t: f64) -> Vector3<f64> {
        let mut k = p;
        while k + 1 < knots.len() - p - 1 && t >= knots[k + 1] {
            k += 1;
        }
        let mut d: Vec<Vector3<f64>> = (0..=p).map(|j| ctrl[j + k - p]).collect();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let i = j + k - p;
                let alpha = (t - knots[i]) / (knots[i + p + 1 - r] - knots[i]);
                d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
            }
        }
        d[p]
    }

    #[test]
    fn rejects_short_control_polygon() {
        let pts = vec![Point::zeros(); 3];
        assert_eq!(UniformBspline::new(pts, 1.0), Err(SplineError::TooFewPoints { need: 4, got: 3 }));
        assert!(matches!(UniformBspline::new(vec![Point::zeros(); 4], 0.0), Err(SplineError::InvalidInterval(_))));
    }

    #[test]
    fn collinear_derivative_points() {
        let ctrl = (0..4).map(|i| Point::new(i as f64, 0.0, 0.0)).collect();
        let s = UniformBspline::new(ctrl, 0.5).unwrap();
        let d = s.derivative_ctrl_points();
        assert_eq!(d.vel, vec![Vector3::new(2.0, 0.0, 0.0); 3]);
        assert_eq!(d.acc, vec![Vector3::zeros(); 2]);
        assert_eq!(d.jerk, vec![Vector3::zeros(); 1]);
    }

    #[test]
    fn doubling_dt_halves_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_spline(&mut rng, 8);
        let v1 = s.derivative_ctrl_points().vel;
        let v2 = s.with_dt(2.0 * s.dt()).unwrap().derivative_ctrl_points().vel;
        for (a, b) in v1.iter().zip(&v2) {
            assert_eq!(*a * 0.5, *b);
        }
    }

    #[test]
    fn acc_chain_matches_double_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_spline(&mut rng, 9);
        let d = s.derivative_ctrl_points();
        let q = s.ctrl();
        let dt = s.dt();
        for i in 0..d.acc.len() {
            let direct = ((q[i + 2] - q[i + 1]) / dt - (q[i + 1] - q[i]) / dt) / dt;
            assert_eq!(d.acc[i], direct);
        }
    }

    #[test]
    fn derivative_matches_degree_two_de_boor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(5..12);
            let s = random_spline(&mut rng, n);
            let n = s.len();
            let dt = s.dt();
            let knots: Vec<f64> = (0..n + 4).map(|j| (j as f64 - 3.0) * dt).collect();
            let vel = s.derivative_ctrl_points().vel;
            for k in 1..n - 3 {
                let t = k as f64 * dt;
                let pos = de_boor(s.ctrl(), &knots, 3, t);
                assert!((pos - s.evaluate(t, 0).unwrap()).norm() < 1e-9);
                let oracle = de_boor(&vel, &knots[1..n + 3], 2, t);
                let got = s.evaluate(t, 1).unwrap();
                assert!((oracle - got).norm() < 1e-9, "{oracle:?} vs {got:?}");
            }
        }
    }

    #[test]
    fn constant_spline() {
        let c = Point::new(1.0, -2.0, 3.0);
        let s = UniformBspline::new(vec![c; 6], 0.3).unwrap();
        for t in s.sample_times(17) {
            assert!((s.evaluate(t, 0).unwrap() - c).norm() < 1e-12);
            for order in 1..=3 {
                assert!(s.evaluate(t, order).unwrap().norm() < 1e-9);
            }
        }
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = random_spline(&mut rng, 10);
        let h = 1e-6;
        for k in 1..40 {
            let t = s.duration() * k as f64 / 40.0;
            let fd = (s.evaluate(t + h, 0).unwrap() - s.evaluate(t - h, 0).unwrap()) / (2.0 * h);
            let v = s.evaluate(t, 1).unwrap();
            assert!((fd - v).norm() <= 1e-6 * v.norm().max(1.0));
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let s = UniformBspline::new(vec![Point::zeros(); 5], 1.0).unwrap();
        assert!(matches!(s.evaluate(-0.1, 0), Err(SplineError::OutOfDomain { .. })));
        assert!(matches!(s.evaluate(2.5, 0), Err(SplineError::OutOfDomain { .. })));
        assert!(matches!(s.evaluate(1.0, 4), Err(SplineError::InvalidOrder(4))));
        assert_eq!(s.duration(), 2.0);
    }

    #[test]
    fn duration_scales_with_dt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_spline(&mut rng, 7);
        let s2 = s.with_dt(3.0 * s.dt()).unwrap();
        assert_eq!(s2.ctrl(), s.ctrl());
        assert!((s2.duration() - 3.0 * s.duration()).abs() < 1e-12);
    }

    #[test]
    fn boundary_ctrl_reproduces_state() {
        let st = BoundaryState {
            pos: Point::new(1.0, 2.0, 3.0),
            vel: Vector3::new(0.5, -1.0, 0.2),
            acc: Vector3::new(-0.3, 0.1, 1.0),
        };
        let dt = 0.4;
        let mut ctrl = boundary_ctrl(&st, dt).to_vec();
        ctrl.push(Point::new(4.0, 0.0, 0.0));
        let s = UniformBspline::new(ctrl, dt).unwrap();
        assert!((s.evaluate(0.0, 0).unwrap() - st.pos).norm() < 1e-12);
        assert!((s.evaluate(0.0, 1).unwrap() - st.vel).norm() < 1e-12);
        assert!((s.evaluate(0.0, 2).unwrap() - st.acc).norm() < 1e-12);
    }

    #[test]
    fn two_waypoint_fit_is_straight() {
        let (a, b) = (Point::new(0.0, 0.0, 1.0), Point::new(4.0, 2.0, 1.0));
        let s = fit_from_waypoints(&[a, b], 0.5, &BoundaryState::at_rest(a), &BoundaryState::at_rest(b)).unwrap();
        let mid = s.evaluate(0.5 * s.duration(), 0).unwrap();
        let dir = (b - a).normalize();
        let off = (mid - a) - dir * (mid - a).dot(&dir);
        assert!(off.norm() < 1e-6);
        assert!(((mid - a).dot(&dir) - 0.5 * (b - a).norm()).abs() < 1e-6);
    }

    #[test]
    fn fit_honours_boundary_states() {
        let wps: Vec<Point> = (0..8).map(|i| Point::new(i as f64 * 0.5, (i as f64 * 0.4).sin(), 1.0)).collect();
        let start = BoundaryState { pos: wps[0], vel: Vector3::new(1.0, 0.0, 0.0), acc: Vector3::new(0.0, 0.5, 0.0) };
        let goal = BoundaryState { pos: wps[7], vel: Vector3::new(0.2, 0.1, 0.0), acc: Vector3::zeros() };
        let s = fit_from_waypoints(&wps, 0.3, &start, &goal).unwrap();
        let t = s.duration();
        for (k, (a, b)) in [(start.pos, goal.pos), (start.vel, goal.vel), (start.acc, goal.acc)].into_iter().enumerate() {
            assert!((s.evaluate(0.0, k).unwrap() - a).norm() < 1e-6);
            assert!((s.evaluate(t, k).unwrap() - b).norm() < 1e-6);
        }
        assert!((s.evaluate(0.0, 1).unwrap() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn l_shaped_fit_residuals() {
        let resolution = 0.1;
        let corner = [Point::new(0.0, 0.0, 1.0), Point::new(3.0, 0.0, 1.0), Point::new(3.0, 3.0, 1.0)];
        let wps = resample_polyline(&corner, 13);
        assert_eq!(wps[6], corner[1]);
        let s = fit_from_waypoints(
            &wps,
            0.25,
            &BoundaryState::at_rest(corner[0]),
            &BoundaryState::at_rest(corner[2]),
        )
        .unwrap();
        for (k, w) in [(0, corner[0]), (6, corner[1]), (12, corner[2])] {
            let r = (s.evaluate(k as f64 * s.dt(), 0).unwrap() - w).norm();
            assert!(r < resolution, "waypoint {k}: residual {r}");
        }
    }

    #[test]
    fn short_inputs_keep_their_waypoints() {
        let corner = [Point::new(0.0, 0.0, 0.0), Point::new(3.0, 0.0, 0.0), Point::new(3.0, 3.0, 0.0)];
        let s = fit_from_waypoints(&corner, 0.5, &BoundaryState::at_rest(corner[0]), &BoundaryState::at_rest(corner[2]))
            .unwrap();
        // Two pieces per leg: 4 segments, corner at the middle knot.
        assert_eq!(s.len(), 7);
        assert!((s.evaluate(1.0, 0).unwrap() - corner[1]).norm() < 0.5);
    }

    #[test]
    fn resample_endpoints_and_spacing() {
        let pts = [Point::zeros(), Point::new(1.0, 0.0, 0.0), Point::new(1.0, 3.0, 0.0)];
        let r = resample_polyline(&pts, 5);
        assert_eq!(r[0], pts[0]);
        assert_eq!(r[4], pts[2]);
        assert!((r[1] - Point::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        /// Cox-de Boor basis value N_{i,p}(t) on an explicit knot vector.
        fn cox_de_boor(knots: &[f64], i: usize, p: usize, t: f64) -> f64 {
            if p == 0 {
                return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
            }
            let mut v = 0.0;
            let l = knots[i + p] - knots[i];
            if l > 0.0 {
                v += (t - knots[i]) / l * cox_de_boor(knots, i, p - 1, t);
            }
            let r = knots[i + p + 1] - knots[i + 1];
            if r > 0.0 {
                v += (knots[i + p + 1] - t) / r * cox_de_boor(knots, i + 1, p - 1, t);
            }
            v
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn samples_inside_active_hull(seed in 0u64..1_000_000) {
                // Convex-combination certificate: independent Cox-de Boor
                // weights over the active window are nonnegative, sum to one
                // and reproduce the evaluated point.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = rng.gen_range(4..9);
                let s = random_spline(&mut rng, n);
                let n = s.len();
                let knots: Vec<f64> = (0..n + 4).map(|j| (j as f64 - 3.0) * s.dt()).collect();
                for _ in 0..4 {
                    let t = rng.gen_range(0.0..s.duration());
                    let (m, _) = s.locate(t);
                    let w: Vec<f64> = (m..m + 4).map(|i| cox_de_boor(&knots, i, 3, t)).collect();
                    prop_assert!(w.iter().all(|&b| b >= 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    let combo = (0..4).fold(Point::zeros(), |a, j| a + s.ctrl()[m + j] * w[j]);
                    prop_assert!((combo - s.evaluate(t, 0).unwrap()).norm() < 1e-9);
                }
            }

            #[test]
            fn dt_change_keeps_ctrl(seed in 0u64..10_000, k in 0.1f64..10.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = random_spline(&mut rng, 6);
                let s2 = s.with_dt(s.dt() * k).unwrap();
                prop_assert_eq!(s2.ctrl(), s.ctrl());
                prop_assert!((s2.duration() - k * s.duration()).abs() < 1e-9 * s2.duration());
            }
        }
    }
}
