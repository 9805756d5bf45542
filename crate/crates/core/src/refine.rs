//! Time reallocation and anisotropic refit.
//!
//! The safe trajectory `phi_s` is slowed down by the limit-exceeding rate
//! `r_c`, then its control points are re-optimized for smoothness and
//! feasibility while staying close to `phi_s`. Deviation along `phi_s`'s
//! tangent (axial) is cheap and deviation across it (radial) is expensive.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bspline::{boundary_ctrl, BoundaryState, UniformBspline};
use crate::optimizer::{clamp_boundary, feasibility, smoothness, solve, Gradient, PlannerConfig, Status};

/// Largest of `|V|/v_m`, `sqrt(|A|/a_m)`, `cbrt(|J|/j_m)` over every axis, and 1.
pub fn exceed_ratio(spline: &UniformBspline, config: &PlannerConfig) -> f64 {
    let d = spline.derivative_ctrl_points();
    let mut r: f64 = 1.0;
    for v in &d.vel {
        r = r.max(v.amax() / config.v_m);
    }
    for a in &d.acc {
        r = r.max((a.amax() / config.a_m).sqrt());
    }
    for j in &d.jerk {
        r = r.max((j.amax() / config.j_m).cbrt());
    }
    r
}

/// Same control points with `dt` stretched by [`exceed_ratio`].
pub fn reallocate(spline: &UniformBspline, config: &PlannerConfig) -> UniformBspline {
    let r = exceed_ratio(spline, config);
    if r == 1.0 {
        return spline.clone();
    }
    spline.with_dt(spline.dt() * r).expect("positive interval")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitWeights {
    pub w_a: f64,
    pub w_r: f64,
    /// Samples of the displacement integral; `None` means `2 N_c`.
    pub samples: Option<usize>,
}

impl Default for FitWeights {
    fn default() -> Self {
        Self { w_a: 1.0, w_r: 10.0, samples: None }
    }
}

impl FitWeights {
    pub fn sample_count(&self, n_c: usize) -> usize {
        self.samples.unwrap_or(2 * n_c).max(2)
    }
}

/// Trapezoid-weighted sum over uniform `alpha` of `w_a d_a^2 + w_r d_r^2`,
/// where `e = phi_f(alpha T') - phi_s(alpha T)` is split along the unit
/// tangent of `phi_s`. Samples where `phi_s` is at rest count as fully radial.
pub fn fitting_term(phi_f: &UniformBspline, phi_s: &UniformBspline, weights: &FitWeights) -> (f64, Gradient) {
    let k = weights.sample_count(phi_f.len());
    let (tf, ts) = (phi_f.duration(), phi_s.duration());
    let mut grad = vec![Vector3::zeros(); phi_f.len()];
    let mut cost = 0.0;
    for j in 0..k {
        let alpha = j as f64 / (k - 1) as f64;
        let w = if j == 0 || j == k - 1 { 0.5 } else { 1.0 } / (k - 1) as f64;
        let (m, basis) = phi_f.basis(alpha * tf, 0);
        let pf: Vector3<f64> = (0..4).map(|i| phi_f.ctrl()[m + i] * basis[i]).sum();
        let e = pf - phi_s.eval_unchecked(alpha * ts, 0);
        let vel = phi_s.eval_unchecked(alpha * ts, 1);
        let speed = vel.norm();
        let (d_a, that) = if speed < 1e-9 { (0.0, Vector3::zeros()) } else { (e.dot(&(vel / speed)), vel / speed) };
        let radial = e - d_a * that;
        cost += w * (weights.w_a * d_a * d_a + weights.w_r * radial.norm_squared());
        let ge = 2.0 * w * (weights.w_a * d_a * that + weights.w_r * radial);
        for i in 0..4 {
            grad[m + i] += ge * basis[i];
        }
    }
    (cost, grad)
}

/// `lambda_s J_s + lambda_d J_d + lambda_f J_f` with the fixed boundary
/// points' gradient zeroed.
pub fn refine_objective(
    phi_f: &UniformBspline,
    phi_s: &UniformBspline,
    config: &PlannerConfig,
    weights: &FitWeights,
) -> (f64, Gradient) {
    let mut cost = 0.0;
    let mut grad = vec![Vector3::zeros(); phi_f.len()];
    for (w, (c, g)) in [
        (config.lambda_s, smoothness(phi_f)),
        (config.lambda_d, feasibility(phi_f, &config.limits())),
        (config.lambda_f, fitting_term(phi_f, phi_s, weights)),
    ] {
        cost += w * c;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
    }
    clamp_boundary(&mut grad);
    (cost, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refined {
    pub spline: UniformBspline,
    /// Ratio used for the reallocation.
    pub ratio: f64,
    /// Extra stretch applied after the refit to restore the limits.
    pub final_stretch: f64,
    pub trace: Vec<f64>,
    /// Set when the solver failed and the reallocated spline was returned.
    pub warning: bool,
}

fn boundary(spline: &UniformBspline, t: f64) -> BoundaryState {
    BoundaryState {
        pos: spline.eval_unchecked(t, 0),
        vel: spline.eval_unchecked(t, 1),
        acc: spline.eval_unchecked(t, 2),
    }
}

/// Reallocates time, then refits the interior control points against
/// `phi_s`. The three control points at each end are rebuilt from `phi_s`'s
/// boundary states at the new interval so those states carry over. If the
/// refit leaves a residual violation, the result is stretched once more.
pub fn refine(phi_s: &UniformBspline, config: &PlannerConfig, weights: &FitWeights) -> Refined {
    let ratio = exceed_ratio(phi_s, config);
    let realloc = reallocate(phi_s, config);
    let n = phi_s.len();
    let dt = realloc.dt();
    let mut ctrl = realloc.ctrl().to_vec();
    ctrl[..3].copy_from_slice(&boundary_ctrl(&boundary(phi_s, 0.0), dt));
    ctrl[n - 3..].copy_from_slice(&boundary_ctrl(&boundary(phi_s, phi_s.duration()), dt));
    let start = realloc.with_ctrl(ctrl).expect("same length");

    let (fitted, m) = solve(&start, &config.solver, |s| refine_objective(s, phi_s, config, weights));
    if m.status == Status::LineSearchFailed || !m.f.is_finite() {
        return Refined { spline: realloc, ratio, final_stretch: 1.0, trace: m.trace, warning: true };
    }
    let stretch = exceed_ratio(&fitted, config);
    let spline = if stretch > 1.0 { fitted.with_dt(fitted.dt() * stretch).expect("positive interval") } else { fitted };
    Refined { spline, ratio, final_stretch: stretch, trace: m.trace, warning: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    fn line(speed: f64, n: usize, dt: f64) -> UniformBspline {
        UniformBspline::new((0..n).map(|i| Point::new(speed * dt * i as f64, 0.0, 1.0)).collect(), dt).unwrap()
    }

    #[test]
    fn ratio_examples() {
        let cfg = PlannerConfig { v_m: 2.0, a_m: 3.0, j_m: 6.0, ..Default::default() };
        assert_eq!(exceed_ratio(&line(1.0, 6, 0.5), &cfg), 1.0);
        assert!((exceed_ratio(&line(4.0, 6, 0.5), &cfg) - 2.0).abs() < 1e-12);
        // A single bump whose acceleration peaks at 4 a_m; V and J stay below.
        let dt = 1.0;
        let ctrl = vec![Point::zeros(), Point::zeros(), Point::new(0.0, 4.0 * cfg.a_m * dt * dt, 0.0), Point::new(0.0, 8.0 * cfg.a_m, 0.0)];
        let s = UniformBspline::new(ctrl, dt).unwrap();
        let d = s.derivative_ctrl_points();
        assert_eq!(d.acc[0].amax(), 4.0 * cfg.a_m);
        let cfg2 = PlannerConfig { v_m: 100.0, j_m: 100.0, ..cfg.clone() };
        assert!((exceed_ratio(&s, &cfg2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reallocation_scales_duration() {
        let cfg = PlannerConfig::default();
        let s = line(4.0, 7, 0.5);
        let r = reallocate(&s, &cfg);
        assert_eq!(r.ctrl(), s.ctrl());
        assert!((r.duration() - 2.0 * s.duration()).abs() < 1e-12);
        assert!((exceed_ratio(&r, &cfg) - 1.0).abs() < 1e-9);
        assert_eq!(reallocate(&line(1.0, 7, 0.5), &cfg), line(1.0, 7, 0.5));
    }

    #[test]
    fn identical_curves_have_no_fitting_cost() {
        let s = UniformBspline::new((0..8).map(|i| Point::new(i as f64, (i as f64).sin(), 0.0)).collect(), 0.4).unwrap();
        let (c, g) = fitting_term(&s, &s, &FitWeights::default());
        assert!(c.abs() < 1e-24);
        assert!(g.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn axial_shift_is_free_without_axial_weight() {
        let s = line(1.0, 8, 0.5);
        let shifted = s.with_ctrl(s.ctrl().iter().map(|q| q + Vector3::new(0.3, 0.0, 0.0)).collect()).unwrap();
        let w = FitWeights { w_a: 0.0, ..Default::default() };
        assert!(fitting_term(&shifted, &s, &w).0.abs() < 1e-24);
        assert!(fitting_term(&shifted, &s, &FitWeights::default()).0 > 0.0);
    }

    #[test]
    fn fast_straight_line_becomes_feasible() {
        let cfg = PlannerConfig::default();
        let mut ctrl: Vec<Point> = (0..12).map(|i| Point::new(0.4 * i as f64, 0.0, 1.0)).collect();
        // Rest at both ends.
        for i in 0..3 {
            ctrl[i] = ctrl[2];
            ctrl[11 - i] = ctrl[9];
        }
        let s = UniformBspline::new(ctrl, 0.1).unwrap();
        assert!(exceed_ratio(&s, &cfg) > 1.5);
        let r = refine(&s, &cfg, &FitWeights::default());
        assert!(!r.warning);
        assert!((exceed_ratio(&r.spline, &cfg) - 1.0).abs() < 1e-6);
        for k in 0..3 {
            let (a, b) = (s.evaluate(0.0, k).unwrap(), r.spline.evaluate(0.0, k).unwrap());
            assert!((a - b).norm() < 1e-6);
            let (a, b) = (s.evaluate(s.duration(), k).unwrap(), r.spline.evaluate(r.spline.duration(), k).unwrap());
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn feasible_input_is_nearly_unchanged() {
        let cfg = PlannerConfig::default();
        let s = line(1.0, 10, 0.5);
        let r = refine(&s, &cfg, &FitWeights::default());
        assert_eq!(r.ratio, 1.0);
        let (before, _) = refine_objective(&s, &s, &cfg, &FitWeights::default());
        let (after, _) = refine_objective(&r.spline, &s, &cfg, &FitWeights::default());
        assert!((before - after).abs() <= cfg.solver.obj_tol * before.abs().max(1.0));
    }
}
