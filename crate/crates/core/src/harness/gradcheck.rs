//! Finite-difference checks of the analytic penalty gradients.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::anchor::{AnchorPair, AnchorSet};
use crate::bspline::UniformBspline;
use crate::grid::Point;
use crate::optimizer::{collision, feasibility, smoothness, total_objective, Gradient, PlannerConfig, FIXED};
use crate::refine::{fitting_term, FitWeights};

/// Pass threshold on the relative error.
pub const TOLERANCE: f64 = 1e-5;
/// Random instances per term.
pub const INSTANCES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Term {
    #[serde(rename = "J_s")]
    Smoothness,
    #[serde(rename = "J_c")]
    Collision,
    #[serde(rename = "J_d")]
    Feasibility,
    #[serde(rename = "J_f")]
    Fitting,
    #[serde(rename = "total")]
    Total,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Smoothness, Term::Collision, Term::Feasibility, Term::Fitting, Term::Total];

    pub fn name(self) -> &'static str {
        match self {
            Term::Smoothness => "J_s",
            Term::Collision => "J_c",
            Term::Feasibility => "J_d",
            Term::Fitting => "J_f",
            Term::Total => "total",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermReport {
    pub term: Term,
    pub instances: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradReport {
    pub seed: u64,
    pub terms: Vec<TermReport>,
}

impl GradReport {
    pub fn pass(&self) -> bool {
        self.terms.iter().all(|t| t.pass)
    }
}

/// `|a - f|_inf / max(|f|_inf, 1)` over the compared coordinates.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max);
    let scale = numeric.iter().map(|f| f.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Central differences of `f` at every control point coordinate in `range`.
fn numeric_gradient(
    spline: &UniformBspline,
    range: std::ops::Range<usize>,
    mut f: impl FnMut(&UniformBspline) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * range.len());
    for i in range {
        for a in 0..3 {
            let x = spline.ctrl()[i][a];
            let h = 1e-6 * x.abs().max(1.0);
            let mut ctrl = spline.ctrl().to_vec();
            ctrl[i][a] = x + h;
            let fp = f(&spline.with_ctrl(ctrl.clone()).unwrap());
            ctrl[i][a] = x - h;
            let fm = f(&spline.with_ctrl(ctrl).unwrap());
            out.push((fp - fm) / (2.0 * h));
        }
    }
    out
}

fn flatten(g: &Gradient, range: std::ops::Range<usize>) -> Vec<f64> {
    g[range].iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

fn random_spline(rng: &mut ChaCha8Rng) -> UniformBspline {
    let n = rng.gen_range(7..16);
    let dt = rng.gen_range(0.2..1.0);
    let mut p = Point::new(0.0, 0.0, 1.0);
    let ctrl = (0..n)
        .map(|_| {
            p += Vector3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-0.5..0.5));
            p
        })
        .collect();
    UniformBspline::new(ctrl, dt).unwrap()
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if (0.1..=1.0).contains(&n) {
            return v / n;
        }
    }
}

/// Up to two pairs per control point, with signed distances spread over
/// every branch of the collision penalty.
fn random_anchors(rng: &mut ChaCha8Rng, spline: &UniformBspline, s_f: f64) -> AnchorSet {
    let mut set = AnchorSet::new(spline.len());
    for (i, q) in spline.ctrl().iter().enumerate() {
        for _ in 0..rng.gen_range(0..3) {
            let v = unit(rng);
            let d = rng.gen_range(-2.0 * s_f..2.0 * s_f);
            let side = unit(rng).cross(&v) * rng.gen_range(0.0..0.5);
            set.push(i, AnchorPair { p: q - d * v + side, v });
        }
    }
    set
}

fn random_config(rng: &mut ChaCha8Rng) -> PlannerConfig {
    PlannerConfig {
        lambda_s: rng.gen_range(0.5..2.0),
        lambda_c: rng.gen_range(1.0..100.0),
        lambda_d: rng.gen_range(0.5..10.0),
        v_m: rng.gen_range(1.0..4.0),
        a_m: rng.gen_range(1.0..6.0),
        j_m: rng.gen_range(2.0..12.0),
        ..Default::default()
    }
}

/// Analytic and numeric gradients of one random instance of `term`.
fn instance(term: Term, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let spline = random_spline(rng);
    let n = spline.len();
    let cfg = random_config(rng);
    match term {
        Term::Smoothness => (flatten(&smoothness(&spline).1, 0..n), numeric_gradient(&spline, 0..n, |s| smoothness(s).0)),
        Term::Collision => {
            let anchors = random_anchors(rng, &spline, cfg.s_f);
            (
                flatten(&collision(&spline, &anchors, cfg.s_f).1, 0..n),
                numeric_gradient(&spline, 0..n, |s| collision(s, &anchors, cfg.s_f).0),
            )
        }
        Term::Feasibility => {
            let lim = cfg.limits();
            (flatten(&feasibility(&spline, &lim).1, 0..n), numeric_gradient(&spline, 0..n, |s| feasibility(s, &lim).0))
        }
        Term::Fitting => {
            // phi_f has the same control count as phi_s and a longer interval.
            let reference = spline.with_ctrl(spline.ctrl().iter().map(|q| q + unit(rng) * rng.gen_range(0.0..0.5)).collect()).unwrap();
            let phi_f = spline.with_dt(spline.dt() * rng.gen_range(1.0..2.5)).unwrap();
            let w = FitWeights { w_a: rng.gen_range(0.1..2.0), w_r: rng.gen_range(1.0..20.0), samples: None };
            (
                flatten(&fitting_term(&phi_f, &reference, &w).1, 0..n),
                numeric_gradient(&phi_f, 0..n, |s| fitting_term(s, &reference, &w).0),
            )
        }
        Term::Total => {
            let anchors = random_anchors(rng, &spline, cfg.s_f);
            let free = FIXED..n - FIXED;
            (
                flatten(&total_objective(&spline, &anchors, &cfg).1, free.clone()),
                numeric_gradient(&spline, free, |s| total_objective(s, &anchors, &cfg).0),
            )
        }
    }
}

/// Runs every term. `corrupt` scales the analytic gradient of one term by
/// `1 + 1e-3`, as a negative control.
pub fn gradcheck_with(seed: u64, corrupt: Option<Term>) -> GradReport {
    let terms = Term::ALL
        .iter()
        .enumerate()
        .map(|(k, &term)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(k as u64));
            let mut worst: f64 = 0.0;
            for _ in 0..INSTANCES {
                let (mut a, f) = instance(term, &mut rng);
                if corrupt == Some(term) {
                    a.iter_mut().for_each(|x| *x *= 1.0 + 1e-3);
                }
                worst = worst.max(relative_error(&a, &f));
            }
            TermReport { term, instances: INSTANCES, max_rel_error: worst, pass: worst < TOLERANCE }
        })
        .collect();
    GradReport { seed, terms }
}

pub fn gradcheck(seed: u64) -> GradReport {
    gradcheck_with(seed, None)
}
