//! Objective terms over control points, each returning its value and the
//! gradient with respect to every `Q_i`.

use nalgebra::Vector3;

use crate::anchor::{signed_dist, AnchorSet};
use crate::bspline::UniformBspline;

pub type Gradient = Vec<Vector3<f64>>;

/// `sum |A_i|^2 + sum |J_i|^2` over the acceleration and jerk control points.
pub fn smoothness(spline: &UniformBspline) -> (f64, Gradient) {
    let q = spline.ctrl();
    let dt = spline.dt();
    let mut grad = vec![Vector3::zeros(); q.len()];
    let mut cost = 0.0;
    let (s2, s3) = (1.0 / (dt * dt), 1.0 / (dt * dt * dt));
    for i in 0..q.len().saturating_sub(2) {
        let a = (q[i + 2] - 2.0 * q[i + 1] + q[i]) * s2;
        cost += a.norm_squared();
        let g = 2.0 * a * s2;
        grad[i] += g;
        grad[i + 1] -= 2.0 * g;
        grad[i + 2] += g;
    }
    for i in 0..q.len().saturating_sub(3) {
        let j = (q[i + 3] - 3.0 * q[i + 2] + 3.0 * q[i + 1] - q[i]) * s3;
        cost += j.norm_squared();
        let g = 2.0 * j * s3;
        grad[i] -= g;
        grad[i + 1] += 3.0 * g;
        grad[i + 2] -= 3.0 * g;
        grad[i + 3] += g;
    }
    (cost, grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollisionBranch {
    Zero,
    Cubic,
    Quadratic,
}

impl CollisionBranch {
    pub fn of(c: f64, s_f: f64) -> Self {
        if c <= 0.0 {
            Self::Zero
        } else if c <= s_f {
            Self::Cubic
        } else {
            Self::Quadratic
        }
    }

    /// Value, first and second derivative of this branch's expression at `c`.
    pub fn eval(self, c: f64, s_f: f64) -> [f64; 3] {
        match self {
            Self::Zero => [0.0; 3],
            Self::Cubic => [c * c * c, 3.0 * c * c, 6.0 * c],
            Self::Quadratic => [
                3.0 * s_f * c * c - 3.0 * s_f * s_f * c + s_f * s_f * s_f,
                6.0 * s_f * c - 3.0 * s_f * s_f,
                6.0 * s_f,
            ],
        }
    }
}

/// Collision penalty `j_c(c)` with `c = s_f - d`, and its derivative in `c`.
pub fn collision_penalty(c: f64, s_f: f64) -> (f64, f64) {
    let [v, d, _] = CollisionBranch::of(c, s_f).eval(c, s_f);
    (v, d)
}

/// Sum of `j_c` over every anchor pair. Since `c = s_f - (Q - p) . v`, the
/// gradient with respect to `Q` is `j_c'(c) * (-v)`.
pub fn collision(spline: &UniformBspline, anchors: &AnchorSet, s_f: f64) -> (f64, Gradient) {
    let q = spline.ctrl();
    let mut grad = vec![Vector3::zeros(); q.len()];
    let mut cost = 0.0;
    for (i, pair) in anchors.iter() {
        if i >= q.len() {
            continue;
        }
        let c = s_f - signed_dist(&q[i], pair);
        let (v, d) = collision_penalty(c, s_f);
        cost += v;
        grad[i] -= d * pair.v;
    }
    (cost, grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeasibilityBranch {
    NegTail,
    NegCubic,
    Zero,
    PosCubic,
    PosTail,
}

/// Per-axis limit penalty. Zero inside `[-m, m]` with `m = lambda_e c_m`,
/// cubic out to `c_j`, then a quadratic tail matched in value, slope and
/// curvature at `c_j`. The negative side mirrors the positive one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeasibilityPenalty {
    pub m: f64,
    pub cj: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl FeasibilityPenalty {
    pub fn new(limit: f64, lambda_e: f64, cj_factor: f64) -> Self {
        let m = lambda_e * limit;
        let cj = cj_factor * m;
        let delta = cj - m;
        // Continuity at cj: 2 a2 = 6 delta, 2 a2 cj + b2 = 3 delta^2,
        // a2 cj^2 + b2 cj + c2 = delta^3.
        let a2 = 3.0 * delta;
        let b2 = 3.0 * delta * delta - 2.0 * a2 * cj;
        let c2 = delta * delta * delta - a2 * cj * cj - b2 * cj;
        Self { m, cj, a1: a2, b1: -b2, c1: c2, a2, b2, c2 }
    }

    pub fn branch(&self, c: f64) -> FeasibilityBranch {
        use FeasibilityBranch::*;
        if c < -self.cj {
            NegTail
        } else if c < -self.m {
            NegCubic
        } else if c <= self.m {
            Zero
        } else if c < self.cj {
            PosCubic
        } else {
            PosTail
        }
    }

    /// Value, first and second derivative of one branch's expression at `c`.
    pub fn eval_branch(&self, b: FeasibilityBranch, c: f64) -> [f64; 3] {
        use FeasibilityBranch::*;
        match b {
            NegTail => [self.a1 * c * c + self.b1 * c + self.c1, 2.0 * self.a1 * c + self.b1, 2.0 * self.a1],
            NegCubic => {
                let e = -self.m - c;
                [e * e * e, -3.0 * e * e, 6.0 * e]
            }
            Zero => [0.0; 3],
            PosCubic => {
                let e = c - self.m;
                [e * e * e, 3.0 * e * e, 6.0 * e]
            }
            PosTail => [self.a2 * c * c + self.b2 * c + self.c2, 2.0 * self.a2 * c + self.b2, 2.0 * self.a2],
        }
    }

    pub fn eval(&self, c: f64) -> [f64; 3] {
        self.eval_branch(self.branch(c), c)
    }
}

/// Limits and shape parameters for [`feasibility`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub v_m: f64,
    pub a_m: f64,
    pub j_m: f64,
    pub lambda_e: f64,
    pub cj_factor: f64,
}

/// Per-axis penalty over the velocity, acceleration and jerk control points,
/// back-propagated to `Q` through the difference operators.
pub fn feasibility(spline: &UniformBspline, limits: &Limits) -> (f64, Gradient) {
    let q = spline.ctrl();
    let dt = spline.dt();
    let n = q.len();
    let mut grad = vec![Vector3::zeros(); n];
    let mut cost = 0.0;
    let d = spline.derivative_ctrl_points();
    // Coefficients of each derivative point over consecutive Q.
    let stencils: [(&[Vector3<f64>], f64, &[f64]); 3] = [
        (&d.vel, limits.v_m, &[-1.0, 1.0]),
        (&d.acc, limits.a_m, &[1.0, -2.0, 1.0]),
        (&d.jerk, limits.j_m, &[-1.0, 3.0, -3.0, 1.0]),
    ];
    for (order, (pts, limit, coef)) in stencils.into_iter().enumerate() {
        let pen = FeasibilityPenalty::new(limit, limits.lambda_e, limits.cj_factor);
        let scale = dt.powi(-(order as i32 + 1));
        for (i, p) in pts.iter().enumerate() {
            let mut g = Vector3::zeros();
            for r in 0..3 {
                let [v, dv, _] = pen.eval(p[r]);
                cost += v;
                g[r] = dv;
            }
            if g != Vector3::zeros() {
                for (k, w) in coef.iter().enumerate() {
                    grad[i + k] += g * (w * scale);
                }
            }
        }
    }
    (cost, grad)
}
