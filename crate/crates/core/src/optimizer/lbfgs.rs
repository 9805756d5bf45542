//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
    pub memory: usize,
    pub max_anchor_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-4, obj_tol: 1e-6, memory: 8, max_anchor_rounds: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub status: Status,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const STALL_WINDOW: usize = 3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective.
pub fn minimize<F>(x0: Vec<f64>, mut f: F, cfg: &SolverConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; cfg.memory.max(1)];
    let mut iter = 0;
    let status = loop {
        if n == 0 || max_abs(&g) < cfg.grad_tol {
            break Status::GradientTolerance;
        }
        if iter >= cfg.max_iter {
            break Status::MaxIterations;
        }
        // Two-loop recursion.
        dir.copy_from_slice(&g);
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= alpha[k] * yi);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / max_abs(&g).max(1.0),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[k] - beta) * si);
        }
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            mem.clear();
            let scale = 1.0 / max_abs(&g).max(1.0);
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi * scale);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            xn.iter_mut().zip(x.iter().zip(&dir)).for_each(|(o, (xi, di))| *o = xi + step * di);
            let fn_ = f(&xn, &mut gn);
            if fn_.is_finite() && fn_ <= fx + ARMIJO_C * step * slope {
                accepted = Some(fn_);
                break;
            }
            step *= 0.5;
        }
        let Some(fnew) = accepted else {
            break Status::LineSearchFailed;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem.len() == cfg.memory.max(1) {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        fx = fnew;
        trace.push(fx);
        iter += 1;
        if trace.len() > STALL_WINDOW {
            let old = trace[trace.len() - 1 - STALL_WINDOW];
            if old - fx <= cfg.obj_tol * old.abs() {
                break Status::ObjectiveTolerance;
            }
        }
    };
    Minimum { x, f: fx, iterations: iter, trace, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let cfg = SolverConfig { max_iter: 2000, grad_tol: 1e-8, obj_tol: 0.0, ..Default::default() };
        let m = minimize(
            vec![-1.2, 1.0],
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &cfg,
        );
        assert_eq!(m.status, Status::GradientTolerance);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trace_never_increases() {
        let m = minimize(
            vec![3.0, -2.0, 5.0],
            |x, g| {
                let w = [1.0, 10.0, 100.0];
                let mut f = 0.0;
                for i in 0..3 {
                    f += w[i] * x[i].powi(4) + x[i] * x[i];
                    g[i] = 4.0 * w[i] * x[i].powi(3) + 2.0 * x[i];
                }
                f
            },
            &SolverConfig::default(),
        );
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.f < 1e-6);
    }

    #[test]
    fn empty_problem_returns_immediately() {
        let m = minimize(vec![], |_, _| 7.0, &SolverConfig::default());
        assert_eq!((m.iterations, m.f), (0, 7.0));
    }
}
