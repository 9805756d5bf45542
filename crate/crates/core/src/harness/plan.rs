//! Single-shot planning: search, prune, fit, optimize, refine, verify.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::bspline::{fit_from_waypoints, BoundaryState, SplineError, UniformBspline};
use crate::grid::{OccupancyGrid, Point};
use crate::optimizer::{optimize, OptimizeError, Optimized, PlannerConfig};
use crate::refine::{exceed_ratio, reallocate, refine, FitWeights, Refined};
use crate::search::{bidirectional_astar, prune_path, SearchError, SearchResult};

use super::render::{render, spline_polyline, Layers};
use super::scenario::{Scenario, World};
use super::{points_csv, trajectory_csv};

/// Uniform samples checked against the map before a plan is accepted.
pub const VERIFY_SAMPLES: usize = 200;
/// Search radius for the reported clearance, meters.
pub const CLEARANCE_CAP: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Search,
    Fit,
    Optimize,
    Verify,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("search: {0}")]
    Search(#[from] SearchError),
    #[error("fit: {0}")]
    Fit(#[from] SplineError),
    #[error("optimize: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("verify: trajectory sample {sample} at {at:?} is occupied")]
    Unsafe { sample: usize, at: [f64; 3] },
}

impl PlanError {
    pub fn stage(&self) -> Stage {
        match self {
            Self::Search(_) => Stage::Search,
            Self::Fit(_) => Stage::Fit,
            Self::Optimize(_) => Stage::Optimize,
            Self::Unsafe { .. } => Stage::Verify,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub search: f64,
    pub fit: f64,
    pub optimize: f64,
    pub refine: f64,
    pub verify: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutput {
    pub search: SearchResult,
    /// Pruned guide path.
    pub guide: Vec<Point>,
    pub initial: UniformBspline,
    pub phi_s: Optimized,
    pub refined: Refined,
    /// Trajectory handed to the caller: the refit, or the reallocated
    /// `phi_s` when the refit fails the map check.
    pub trajectory: UniformBspline,
    pub fallback: bool,
    pub timings: Timings,
    /// Smallest distance from a verification sample to an occupied cell,
    /// capped at [`CLEARANCE_CAP`].
    pub clearance: f64,
}

/// Splits each leg so no piece is longer than `spacing`, keeping corners.
pub fn densify(points: &[Point], spacing: f64) -> Vec<Point> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let pieces = ((w[1] - w[0]).norm() / spacing).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(w[0].lerp(&w[1], k as f64 / pieces as f64));
        }
    }
    out
}

/// First occupied sample among `n` uniform samples, if any.
pub fn first_collision(spline: &UniformBspline, grid: &OccupancyGrid, n: usize) -> Option<(usize, Point)> {
    spline
        .sample_times(n)
        .into_iter()
        .map(|t| spline.eval_unchecked(t, 0))
        .enumerate()
        .find(|(_, p)| grid.is_occupied(p))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Search and prune on the map inflated by `margin`, or on the map itself
/// when that fails or blocks an endpoint.
pub fn guide_search(
    grid: &OccupancyGrid,
    start: &Point,
    goal: &Point,
    margin: f64,
) -> Result<(SearchResult, Vec<Point>), SearchError> {
    if margin > 0.0 {
        let wide = grid.inflate(margin);
        if wide.is_free(start) && wide.is_free(goal) {
            if let Ok(r) = bidirectional_astar(&wide, start, goal) {
                let pruned = prune_path(&r, &wide);
                return Ok((r, pruned));
            }
        }
    }
    let r = bidirectional_astar(grid, start, goal)?;
    let pruned = prune_path(&r, grid);
    Ok((r, pruned))
}

/// Plans from `start` to rest at `goal` on `grid`.
pub fn plan_on(
    grid: &OccupancyGrid,
    start: &BoundaryState,
    goal: &Point,
    config: &PlannerConfig,
    fit: &FitWeights,
) -> Result<PlanOutput, PlanError> {
    let t_all = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let (search, mut guide) = guide_search(grid, &start.pos, goal, config.guide_margin)?;
    // The search works on cell centers; the trajectory starts and ends at
    // the exact points.
    guide[0] = start.pos;
    *guide.last_mut().unwrap() = *goal;
    if guide.len() == 1 {
        guide.push(*goal);
    }
    timings.search = secs(t);

    let t = Instant::now();
    let waypoints = densify(&guide, config.ctrl_spacing);
    let length: f64 = guide.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let n_c = waypoints.len().max(4) - 1 + 3;
    let dt = if length > 0.0 { length / n_c as f64 / config.v_m } else { 0.1 };
    let initial = fit_from_waypoints(&waypoints, dt, start, &BoundaryState::at_rest(*goal))?;
    timings.fit = secs(t);

    let t = Instant::now();
    let phi_s = optimize(&initial, grid, &guide, config)?;
    timings.optimize = secs(t);

    let t = Instant::now();
    let refined = refine(&phi_s.spline, config, fit);
    timings.refine = secs(t);

    let t = Instant::now();
    let (trajectory, fallback) = match first_collision(&refined.spline, grid, VERIFY_SAMPLES) {
        None => (refined.spline.clone(), false),
        Some(hit) => {
            let safe = reallocate(&phi_s.spline, config);
            match first_collision(&safe, grid, VERIFY_SAMPLES) {
                None => (safe, true),
                Some(_) => return Err(PlanError::Unsafe { sample: hit.0, at: [hit.1.x, hit.1.y, hit.1.z] }),
            }
        }
    };
    let clearance = trajectory
        .sample_times(VERIFY_SAMPLES)
        .into_iter()
        .map(|t| grid.clearance(&trajectory.eval_unchecked(t, 0), CLEARANCE_CAP))
        .fold(CLEARANCE_CAP, f64::min);
    timings.verify = secs(t);
    timings.total = secs(t_all);

    Ok(PlanOutput { search, guide, initial, phi_s, refined, trajectory, fallback, timings, clearance })
}

pub fn plan_once(scenario: &Scenario, world: &World) -> Result<PlanOutput, PlanError> {
    plan_on(&world.inflated, &scenario.start_state(), &scenario.goal_point(), &scenario.config(), &scenario.fit_weights())
}

#[derive(Clone, Debug, Serialize)]
pub struct SplineSummary {
    pub n_c: usize,
    pub dt: f64,
    pub duration: f64,
}

impl From<&UniformBspline> for SplineSummary {
    fn from(s: &UniformBspline) -> Self {
        Self { n_c: s.len(), dt: s.dt(), duration: s.duration() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchSummary {
    pub cost: f64,
    pub expanded: usize,
    pub elapsed: f64,
    pub path_len: usize,
    pub guide_len: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanReport {
    pub search: SearchSummary,
    pub phi_s: SplineSummary,
    pub phi_f: SplineSummary,
    pub timings: Timings,
    pub optimize_trace: Vec<f64>,
    pub refine_trace: Vec<f64>,
    pub anchor_rounds: usize,
    pub anchors: usize,
    pub lambda_c_final: f64,
    pub min_anchor_distance: Option<f64>,
    pub clearance_min: f64,
    pub exceed_ratio: f64,
    pub reallocation_ratio: f64,
    pub fallback: bool,
    pub refine_warning: bool,
}

impl PlanReport {
    pub fn new(out: &PlanOutput, config: &PlannerConfig) -> Self {
        Self {
            search: SearchSummary {
                cost: out.search.cost,
                expanded: out.search.expanded,
                elapsed: out.search.elapsed,
                path_len: out.search.path.len(),
                guide_len: out.guide.len(),
            },
            phi_s: (&out.phi_s.spline).into(),
            phi_f: (&out.trajectory).into(),
            timings: out.timings,
            optimize_trace: out.phi_s.trace.clone(),
            refine_trace: out.refined.trace.clone(),
            anchor_rounds: out.phi_s.rounds,
            anchors: out.phi_s.anchors.total(),
            lambda_c_final: out.phi_s.lambda_c,
            min_anchor_distance: out.phi_s.min_anchor_distance(),
            clearance_min: out.clearance,
            exceed_ratio: exceed_ratio(&out.trajectory, config),
            reallocation_ratio: out.refined.ratio,
            fallback: out.fallback,
            refine_warning: out.refined.warning,
        }
    }
}

/// Writes `trajectory.csv` (the final trajectory), `phi_s.csv`, `guide.csv`,
/// `report.json` and `plan.svg` into `dir`.
pub fn write_artifacts(dir: &Path, scenario: &Scenario, world: &World, out: &PlanOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&out.trajectory))?;
    std::fs::write(dir.join("phi_s.csv"), trajectory_csv(&out.phi_s.spline))?;
    std::fs::write(dir.join("guide.csv"), points_csv(&out.guide))?;
    let report = PlanReport::new(out, &scenario.config());
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report).expect("serializable") + "\n")?;
    let layers = Layers {
        guide: out.guide.clone(),
        phi_s: spline_polyline(&out.phi_s.spline),
        phi_f: spline_polyline(&out.trajectory),
        track: Vec::new(),
        start: Some(scenario.start_state().pos),
        goal: Some(scenario.goal_point()),
    };
    render(&world.raw, &layers, &dir.join("plan.svg"))
}
