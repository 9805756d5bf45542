//! Replanning simulator with limited sensing.
//!
//! The agent follows the committed trajectory by exact evaluation. It only
//! knows the inflated obstacles it has seen within the sensing radius.

use serde::Serialize;

use crate::bspline::{BoundaryState, UniformBspline};
use crate::grid::{Cell, OccupancyGrid, Point};
use crate::optimizer::PlannerConfig;
use crate::refine::FitWeights;

use super::plan::{guide_search, plan_on};
use super::scenario::{Scenario, World};

/// Local planning horizon when the scenario does not set one, meters.
pub const DEFAULT_HORIZON: f64 = 7.5;
/// Simulation time step, seconds.
pub const SIM_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub sensing_radius: f64,
    pub replan_period: f64,
    pub horizon: f64,
    /// Simulated time budget, seconds.
    pub timeout: f64,
}

impl SimConfig {
    pub fn new(sensing_radius: f64, replan_period: f64) -> Self {
        Self { sensing_radius, replan_period, horizon: DEFAULT_HORIZON, timeout: 120.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub success: bool,
    /// Successful plans, the first one included.
    pub plans: usize,
    pub replans: usize,
    pub failed_replans: usize,
    pub collision: bool,
    pub timeout: bool,
    pub path_length: f64,
    /// Simulated time at which the goal was reached, seconds.
    pub goal_time: Option<f64>,
    /// Agent positions at every step.
    #[serde(skip)]
    pub track: Vec<Point>,
}

/// Copies the truth occupancy of every cell within `radius` of `at`.
fn reveal(known: &mut OccupancyGrid, truth: &OccupancyGrid, at: &Point, radius: f64) {
    let r = Point::repeat(radius);
    let (lo, hi) = (known.world_to_cell(&(at - r)), known.world_to_cell(&(at + r)));
    let dims = known.dims();
    let r2 = radius * radius;
    for x in lo.0[0].max(0)..=hi.0[0].min(dims[0] as i64 - 1) {
        for y in lo.0[1].max(0)..=hi.0[1].min(dims[1] as i64 - 1) {
            for z in lo.0[2].max(0)..=hi.0[2].min(dims[2] as i64 - 1) {
                let c = Cell([x, y, z]);
                if truth.is_occupied_cell(c) && (known.cell_center(c) - at).norm_squared() <= r2 {
                    known.set_occupied(c, true);
                }
            }
        }
    }
}

/// Point at arc length `dist` along `path`, or its end.
fn along(path: &[Point], mut dist: f64) -> Point {
    for w in path.windows(2) {
        let len = (w[1] - w[0]).norm();
        if dist <= len {
            return w[0].lerp(&w[1], if len > 0.0 { dist / len } else { 0.0 });
        }
        dist -= len;
    }
    *path.last().expect("nonempty path")
}

/// First occupied sample of `spline` after `from`, checked at roughly half
/// the grid resolution.
fn collides_after(spline: &UniformBspline, from: f64, grid: &OccupancyGrid, v_m: f64) -> bool {
    let span = spline.duration() - from;
    if span <= 0.0 {
        return false;
    }
    let n = ((span * v_m / (0.5 * grid.resolution())).ceil() as usize).max(2);
    (0..=n).any(|k| grid.is_occupied(&spline.eval_unchecked(from + span * k as f64 / n as f64, 0)))
}

struct Planner<'a> {
    goal: Point,
    config: &'a PlannerConfig,
    fit: &'a FitWeights,
    horizon: f64,
}

impl Planner<'_> {
    /// Plans from `state` towards the goal, clamped to the horizon along a
    /// guide searched on the known map. Returns the trajectory and whether it
    /// ends at the goal.
    fn plan(&self, known: &OccupancyGrid, state: &BoundaryState) -> Option<(UniformBspline, bool)> {
        let (_, guide) = guide_search(known, &state.pos, &self.goal, 0.0).ok()?;
        let mut path = guide;
        *path.last_mut().unwrap() = self.goal;
        path[0] = state.pos;
        let full = crate::search::path_length(&path);
        let (target, final_leg) = if full <= self.horizon { (self.goal, true) } else { (along(&path, self.horizon), false) };
        if known.is_occupied(&target) {
            return None;
        }
        let out = plan_on(known, state, &target, self.config, self.fit).ok()?;
        Some((out.trajectory, final_leg))
    }
}

pub fn simulate(scenario: &Scenario, world: &World, sim: &SimConfig) -> SimReport {
    let truth = &world.inflated;
    let config = scenario.config();
    let fit = scenario.fit_weights();
    let planner = Planner { goal: scenario.goal_point(), config: &config, fit: &fit, horizon: sim.horizon };
    let mut known = truth.clone();
    known.occupied_cells().collect::<Vec<_>>().into_iter().for_each(|c| known.set_occupied(c, false));

    let mut report = SimReport {
        success: false,
        plans: 0,
        replans: 0,
        failed_replans: 0,
        collision: false,
        timeout: false,
        path_length: 0.0,
        goal_time: None,
        track: Vec::new(),
    };
    let start = scenario.start_state();
    reveal(&mut known, truth, &start.pos, sim.sensing_radius);
    let Some((mut traj, mut final_leg)) = planner.plan(&known, &start) else {
        return report;
    };
    report.plans = 1;
    let (mut steps, mut local, mut since_plan) = (0usize, 0.0, 0.0);
    let mut pos = start.pos;
    report.track.push(pos);

    loop {
        if final_leg && local >= traj.duration() {
            report.success = true;
            report.goal_time = Some(steps as f64 * SIM_STEP);
            break;
        }
        if steps as f64 * SIM_STEP >= sim.timeout {
            report.timeout = true;
            break;
        }
        steps += 1;
        local = (local + SIM_STEP).min(traj.duration());
        since_plan += SIM_STEP;
        let next = traj.eval_unchecked(local, 0);
        report.path_length += (next - pos).norm();
        pos = next;
        report.track.push(pos);
        if truth.is_occupied(&pos) {
            report.collision = true;
            break;
        }
        reveal(&mut known, truth, &pos, sim.sensing_radius);

        let blocked = collides_after(&traj, local, &known, config.v_m);
        let due = !final_leg && (since_plan >= sim.replan_period || local >= traj.duration());
        if blocked || due {
            let state = BoundaryState {
                pos,
                vel: traj.eval_unchecked(local, 1),
                acc: traj.eval_unchecked(local, 2),
            };
            match planner.plan(&known, &state) {
                Some((t, f)) => {
                    traj = t;
                    final_leg = f;
                    local = 0.0;
                    since_plan = 0.0;
                    report.plans += 1;
                    report.replans += 1;
                }
                None => report.failed_replans += 1,
            }
        }
    }
    report
}
