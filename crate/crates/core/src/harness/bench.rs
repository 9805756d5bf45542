//! Search benchmark over pinned and user-supplied maps.
//!
//! Cases run one after another so wall times are not disturbed by other
//! work on the machine.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::grid::{forest_pillars, rasterize_pillars, Aabb, ForestParams, OccupancyGrid, Point};
use crate::search::Algorithm;

use super::scenario::{Scenario, ScenarioError};

pub const DEFAULT_TRIALS: usize = 11;
pub const DEFAULT_WARMUPS: usize = 2;
pub const CSV_HEADER: &str = "scenario,algorithm,trial,time_s,expanded,cost_m";

#[derive(Clone, Debug)]
pub struct BenchCase {
    pub name: String,
    pub grid: OccupancyGrid,
    pub start: Point,
    pub goal: Point,
}

/// Seed of the dense 3D map.
pub const DENSE_SEED: u64 = 2024;

/// 30 m x 30 m x 10 m at 0.2 m, 600 seeded axis-aligned cubes with edges
/// in [0.6, 1.6) m, searched corner to corner. Cubes within 1 m of either
/// endpoint are dropped.
pub fn dense_3d() -> BenchCase {
    let bounds = Aabb::new(Point::zeros(), Point::new(30.0, 30.0, 10.0));
    let (start, goal) = (Point::new(1.0, 1.0, 1.0), Point::new(29.0, 29.0, 9.0));
    let mut grid = OccupancyGrid::empty(bounds, 0.2).expect("valid bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(DENSE_SEED);
    for _ in 0..600 {
        let e = rng.gen_range(0.6..1.6);
        let c = Point::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), rng.gen_range(0.0..10.0));
        let cube = Aabb::new(c.map(|v| v - e / 2.0), c.map(|v| v + e / 2.0));
        let near = |p: &Point| (0..3).all(|a| p[a] > cube.min[a] - 1.0 && p[a] < cube.max[a] + 1.0);
        if !near(&start) && !near(&goal) {
            grid.fill_box(&cube);
        }
    }
    BenchCase { name: "dense_3d".into(), grid, start, goal }
}

/// Pillar forest, 0.05 pillars per square meter, 60 m x 20 m x 4 m at
/// 0.2 m, start and goal 58 m apart with 1 m kept clear around them.
pub fn long_range_sparse(seed: u64) -> BenchCase {
    let bounds = Aabb::new(Point::zeros(), Point::new(60.0, 20.0, 4.0));
    let (start, goal) = (Point::new(1.0, 10.0, 2.0), Point::new(59.0, 10.0, 2.0));
    let pillars = forest_pillars(seed, &ForestParams::new(0.05), &bounds, &[(start, 1.0), (goal, 1.0)]);
    let mut grid = OccupancyGrid::empty(bounds, 0.2).expect("valid bounds");
    rasterize_pillars(&mut grid, &pillars);
    BenchCase { name: format!("long_range_sparse_{seed}"), grid, start, goal }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    #[serde(rename = "dense_3d")]
    Dense3d,
    LongRangeSparse,
}

/// One suite entry: a built-in map or a scenario file (its inflated map).
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: Option<String>,
    pub builtin: Option<Builtin>,
    #[serde(default)]
    pub seed: u64,
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_warmups")]
    pub warmups: usize,
    pub scenarios: Vec<SuiteEntry>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_warmups() -> usize {
    DEFAULT_WARMUPS
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Suite = serde_json::from_str(text)?;
        if s.scenarios.is_empty() || s.trials == 0 {
            return Err(ScenarioError::Invalid("suite needs at least one scenario and one trial".into()));
        }
        Ok(s)
    }

    /// Builds every case; `dir` anchors relative scenario paths.
    pub fn cases(&self, dir: Option<&Path>) -> Result<Vec<BenchCase>, ScenarioError> {
        self.scenarios
            .iter()
            .map(|e| {
                let mut case = match (e.builtin, &e.file) {
                    (Some(Builtin::Dense3d), None) => dense_3d(),
                    (Some(Builtin::LongRangeSparse), None) => long_range_sparse(e.seed),
                    (None, Some(f)) => {
                        let path = dir.map_or_else(|| Path::new(f).to_path_buf(), |d| d.join(f));
                        let (s, world) = Scenario::load(&path)?;
                        BenchCase { name: f.clone(), grid: world.inflated, start: s.start.pos.into(), goal: s.goal_point() }
                    }
                    _ => return Err(ScenarioError::Invalid("suite entry needs exactly one of builtin or file".into())),
                };
                if let Some(n) = &e.name {
                    case.name = n.clone();
                }
                Ok(case)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub time_s: f64,
    pub expanded: usize,
    /// `None` when there is no path.
    pub cost_m: Option<f64>,
}

/// Runs `warmups` untimed and `trials` recorded searches per case and
/// algorithm.
pub fn run_bench(cases: &[BenchCase], algos: &[Algorithm], trials: usize, warmups: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for case in cases {
        for &algo in algos {
            for _ in 0..warmups {
                let _ = algo.run(&case.grid, &case.start, &case.goal);
            }
            for trial in 0..trials {
                let t0 = std::time::Instant::now();
                let (time_s, expanded, cost_m) = match algo.run(&case.grid, &case.start, &case.goal) {
                    Ok(r) => (r.elapsed, r.expanded, Some(r.cost)),
                    Err(_) => (t0.elapsed().as_secs_f64(), 0, None),
                };
                rows.push(Row { scenario: case.name.clone(), algorithm: algo, trial, time_s, expanded, cost_m });
            }
        }
    }
    rows
}

/// Metrics CSV. With `with_time` unset the time column is left empty, which
/// makes the output reproducible.
pub fn metrics_csv(rows: &[Row], with_time: bool) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let time = if with_time { format!("{:.9}", r.time_s) } else { String::new() };
        let cost = r.cost_m.map_or_else(String::new, |c| format!("{c:.9}"));
        let _ = writeln!(out, "{},{},{},{time},{},{cost}", r.scenario, r.algorithm.name(), r.trial, r.expanded);
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub median_time_s: f64,
    pub median_expanded: f64,
    pub cost_m: Option<f64>,
}

/// Medians per (scenario, algorithm), in first-seen order.
pub fn summarize(rows: &[Row]) -> Vec<Summary> {
    let mut keys: Vec<(String, Algorithm)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(s, a)| *s == r.scenario && *a == r.algorithm) {
            keys.push((r.scenario.clone(), r.algorithm));
        }
    }
    keys.into_iter()
        .map(|(scenario, algorithm)| {
            let sel: Vec<&Row> = rows.iter().filter(|r| r.scenario == scenario && r.algorithm == algorithm).collect();
            let mut t: Vec<f64> = sel.iter().map(|r| r.time_s).collect();
            let mut e: Vec<f64> = sel.iter().map(|r| r.expanded as f64).collect();
            Summary { median_time_s: median(&mut t), median_expanded: median(&mut e), cost_m: sel[0].cost_m, scenario, algorithm }
        })
        .collect()
}

/// Largest cost spread across algorithms within each scenario; `None` when a
/// scenario is solved by some algorithms and not others.
pub fn cost_spread(summaries: &[Summary]) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for s in summaries {
        for o in summaries.iter().filter(|o| o.scenario == s.scenario) {
            match (s.cost_m, o.cost_m) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => return None,
            }
        }
    }
    Some(worst)
}
