//! Scenario files: world, map source, boundary states and planner settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspline::BoundaryState;
use crate::grid::{build_grid, forest_pillars, parse_xyz, rasterize_pillars, Aabb, ForestParams, GridError, OccupancyGrid, Point};
use crate::optimizer::{ConfigError, PlannerConfig, SolverConfig};
use crate::refine::FitWeights;

/// Horizontal margin kept free of forest pillars around start and goal,
/// on top of the inflation radius.
pub const KEEP_CLEAR: f64 = 0.5;
/// Inflation radius used when the scenario does not set one.
pub const DEFAULT_INFLATION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl From<Bounds> for Aabb {
    fn from(b: Bounds) -> Self {
        Aabb::new(b.min.into(), b.max.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MapSpec {
    Forest {
        density: f64,
        #[serde(default = "default_radius_min")]
        radius_min: f64,
        #[serde(default = "default_radius_max")]
        radius_max: f64,
    },
    Boxes {
        boxes: Vec<BoxSpec>,
    },
    /// Inline points, or an xyz file resolved relative to the scenario file.
    Points {
        #[serde(default)]
        points: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<String>,
    },
}

fn default_radius_min() -> f64 {
    ForestParams::new(0.0).radius_min
}

fn default_radius_max() -> f64 {
    ForestParams::new(0.0).radius_max
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub pos: [f64; 3],
    #[serde(default)]
    pub vel: [f64; 3],
    #[serde(default)]
    pub acc: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    pub v_m: f64,
    pub a_m: f64,
    pub j_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub lambda_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub bounds: Bounds,
    pub resolution: f64,
    pub map: MapSpec,
    pub start: StartSpec,
    pub goal: [f64; 3],
    pub limits: LimitSpec,
    pub weights: WeightSpec,
    pub s_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// Obstacle inflation radius, meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitWeights>,
    /// Local planning horizon for the simulator, meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// Raw and inflated occupancy for one scenario.
#[derive(Clone, Debug)]
pub struct World {
    pub raw: OccupancyGrid,
    pub inflated: OccupancyGrid,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, World), ScenarioError> {
        let s = Self::from_json(&std::fs::read_to_string(path)?)?;
        let world = s.world_in(path.parent())?;
        Ok((s, world))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Deterministic forest scenario, rest to rest, with default settings.
    pub fn forest(seed: u64, density: f64, bounds: Bounds, resolution: f64, start: [f64; 3], goal: [f64; 3]) -> Self {
        let c = PlannerConfig::default();
        Self {
            seed,
            bounds,
            resolution,
            map: MapSpec::Forest { density, radius_min: default_radius_min(), radius_max: default_radius_max() },
            start: StartSpec { pos: start, vel: [0.0; 3], acc: [0.0; 3] },
            goal,
            limits: LimitSpec { v_m: c.v_m, a_m: c.a_m, j_m: c.j_m },
            weights: WeightSpec { lambda_s: c.lambda_s, lambda_c: c.lambda_c, lambda_d: c.lambda_d, lambda_f: c.lambda_f },
            s_f: c.s_f,
            solver: None,
            inflation: None,
            fit: None,
            horizon: None,
        }
    }

    pub fn inflation(&self) -> f64 {
        self.inflation.unwrap_or(DEFAULT_INFLATION)
    }

    pub fn start_state(&self) -> BoundaryState {
        BoundaryState { pos: self.start.pos.into(), vel: self.start.vel.into(), acc: self.start.acc.into() }
    }

    pub fn goal_point(&self) -> Point {
        self.goal.into()
    }

    pub fn config(&self) -> PlannerConfig {
        let mut c = PlannerConfig {
            lambda_s: self.weights.lambda_s,
            lambda_c: self.weights.lambda_c,
            lambda_d: self.weights.lambda_d,
            lambda_f: self.weights.lambda_f,
            s_f: self.s_f,
            v_m: self.limits.v_m,
            a_m: self.limits.a_m,
            j_m: self.limits.j_m,
            ..Default::default()
        };
        if let Some(s) = self.solver {
            c.solver = s;
        }
        c
    }

    pub fn fit_weights(&self) -> FitWeights {
        self.fit.unwrap_or_default()
    }

    pub fn world(&self) -> Result<World, ScenarioError> {
        self.world_in(None)
    }

    /// Builds the grids and checks the scenario invariants. `dir` anchors
    /// relative point-file paths.
    pub fn world_in(&self, dir: Option<&Path>) -> Result<World, ScenarioError> {
        self.config().validate()?;
        let bounds: Aabb = self.bounds.into();
        bounds.validate()?;
        let (start, goal) = (Point::from(self.start.pos), self.goal_point());
        for (name, p) in [("start", &start), ("goal", &goal)] {
            if !bounds.contains(p) {
                return Err(ScenarioError::Invalid(format!("{name} outside bounds")));
            }
        }
        let inflation = self.inflation();
        if !(inflation.is_finite() && inflation >= 0.0) {
            return Err(ScenarioError::Invalid("inflation must be nonnegative".into()));
        }
        let raw = match &self.map {
            MapSpec::Forest { density, radius_min, radius_max } => {
                if !(*density >= 0.0 && *radius_min > 0.0 && radius_max >= radius_min) {
                    return Err(ScenarioError::Invalid("bad forest parameters".into()));
                }
                let params = ForestParams { density: *density, radius_min: *radius_min, radius_max: *radius_max };
                let keep = KEEP_CLEAR + inflation;
                let pillars = forest_pillars(self.seed, &params, &bounds, &[(start, keep), (goal, keep)]);
                let mut g = OccupancyGrid::empty(bounds, self.resolution)?;
                rasterize_pillars(&mut g, &pillars);
                g
            }
            MapSpec::Boxes { boxes } => {
                let mut g = OccupancyGrid::empty(bounds, self.resolution)?;
                for b in boxes {
                    g.fill_box(&Aabb::new(b.min.into(), b.max.into()));
                }
                g
            }
            MapSpec::Points { points, file } => {
                let mut pts: Vec<Point> = points.iter().map(|&p| p.into()).collect();
                if let Some(f) = file {
                    let path = dir.map_or_else(|| Path::new(f).to_path_buf(), |d| d.join(f));
                    pts.extend(parse_xyz(&std::fs::read_to_string(path)?)?);
                }
                build_grid(&pts, self.resolution, bounds)?
            }
        };
        let inflated = raw.inflate(inflation);
        for (name, p) in [("start", &start), ("goal", &goal)] {
            if inflated.is_occupied(p) {
                return Err(ScenarioError::Invalid(format!("{name} is occupied after inflation")));
            }
        }
        Ok(World { raw, inflated })
    }
}

impl From<[f64; 3]> for StartSpec {
    fn from(pos: [f64; 3]) -> Self {
        Self { pos, vel: [0.0; 3], acc: [0.0; 3] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        r#"{
            "seed": 7,
            "bounds": {"min": [0, 0, 0], "max": [20, 20, 3]},
            "resolution": 0.1,
            "map": {"type": "forest", "density": 0.1},
            "start": {"pos": [1, 1, 1.5], "vel": [0, 0, 0], "acc": [0, 0, 0]},
            "goal": [19, 19, 1.5],
            "limits": {"v_m": 2, "a_m": 3, "j_m": 6},
            "weights": {"lambda_s": 1, "lambda_c": 10, "lambda_d": 1, "lambda_f": 5},
            "s_f": 0.3
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_json(&sample()).unwrap();
        let w = s.world().unwrap();
        assert!(w.raw.occupied_count() > 0);
        assert!(w.inflated.occupied_count() > w.raw.occupied_count());
        assert!(w.inflated.is_free(&s.goal_point()));
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = sample().replace("\"s_f\": 0.3", "\"s_f\": 0.3, \"colour\": 1");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Json(_))));
        let text = sample().replace("\"density\": 0.1", "\"density\": 0.1, \"height\": 2");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn occupied_goal_rejected() {
        let mut s = Scenario::from_json(&sample()).unwrap();
        s.map = MapSpec::Boxes { boxes: vec![BoxSpec { min: [18.0, 18.0, 0.0], max: [20.0, 20.0, 3.0] }] };
        assert!(matches!(s.world(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn points_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pts.xyz"), "5.05 5.05 1.05\n6.05 6.05 1.05\n").unwrap();
        let mut s = Scenario::from_json(&sample()).unwrap();
        s.map = MapSpec::Points { points: vec![[7.05, 7.05, 1.05]], file: Some("pts.xyz".into()) };
        s.inflation = Some(0.0);
        let w = s.world_in(Some(dir.path())).unwrap();
        assert_eq!(w.raw.occupied_count(), 3);
    }
}
