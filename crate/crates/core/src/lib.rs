//! ESDF-free local trajectory planning for quadrotors.
//!
//! The pipeline searches a collision-free guide path on a voxel grid
//! ([`search`]), fits a uniform cubic B-spline to it ([`bspline`]), pushes
//! colliding control points out of obstacles using surface anchors built
//! from the guide path ([`anchor`], [`optimizer`]), and finally stretches
//! time and refits the curve so that velocity, acceleration and jerk limits
//! hold ([`refine`]). [`harness`] wires the stages together and drives the
//! CLI, the replanning simulator and the search benchmark.

pub mod anchor;
pub mod bspline;
pub mod grid;
pub mod harness;
pub mod optimizer;
pub mod refine;
pub mod search;

pub use grid::{Aabb, OccupancyGrid, Point};
