//! Dense voxel occupancy grid.
//!
//! The grid is the only world model the planner uses: collision checks,
//! guide-path search and obstacle-surface points all come from cell
//! occupancy. There is no distance field. Queries outside the bounding box
//! report occupied, which keeps every consumer inside the known world.

use std::ops::ControlFlow;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A point or vector in world coordinates, meters.
pub type Point = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("bounds are degenerate: min {min:?} max {max:?}")]
    DegenerateBounds { min: [f64; 3], max: [f64; 3] },
    #[error("non-finite coordinate in input point {index}")]
    NonFinitePoint { index: usize },
    #[error("ray origin {0:?} lies in an occupied cell")]
    StartOccupied([f64; 3]),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Axis-aligned box in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let ok = (0..3).all(|a| {
            self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]
        });
        if ok {
            Ok(())
        } else {
            Err(GridError::DegenerateBounds {
                min: self.min.into(),
                max: self.max.into(),
            })
        }
    }
}

/// Integer cell coordinate. May lie outside the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell(pub [i64; 3]);

impl Cell {
    pub fn offset(self, d: [i64; 3]) -> Cell {
        Cell([self.0[0] + d[0], self.0[1] + d[1], self.0[2] + d[2]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Point,
    dims: [usize; 3],
    occupied: Vec<bool>,
    inflation_radius: f64,
}

impl OccupancyGrid {
    /// All-free grid covering `bounds`. The last cell along an axis may
    /// extend past `bounds.max` when the extent is not a multiple of the
    /// resolution.
    pub fn empty(bounds: Aabb, resolution: f64) -> Result<Self, GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::InvalidResolution(resolution));
        }
        bounds.validate()?;
        let mut dims = [0usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let n = ((bounds.max[a] - bounds.min[a]) / resolution - 1e-9).ceil();
            *d = (n as usize).max(1);
        }
        Ok(Self {
            resolution,
            origin: bounds.min,
            dims,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
            inflation_radius: 0.0,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn inflation_radius(&self) -> f64 {
        self.inflation_radius
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Box actually covered by the cells.
    pub fn bounds(&self) -> Aabb {
        let ext = Vector3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.resolution;
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn world_to_cell(&self, p: &Point) -> Cell {
        let g = (p - self.origin) / self.resolution;
        Cell([
            g.x.floor() as i64,
            g.y.floor() as i64,
            g.z.floor() as i64,
        ])
    }

    pub fn cell_center(&self, c: Cell) -> Point {
        self.origin
            + Vector3::new(
                c.0[0] as f64 + 0.5,
                c.0[1] as f64 + 0.5,
                c.0[2] as f64 + 0.5,
            ) * self.resolution
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        (0..3).all(|a| c.0[a] >= 0 && (c.0[a] as usize) < self.dims[a])
    }

    /// Row-major index with x slowest, so ordering by index is
    /// lexicographic (x, y, z) ordering.
    pub fn index(&self, c: Cell) -> Option<usize> {
        if self.contains_cell(c) {
            let [x, y, z] = c.0.map(|v| v as usize);
            Some((x * self.dims[1] + y) * self.dims[2] + z)
        } else {
            None
        }
    }

    pub fn cell_of_index(&self, idx: usize) -> Cell {
        let z = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let x = idx / (self.dims[1] * self.dims[2]);
        Cell([x as i64, y as i64, z as i64])
    }

    pub fn is_occupied_index(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    /// Out-of-bounds cells are occupied.
    pub fn is_occupied_cell(&self, c: Cell) -> bool {
        match self.index(c) {
            Some(i) => self.occupied[i],
            None => true,
        }
    }

    pub fn is_occupied(&self, p: &Point) -> bool {
        self.is_occupied_cell(self.world_to_cell(p))
    }

    pub fn is_free(&self, p: &Point) -> bool {
        !self.is_occupied(p)
    }

    pub fn set_occupied(&mut self, c: Cell, value: bool) {
        if let Some(i) = self.index(c) {
            self.occupied[i] = value;
        }
    }

    /// Marks every cell whose center lies inside the closed box.
    pub fn fill_box(&mut self, b: &Aabb) {
        let lo = self.world_to_cell(&b.min);
        let hi = self.world_to_cell(&b.max);
        for x in lo.0[0].max(0)..=hi.0[0].min(self.dims[0] as i64 - 1) {
            for y in lo.0[1].max(0)..=hi.0[1].min(self.dims[1] as i64 - 1) {
                for z in lo.0[2].max(0)..=hi.0[2].min(self.dims[2] as i64 - 1) {
                    let c = Cell([x, y, z]);
                    if b.contains(&self.cell_center(c)) {
                        self.set_occupied(c, true);
                    }
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.cell_of_index(i))
    }

    /// (x, y) columns containing at least one occupied cell, in index order.
    pub fn occupied_columns(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..self.dims[0] {
            for y in 0..self.dims[1] {
                let base = (x * self.dims[1] + y) * self.dims[2];
                if self.occupied[base..base + self.dims[2]].iter().any(|&o| o) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Copy of the grid where a cell is occupied iff its center lies within
    /// `radius` of an originally occupied cell center.
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let mut out = self.clone();
        out.inflation_radius = self.inflation_radius + radius.max(0.0);
        let offsets = ball_offsets(radius, self.resolution);
        if offsets.len() <= 1 {
            return out;
        }
        for c in self.occupied_cells() {
            for d in &offsets {
                out.set_occupied(c.offset(*d), true);
            }
        }
        out
    }

    /// Walks every cell whose interior the segment `from -> to` passes through,
    /// in order.
    /// `visit` receives the cell and the segment parameter in [0, 1] at
    /// which the segment enters it (0 for the starting cell).
    pub fn traverse<F>(&self, from: &Point, to: &Point, mut visit: F)
    where
        F: FnMut(Cell, f64) -> ControlFlow<()>,
    {
        let g0 = (from - self.origin) / self.resolution;
        let d = (to - from) / self.resolution;
        let mut cell = [g0.x.floor() as i64, g0.y.floor() as i64, g0.z.floor() as i64];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if d[a] > 0.0 {
                step[a] = 1;
                t_max[a] = ((cell[a] + 1) as f64 - g0[a]) / d[a];
                t_delta[a] = 1.0 / d[a];
            } else if d[a] < 0.0 {
                step[a] = -1;
                t_max[a] = (cell[a] as f64 - g0[a]) / d[a];
                t_delta[a] = -1.0 / d[a];
            }
        }
        let mut t = 0.0;
        loop {
            if visit(Cell(cell), t).is_break() {
                return;
            }
            let mut axis = 0;
            for a in 1..3 {
                if t_max[a] < t_max[axis] {
                    axis = a;
                }
            }
            if t_max[axis] > 1.0 {
                return;
            }
            // Axes crossing at the same parameter step together, so a segment
            // through a cell edge or vertex goes straight to the diagonal
            // cell, matching 26-connectivity.
            t = t_max[axis];
            for a in 0..3 {
                if t_max[a] == t {
                    cell[a] += step[a];
                    t_max[a] += t_delta[a];
                }
            }
        }
    }

    /// Point where the segment first enters an occupied cell, if it does.
    pub fn raycast(&self, from: &Point, to: &Point) -> Result<Option<Point>, GridError> {
        if self.is_occupied(from) {
            return Err(GridError::StartOccupied((*from).into()));
        }
        let mut hit = None;
        self.traverse(from, to, |c, t| {
            if self.is_occupied_cell(c) {
                hit = Some(from + (to - from) * t);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        Ok(hit)
    }

    /// True when the closed segment touches no occupied cell.
    pub fn segment_free(&self, from: &Point, to: &Point) -> bool {
        matches!(self.raycast(from, to), Ok(None))
    }

    /// Last point along `from -> to` where the segment leaves occupied
    /// space for a free cell.
    pub fn last_exit(&self, from: &Point, to: &Point) -> Option<Point> {
        let mut prev_occ = None;
        let mut exit = None;
        self.traverse(from, to, |c, t| {
            let occ = self.is_occupied_cell(c);
            if prev_occ == Some(true) && !occ {
                exit = Some(from + (to - from) * t);
            }
            prev_occ = Some(occ);
            ControlFlow::Continue(())
        });
        exit
    }

    /// Free cell closest to `p` (by cell-center distance) within
    /// `max_radius`, ties broken by cell index.
    pub fn nearest_free(&self, p: &Point, max_radius: f64) -> Option<Point> {
        let c0 = self.world_to_cell(p);
        if !self.is_occupied_cell(c0) {
            return Some(self.cell_center(c0));
        }
        let mut best: Option<(f64, usize)> = None;
        for d in ball_offsets(max_radius, self.resolution) {
            let c = c0.offset(d);
            if let Some(i) = self.index(c) {
                if !self.occupied[i] {
                    let dist = (self.cell_center(c) - p).norm();
                    if best.is_none_or(|(bd, bi)| dist < bd || (dist == bd && i < bi)) {
                        best = Some((dist, i));
                    }
                }
            }
        }
        best.map(|(_, i)| self.cell_center(self.cell_of_index(i)))
    }

    /// Distance from `p` to the closest occupied cell box, searching only
    /// within `max_radius`; returns `max_radius` when nothing is closer.
    pub fn clearance(&self, p: &Point, max_radius: f64) -> f64 {
        if self.is_occupied(p) {
            return 0.0;
        }
        let c0 = self.world_to_cell(p);
        let reach = (max_radius / self.resolution).ceil() as i64 + 1;
        let mut best = max_radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let c = c0.offset([dx, dy, dz]);
                    if !self.is_occupied_cell(c) {
                        continue;
                    }
                    let lo = self.cell_center(c) - Vector3::repeat(0.5 * self.resolution);
                    let hi = lo + Vector3::repeat(self.resolution);
                    let q = p.sup(&lo).inf(&hi);
                    best = best.min((p - q).norm());
                }
            }
        }
        best
    }
}

/// Integer offsets whose scaled length is within `radius`, sorted for
/// deterministic iteration.
fn ball_offsets(radius: f64, resolution: f64) -> Vec<[i64; 3]> {
    if radius <= 0.0 {
        return vec![[0, 0, 0]];
    }
    let r = (radius / resolution + 1e-9).floor() as i64;
    let lim = radius * radius + 1e-9 * resolution * resolution;
    let mut out = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                let d2 = ((dx * dx + dy * dy + dz * dz) as f64) * resolution * resolution;
                if d2 <= lim {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Grid over `bounds` where exactly the cells containing an input point are
/// occupied. Points outside the bounds are ignored.
pub fn build_grid(points: &[Point], resolution: f64, bounds: Aabb) -> Result<OccupancyGrid, GridError> {
    if let Some(index) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(GridError::NonFinitePoint { index });
    }
    let mut grid = OccupancyGrid::empty(bounds, resolution)?;
    for p in points {
        if bounds.contains(p) {
            let c = grid.world_to_cell(p);
            grid.set_occupied(c, true);
        }
    }
    Ok(grid)
}

/// Parses whitespace-separated `x y z` triples, one per line. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_xyz(text: &str) -> Result<Vec<Point>, GridError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GridError::Parse { line: n + 1, msg: e.to_string() })?;
        if vals.len() != 3 {
            return Err(GridError::Parse {
                line: n + 1,
                msg: format!("expected 3 values, got {}", vals.len()),
            });
        }
        out.push(Point::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

/// Vertical cylinder spanning the full world height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pillar {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    /// Pillars per square meter of the bounds footprint.
    pub density: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl ForestParams {
    pub fn new(density: f64) -> Self {
        Self { density, radius_min: 0.2, radius_max: 0.5 }
    }
}

/// Samples pillar positions and radii. `keep_clear` lists (point, margin)
/// pairs whose horizontal neighbourhood must stay free; rejected draws are
/// resampled a bounded number of times.
pub fn forest_pillars(seed: u64, params: &ForestParams, bounds: &Aabb, keep_clear: &[(Point, f64)]) -> Vec<Pillar> {
    let area = (bounds.max.x - bounds.min.x) * (bounds.max.y - bounds.min.y);
    let count = (params.density.max(0.0) * area).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pillars = Vec::with_capacity(count);
    for _ in 0..count {
        for _attempt in 0..100 {
            let x = rng.gen_range(bounds.min.x..bounds.max.x);
            let y = rng.gen_range(bounds.min.y..bounds.max.y);
            let radius = if params.radius_max > params.radius_min {
                rng.gen_range(params.radius_min..params.radius_max)
            } else {
                params.radius_min
            };
            let blocked = keep_clear.iter().any(|(p, margin)| {
                let dx = p.x - x;
                let dy = p.y - y;
                (dx * dx + dy * dy).sqrt() < radius + margin
            });
            if !blocked {
                pillars.push(Pillar { x, y, radius });
                break;
            }
        }
    }
    pillars
}

/// Marks every cell whose center is horizontally within a pillar radius.
pub fn rasterize_pillars(grid: &mut OccupancyGrid, pillars: &[Pillar]) {
    let [nx, ny, nz] = grid.dims();
    for p in pillars {
        let lo = grid.world_to_cell(&Point::new(p.x - p.radius, p.y - p.radius, grid.origin().z));
        let hi = grid.world_to_cell(&Point::new(p.x + p.radius, p.y + p.radius, grid.origin().z));
        for x in lo.0[0].max(0)..=hi.0[0].min(nx as i64 - 1) {
            for y in lo.0[1].max(0)..=hi.0[1].min(ny as i64 - 1) {
                let c = grid.cell_center(Cell([x, y, 0]));
                let (dx, dy) = (c.x - p.x, c.y - p.y);
                if dx * dx + dy * dy <= p.radius * p.radius {
                    for z in 0..nz as i64 {
                        grid.set_occupied(Cell([x, y, z]), true);
                    }
                }
            }
        }
    }
}

/// Deterministic pillar forest with the default radius range.
pub fn random_forest(seed: u64, density: f64, bounds: Aabb, resolution: f64) -> Result<OccupancyGrid, GridError> {
    let mut grid = OccupancyGrid::empty(bounds, resolution)?;
    let pillars = forest_pillars(seed, &ForestParams::new(density), &bounds, &[]);
    rasterize_pillars(&mut grid, &pillars);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds(n: f64) -> Aabb {
        Aabb::new(Point::zeros(), Point::repeat(n))
    }

    /// Brute-force inflation: every cell against every occupied cell.
    fn brute_inflate(g: &OccupancyGrid, radius: f64) -> Vec<bool> {
        let occ: Vec<Point> = g.occupied_cells().map(|c| g.cell_center(c)).collect();
        (0..g.len())
            .map(|i| {
                let p = g.cell_center(g.cell_of_index(i));
                occ.iter().any(|q| (p - q).norm() <= radius + 1e-12)
            })
            .collect()
    }

    #[test]
    fn empty_point_list_is_all_free() {
        let g = build_grid(&[], 0.5, unit_bounds(4.0)).unwrap();
        assert_eq!(g.occupied_count(), 0);
        assert_eq!(g.dims(), [8, 8, 8]);
    }

    #[test]
    fn single_point_marks_single_cell() {
        let mut probe = OccupancyGrid::empty(unit_bounds(5.0), 1.0).unwrap();
        let p = probe.cell_center(Cell([2, 3, 1]));
        let g = build_grid(&[p], 1.0, unit_bounds(5.0)).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.is_occupied_cell(Cell([2, 3, 1])));
        probe.set_occupied(Cell([2, 3, 1]), true);
        assert_eq!(g, probe);
    }

    #[test]
    fn many_points_bounded_by_pigeonhole() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..1000)
            .map(|_| Point::new(rng.gen_range(-1.0..11.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let g = build_grid(&pts, 0.25, unit_bounds(10.0)).unwrap();
        assert!(g.occupied_count() <= 1000);
        assert!(g.occupied_count() > 0);
    }

    #[test]
    fn non_finite_points_rejected() {
        let pts = [Point::new(1.0, 1.0, 1.0), Point::new(f64::NAN, 0.0, 0.0)];
        assert_eq!(
            build_grid(&pts, 1.0, unit_bounds(4.0)),
            Err(GridError::NonFinitePoint { index: 1 })
        );
        assert!(matches!(
            build_grid(&[], 0.0, unit_bounds(4.0)),
            Err(GridError::InvalidResolution(_))
        ));
        assert!(matches!(
            build_grid(&[], 1.0, Aabb::new(Point::zeros(), Point::new(1.0, 0.0, 1.0))),
            Err(GridError::DegenerateBounds { .. })
        ));
    }

    #[test]
    fn out_of_bounds_reads_occupied() {
        let g = OccupancyGrid::empty(unit_bounds(2.0), 0.5).unwrap();
        assert!(g.is_occupied(&Point::new(-0.1, 1.0, 1.0)));
        assert!(g.is_occupied(&Point::new(1.0, 2.01, 1.0)));
        assert!(g.is_free(&Point::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn world_cell_round_trip() {
        let g = OccupancyGrid::empty(Aabb::new(Point::new(-1.0, -2.0, 0.5), Point::new(3.0, 2.0, 2.5)), 0.2).unwrap();
        for i in 0..g.len() {
            let c = g.cell_of_index(i);
            assert_eq!(g.world_to_cell(&g.cell_center(c)), c);
            assert_eq!(g.index(c), Some(i));
        }
    }

    #[test]
    fn inflate_zero_is_identity() {
        let mut g = OccupancyGrid::empty(unit_bounds(6.0), 1.0).unwrap();
        g.set_occupied(Cell([3, 3, 3]), true);
        assert_eq!(g.inflate(0.0), g);
        let r = g.inflate(1.5);
        assert_eq!(r.inflate(0.0), r);
    }

    #[test]
    fn inflate_one_resolution_hits_face_neighbors() {
        let mut g = OccupancyGrid::empty(unit_bounds(10.0), 1.0).unwrap();
        g.set_occupied(Cell([5, 5, 5]), true);
        let inf = g.inflate(1.0);
        let expect = brute_inflate(&g, 1.0);
        assert_eq!(inf.occupied.clone(), expect);
        assert_eq!(inf.occupied_count(), 7);
        for d in [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
            assert!(inf.is_occupied_cell(Cell([5, 5, 5]).offset(d)));
        }
        assert!(!inf.is_occupied_cell(Cell([6, 6, 5])));
    }

    #[test]
    fn inflate_matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = OccupancyGrid::empty(unit_bounds(10.0), 1.0).unwrap();
        for _ in 0..12 {
            g.set_occupied(Cell([rng.gen_range(0..10), rng.gen_range(0..10), rng.gen_range(0..10)]), true);
        }
        for r in [0.5, 1.0, 1.5, 2.3] {
            assert_eq!(g.inflate(r).occupied, brute_inflate(&g, r), "radius {r}");
        }
    }

    #[test]
    fn raycast_free_segment_and_degenerate() {
        let g = OccupancyGrid::empty(unit_bounds(5.0), 0.5).unwrap();
        let a = Point::new(0.3, 0.3, 0.3);
        assert_eq!(g.raycast(&a, &Point::new(4.6, 4.2, 1.0)).unwrap(), None);
        assert_eq!(g.raycast(&a, &a).unwrap(), None);
    }

    #[test]
    fn raycast_from_occupied_is_error() {
        let mut g = OccupancyGrid::empty(unit_bounds(5.0), 1.0).unwrap();
        g.set_occupied(Cell([0, 0, 0]), true);
        assert!(matches!(
            g.raycast(&Point::new(0.5, 0.5, 0.5), &Point::new(4.0, 0.5, 0.5)),
            Err(GridError::StartOccupied(_))
        ));
    }

    #[test]
    fn raycast_hits_wall_entry_face() {
        // Slab occupying x in [3.0, 3.4).
        let res = 0.2;
        let mut g = OccupancyGrid::empty(unit_bounds(6.0), res).unwrap();
        g.fill_box(&Aabb::new(Point::new(3.0, 0.0, 0.0), Point::new(3.39, 6.0, 6.0)));
        let from = Point::new(0.53, 2.17, 1.91);
        let to = Point::new(5.5, 2.17, 1.91);
        let hit = g.raycast(&from, &to).unwrap().expect("hit");
        // Dense sampling oracle for the first occupied sample.
        let n = 100_000;
        let first = (0..=n)
            .map(|k| from + (to - from) * (k as f64 / n as f64))
            .find(|p| g.is_occupied(p))
            .unwrap();
        assert!((hit.x - 3.0).abs() < 1e-9);
        assert!((hit - first).norm() <= 0.5 * res);
        assert!((hit.y - 2.17).abs() < 1e-12);
    }

    #[test]
    fn last_exit_finds_far_face() {
        let mut g = OccupancyGrid::empty(Aabb::new(Point::new(-3.0, -3.0, -1.0), Point::new(3.0, 3.0, 1.0)), 0.1).unwrap();
        g.fill_box(&Aabb::new(Point::new(-3.0, -1.0, -1.0), Point::new(3.0, 1.0, 1.0)));
        let exit = g.last_exit(&Point::new(1.0, 0.0, 0.05), &Point::new(1.0, 2.0, 0.05)).unwrap();
        assert!((exit.y - 1.0).abs() < 0.05 + 1e-9);
    }

    #[test]
    fn forest_is_deterministic() {
        let b = Aabb::new(Point::zeros(), Point::new(20.0, 20.0, 3.0));
        let a = random_forest(42, 0.1, b, 0.1).unwrap();
        let c = random_forest(42, 0.1, b, 0.1).unwrap();
        assert_eq!(a, c);
        assert_ne!(a, random_forest(43, 0.1, b, 0.1).unwrap());
        assert_eq!(random_forest(42, 0.0, b, 0.1).unwrap().occupied_count(), 0);
    }

    #[test]
    fn forest_pillar_count_regression() {
        let b = Aabb::new(Point::zeros(), Point::new(20.0, 20.0, 3.0));
        let pillars = forest_pillars(42, &ForestParams::new(0.1), &b, &[]);
        assert_eq!(pillars.len(), 40);
        assert!(pillars.iter().all(|p| (0.2..0.5).contains(&p.radius)));
        let g = random_forest(42, 0.1, b, 0.1).unwrap();
        // Number of 4-connected pillar footprints in the generated grid.
        assert_eq!(footprint_components(&g), FOREST_42_FOOTPRINTS);
    }

    const FOREST_42_FOOTPRINTS: usize = 38;

    pub(crate) fn footprint_components(g: &OccupancyGrid) -> usize {
        let [nx, ny, _] = g.dims();
        let cols: std::collections::HashSet<(usize, usize)> = g.occupied_columns().into_iter().collect();
        let mut seen = std::collections::HashSet::new();
        let mut count = 0;
        for &c in g.occupied_columns().iter() {
            if !seen.insert(c) {
                continue;
            }
            count += 1;
            let mut stack = vec![c];
            while let Some((x, y)) = stack.pop() {
                let nbrs = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for n in nbrs {
                    if n.0 < nx && n.1 < ny && cols.contains(&n) && seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn parse_xyz_lines() {
        let pts = parse_xyz("# cloud\n1 2 3\n\n 0.5\t-1 2e-1 \n").unwrap();
        assert_eq!(pts, vec![Point::new(1.0, 2.0, 3.0), Point::new(0.5, -1.0, 0.2)]);
        assert!(matches!(parse_xyz("1 2\n"), Err(GridError::Parse { line: 1, .. })));
        assert!(matches!(parse_xyz("1 2 x\n"), Err(GridError::Parse { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn inflation_is_monotone(seed in 0u64..1000, r1 in 0.0f64..1.5, extra in 0.0f64..1.5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut g = OccupancyGrid::empty(unit_bounds(4.0), 0.5).unwrap();
                for _ in 0..5 {
                    g.set_occupied(Cell([rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8)]), true);
                }
                let a = g.inflate(r1);
                let b = g.inflate(r1 + extra);
                for i in 0..g.len() {
                    prop_assert!(!g.occupied[i] || a.occupied[i]);
                    prop_assert!(!a.occupied[i] || b.occupied[i]);
                }
            }

            #[test]
            fn raycast_hit_lies_on_face_next_to_occupied(seed in 0u64..500) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut g = OccupancyGrid::empty(unit_bounds(4.0), 0.25).unwrap();
                for _ in 0..60 {
                    g.set_occupied(Cell([rng.gen_range(0..16), rng.gen_range(0..16), rng.gen_range(0..16)]), true);
                }
                let from = Point::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
                let to = Point::new(rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0));
                prop_assume!(g.is_free(&from));
                if let Some(hit) = g.raycast(&from, &to).unwrap() {
                    let gcoord = (hit - g.origin()) / g.resolution();
                    let on_face = (0..3).any(|a| (gcoord[a] - gcoord[a].round()).abs() < 1e-9);
                    prop_assert!(on_face);
                    // Nudging forward along the ray lands in occupied space.
                    let dir = (to - from).normalize();
                    prop_assert!(g.is_occupied(&(hit + dir * 1e-7)));
                }
            }
        }
    }
}
