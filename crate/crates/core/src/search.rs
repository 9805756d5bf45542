//! Guide-path search on the occupancy grid.
//!
//! Three searches share one 26-connected graph with Euclidean step costs:
//! Dijkstra (the optimality oracle), A* with the straight-line heuristic,
//! and a front-to-back bidirectional A*. Queue ordering is
//! `(f, h, cell index)` so every search is reproducible bit-for-bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use thiserror::Error;

use crate::grid::{Cell, OccupancyGrid, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("start {0:?} is not in a free cell")]
    StartOccupied([f64; 3]),
    #[error("goal {0:?} is not in a free cell")]
    GoalOccupied([f64; 3]),
    #[error("goal is unreachable from start")]
    NoPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dijkstra,
    AStar,
    Bidirectional,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dijkstra, Algorithm::AStar, Algorithm::Bidirectional];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dijkstra => "dijkstra",
            Algorithm::AStar => "astar",
            Algorithm::Bidirectional => "bidirectional",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn run(self, grid: &OccupancyGrid, start: &Point, goal: &Point) -> Result<SearchResult, SearchError> {
        match self {
            Algorithm::Dijkstra => dijkstra(grid, start, goal),
            Algorithm::AStar => astar(grid, start, goal),
            Algorithm::Bidirectional => bidirectional_astar(grid, start, goal),
        }
    }
}

/// A guide path with its cost and search statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Cell-center waypoints from the start cell to the goal cell.
    pub path: Vec<Point>,
    /// Sum of Euclidean step lengths along `path`, meters.
    pub cost: f64,
    /// Number of nodes expanded.
    pub expanded: usize,
    /// Wall time, seconds.
    pub elapsed: f64,
}

impl SearchResult {
    fn finish(path: Vec<Point>, expanded: usize, t0: Instant) -> Self {
        let cost = path_length(&path);
        Self { path, cost, expanded, elapsed: t0.elapsed().as_secs_f64() }
    }
}

pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    f: f64,
    h: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so that `BinaryHeap` pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

struct Graph<'a> {
    grid: &'a OccupancyGrid,
    steps: Vec<([i64; 3], f64)>,
}

impl<'a> Graph<'a> {
    fn new(grid: &'a OccupancyGrid) -> Self {
        let res = grid.resolution();
        let mut steps = Vec::with_capacity(26);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let n = dx * dx + dy * dy + dz * dz;
                    if n > 0 {
                        steps.push(([dx, dy, dz], (n as f64).sqrt() * res));
                    }
                }
            }
        }
        Self { grid, steps }
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let c = self.grid.cell_of_index(idx);
        self.steps.iter().filter_map(move |(d, w)| {
            let n = self.grid.index(c.offset(*d))?;
            (!self.grid.is_occupied_index(n)).then_some((n, *w))
        })
    }

    fn center(&self, idx: usize) -> Point {
        self.grid.cell_center(self.grid.cell_of_index(idx))
    }
}

fn endpoints(grid: &OccupancyGrid, start: &Point, goal: &Point) -> Result<(usize, usize), SearchError> {
    let s = grid
        .index(grid.world_to_cell(start))
        .filter(|&i| !grid.is_occupied_index(i))
        .ok_or(SearchError::StartOccupied((*start).into()))?;
    let g = grid
        .index(grid.world_to_cell(goal))
        .filter(|&i| !grid.is_occupied_index(i))
        .ok_or(SearchError::GoalOccupied((*goal).into()))?;
    Ok((s, g))
}

fn trace(parent: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![idx];
    while parent[idx] != usize::MAX {
        idx = parent[idx];
        out.push(idx);
    }
    out.reverse();
    out
}

fn unidirectional(grid: &OccupancyGrid, start: &Point, goal: &Point, heuristic: bool) -> Result<SearchResult, SearchError> {
    let t0 = Instant::now();
    let (s, t) = endpoints(grid, start, goal)?;
    let graph = Graph::new(grid);
    let goal_c = graph.center(t);
    let h = |i: usize| if heuristic { (graph.center(i) - goal_c).norm() } else { 0.0 };

    let n = grid.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[s] = 0.0;
    let hs = h(s);
    open.push(Entry { f: hs, h: hs, g: 0.0, idx: s });
    let mut expanded = 0;

    while let Some(e) = open.pop() {
        if closed[e.idx] || e.g > g[e.idx] {
            continue;
        }
        closed[e.idx] = true;
        expanded += 1;
        if e.idx == t {
            let path = trace(&parent, t).into_iter().map(|i| graph.center(i)).collect();
            return Ok(SearchResult::finish(path, expanded, t0));
        }
        for (m, w) in graph.neighbors(e.idx) {
            if closed[m] {
                continue;
            }
            let ng = e.g + w;
            if ng < g[m] {
                g[m] = ng;
                parent[m] = e.idx;
                let hm = h(m);
                open.push(Entry { f: ng + hm, h: hm, g: ng, idx: m });
            }
        }
    }
    Err(SearchError::NoPath)
}

/// Uniform-cost search; minimum-cost 26-connected path.
pub fn dijkstra(grid: &OccupancyGrid, start: &Point, goal: &Point) -> Result<SearchResult, SearchError> {
    unidirectional(grid, start, goal, false)
}

/// A* with the Euclidean distance to the goal cell center as heuristic.
pub fn astar(grid: &OccupancyGrid, start: &Point, goal: &Point) -> Result<SearchResult, SearchError> {
    unidirectional(grid, start, goal, true)
}

struct Side {
    g: Vec<f64>,
    parent: Vec<usize>,
    closed: Vec<bool>,
    open: BinaryHeap<Entry>,
    root: Point,
    target: Point,
}

impl Side {
    fn new(n: usize, root: usize, root_at: Point, target: Point) -> Self {
        let root_h = (root_at - target).norm();
        let mut s = Self {
            g: vec![f64::INFINITY; n],
            parent: vec![usize::MAX; n],
            closed: vec![false; n],
            open: BinaryHeap::new(),
            root: root_at,
            target,
        };
        s.g[root] = 0.0;
        s.open.push(Entry { f: root_h, h: root_h, g: 0.0, idx: root });
        s
    }

    /// Drops stale entries and returns the live minimum.
    fn top(&mut self) -> Option<Entry> {
        while let Some(e) = self.open.peek() {
            if self.closed[e.idx] || e.g > self.g[e.idx] {
                self.open.pop();
            } else {
                return Some(*e);
            }
        }
        None
    }
}

/// Bidirectional A* with front-to-back Euclidean heuristics.
///
/// The forward side searches from the start toward the goal, the backward
/// side from the goal toward the start; the side with the smaller open list
/// is expanded next. The best meeting cost `mu` is tracked as nodes acquire
/// a g-value on both sides, and the search stops once
/// `mu <= max(min f forward, min f backward)`.
pub fn bidirectional_astar(grid: &OccupancyGrid, start: &Point, goal: &Point) -> Result<SearchResult, SearchError> {
    let t0 = Instant::now();
    let (s, t) = endpoints(grid, start, goal)?;
    let graph = Graph::new(grid);
    let (sc, tc) = (graph.center(s), graph.center(t));
    if s == t {
        return Ok(SearchResult::finish(vec![sc], 1, t0));
    }
    let n = grid.len();
    let mut sides = [
        Side::new(n, s, sc, tc),
        Side::new(n, t, tc, sc),
    ];
    let mut mu = f64::INFINITY;
    let mut meet = usize::MAX;
    let mut expanded = 0;

    while let (Some(ef), Some(eb)) = (sides[0].top(), sides[1].top()) {
        if mu <= ef.f.max(eb.f) {
            break;
        }
        let dir = if sides[0].open.len() <= sides[1].open.len() { 0 } else { 1 };
        let (e, other_fmin) = if dir == 0 { (ef, eb.f) } else { (eb, ef.f) };
        let (this, other) = if dir == 0 {
            let (a, b) = sides.split_at_mut(1);
            (&mut a[0], &b[0])
        } else {
            let (a, b) = sides.split_at_mut(1);
            (&mut b[0], &a[0])
        };
        // Lower bound on the remaining cost from a node to this side's
        // target. A node the other side has not settled cannot be closer to
        // the target than `other_fmin - h_other`, because the other side
        // settles nodes in nondecreasing f order.
        let remaining = |idx: usize, c: &Point, h: f64| {
            if other.closed[idx] {
                other.g[idx]
            } else {
                h.max(other_fmin - (c - this.root).norm())
            }
        };
        this.open.pop();
        this.closed[e.idx] = true;
        // Settled from both sides: the best path through this node is
        // already accounted for in mu.
        if other.closed[e.idx] || e.g + remaining(e.idx, &graph.center(e.idx), e.h) >= mu {
            continue;
        }
        expanded += 1;
        for (m, w) in graph.neighbors(e.idx) {
            if this.closed[m] {
                continue;
            }
            let ng = e.g + w;
            if ng >= this.g[m] {
                continue;
            }
            let cm = graph.center(m);
            let hm = (cm - this.target).norm();
            // No path through m can beat the incumbent.
            if ng + remaining(m, &cm, hm) >= mu {
                continue;
            }
            this.g[m] = ng;
            this.parent[m] = e.idx;
            let through = ng + other.g[m];
            if through < mu {
                mu = through;
                meet = m;
            }
            if !other.closed[m] {
                this.open.push(Entry { f: ng + hm, h: hm, g: ng, idx: m });
            }
        }
    }

    if meet == usize::MAX {
        return Err(SearchError::NoPath);
    }
    let mut cells = trace(&sides[0].parent, meet);
    let mut back = trace(&sides[1].parent, meet);
    back.reverse();
    cells.extend(back.into_iter().skip(1));
    let path = cells.into_iter().map(|i| graph.center(i)).collect();
    Ok(SearchResult::finish(path, expanded, t0))
}

/// Greedy line-of-sight shortcutting. A waypoint is kept only when the
/// segment from the previously kept waypoint to the following waypoint is
/// blocked.
pub fn prune_path(result: &SearchResult, grid: &OccupancyGrid) -> Vec<Point> {
    let path = &result.path;
    if path.len() <= 2 {
        return path.clone();
    }
    let mut out = vec![path[0]];
    for i in 1..path.len() - 1 {
        let last = *out.last().unwrap();
        if !grid.segment_free(&last, &path[i + 1]) {
            out.push(path[i]);
        }
    }
    out.push(*path.last().unwrap());
    out
}

/// Cells adjacent under 26-connectivity.
pub fn are_neighbors(grid: &OccupancyGrid, a: &Point, b: &Point) -> bool {
    let (ca, cb): (Cell, Cell) = (grid.world_to_cell(a), grid.world_to_cell(b));
    let d = (0..3).map(|k| (ca.0[k] - cb.0[k]).abs()).collect::<Vec<_>>();
    d.iter().all(|&v| v <= 1) && d.contains(&1)
}
