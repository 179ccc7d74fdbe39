//! Synthetic 2-D environment: world geometry, agent kinematics, panoramic
//! range observations, tiered task sampling and success judgement.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::fmm;
use crate::grid::{cell_of_point, Cell, Grid};

/// Length of the per-cell landmark feature vector.
pub const LANDMARK_DIM: usize = 3;
/// Fewest free cells the largest connected free region may hold.
pub const MIN_COMPONENT_CELLS: usize = 200;
/// Success radius around the goal, meters.
pub const SUCCESS_DISTANCE_M: f64 = 1.0;
/// Episode step cap.
pub const MAX_EPISODE_STEPS: usize = 500;
/// Rejections allowed before a tier is declared unsatisfiable.
pub const MAX_TASK_REJECTIONS: usize = 10_000;

pub type Landmark = [f64; LANDMARK_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub step_m: f64,
    pub turn_rad: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig { step_m: 0.25, turn_rad: FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanoramaConfig {
    pub n_rays: usize,
    pub max_range_m: f64,
}

impl Default for PanoramaConfig {
    fn default() -> Self {
        PanoramaConfig { n_rays: 36, max_range_m: 5.0 }
    }
}

impl PanoramaConfig {
    /// Length of the flattened network feature vector.
    pub fn feature_len(&self) -> usize {
        self.n_rays * (1 + LANDMARK_DIM)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading: wrap_heading(heading) }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wraps into `[0, 2π)`, snapping onto the four cardinal headings when
/// within rounding distance so quarter turns compose exactly.
pub fn wrap_heading(h: f64) -> f64 {
    let mut w = h.rem_euclid(TAU);
    if TAU - w < 1e-9 {
        w = 0.0;
    }
    for k in 0..4 {
        let cardinal = k as f64 * FRAC_PI_2;
        if (w - cardinal).abs() < 1e-9 {
            return [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2][k];
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    TurnRight,
    TurnLeft,
    Stop,
}

impl Action {
    /// Planner-facing action set (no Stop).
    pub const PLANNER: [Action; 3] = [Action::MoveForward, Action::TurnRight, Action::TurnLeft];
    /// Agent-facing action set.
    pub const AGENT: [Action; 4] =
        [Action::MoveForward, Action::TurnRight, Action::TurnLeft, Action::Stop];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Geodesic band `[lo, hi)`; Hard is closed at 10 m.
    pub fn band(self) -> (f64, f64) {
        match self {
            Difficulty::Easy => (1.5, 3.0),
            Difficulty::Medium => (3.0, 5.0),
            Difficulty::Hard => (5.0, 10.0),
        }
    }

    pub fn contains(self, d: f64) -> bool {
        let (lo, hi) = self.band();
        match self {
            Difficulty::Hard => d >= lo && d <= hi,
            _ => d >= lo && d < hi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub ranges: Vec<f64>,
    pub landmark_hits: Vec<Landmark>,
}

impl Panorama {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Network input: per ray the normalized range followed by the landmark
    /// features.
    pub fn features(&self, max_range_m: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ranges.len() * (1 + LANDMARK_DIM));
        for (r, lm) in self.ranges.iter().zip(&self.landmark_hits) {
            out.push(r / max_range_m);
            out.extend_from_slice(lm);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavTask {
    pub start_pose: Pose,
    pub goal_pose: Pose,
    pub goal_panorama: Panorama,
    pub difficulty: Difficulty,
    pub shortest_path_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldGenConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size_m: f64,
    pub rooms_x: usize,
    pub rooms_y: usize,
    pub wall_jitter_m: f64,
    pub door_min_m: f64,
    pub door_max_m: f64,
    pub extra_door_prob: f64,
    pub max_obstacles_per_room: usize,
    pub obstacle_min_m: f64,
    pub obstacle_max_m: f64,
    pub obstacle_margin_m: f64,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        WorldGenConfig {
            width_m: 10.0,
            height_m: 10.0,
            cell_size_m: 0.10,
            rooms_x: 3,
            rooms_y: 3,
            wall_jitter_m: 0.6,
            door_min_m: 0.8,
            door_max_m: 1.2,
            extra_door_prob: 0.35,
            max_obstacles_per_room: 2,
            obstacle_min_m: 0.3,
            obstacle_max_m: 0.9,
            obstacle_margin_m: 0.5,
        }
    }
}

/// Immutable world geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    cell_size_m: f64,
    obstacle: Grid<bool>,
    landmark: Grid<Landmark>,
    /// Cells of the largest 4-connected free region, row-major order.
    component: Vec<Cell>,
}

impl World {
    /// Builds a world from an occupancy grid, validating the closed boundary
    /// and the free-region size.
    pub fn from_grid(obstacle: Grid<bool>, cell_size_m: f64) -> Result<World> {
        if !(cell_size_m > 0.0) {
            return Err(NavError::InvalidInput(format!("cell size {cell_size_m} must be positive")));
        }
        let (w, h) = (obstacle.width(), obstacle.height());
        if w < 3 || h < 3 {
            return Err(NavError::InvalidInput(format!("world {w}x{h} is too small")));
        }
        for c in obstacle.cells() {
            let border = c.row == 0 || c.col == 0 || c.row == h - 1 || c.col == w - 1;
            if border && !*obstacle.get(c) {
                return Err(NavError::InvalidInput(format!(
                    "boundary cell ({}, {}) is free; worlds must be closed",
                    c.row, c.col
                )));
            }
        }
        let component = largest_free_component(&obstacle);
        if component.len() < MIN_COMPONENT_CELLS {
            return Err(NavError::InvalidInput(format!(
                "largest free region has {} cells, need at least {MIN_COMPONENT_CELLS}",
                component.len()
            )));
        }
        let landmark = landmark_texture(w, h, cell_size_m);
        Ok(World { cell_size_m, obstacle, landmark, component })
    }

    /// Procedural rooms-and-corridors layout with scattered furniture.
    /// Retries with derived seeds until the free region is large enough.
    pub fn generate(cfg: &WorldGenConfig, seed: u64) -> Result<World> {
        use rand::SeedableRng;
        for attempt in 0..64u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt),
            );
            let grid = generate_layout(cfg, &mut rng)?;
            match World::from_grid(grid, cfg.cell_size_m) {
                Ok(w) => return Ok(w),
                Err(NavError::InvalidInput(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(NavError::InvalidInput(format!("could not generate a usable world for seed {seed}")))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size_m
    }

    pub fn width_cells(&self) -> usize {
        self.obstacle.width()
    }

    pub fn height_cells(&self) -> usize {
        self.obstacle.height()
    }

    pub fn width_m(&self) -> f64 {
        self.obstacle.width() as f64 * self.cell_size_m
    }

    pub fn height_m(&self) -> f64 {
        self.obstacle.height() as f64 * self.cell_size_m
    }

    pub fn obstacle_grid(&self) -> &Grid<bool> {
        &self.obstacle
    }

    pub fn landmark_field(&self) -> &Grid<Landmark> {
        &self.landmark
    }

    pub fn free_component(&self) -> &[Cell] {
        &self.component
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        *self.obstacle.get(cell)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        cell_of_point(x, y, self.cell_size_m, self.width_cells(), self.height_cells())
    }

    pub fn is_valid_pose(&self, pose: &Pose) -> bool {
        pose.x.is_finite()
            && pose.y.is_finite()
            && self.cell_of(pose.x, pose.y).is_some_and(|c| !self.is_occupied(c))
    }

    fn check_pose(&self, pose: &Pose) -> Result<Cell> {
        match self.cell_of(pose.x, pose.y) {
            Some(c) if !self.is_occupied(c) => Ok(c),
            _ => Err(NavError::InvalidInput(format!(
                "pose ({:.3}, {:.3}) is outside free space",
                pose.x, pose.y
            ))),
        }
    }

    /// Parses the ASCII world format.
    pub fn from_ascii(text: &str) -> Result<World> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| NavError::Parse("empty world file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "cells" {
            return Err(NavError::Parse(format!("bad header {header:?}; expected \"cells W H cell_size_m\"")));
        }
        let w: usize = parts[1].parse().map_err(|_| NavError::Parse(format!("bad width {:?}", parts[1])))?;
        let h: usize = parts[2].parse().map_err(|_| NavError::Parse(format!("bad height {:?}", parts[2])))?;
        let cs: f64 = parts[3].parse().map_err(|_| NavError::Parse(format!("bad cell size {:?}", parts[3])))?;
        let mut data = Vec::with_capacity(w * h);
        for row in 0..h {
            let line = lines.next().ok_or_else(|| NavError::Parse(format!("missing row {row}")))?;
            if line.chars().count() != w {
                return Err(NavError::Parse(format!("row {row} has {} cells, expected {w}", line.chars().count())));
            }
            for ch in line.chars() {
                data.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(NavError::Parse(format!("unexpected character {other:?} in row {row}"))),
                });
            }
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(NavError::Parse("trailing content after grid rows".into()));
        }
        World::from_grid(Grid::from_vec(w, h, data), cs)
    }

    /// Serializes to the ASCII world format; the first grid line is row 0
    /// (y = 0).
    pub fn to_ascii(&self) -> String {
        let (w, h) = (self.width_cells(), self.height_cells());
        let mut out = format!("cells {w} {h} {}\n", self.cell_size_m);
        for row in 0..h {
            for col in 0..w {
                out.push(if self.is_occupied(Cell::new(row, col)) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for World {
    type Err = NavError;
    fn from_str(s: &str) -> Result<World> {
        World::from_ascii(s)
    }
}

/// Position-dependent texture: two normalized coordinate ramps plus a
/// periodic component. Depends only on cell coordinates so the ASCII format
/// carries the whole world.
fn landmark_texture(w: usize, h: usize, cell_size: f64) -> Grid<Landmark> {
    let (wm, hm) = (w as f64 * cell_size, h as f64 * cell_size);
    let mut data = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = Cell::new(row, col).center(cell_size);
            data.push([x / wm, y / hm, 0.5 + 0.5 * (TAU * (x + y) / 5.0 + 2.0).sin()]);
        }
    }
    Grid::from_vec(w, h, data)
}

fn largest_free_component(obstacle: &Grid<bool>) -> Vec<Cell> {
    let mut label = vec![usize::MAX; obstacle.len()];
    let mut best: Vec<Cell> = Vec::new();
    let mut stack = Vec::new();
    for start in obstacle.cells() {
        let si = obstacle.index(start);
        if *obstacle.get(start) || label[si] != usize::MAX {
            continue;
        }
        let mut members = Vec::new();
        label[si] = si;
        stack.push(start);
        while let Some(c) = stack.pop() {
            members.push(c);
            for n in obstacle.neighbors4(c) {
                let ni = obstacle.index(n);
                if !*obstacle.get(n) && label[ni] == usize::MAX {
                    label[ni] = si;
                    stack.push(n);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort();
    best
}

fn generate_layout<R: Rng>(cfg: &WorldGenConfig, rng: &mut R) -> Result<Grid<bool>> {
    let h = cfg.cell_size_m;
    if !(h > 0.0) || cfg.rooms_x == 0 || cfg.rooms_y == 0 {
        return Err(NavError::Config("world generator needs positive cell size and room counts".into()));
    }
    let w_cells = (cfg.width_m / h - 1e-9).ceil() as usize;
    let h_cells = (cfg.height_m / h - 1e-9).ceil() as usize;
    let mut grid = Grid::filled(w_cells, h_cells, false);
    for c in grid.cells().collect::<Vec<_>>() {
        if c.row == 0 || c.col == 0 || c.row == h_cells - 1 || c.col == w_cells - 1 {
            grid.set(c, true);
        }
    }
    let to_cell = |m: f64| (m / h).round() as isize;

    // Interior wall lines, jittered.
    let split = |n: usize, total_cells: usize, rng: &mut R| -> Vec<usize> {
        let mut lines = vec![0usize];
        for i in 1..n {
            let nominal = i as f64 * total_cells as f64 / n as f64;
            let jitter = rng.random_range(-cfg.wall_jitter_m..=cfg.wall_jitter_m) / h;
            lines.push((nominal + jitter).round().clamp(3.0, total_cells as f64 - 4.0) as usize);
        }
        lines.push(total_cells - 1);
        lines
    };
    let xs = split(cfg.rooms_x, w_cells, rng);
    let ys = split(cfg.rooms_y, h_cells, rng);
    for &x in &xs[1..xs.len() - 1] {
        for row in 0..h_cells {
            grid.set(Cell::new(row, x), true);
        }
    }
    for &y in &ys[1..ys.len() - 1] {
        for col in 0..w_cells {
            grid.set(Cell::new(y, col), true);
        }
    }

    // Doors: spanning tree over room adjacency plus random extras.
    let room_id = |i: usize, j: usize| j * cfg.rooms_x + i;
    let mut edges = Vec::new();
    for j in 0..cfg.rooms_y {
        for i in 0..cfg.rooms_x {
            if i + 1 < cfg.rooms_x {
                edges.push((i, j, true));
            }
            if j + 1 < cfg.rooms_y {
                edges.push((i, j, false));
            }
        }
    }
    for k in (1..edges.len()).rev() {
        let m = rng.random_range(0..=k);
        edges.swap(k, m);
    }
    let mut parent: Vec<usize> = (0..cfg.rooms_x * cfg.rooms_y).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j, horizontal) in &edges {
        let (a, b) = if horizontal { (room_id(i, j), room_id(i + 1, j)) } else { (room_id(i, j), room_id(i, j + 1)) };
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let tree_edge = ra != rb;
        if tree_edge {
            parent[ra] = rb;
        }
        if !tree_edge && rng.random::<f64>() >= cfg.extra_door_prob {
            continue;
        }
        let door_cells = to_cell(rng.random_range(cfg.door_min_m..=cfg.door_max_m)).max(2) as usize;
        if horizontal {
            // Wall at column xs[i+1], spanning rows ys[j]+1 .. ys[j+1]-1.
            let (lo, hi) = (ys[j] + 1, ys[j + 1]);
            let span = hi.saturating_sub(lo);
            if span <= door_cells + 2 {
                continue;
            }
            let start = lo + 1 + rng.random_range(0..span - door_cells - 1);
            for row in start..start + door_cells {
                grid.set(Cell::new(row, xs[i + 1]), false);
            }
        } else {
            let (lo, hi) = (xs[i] + 1, xs[i + 1]);
            let span = hi.saturating_sub(lo);
            if span <= door_cells + 2 {
                continue;
            }
            let start = lo + 1 + rng.random_range(0..span - door_cells - 1);
            for col in start..start + door_cells {
                grid.set(Cell::new(ys[j + 1], col), false);
            }
        }
    }

    // Furniture: axis-aligned rectangles kept clear of the walls.
    let margin = to_cell(cfg.obstacle_margin_m).max(1) as usize;
    for j in 0..cfg.rooms_y {
        for i in 0..cfg.rooms_x {
            let n = rng.random_range(0..=cfg.max_obstacles_per_room);
            for _ in 0..n {
                let ow = to_cell(rng.random_range(cfg.obstacle_min_m..=cfg.obstacle_max_m)).max(1) as usize;
                let oh = to_cell(rng.random_range(cfg.obstacle_min_m..=cfg.obstacle_max_m)).max(1) as usize;
                let (x0, x1) = (xs[i] + 1 + margin, xs[i + 1].saturating_sub(margin));
                let (y0, y1) = (ys[j] + 1 + margin, ys[j + 1].saturating_sub(margin));
                if x1 <= x0 + ow || y1 <= y0 + oh {
                    continue;
                }
                let cx = rng.random_range(x0..x1 - ow);
                let cy = rng.random_range(y0..y1 - oh);
                for row in cy..cy + oh {
                    for col in cx..cx + ow {
                        grid.set(Cell::new(row, col), true);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// One grid cell crossed by a ray, with the distance at which the ray
/// enters it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCell {
    pub cell: Cell,
    pub t_enter: f64,
}

/// Grid traversal (Amanatides–Woo) from `(x, y)` along `angle`, yielding
/// every cell the ray enters until `max_dist` or the grid edge.
pub struct RayWalk {
    cell: (isize, isize),
    step: (isize, isize),
    t_max: (f64, f64),
    t_delta: (f64, f64),
    t_enter: f64,
    max_dist: f64,
    width: usize,
    height: usize,
    done: bool,
}

impl RayWalk {
    pub fn new(x: f64, y: f64, angle: f64, max_dist: f64, cell_size: f64, width: usize, height: usize) -> Self {
        let (dx, dy) = unit_direction(angle);
        let col = (x / cell_size).floor() as isize;
        let row = (y / cell_size).floor() as isize;
        let axis = |pos: f64, idx: isize, d: f64| -> (isize, f64, f64) {
            if d > 0.0 {
                (1, ((idx + 1) as f64 * cell_size - pos) / d, cell_size / d)
            } else if d < 0.0 {
                (-1, (idx as f64 * cell_size - pos) / d, -cell_size / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, tx, dtx) = axis(x, col, dx);
        let (sy, ty, dty) = axis(y, row, dy);
        RayWalk {
            cell: (row, col),
            step: (sy, sx),
            t_max: (ty, tx),
            t_delta: (dty, dtx),
            t_enter: 0.0,
            max_dist,
            width,
            height,
            done: false,
        }
    }
}

impl Iterator for RayWalk {
    type Item = RayCell;

    fn next(&mut self) -> Option<RayCell> {
        if self.done {
            return None;
        }
        let (row, col) = self.cell;
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width || self.t_enter > self.max_dist {
            self.done = true;
            return None;
        }
        let out = RayCell { cell: Cell::new(row as usize, col as usize), t_enter: self.t_enter };
        if self.t_max.1 < self.t_max.0 {
            self.t_enter = self.t_max.1;
            self.cell.1 += self.step.1;
            self.t_max.1 += self.t_delta.1;
        } else {
            self.t_enter = self.t_max.0;
            self.cell.0 += self.step.0;
            self.t_max.0 += self.t_delta.0;
        }
        Some(out)
    }
}

/// Unit vector for `angle`, with rounding residue on the axes zeroed.
pub fn unit_direction(angle: f64) -> (f64, f64) {
    let (mut s, mut c) = angle.sin_cos();
    if c.abs() < 1e-12 {
        c = 0.0;
    }
    if s.abs() < 1e-12 {
        s = 0.0;
    }
    (c, s)
}

/// Ray angle of panorama ray `i`.
pub fn ray_angle(i: usize, n_rays: usize) -> f64 {
    TAU * i as f64 / n_rays as f64
}

/// Applies one action. MoveForward is rejected (pose unchanged,
/// `collided = true`) when the swept segment touches an occupied cell.
pub fn step(world: &World, pose: &Pose, action: Action, motion: &MotionConfig) -> Result<(Pose, bool)> {
    world.check_pose(pose)?;
    Ok(match action {
        Action::Stop => (*pose, false),
        Action::TurnLeft => (Pose::new(pose.x, pose.y, pose.heading + motion.turn_rad), false),
        Action::TurnRight => (Pose::new(pose.x, pose.y, pose.heading - motion.turn_rad), false),
        Action::MoveForward => {
            if segment_blocked(world.obstacle_grid(), world.cell_size(), pose, motion.step_m) {
                (*pose, true)
            } else {
                let (dx, dy) = unit_direction(pose.heading);
                (Pose { x: pose.x + motion.step_m * dx, y: pose.y + motion.step_m * dy, heading: pose.heading }, false)
            }
        }
    })
}

/// Whether moving `dist` along `pose.heading` would touch an occupied (or
/// out-of-bounds) cell of `grid`.
pub fn segment_blocked(grid: &Grid<bool>, cell_size: f64, pose: &Pose, dist: f64) -> bool {
    let (dx, dy) = unit_direction(pose.heading);
    let (ex, ey) = (pose.x + dist * dx, pose.y + dist * dy);
    match cell_of_point(ex, ey, cell_size, grid.width(), grid.height()) {
        Some(c) if !*grid.get(c) => {}
        _ => return true,
    }
    RayWalk::new(pose.x, pose.y, pose.heading, dist, cell_size, grid.width(), grid.height())
        .any(|rc| *grid.get(rc.cell))
}

/// World-frame panorama: ray `i` at angle `2πi/n`, range to the first
/// occupied cell boundary clamped to the max range.
pub fn render_panorama(world: &World, pose: &Pose, cfg: &PanoramaConfig) -> Panorama {
    let mut ranges = Vec::with_capacity(cfg.n_rays);
    let mut hits = Vec::with_capacity(cfg.n_rays);
    for i in 0..cfg.n_rays {
        let walk = RayWalk::new(
            pose.x,
            pose.y,
            ray_angle(i, cfg.n_rays),
            cfg.max_range_m,
            world.cell_size(),
            world.width_cells(),
            world.height_cells(),
        );
        let mut range = cfg.max_range_m;
        let mut hit = [0.0; LANDMARK_DIM];
        for rc in walk {
            if world.is_occupied(rc.cell) {
                if rc.t_enter < cfg.max_range_m {
                    range = rc.t_enter;
                    hit = *world.landmark_field().get(rc.cell);
                }
                break;
            }
        }
        ranges.push(range);
        hits.push(hit);
    }
    Panorama { ranges, landmark_hits: hits }
}

/// Uniform point inside `cell`, kept away from its edges.
pub fn jittered_point<R: Rng>(cell: Cell, cell_size: f64, rng: &mut R) -> (f64, f64) {
    let (cx, cy) = cell.center(cell_size);
    (
        cx + rng.random_range(-0.4..0.4) * cell_size,
        cy + rng.random_range(-0.4..0.4) * cell_size,
    )
}

fn random_cardinal<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(0..4) as f64 * FRAC_PI_2
}

/// Rejection-samples a start/goal pair whose geodesic distance falls in the
/// tier's band.
pub fn sample_task<R: Rng>(world: &World, difficulty: Difficulty, pano: &PanoramaConfig, rng: &mut R) -> Result<NavTask> {
    let comp = world.free_component();
    let mut rejections = 0usize;
    while rejections < MAX_TASK_REJECTIONS {
        let start_cell = comp[rng.random_range(0..comp.len())];
        let field = fmm::solve_eikonal(world.obstacle_grid(), start_cell, world.cell_size())?;
        // A handful of goal draws per start keeps the eikonal solves cheap.
        for _ in 0..64 {
            let goal_cell = comp[rng.random_range(0..comp.len())];
            let d = field.value_at(goal_cell);
            if d.is_finite() && difficulty.contains(d) {
                let (sx, sy) = jittered_point(start_cell, world.cell_size(), rng);
                let (gx, gy) = jittered_point(goal_cell, world.cell_size(), rng);
                let start_pose = Pose::new(sx, sy, random_cardinal(rng));
                let goal_pose = Pose::new(gx, gy, random_cardinal(rng));
                let goal_panorama = render_panorama(world, &goal_pose, pano);
                return Ok(NavTask { start_pose, goal_pose, goal_panorama, difficulty, shortest_path_m: d });
            }
            rejections += 1;
            if rejections >= MAX_TASK_REJECTIONS {
                break;
            }
        }
    }
    Err(NavError::UnsatisfiableTier(difficulty.to_string(), MAX_TASK_REJECTIONS))
}

/// Success: the agent stopped before the step cap within 1 m of the goal.
pub fn judge_success(agent_pose: &Pose, goal_pose: &Pose, stopped: bool, steps: usize) -> bool {
    stopped && steps < MAX_EPISODE_STEPS && agent_pose.distance(goal_pose) <= SUCCESS_DISTANCE_M
}
