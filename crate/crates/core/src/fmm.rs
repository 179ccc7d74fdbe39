//! First-order Fast Marching solver on occupancy grids, steepest-descent
//! path extraction, and per-step conversion of a long-term goal into the
//! next discrete action.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::grid::{Cell, Grid};
use crate::gridworld::{segment_blocked, Action, MotionConfig, Pose};
use crate::mapping::OccupancyMap;

/// Geodesic travel cost (meters) from `source`; `+∞` on occupied and
/// unreached cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    value: Grid<f64>,
    source: Cell,
    cell_size: f64,
}

impl DistanceField {
    pub fn values(&self) -> &Grid<f64> {
        &self.value
    }

    pub fn value_at(&self, cell: Cell) -> f64 {
        *self.value.get(cell)
    }

    pub fn source(&self) -> Cell {
        self.source
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
}

/// Heap entry ordered so `BinaryHeap` pops the smallest value first, ties
/// broken by the smaller row-major index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Trial {
    value: f64,
    index: usize,
}

impl Eq for Trial {}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        other.value.total_cmp(&self.value).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Upwind quadratic update from the smallest accepted horizontal (`a`) and
/// vertical (`b`) neighbor values.
pub fn eikonal_update(a: f64, b: f64, h: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if !a.is_finite() {
        return f64::INFINITY;
    }
    if !b.is_finite() || b - a >= h {
        a + h
    } else {
        (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt()) / 2.0
    }
}

/// Chebyshev radius around the source whose cells start at their exact
/// Euclidean distance. Without it the point-source singularity inflates
/// near-diagonal values by up to ~20% close to the source.
pub const SOURCE_INIT_RADIUS: usize = 2;

/// Cells near `source` seeded with exact distances: those whose bounding box
/// with the source is entirely free, so the straight segment is clear.
pub fn source_seeds(obstacle: &Grid<bool>, source: Cell, cell_size: f64) -> Vec<(Cell, f64)> {
    let r = SOURCE_INIT_RADIUS as isize;
    let (sr, sc) = (source.row as isize, source.col as isize);
    let free = |row: isize, col: isize| obstacle.cell_at(row, col).is_some_and(|c| !*obstacle.get(c));
    let mut seeds = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if (dr, dc) == (0, 0) || !free(sr + dr, sc + dc) {
                continue;
            }
            let clear = (sr.min(sr + dr)..=sr.max(sr + dr))
                .all(|row| (sc.min(sc + dc)..=sc.max(sc + dc)).all(|col| free(row, col)));
            if clear {
                let cell = Cell::new((sr + dr) as usize, (sc + dc) as usize);
                seeds.push((cell, ((dr * dr + dc * dc) as f64).sqrt() * cell_size));
            }
        }
    }
    seeds
}

/// Full solve over every cell reachable from `source`.
pub fn solve_eikonal(obstacle: &Grid<bool>, source: Cell, cell_size: f64) -> Result<DistanceField> {
    solve_eikonal_until(obstacle, source, cell_size, None)
}

/// Solve that may stop once `stop` is accepted. Cells not accepted by then
/// are reported as `+∞`; every accepted value is identical to the full
/// solve's.
pub fn solve_eikonal_until(
    obstacle: &Grid<bool>,
    source: Cell,
    cell_size: f64,
    stop: Option<Cell>,
) -> Result<DistanceField> {
    if !obstacle.contains(source) {
        return Err(NavError::InvalidInput(format!("source {source:?} out of bounds")));
    }
    if *obstacle.get(source) {
        return Err(NavError::InvalidInput(format!("source {source:?} is occupied")));
    }
    let n = obstacle.len();
    let mut value = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let mut heap = BinaryHeap::new();
    let si = obstacle.index(source);
    value[si] = 0.0;
    heap.push(Trial { value: 0.0, index: si });
    for (cell, v) in source_seeds(obstacle, source, cell_size) {
        let i = obstacle.index(cell);
        value[i] = v;
        heap.push(Trial { value: v, index: i });
    }
    let stop_index = stop.filter(|c| obstacle.contains(*c)).map(|c| obstacle.index(c));
    let (w, h) = (obstacle.width(), obstacle.height());
    let blocked = obstacle.as_slice();

    while let Some(Trial { value: v, index }) = heap.pop() {
        if accepted[index] || v > value[index] {
            continue;
        }
        accepted[index] = true;
        if Some(index) == stop_index {
            break;
        }
        let (row, col) = (index / w, index % w);
        let mut relax = |ni: usize| {
            if blocked[ni] || accepted[ni] {
                return;
            }
            let (nr, nc) = (ni / w, ni % w);
            let known = |j: usize| if accepted[j] { value[j] } else { f64::INFINITY };
            let mut a = f64::INFINITY;
            if nc > 0 {
                a = a.min(known(ni - 1));
            }
            if nc + 1 < w {
                a = a.min(known(ni + 1));
            }
            let mut b = f64::INFINITY;
            if nr > 0 {
                b = b.min(known(ni - w));
            }
            if nr + 1 < h {
                b = b.min(known(ni + w));
            }
            let candidate = eikonal_update(a, b, cell_size);
            if candidate < value[ni] {
                value[ni] = candidate;
                heap.push(Trial { value: candidate, index: ni });
            }
        };
        if col > 0 {
            relax(index - 1);
        }
        if col + 1 < w {
            relax(index + 1);
        }
        if row > 0 {
            relax(index - w);
        }
        if row + 1 < h {
            relax(index + w);
        }
    }
    for (v, acc) in value.iter_mut().zip(&accepted) {
        if !acc {
            *v = f64::INFINITY;
        }
    }
    Ok(DistanceField { value: Grid::from_vec(w, h, value), source, cell_size })
}

/// Steepest descent over the 8-neighborhood from `start` to the source.
pub fn extract_path(field: &DistanceField, start: Cell) -> Result<Vec<Cell>> {
    let grid = field.values();
    if !grid.contains(start) || !grid.get(start).is_finite() {
        return Err(NavError::NoPath(format!("{start:?} cannot reach {:?}", field.source)));
    }
    let mut path = vec![start];
    let mut cur = start;
    while cur != field.source {
        let here = *grid.get(cur);
        let mut best: Option<(f64, Cell)> = None;
        for n in grid.neighbors8(cur) {
            let v = *grid.get(n);
            if v < here && best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, n));
            }
        }
        match best {
            Some((_, n)) => {
                path.push(n);
                cur = n;
            }
            None => {
                return Err(NavError::Inconsistency(format!("descent stalled at {cur:?} (value {here})")));
            }
        }
    }
    Ok(path)
}

/// Angle wrapped into `[-π, π]`.
fn wrap_pi(a: f64) -> f64 {
    a - TAU * (a / TAU).round()
}

/// Bearing-following rule: forward when the first waypoint beyond half a
/// step lies within half a turn of the heading, otherwise the single turn
/// that most reduces the bearing error (ties turn left).
pub fn next_action(path: &[Cell], pose: &Pose, motion: &MotionConfig, cell_size: f64) -> Action {
    let Some(&last) = path.last() else {
        return Action::TurnLeft;
    };
    let waypoint = path
        .iter()
        .copied()
        .find(|c| {
            let (cx, cy) = c.center(cell_size);
            (cx - pose.x).hypot(cy - pose.y) > 0.5 * motion.step_m
        })
        .unwrap_or(last);
    let (wx, wy) = waypoint.center(cell_size);
    let bearing = (wy - pose.y).atan2(wx - pose.x);
    let err = wrap_pi(bearing - pose.heading);
    if err.abs() <= motion.turn_rad / 2.0 + 1e-12 {
        return Action::MoveForward;
    }
    let left = wrap_pi(err - motion.turn_rad).abs();
    let right = wrap_pi(err + motion.turn_rad).abs();
    if left <= right + 1e-9 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Chebyshev radius (cells) by which known obstacles are grown for
    /// planning. Cleared around the goal; ignored when the agent itself sits
    /// inside the grown region.
    pub inflate_cells: usize,
    /// Replace a heading whose forward sweep hits a known obstacle with the
    /// free heading of lowest geodesic cost.
    pub guard: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { inflate_cells: 2, guard: true }
    }
}

#[derive(Debug, Clone)]
struct CachedPlan {
    revision: usize,
    explored_stamp: Option<usize>,
    goal: Cell,
    inflated: bool,
    target: Cell,
    field: DistanceField,
}

#[derive(Debug, Clone)]
struct CachedGrid {
    revision: usize,
    goal: Cell,
    grid: Grid<bool>,
}

/// Per-episode replanner. Caches the planning grid and the goal field
/// between steps while the map's obstacle set is unchanged; results are
/// identical to a fresh [`replan_step`].
#[derive(Debug, Clone)]
pub struct Planner {
    cfg: PlannerConfig,
    motion: MotionConfig,
    grid_cache: Option<CachedGrid>,
    plan_cache: Option<CachedPlan>,
}

/// Outcome of one planning call, kept for inspection and visualization.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub action: Action,
    pub target: Cell,
    pub path: Vec<Cell>,
    pub guarded: bool,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, motion: MotionConfig) -> Self {
        Planner { cfg, motion, grid_cache: None, plan_cache: None }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    /// Chooses the next action toward `goal` on the current map.
    pub fn next(&mut self, map: &OccupancyMap, pose: &Pose, goal: Cell) -> Result<Action> {
        Ok(self.plan(map, pose, goal)?.action)
    }

    pub fn plan(&mut self, map: &OccupancyMap, pose: &Pose, goal: Cell) -> Result<PlanStep> {
        let agent = map
            .cell_of(pose)
            .ok_or_else(|| NavError::InvalidInput(format!("pose ({:.3}, {:.3}) outside the map", pose.x, pose.y)))?;
        if *map.obstacle().get(agent) {
            return Err(NavError::Inconsistency(format!("agent cell {agent:?} is marked occupied")));
        }
        if !map.obstacle().contains(goal) {
            return Err(NavError::InvalidInput(format!("goal {goal:?} out of bounds")));
        }
        let h = map.cell_size();
        let revision = map.obstacle_count();

        let inflated_grid = self.inflated_grid(map, goal);
        let inflated = !*inflated_grid.get(agent);
        let raw;
        let grid: &Grid<bool> = if inflated {
            &inflated_grid
        } else {
            raw = map.obstacle().clone();
            &raw
        };

        let reusable = self.plan_cache.as_ref().is_some_and(|c| {
            c.revision == revision
                && c.goal == goal
                && c.inflated == inflated
                && c.explored_stamp.is_none_or(|s| s == map.explored_count())
                && c.field.value_at(agent).is_finite()
        });
        if !reusable {
            let mut direct = None;
            if !*grid.get(goal) {
                let f = solve_eikonal_until(grid, goal, h, Some(agent))?;
                if f.value_at(agent).is_finite() {
                    direct = Some(f);
                }
            }
            let (target, field, explored_stamp) = match direct {
                Some(f) => (goal, f, None),
                None => {
                    let target = fallback_target(map, grid, agent, goal)?;
                    let f = solve_eikonal_until(grid, target, h, Some(agent))?;
                    (target, f, Some(map.explored_count()))
                }
            };
            self.plan_cache = Some(CachedPlan { revision, explored_stamp, goal, inflated, target, field });
        }
        let cached = self.plan_cache.as_ref().expect("plan cache filled above");
        let target = cached.target;
        let path = extract_path(&cached.field, agent)?;
        let mut action = next_action(&path, pose, &self.motion, h);
        let mut guarded = false;

        if self.cfg.guard && agent != target {
            // Heading the bearing rule settles on within two turns.
            let mut heading = pose.heading;
            let mut a = action;
            for _ in 0..2 {
                if a == Action::MoveForward {
                    break;
                }
                heading = turned(heading, a, &self.motion);
                a = next_action(&path, &Pose { heading, ..*pose }, &self.motion, h);
            }
            let field = &self.plan_cache.as_ref().expect("plan cache filled above").field;
            let here = field.value_at(agent);
            if self.forward_score(map, field, pose, heading).is_none_or(|v| v >= here) {
                guarded = true;
                action = self.free_heading_action(map, field, pose, target)?;
            }
        }
        Ok(PlanStep { action, target, path, guarded })
    }

    fn inflated_grid(&mut self, map: &OccupancyMap, goal: Cell) -> Grid<bool> {
        let revision = map.obstacle_count();
        if let Some(c) = &self.grid_cache {
            if c.revision == revision && c.goal == goal {
                return c.grid.clone();
            }
        }
        let grid = inflate(map.obstacle(), self.cfg.inflate_cells, goal);
        self.grid_cache = Some(CachedGrid { revision, goal, grid: grid.clone() });
        grid
    }

    /// Field value at the end of a forward move along `heading`, or `None`
    /// when the sweep touches a known obstacle.
    fn forward_score(&self, map: &OccupancyMap, field: &DistanceField, pose: &Pose, heading: f64) -> Option<f64> {
        let h = map.cell_size();
        let probe = Pose::new(pose.x, pose.y, heading);
        if segment_blocked(map.obstacle(), h, &probe, self.motion.step_m) {
            return None;
        }
        let (dx, dy) = crate::gridworld::unit_direction(probe.heading);
        let end = Pose { x: pose.x + self.motion.step_m * dx, y: pose.y + self.motion.step_m * dy, ..probe };
        Some(map.cell_of(&end).map_or(f64::INFINITY, |c| field.value_at(c)))
    }

    /// Turns toward (or moves along) the free heading whose forward move
    /// lands lowest on the planning field. When no move makes progress there,
    /// headings are ranked on a full solve over the raw known map instead.
    /// Ties prefer current, left, right, back.
    fn free_heading_action(&self, map: &OccupancyMap, field: &DistanceField, pose: &Pose, target: Cell) -> Result<Action> {
        let options = [
            (0.0, Action::MoveForward),
            (self.motion.turn_rad, Action::TurnLeft),
            (-self.motion.turn_rad, Action::TurnRight),
            (PI, Action::TurnLeft),
        ];
        let here = map.cell_of(pose).map_or(f64::INFINITY, |c| field.value_at(c));
        let pick = |f: &DistanceField, strict: bool| {
            let mut best: Option<(f64, Action)> = None;
            for (offset, act) in options {
                let Some(v) = self.forward_score(map, f, pose, pose.heading + offset) else { continue };
                if strict && v >= here {
                    continue;
                }
                if best.is_none_or(|(s, _)| v < s) {
                    best = Some((v, act));
                }
            }
            best.map(|(_, a)| a)
        };
        if let Some(a) = pick(field, true) {
            return Ok(a);
        }
        if *map.obstacle().get(target) {
            return Ok(pick(field, false).unwrap_or(Action::TurnLeft));
        }
        let full = solve_eikonal(map.obstacle(), target, map.cell_size())?;
        Ok(pick(&full, false).unwrap_or(Action::TurnLeft))
    }
}

fn turned(heading: f64, action: Action, motion: &MotionConfig) -> f64 {
    match action {
        Action::TurnLeft => crate::gridworld::wrap_heading(heading + motion.turn_rad),
        Action::TurnRight => crate::gridworld::wrap_heading(heading - motion.turn_rad),
        _ => heading,
    }
}

/// Grows obstacles by `radius` cells (Chebyshev), leaving the cells around
/// `keep` as they are in `obstacle`.
pub fn inflate(obstacle: &Grid<bool>, radius: usize, keep: Cell) -> Grid<bool> {
    if radius == 0 {
        return obstacle.clone();
    }
    let (w, h) = (obstacle.width(), obstacle.height());
    // Separable max filter: rows, then columns.
    let mut horiz = Grid::filled(w, h, false);
    for row in 0..h {
        for col in 0..w {
            let lo = col.saturating_sub(radius);
            let hi = (col + radius).min(w - 1);
            if (lo..=hi).any(|c| *obstacle.get(Cell::new(row, c))) {
                horiz.set(Cell::new(row, col), true);
            }
        }
    }
    let mut out = Grid::filled(w, h, false);
    for row in 0..h {
        let lo = row.saturating_sub(radius);
        let hi = (row + radius).min(h - 1);
        for col in 0..w {
            if (lo..=hi).any(|r| *horiz.get(Cell::new(r, col))) {
                out.set(Cell::new(row, col), true);
            }
        }
    }
    for c in obstacle.cells() {
        if c.chebyshev(keep) <= radius {
            out.set(c, *obstacle.get(c));
        }
    }
    out
}

/// Known-free cell reachable from the agent that is nearest (straight line)
/// to `goal`; ties go to the lowest row-major index.
fn fallback_target(map: &OccupancyMap, grid: &Grid<bool>, agent: Cell, goal: Cell) -> Result<Cell> {
    let reach = solve_eikonal(grid, agent, map.cell_size())?;
    let mut best: Option<(usize, Cell)> = None;
    for c in grid.cells() {
        if !map.is_known_free(c) || !reach.value_at(c).is_finite() {
            continue;
        }
        let dr = c.row.abs_diff(goal.row);
        let dc = c.col.abs_diff(goal.col);
        let d2 = dr * dr + dc * dc;
        if best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, c));
        }
    }
    Ok(best.map_or(agent, |(_, c)| c))
}

/// One stateless replanning step: solve toward `goal`, extract the descent
/// path from the agent's cell and apply the bearing rule.
pub fn replan_step(
    map: &OccupancyMap,
    pose: &Pose,
    goal: Cell,
    motion: &MotionConfig,
    cfg: &PlannerConfig,
) -> Result<Action> {
    Planner::new(*cfg, *motion).next(map, pose, goal)
}
