//! Online occupancy/exploration map built from noiseless poses and
//! panoramas, plus the channel stack read by the goal policy.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::error::{NavError, Result};
use crate::grid::{cell_of_point, Cell, Grid};
use crate::gridworld::{ray_angle, Panorama, PanoramaConfig, Pose, RayWalk, World};

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    obstacle: Grid<bool>,
    explored: Grid<bool>,
    visit_count: Grid<u32>,
    cell_size_m: f64,
    agent_cell: Option<Cell>,
    obstacle_count: usize,
    explored_count: usize,
}

impl OccupancyMap {
    pub fn new(width: usize, height: usize, cell_size_m: f64) -> Self {
        OccupancyMap {
            obstacle: Grid::filled(width, height, false),
            explored: Grid::filled(width, height, false),
            visit_count: Grid::filled(width, height, 0),
            cell_size_m,
            agent_cell: None,
            obstacle_count: 0,
            explored_count: 0,
        }
    }

    /// Empty map matching the world's grid.
    pub fn for_world(world: &World) -> Self {
        OccupancyMap::new(world.width_cells(), world.height_cells(), world.cell_size())
    }

    /// Fully explored map equal to the ground truth.
    pub fn from_ground_truth(world: &World) -> Self {
        OccupancyMap::from_known(world.obstacle_grid().clone(), world.cell_size())
    }

    /// Fully explored map with the given obstacle layout.
    pub fn from_known(obstacle: Grid<bool>, cell_size_m: f64) -> Self {
        let mut m = OccupancyMap::new(obstacle.width(), obstacle.height(), cell_size_m);
        m.obstacle_count = obstacle.as_slice().iter().filter(|&&o| o).count();
        m.obstacle = obstacle;
        m.explored.as_mut_slice().fill(true);
        m.explored_count = m.explored.len();
        m
    }

    /// Map from explicit obstacle and explored planes; obstacles count as
    /// explored. Visit counts start at zero except for `agent_cell`.
    pub fn from_parts(obstacle: Grid<bool>, explored: Grid<bool>, cell_size_m: f64, agent_cell: Option<Cell>) -> Result<Self> {
        if obstacle.width() != explored.width() || obstacle.height() != explored.height() {
            return Err(NavError::InvalidInput("obstacle and explored planes differ in size".into()));
        }
        let mut m = OccupancyMap::new(obstacle.width(), obstacle.height(), cell_size_m);
        for c in obstacle.cells() {
            if *obstacle.get(c) {
                m.mark_obstacle(c);
            } else if *explored.get(c) {
                m.mark_explored(c);
            }
        }
        if let Some(a) = agent_cell {
            if !m.obstacle.contains(a) {
                return Err(NavError::InvalidInput(format!("agent cell {a:?} out of bounds")));
            }
            *m.visit_count.get_mut(a) += 1;
            m.agent_cell = Some(a);
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.obstacle.width()
    }

    pub fn height(&self) -> usize {
        self.obstacle.height()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size_m
    }

    pub fn obstacle(&self) -> &Grid<bool> {
        &self.obstacle
    }

    pub fn explored(&self) -> &Grid<bool> {
        &self.explored
    }

    pub fn visit_count(&self) -> &Grid<u32> {
        &self.visit_count
    }

    pub fn agent_cell(&self) -> Option<Cell> {
        self.agent_cell
    }

    /// Number of cells marked obstacle; grows monotonically, so it doubles as
    /// a revision stamp for planner caches.
    pub fn obstacle_count(&self) -> usize {
        self.obstacle_count
    }

    pub fn explored_count(&self) -> usize {
        self.explored_count
    }

    pub fn is_known_free(&self, cell: Cell) -> bool {
        *self.explored.get(cell) && !*self.obstacle.get(cell)
    }

    pub fn cell_of(&self, pose: &Pose) -> Option<Cell> {
        cell_of_point(pose.x, pose.y, self.cell_size_m, self.width(), self.height())
    }

    fn mark_explored(&mut self, cell: Cell) {
        let e = self.explored.get_mut(cell);
        if !*e {
            *e = true;
            self.explored_count += 1;
        }
    }

    fn mark_obstacle(&mut self, cell: Cell) {
        self.mark_explored(cell);
        let o = self.obstacle.get_mut(cell);
        if !*o {
            *o = true;
            self.obstacle_count += 1;
        }
    }

    /// Carves every ray into the map: cells before the hit become explored,
    /// the hit cell (range below max) becomes an explored obstacle. Obstacles
    /// are never cleared.
    pub fn integrate_scan(&mut self, pose: &Pose, panorama: &Panorama, cfg: &PanoramaConfig) -> Result<()> {
        let agent = self.cell_of(pose).ok_or_else(|| {
            NavError::InvalidInput(format!("pose ({:.3}, {:.3}) outside the map", pose.x, pose.y))
        })?;
        let n = panorama.len();
        for (i, &range) in panorama.ranges.iter().enumerate() {
            let hit = range < cfg.max_range_m;
            let walk = RayWalk::new(
                pose.x,
                pose.y,
                ray_angle(i, n),
                range,
                self.cell_size_m,
                self.width(),
                self.height(),
            );
            for rc in walk {
                if rc.t_enter < range {
                    self.mark_explored(rc.cell);
                } else {
                    if hit {
                        self.mark_obstacle(rc.cell);
                    }
                    break;
                }
            }
        }
        self.mark_explored(agent);
        *self.visit_count.get_mut(agent) += 1;
        self.agent_cell = Some(agent);
        Ok(())
    }
}

/// Explored area in square meters.
pub fn explored_area(map: &OccupancyMap) -> f64 {
    cells_to_area(map.explored_count() as f64, map.cell_size())
}

/// Area of `n` cells in m². Dividing by the squared inverse cell size keeps
/// decimal sizes such as 0.1 m exact.
pub fn cells_to_area(n: f64, cell_size_m: f64) -> f64 {
    let inv = 1.0 / cell_size_m;
    n / (inv * inv)
}

/// Four same-shaped planes with values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    pub obstacle: Grid<f64>,
    pub explored: Grid<f64>,
    pub current: Grid<f64>,
    pub past: Grid<f64>,
}

impl ChannelMap {
    pub const NAMES: [&'static str; 4] = ["obstacle", "explored", "current", "past"];

    pub fn planes(&self) -> [&Grid<f64>; 4] {
        [&self.obstacle, &self.explored, &self.current, &self.past]
    }

    /// Max-pools every plane onto a `g`×`g` grid; output is channel-major.
    pub fn downsample(&self, g: usize) -> Vec<f64> {
        let (w, h) = (self.obstacle.width(), self.obstacle.height());
        let mut out = vec![0.0; 4 * g * g];
        for (ch, plane) in self.planes().iter().enumerate() {
            for gr in 0..g {
                let (r0, r1) = (gr * h / g, ((gr + 1) * h / g).max(gr * h / g + 1).min(h));
                for gc in 0..g {
                    let (c0, c1) = (gc * w / g, ((gc + 1) * w / g).max(gc * w / g + 1).min(w));
                    let mut m: f64 = 0.0;
                    for r in r0..r1 {
                        for c in c0..c1 {
                            m = m.max(*plane.get(Cell::new(r, c)));
                        }
                    }
                    out[ch * g * g + gr * g + gc] = m;
                }
            }
        }
        out
    }
}

/// Builds the policy's map channels at full resolution.
pub fn assemble_channels(map: &OccupancyMap, pose: &Pose) -> Result<ChannelMap> {
    let agent = map.cell_of(pose).ok_or_else(|| {
        NavError::InvalidInput(format!("pose ({:.3}, {:.3}) outside the map", pose.x, pose.y))
    })?;
    let to_f = |b: &bool| if *b { 1.0 } else { 0.0 };
    let mut current = Grid::filled(map.width(), map.height(), 0.0);
    current.set(agent, 1.0);
    for n in map.obstacle().neighbors4(agent).collect::<Vec<_>>() {
        current.set(n, 1.0);
    }
    Ok(ChannelMap {
        obstacle: map.obstacle().map(to_f),
        explored: map.explored().map(to_f),
        current,
        past: map.visit_count().map(|&v| if v > 0 { 1.0 } else { 0.0 }),
    })
}

/// Cells reachable from `from` through explored free cells (4-connected).
pub fn known_reachable_set(map: &OccupancyMap, from: Cell) -> Grid<bool> {
    let mut seen = Grid::filled(map.width(), map.height(), false);
    if !map.is_known_free(from) {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen.set(from, true);
    while let Some(c) = queue.pop_front() {
        for n in map.obstacle().neighbors4(c) {
            if !*seen.get(n) && map.is_known_free(n) {
                seen.set(n, true);
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Whether `cell` is explored, free and connected to `from` through
/// explored free cells.
pub fn known_reachable_from(map: &OccupancyMap, from: Cell, cell: Cell) -> bool {
    map.is_known_free(cell) && *known_reachable_set(map, from).get(cell)
}

/// [`known_reachable_from`] with the map's current agent cell.
pub fn is_known_reachable(map: &OccupancyMap, cell: Cell) -> bool {
    map.agent_cell().is_some_and(|a| known_reachable_from(map, a, cell))
}

/// Writes one plane as an ASCII portable graymap (P2, maxval 255).
pub fn write_pgm(plane: &Grid<f64>, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(pgm_string(plane).as_bytes())?;
    Ok(())
}

/// P2 text; finite values are scaled by the plane's finite maximum, non-finite
/// values are written as 255. The first raster line is the top (highest) row.
pub fn pgm_string(plane: &Grid<f64>) -> String {
    let max = plane.as_slice().iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut s = format!("P2\n{} {}\n255\n", plane.width(), plane.height());
    for row in (0..plane.height()).rev() {
        let line: Vec<String> = (0..plane.width())
            .map(|col| {
                let v = *plane.get(Cell::new(row, col));
                let g = if v.is_finite() { (v * scale).round().clamp(0.0, 255.0) as u32 } else { 255 };
                g.to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Exports all four channels as `<stem>_<channel>.pgm` in `dir`.
pub fn export_channels(channels: &ChannelMap, dir: &Path, stem: &str) -> Result<()> {
    for (name, plane) in ChannelMap::NAMES.iter().zip(channels.planes()) {
        write_pgm(plane, &dir.join(format!("{stem}_{name}.pgm")))?;
    }
    Ok(())
}
