//! Per-time-scale reward: goal proximity, reachability penalty and the
//! exploration shaping term.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::grid::Cell;
use crate::mapping::{cells_to_area, is_known_reachable, OccupancyMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub goal_reward: f64,
    pub collide_penalty: f64,
    /// Predicted cell within this many meters of the goal earns `goal_reward`.
    pub goal_radius_m: f64,
    /// Multiplier on the area change (m²).
    pub explore_coef: f64,
    /// Forces the exploration term to zero.
    pub sparse: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { goal_reward: 20.0, collide_penalty: -5.0, goal_radius_m: 1.0, explore_coef: 1.0, sparse: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_g: f64,
    pub r_collide: f64,
    pub r_explore: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_g: f64, r_collide: f64, r_explore: f64) -> Self {
        RewardBreakdown { r_g, r_collide, r_explore, total: r_g + r_collide + r_explore }
    }
}

/// Exploration term from two consecutive map snapshots: zero on the first
/// scale, the negated area gain once the goal cell has been observed, the
/// area gain otherwise.
pub fn explore_reward(map_t: &OccupancyMap, map_tk: &OccupancyMap, goal_cell: Cell, first_scale: bool) -> Result<f64> {
    if map_t.explored().width() != map_tk.explored().width() || map_t.explored().height() != map_tk.explored().height() {
        return Err(NavError::Inconsistency("map snapshots differ in size".into()));
    }
    let nested = map_t.explored().as_slice().iter().zip(map_tk.explored().as_slice()).all(|(&a, &b)| !a || b);
    if !nested {
        return Err(NavError::Inconsistency("explored set shrank between time scales".into()));
    }
    if first_scale {
        return Ok(0.0);
    }
    let gained = cells_to_area((map_tk.explored_count() - map_t.explored_count()) as f64, map_t.cell_size());
    Ok(if *map_t.explored().get(goal_cell) { -gained } else { gained })
}

pub fn compute_reward(
    map_t: &OccupancyMap,
    map_tk: &OccupancyMap,
    goal_cell: Cell,
    predicted_cell: Cell,
    first_scale: bool,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    let h = map_t.cell_size();
    let r_g = if predicted_cell.metric_distance(goal_cell, h) <= cfg.goal_radius_m { cfg.goal_reward } else { 0.0 };
    let r_collide = if is_known_reachable(map_t, predicted_cell) { 0.0 } else { cfg.collide_penalty };
    let explore = explore_reward(map_t, map_tk, goal_cell, first_scale)?;
    let r_explore = if cfg.sparse { 0.0 } else { cfg.explore_coef * explore };
    Ok(RewardBreakdown::new(r_g, r_collide, r_explore))
}
