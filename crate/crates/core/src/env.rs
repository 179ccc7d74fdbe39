//! One navigation episode in progress: ground-truth world, online map,
//! planner state and the bookkeeping needed for episode records.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fmm::{Planner, PlannerConfig};
use crate::goal_policy::PolicyInput;
use crate::grid::Cell;
use crate::gridworld::{
    render_panorama, step, Action, MotionConfig, NavTask, Panorama, PanoramaConfig, Pose, World, WorldGenConfig,
    MAX_EPISODE_STEPS,
};
use crate::mapping::{assemble_channels, OccupancyMap};

/// Simulation settings shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub world: WorldGenConfig,
    pub motion: MotionConfig,
    pub panorama: PanoramaConfig,
    pub planner: PlannerConfig,
    /// Motion steps between goal-policy decisions.
    pub k_steps: usize,
    /// Side of the pooled map fed to the policy.
    pub map_grid: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            world: WorldGenConfig::default(),
            motion: MotionConfig::default(),
            panorama: PanoramaConfig::default(),
            planner: PlannerConfig::default(),
            k_steps: 10,
            map_grid: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NavEnv<'w> {
    world: &'w World,
    task: NavTask,
    cfg: SimConfig,
    map: OccupancyMap,
    pose: Pose,
    panorama: Panorama,
    planner: Planner,
    poses: Vec<Pose>,
    actions: Vec<Action>,
    collisions: usize,
    path_length_m: f64,
    stopped: bool,
}

impl<'w> NavEnv<'w> {
    /// Places the agent at the task start and integrates the first scan.
    pub fn new(world: &'w World, task: NavTask, cfg: SimConfig) -> Result<Self> {
        let pose = task.start_pose;
        let panorama = render_panorama(world, &pose, &cfg.panorama);
        let mut map = OccupancyMap::for_world(world);
        map.integrate_scan(&pose, &panorama, &cfg.panorama)?;
        Ok(NavEnv {
            world,
            task,
            cfg,
            map,
            pose,
            panorama,
            planner: Planner::new(cfg.planner, cfg.motion),
            poses: vec![pose],
            actions: Vec::new(),
            collisions: 0,
            path_length_m: 0.0,
            stopped: false,
        })
    }

    pub fn world(&self) -> &World {
        self.world
    }

    pub fn task(&self) -> &NavTask {
        &self.task
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn panorama(&self) -> &Panorama {
        &self.panorama
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn path_length_m(&self) -> f64 {
        self.path_length_m
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn done(&self) -> bool {
        self.stopped || self.steps() >= MAX_EPISODE_STEPS
    }

    pub fn goal_cell(&self) -> Cell {
        self.map.cell_of(&self.task.goal_pose).expect("goal pose lies inside the world")
    }

    pub fn agent_cell(&self) -> Cell {
        self.map.cell_of(&self.pose).expect("agent pose lies inside the world")
    }

    pub fn observe(&self) -> Result<PolicyInput> {
        let channels = assemble_channels(&self.map, &self.pose)?;
        PolicyInput::new(&self.panorama, &self.task.goal_panorama, &channels, &self.cfg.panorama, self.cfg.map_grid)
    }

    /// Replans toward `goal` on the current map and executes the action.
    pub fn step_toward(&mut self, goal: Cell) -> Result<Action> {
        let action = self.planner.next(&self.map, &self.pose, goal)?;
        self.apply(action)?;
        Ok(action)
    }

    /// Executes one action; every non-Stop action is followed by a scan.
    pub fn apply(&mut self, action: Action) -> Result<bool> {
        let (next, collided) = step(self.world, &self.pose, action, &self.cfg.motion)?;
        self.collisions += collided as usize;
        self.path_length_m += self.pose.distance(&next);
        let moved = next.x != self.pose.x || next.y != self.pose.y;
        self.pose = next;
        self.actions.push(action);
        self.poses.push(next);
        if action == Action::Stop {
            self.stopped = true;
        } else {
            if moved {
                self.panorama = render_panorama(self.world, &self.pose, &self.cfg.panorama);
            }
            self.map.integrate_scan(&self.pose, &self.panorama, &self.cfg.panorama)?;
        }
        Ok(collided)
    }
}
