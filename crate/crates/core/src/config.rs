//! TOML run configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ending::NepmTrainConfig;
use crate::env::SimConfig;
use crate::error::{NavError, Result};
use crate::goal_policy::train::GoalTrainConfig;
use crate::harness::EvalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    /// When set, overrides every section's worker count (`1` = sequential).
    pub workers: Option<usize>,
    pub sim: SimConfig,
    pub goal: GoalTrainConfig,
    pub ending: NepmTrainConfig,
    pub eval: EvalConfig,
    pub plan: PlanConfig,
    pub viz: VizConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("runs/default"),
            workers: None,
            sim: SimConfig::default(),
            goal: GoalTrainConfig::default(),
            ending: NepmTrainConfig::default(),
            eval: EvalConfig::default(),
            plan: PlanConfig::default(),
            viz: VizConfig::default(),
        }
    }
}

/// `plan`: one distance field and path on a fully known world.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// ASCII world file; a generated world (seeded by `--seed`) otherwise.
    pub world: Option<PathBuf>,
    /// `[row, col]`; drawn from the free region when absent.
    pub start: Option<[usize; 2]>,
    pub goal: Option<[usize; 2]>,
}

/// `viz`: world renderings and map-channel exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizConfig {
    pub world: Option<PathBuf>,
    /// Generated worlds rendered when no file is given.
    pub count: usize,
}

impl Default for VizConfig {
    fn default() -> Self {
        VizConfig { world: None, count: 3 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| NavError::Config(e.to_string()))?;
        if let Some(w) = cfg.workers {
            cfg.goal.workers = w;
            cfg.eval.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NavError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        if !(s.world.cell_size_m > 0.0) || !(s.motion.step_m > 0.0) || !(s.panorama.max_range_m > 0.0) {
            return Err(NavError::Config("cell size, step and range must be positive".into()));
        }
        if s.panorama.n_rays == 0 || s.k_steps == 0 || s.map_grid == 0 {
            return Err(NavError::Config("n_rays, k_steps and map_grid must be positive".into()));
        }
        if self.goal.arch.pano_len != s.panorama.feature_len() || self.goal.arch.map_grid != s.map_grid {
            return Err(NavError::Config(format!(
                "goal.arch expects pano_len {} and map_grid {} for these sim settings",
                s.panorama.feature_len(),
                s.map_grid
            )));
        }
        if self.ending.arch.pano_len != s.panorama.feature_len() {
            return Err(NavError::Config(format!("ending.arch.pano_len must be {}", s.panorama.feature_len())));
        }
        if !(0.0..=1.0).contains(&self.ending.near_negative_fraction) {
            return Err(NavError::Config("ending.near_negative_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.run_dir.join("checkpoints")
    }

    pub fn policy_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("policy.ckpt")
    }

    pub fn nepm_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("nepm.ckpt")
    }
}
