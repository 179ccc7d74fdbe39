//! Parallel-episode PPO training of the goal policy.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{compute_returns_and_advantages, ppo_update, PpoConfig, RolloutBuffer, Transition};
use super::reward::{compute_reward, RewardConfig};
use super::{sample_goal, PolicyArch, PolicyNet, PolicyParams};
use crate::env::{NavEnv, SimConfig};
use crate::error::{NavError, Result};
use crate::gridworld::{sample_task, Difficulty, World};
use crate::nn::Adam;
use crate::parallel::{derive_seed, for_each_mut, map_range};

/// First world seed of the training split; evaluation worlds start at
/// [`EVAL_WORLD_SEED_BASE`].
pub const TRAIN_WORLD_SEED_BASE: u64 = 0;
pub const EVAL_WORLD_SEED_BASE: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalTrainConfig {
    pub n_envs: usize,
    pub updates: usize,
    pub scales_per_episode: usize,
    pub scales_per_update: usize,
    /// Discount τ. Kept short: with long horizons the explore term's noise
    /// swamps the goal reward at this budget.
    pub gamma: f64,
    /// GAE λ.
    pub lambda: f64,
    pub init_log_var: f64,
    /// Rewards are multiplied by this before returns are computed; the
    /// logged reward stays unscaled.
    pub reward_scale: f64,
    pub train_worlds: usize,
    /// `0` uses the thread pool, `1` runs single-worker.
    pub workers: usize,
    pub arch: PolicyArch,
    pub ppo: PpoConfig,
    pub reward: RewardConfig,
}

impl Default for GoalTrainConfig {
    fn default() -> Self {
        GoalTrainConfig {
            n_envs: 8,
            updates: 800,
            scales_per_episode: 50,
            scales_per_update: 10,
            gamma: 0.5,
            lambda: 0.95,
            init_log_var: -3.0,
            reward_scale: 0.1,
            train_worlds: 72,
            workers: 0,
            arch: PolicyArch::default(),
            ppo: PpoConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub update: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of decisions earning the goal reward.
    #[serde(default)]
    pub goal_rate: f64,
    /// Fraction of decisions penalized as unreachable.
    #[serde(default)]
    pub collide_rate: f64,
    #[serde(default)]
    pub mean_explore: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub log: Vec<TrainLogRow>,
    /// Goal draws that fell outside `[0,1]²` and were clamped.
    pub clamp_events: usize,
}

pub fn write_train_log(rows: &[TrainLogRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "update,mean_reward,policy_loss,value_loss,entropy")?;
    for r in rows {
        writeln!(f, "{},{:.6},{:.6},{:.6},{:.6}", r.update, r.mean_reward, r.policy_loss, r.value_loss, r.entropy)?;
    }
    f.flush()?;
    Ok(())
}

/// Worlds `TRAIN_WORLD_SEED_BASE..+n` (or the evaluation split).
pub fn generate_worlds(sim: &SimConfig, base: u64, n: usize, workers: usize) -> Result<Vec<World>> {
    map_range(n, workers, |i| World::generate(&sim.world, base + i as u64)).into_iter().collect()
}

struct Worker<'w> {
    rng: ChaCha8Rng,
    env: Option<NavEnv<'w>>,
    scale: usize,
    window: Result<Window>,
}

#[derive(Debug, Default)]
struct Window {
    transitions: Vec<Transition>,
    bootstrap: f64,
    clamps: usize,
    goal_hits: usize,
    collides: usize,
    explore: f64,
}

impl<'w> Worker<'w> {
    fn reset(&mut self, worlds: &'w [World], sim: &SimConfig) -> Result<()> {
        let world = &worlds[self.rng.random_range(0..worlds.len())];
        let tier = Difficulty::ALL[self.rng.random_range(0..Difficulty::ALL.len())];
        let task = sample_task(world, tier, &sim.panorama, &mut self.rng)?;
        self.env = Some(NavEnv::new(world, task, *sim)?);
        self.scale = 0;
        Ok(())
    }

    /// Collects one update window of `scales_per_update` decisions.
    fn collect(
        &mut self,
        worlds: &'w [World],
        net: &PolicyNet,
        theta: &[f64],
        cfg: &GoalTrainConfig,
        sim: &SimConfig,
    ) -> Result<Window> {
        let mut win = Window { transitions: Vec::with_capacity(cfg.scales_per_update), ..Default::default() };
        for _ in 0..cfg.scales_per_update {
            if self.env.is_none() || self.scale >= cfg.scales_per_episode {
                self.reset(worlds, sim)?;
            }
            let env = self.env.as_mut().expect("env initialized by reset");
            let input = env.observe()?;
            let (o, _) = net.forward(theta, &input)?;
            let s = sample_goal(o.mean, o.var, &mut self.rng)?;
            win.clamps += s.clamped as usize;
            let (w, h) = (env.map().width(), env.map().height());
            let predicted = s.goal.cell(w, h);
            let before = env.map().clone();
            for _ in 0..sim.k_steps {
                if env.done() {
                    break;
                }
                env.step_toward(predicted)?;
            }
            let r = compute_reward(&before, env.map(), env.goal_cell(), predicted, self.scale == 0, &cfg.reward)?;
            win.goal_hits += (r.r_g != 0.0) as usize;
            win.collides += (r.r_collide != 0.0) as usize;
            win.explore += r.r_explore;
            self.scale += 1;
            let done = self.scale >= cfg.scales_per_episode || env.done();
            if done {
                self.scale = cfg.scales_per_episode;
            }
            win.transitions.push(Transition { input, raw: s.raw, log_prob: s.log_prob, value: o.value, reward: r.total, done });
        }
        win.bootstrap = if self.scale >= cfg.scales_per_episode {
            0.0
        } else {
            let env = self.env.as_ref().expect("env initialized by reset");
            net.forward(theta, &env.observe()?)?.0.value
        };
        Ok(win)
    }
}

/// Trains from a fresh initialization; one PPO update per window of
/// `scales_per_update` decisions in each of `n_envs` concurrent episodes.
pub fn train_goal_policy(cfg: &GoalTrainConfig, sim: &SimConfig, seed: u64) -> Result<TrainOutput> {
    train_goal_policy_with(cfg, sim, seed, |_, _| {})
}

/// As [`train_goal_policy`], calling `on_update` after every update.
pub fn train_goal_policy_with(
    cfg: &GoalTrainConfig,
    sim: &SimConfig,
    seed: u64,
    mut on_update: impl FnMut(&TrainLogRow, &PolicyParams),
) -> Result<TrainOutput> {
    if cfg.n_envs == 0 || cfg.scales_per_update == 0 || cfg.scales_per_episode == 0 {
        return Err(NavError::Config("n_envs, scales_per_update and scales_per_episode must be positive".into()));
    }
    if !(cfg.reward_scale > 0.0 && cfg.reward_scale.is_finite()) {
        return Err(NavError::Config("reward_scale must be positive and finite".into()));
    }
    if cfg.arch.pano_len != sim.panorama.feature_len() || cfg.arch.map_grid != sim.map_grid {
        return Err(NavError::Config("policy architecture does not match the panorama/map settings".into()));
    }
    let worlds = generate_worlds(sim, TRAIN_WORLD_SEED_BASE, cfg.train_worlds.max(1), cfg.workers)?;
    let mut params = PolicyParams::new(cfg.arch, derive_seed(seed, 0), cfg.init_log_var);
    let net = params.net();
    let mut opt = Adam::new(net.n_params(), cfg.ppo.lr, cfg.ppo.adam_eps);
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut workers: Vec<Worker> = (0..cfg.n_envs)
        .map(|e| Worker {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + e as u64)),
            env: None,
            scale: 0,
            window: Ok(Window::default()),
        })
        .collect();
    let mut log = Vec::with_capacity(cfg.updates);
    let mut clamp_events = 0;
    for update in 0..cfg.updates {
        let theta = params.theta.clone();
        for_each_mut(&mut workers, cfg.workers, |_, w| {
            w.window = w.collect(&worlds, &net, &theta, cfg, sim);
        });
        let mut transitions = Vec::with_capacity(cfg.n_envs * cfg.scales_per_update);
        let mut bootstrap = Vec::with_capacity(cfg.n_envs);
        let (mut hits, mut collides, mut explore) = (0, 0, 0.0);
        for w in &mut workers {
            let win = std::mem::replace(&mut w.window, Ok(Window::default()))?;
            transitions.extend(win.transitions);
            bootstrap.push(win.bootstrap);
            clamp_events += win.clamps;
            hits += win.goal_hits;
            collides += win.collides;
            explore += win.explore;
        }
        let mut buf = RolloutBuffer::new(cfg.n_envs, cfg.scales_per_update, transitions, bootstrap)?;
        let mean_reward = buf.mean_reward();
        let n = buf.len() as f64;
        for t in &mut buf.transitions {
            t.reward *= cfg.reward_scale;
        }
        compute_returns_and_advantages(&mut buf, cfg.gamma, cfg.lambda);
        let stats = ppo_update(&mut params, &buf, &mut opt, &cfg.ppo, &mut update_rng)?;
        let row = TrainLogRow {
            update,
            mean_reward,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            goal_rate: hits as f64 / n,
            collide_rate: collides as f64 / n,
            mean_explore: explore / n,
        };
        on_update(&row, &params);
        log.push(row);
    }
    Ok(TrainOutput { params, log, clamp_events })
}
