//! Episode loop, SR/SPL/CR metrics, baselines, ablations and batch
//! evaluation over difficulty tiers.

pub mod svg;

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ending::{should_stop, NepmParams};
use crate::env::{NavEnv, SimConfig};
use crate::error::{NavError, Result};
use crate::goal_policy::train::{generate_worlds, train_goal_policy, GoalTrainConfig, TrainOutput, EVAL_WORLD_SEED_BASE};
use crate::goal_policy::{encode, greedy_goal, sample_goal, LongTermGoal, PolicyParams};
use crate::gridworld::{judge_success, sample_task, Action, Difficulty, NavTask, Pose, World, MAX_EPISODE_STEPS};
use crate::parallel::{derive_seed, map_range};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: NavTask,
    pub poses: Vec<Pose>,
    pub actions: Vec<Action>,
    pub collisions: usize,
    pub stopped: bool,
    pub steps: usize,
    pub success: bool,
    pub path_length_m: f64,
    pub long_term_goals: Vec<LongTermGoal>,
}

impl EpisodeRecord {
    fn from_env(env: &NavEnv, long_term_goals: Vec<LongTermGoal>) -> Self {
        let task = env.task().clone();
        let success = judge_success(&env.pose(), &task.goal_pose, env.stopped(), env.steps());
        EpisodeRecord {
            task,
            poses: env.poses().to_vec(),
            actions: env.actions().to_vec(),
            collisions: env.collisions(),
            stopped: env.stopped(),
            steps: env.steps(),
            success,
            path_length_m: env.path_length_m(),
            long_term_goals,
        }
    }

    pub fn final_pose(&self) -> Pose {
        self.poses.last().copied().unwrap_or(self.task.start_pose)
    }

    /// `success · L / max(L, P)`.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let l = self.task.shortest_path_m;
        let denom = l.max(self.path_length_m);
        if denom > 0.0 {
            l / denom
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NavError::Inconsistency(format!("episode record: {m}")));
        if self.success && !self.stopped {
            return bad("success without stop");
        }
        if self.steps != self.actions.len() || self.steps > MAX_EPISODE_STEPS {
            return bad("step count");
        }
        if self.path_length_m < self.task.start_pose.distance(&self.final_pose()) - 1e-9 {
            return bad("path shorter than displacement");
        }
        Ok(())
    }
}

/// Where long-term goals come from.
#[derive(Debug, Clone, Copy)]
pub enum GoalSource<'a> {
    /// The trained policy; `greedy` uses the Gaussian mean.
    Policy { params: &'a PolicyParams, greedy: bool },
    /// Uniform over map cells every time scale (Ours-RP).
    RandomCell,
}

#[derive(Debug, Clone, Copy)]
pub enum StopRule<'a> {
    Nepm { params: &'a NepmParams, threshold: f64 },
    Never,
}

impl StopRule<'_> {
    fn fires(&self, env: &NavEnv) -> Result<bool> {
        match self {
            StopRule::Nepm { params, threshold } => should_stop(env.panorama(), &env.task().goal_panorama, params, *threshold),
            StopRule::Never => Ok(false),
        }
    }
}

/// The hierarchical loop: each step checks the stop rule, refreshes the
/// long-term goal every `k_steps`, then replans and moves toward it.
pub fn run_episode<R: Rng>(
    world: &World,
    task: &NavTask,
    goals: GoalSource,
    stop: StopRule,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let mut env = NavEnv::new(world, task.clone(), *sim)?;
    let (w, h) = (env.map().width(), env.map().height());
    let mut ltgs = Vec::new();
    let mut goal = env.agent_cell();
    while !env.done() {
        if stop.fires(&env)? {
            env.apply(Action::Stop)?;
            break;
        }
        if env.steps() % sim.k_steps.max(1) == 0 {
            let g = match goals {
                GoalSource::Policy { params, greedy } => {
                    let out = encode(&env.observe()?, params)?;
                    if greedy {
                        greedy_goal(out.mean, out.log_var).goal
                    } else {
                        sample_goal(out.mean, out.var, rng)?.goal
                    }
                }
                GoalSource::RandomCell => LongTermGoal { gx: rng.random_range(0.0..1.0), gy: rng.random_range(0.0..1.0) },
            };
            goal = g.cell(w, h);
            ltgs.push(g);
        }
        env.step_toward(goal)?;
    }
    Ok(EpisodeRecord::from_env(&env, ltgs))
}

/// Uniform over Stop, forward, left and right at every step.
pub fn baseline_random_agent<R: Rng>(world: &World, task: &NavTask, sim: &SimConfig, rng: &mut R) -> Result<EpisodeRecord> {
    let mut env = NavEnv::new(world, task.clone(), *sim)?;
    while !env.done() {
        env.apply(Action::AGENT[rng.random_range(0..Action::AGENT.len())])?;
    }
    Ok(EpisodeRecord::from_env(&env, Vec::new()))
}

/// Ours-RP: random long-term goals with the learned stop rule.
pub fn ablation_random_goal<R: Rng>(
    world: &World,
    task: &NavTask,
    nepm: &NepmParams,
    threshold: f64,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    run_episode(world, task, GoalSource::RandomCell, StopRule::Nepm { params: nepm, threshold }, sim, rng)
}

/// Ours-SR: the same training run with the exploration term switched off.
pub fn ablation_sparse_reward(cfg: &GoalTrainConfig, sim: &SimConfig, seed: u64) -> Result<TrainOutput> {
    let mut cfg = *cfg;
    cfg.reward.sparse = true;
    train_goal_policy(&cfg, sim, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierMetrics {
    pub n_episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub cr: f64,
    pub per_tier: BTreeMap<Difficulty, TierMetrics>,
}

fn tier_metrics<'a>(records: impl Iterator<Item = &'a EpisodeRecord>) -> TierMetrics {
    let (mut n, mut s, mut spl, mut c) = (0usize, 0usize, 0.0, 0usize);
    for r in records {
        n += 1;
        s += r.success as usize;
        spl += r.spl_term();
        c += (r.collisions > 0) as usize;
    }
    let d = n.max(1) as f64;
    TierMetrics { n_episodes: n, sr: s as f64 / d, spl: spl / d, cr: c as f64 / d }
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(NavError::InvalidInput("no episode records to score".into()));
    }
    let all = tier_metrics(records.iter());
    let mut per_tier = BTreeMap::new();
    for tier in Difficulty::ALL {
        let m = tier_metrics(records.iter().filter(|r| r.task.difficulty == tier));
        if m.n_episodes > 0 {
            per_tier.insert(tier, m);
        }
    }
    Ok(MetricsReport { n_episodes: all.n_episodes, sr: all.sr, spl: all.spl, cr: all.cr, per_tier })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Trained goal policy with the learned stop rule.
    Policy,
    /// Ours-RP.
    RandomGoal,
    RandomAgent,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Policy => "policy",
            AgentKind::RandomGoal => "random_goal",
            AgentKind::RandomAgent => "random_agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tasks_per_tier: usize,
    pub eval_worlds: usize,
    pub world_seed_base: u64,
    pub agents: Vec<AgentKind>,
    /// Sample goals instead of taking the Gaussian mean.
    pub sample_goals: bool,
    /// Stop probability the ending predictor must reach. Set above 0.5 so
    /// the agent stops inside the success radius, not on its edge.
    pub threshold: f64,
    /// Trajectory SVGs written per agent and tier.
    pub svg_per_tier: usize,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tasks_per_tier: 200,
            eval_worlds: 14,
            world_seed_base: EVAL_WORLD_SEED_BASE,
            agents: vec![AgentKind::Policy, AgentKind::RandomGoal, AgentKind::RandomAgent],
            sample_goals: false,
            threshold: 0.9,
            svg_per_tier: 2,
            workers: 0,
        }
    }
}

/// Trained parameters available to the evaluator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Checkpoints<'a> {
    pub policy: Option<&'a PolicyParams>,
    pub nepm: Option<&'a NepmParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentResult {
    pub agent: AgentKind,
    pub report: MetricsReport,
    pub records: Vec<EpisodeRecord>,
    /// Index into the evaluation worlds for each record.
    pub world_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub worlds: Vec<World>,
    pub results: Vec<AgentResult>,
}

pub fn check_disjoint(train: Range<u64>, eval: Range<u64>) -> Result<()> {
    if train.start < eval.end && eval.start < train.end {
        return Err(NavError::Config(format!(
            "evaluation world seeds {eval:?} overlap training seeds {train:?}"
        )));
    }
    Ok(())
}

/// Fixed tasks: `tasks_per_tier` per tier, round-robin over the worlds.
pub fn sample_eval_tasks(worlds: &[World], cfg: &EvalConfig, sim: &SimConfig, seed: u64) -> Result<Vec<(usize, NavTask)>> {
    let n = cfg.tasks_per_tier;
    map_range(Difficulty::ALL.len() * n, cfg.workers, |i| {
        let (tier, k) = (Difficulty::ALL[i / n], i % n);
        let wi = k % worlds.len();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        Ok((wi, sample_task(&worlds[wi], tier, &sim.panorama, &mut rng)?))
    })
    .into_iter()
    .collect()
}

/// Runs every configured agent on the same held-out tasks.
pub fn evaluate(
    cfg: &EvalConfig,
    sim: &SimConfig,
    train_worlds: usize,
    ckpt: Checkpoints,
    seed: u64,
) -> Result<EvalOutput> {
    if cfg.tasks_per_tier == 0 {
        return Err(NavError::InvalidInput("tasks_per_tier must be positive".into()));
    }
    if cfg.eval_worlds == 0 || cfg.agents.is_empty() {
        return Err(NavError::Config("eval_worlds and agents must be non-empty".into()));
    }
    let eval_range = cfg.world_seed_base..cfg.world_seed_base + cfg.eval_worlds as u64;
    check_disjoint(0..train_worlds as u64, eval_range.clone())?;
    for a in &cfg.agents {
        let missing = match a {
            AgentKind::Policy => ckpt.policy.is_none() || ckpt.nepm.is_none(),
            AgentKind::RandomGoal => ckpt.nepm.is_none(),
            AgentKind::RandomAgent => false,
        };
        if missing {
            return Err(NavError::Config(format!("agent {} needs a checkpoint that was not supplied", a.name())));
        }
    }
    let worlds = generate_worlds(sim, eval_range.start, cfg.eval_worlds, cfg.workers)?;
    let tasks = sample_eval_tasks(&worlds, cfg, sim, derive_seed(seed, 0))?;
    let mut results = Vec::new();
    for (ai, &agent) in cfg.agents.iter().enumerate() {
        let agent_seed = derive_seed(seed, 1 + ai as u64);
        let records: Vec<EpisodeRecord> = map_range(tasks.len(), cfg.workers, |i| {
            let (wi, task) = &tasks[i];
            let world = &worlds[*wi];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(agent_seed, i as u64));
            let rec = match agent {
                AgentKind::Policy => {
                    let goals = GoalSource::Policy { params: ckpt.policy.expect("checked"), greedy: !cfg.sample_goals };
                    let stop = StopRule::Nepm { params: ckpt.nepm.expect("checked"), threshold: cfg.threshold };
                    run_episode(world, task, goals, stop, sim, &mut rng)
                }
                AgentKind::RandomGoal => ablation_random_goal(world, task, ckpt.nepm.expect("checked"), cfg.threshold, sim, &mut rng),
                AgentKind::RandomAgent => baseline_random_agent(world, task, sim, &mut rng),
            }?;
            rec.validate()?;
            Ok(rec)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let report = compute_metrics(&records)?;
        results.push(AgentResult { agent, report, records, world_index: tasks.iter().map(|t| t.0).collect() });
    }
    Ok(EvalOutput { worlds, results })
}

/// One CSV row per agent and tier plus an `all` row.
pub fn metrics_csv(results: &[AgentResult]) -> String {
    let mut s = String::from("agent,tier,n_episodes,sr,spl,cr\n");
    for r in results {
        for (tier, m) in &r.report.per_tier {
            s += &format!("{},{},{},{:.6},{:.6},{:.6}\n", r.agent.name(), tier, m.n_episodes, m.sr, m.spl, m.cr);
        }
        let m = &r.report;
        s += &format!("{},all,{},{:.6},{:.6},{:.6}\n", r.agent.name(), m.n_episodes, m.sr, m.spl, m.cr);
    }
    s
}

#[derive(Debug, Serialize)]
struct EpisodeLine<'a> {
    agent: &'a str,
    index: usize,
    world_seed: u64,
    difficulty: Difficulty,
    start: Pose,
    goal: Pose,
    final_pose: Pose,
    shortest_path_m: f64,
    path_length_m: f64,
    steps: usize,
    collisions: usize,
    stopped: bool,
    success: bool,
    spl: f64,
    long_term_goals: usize,
}

/// Writes `metrics.csv`, `episodes.jsonl` and `trajectories/*.svg`.
pub fn write_eval_outputs(out: &EvalOutput, cfg: &EvalConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("trajectories"))?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(&out.results))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("episodes.jsonl"))?);
    for r in &out.results {
        for (i, rec) in r.records.iter().enumerate() {
            let line = EpisodeLine {
                agent: r.agent.name(),
                index: i,
                world_seed: cfg.world_seed_base + r.world_index[i] as u64,
                difficulty: rec.task.difficulty,
                start: rec.task.start_pose,
                goal: rec.task.goal_pose,
                final_pose: rec.final_pose(),
                shortest_path_m: rec.task.shortest_path_m,
                path_length_m: rec.path_length_m,
                steps: rec.steps,
                collisions: rec.collisions,
                stopped: rec.stopped,
                success: rec.success,
                spl: rec.spl_term(),
                long_term_goals: rec.long_term_goals.len(),
            };
            serde_json::to_writer(&mut f, &line).map_err(|e| NavError::Parse(e.to_string()))?;
            f.write_all(b"\n")?;
        }
        for tier in Difficulty::ALL {
            let picks = r.records.iter().enumerate().filter(|(_, rec)| rec.task.difficulty == tier).take(cfg.svg_per_tier);
            for (i, rec) in picks {
                let svg = svg::render_episode(&out.worlds[r.world_index[i]], rec);
                std::fs::write(dir.join("trajectories").join(format!("{}_{}_{:04}.svg", r.agent.name(), tier, i)), svg)?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::tests::open_room;
    use crate::gridworld::Panorama;

    fn record(success: bool, shortest: f64, path: f64, collisions: usize, tier: Difficulty) -> EpisodeRecord {
        let p = Pose::new(1.0, 1.0, 0.0);
        let pano = Panorama { ranges: vec![], landmark_hits: vec![] };
        EpisodeRecord {
            task: NavTask { start_pose: p, goal_pose: p, goal_panorama: pano, difficulty: tier, shortest_path_m: shortest },
            poses: vec![p],
            actions: vec![Action::Stop],
            collisions,
            stopped: true,
            steps: 1,
            success,
            path_length_m: path,
            long_term_goals: vec![],
        }
    }

    #[test]
    fn spl_arithmetic() {
        assert_eq!(record(true, 4.0, 5.0, 0, Difficulty::Medium).spl_term(), 0.8);
        assert_eq!(record(true, 4.0, 4.0, 0, Difficulty::Medium).spl_term(), 1.0);
        assert_eq!(record(false, 4.0, 4.0, 0, Difficulty::Medium).spl_term(), 0.0);
        let m = compute_metrics(&[record(false, 2.0, 9.0, 1, Difficulty::Easy), record(false, 6.0, 1.0, 0, Difficulty::Hard)]).unwrap();
        assert_eq!((m.sr, m.spl, m.cr), (0.0, 0.0, 0.5));
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn disjointness() {
        assert!(check_disjoint(0..72, 10_000..10_014).is_ok());
        assert!(check_disjoint(0..72, 71..80).is_err());
    }

    #[test]
    fn never_stop_runs_to_the_cap() {
        let world = open_room(40, 40);
        let sim = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let task = sample_task(&world, Difficulty::Easy, &sim.panorama, &mut rng).unwrap();
        let rec = run_episode(&world, &task, GoalSource::RandomCell, StopRule::Never, &sim, &mut rng).unwrap();
        assert_eq!(rec.steps, MAX_EPISODE_STEPS);
        assert!(!rec.success && !rec.stopped);
        assert_eq!(rec.long_term_goals.len(), MAX_EPISODE_STEPS / sim.k_steps);
        rec.validate().unwrap();
    }
}
