//! Subcommand implementations behind the `goalnav` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::ending::{build_pair_dataset, collect_trajectories, train_nepm, write_pairs_jsonl, NepmParams, NepmReport};
use crate::error::{NavError, Result};
use crate::fmm::{extract_path, solve_eikonal};
use crate::goal_policy::train::{generate_worlds, train_goal_policy_with, write_train_log, TRAIN_WORLD_SEED_BASE};
use crate::goal_policy::PolicyParams;
use crate::grid::Cell;
use crate::gridworld::{jittered_point, render_panorama, Pose, World};
use crate::harness::{evaluate, svg, write_eval_outputs, AgentKind, Checkpoints, MetricsReport};
use crate::mapping::{assemble_channels, export_channels, write_pgm, OccupancyMap};
use crate::parallel::derive_seed;

/// Trains the goal policy; writes `metrics.csv` (training curve) and
/// `checkpoints/policy.ckpt`.
pub fn train_goal(cfg: &RunConfig, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.run_dir)?;
    let every = (cfg.goal.updates / 20).max(1);
    let out = train_goal_policy_with(&cfg.goal, &cfg.sim, seed, |row, _| {
        if (row.update + 1) % every == 0 {
            eprintln!(
                "update {:>5}  reward {:>8.3}  policy {:>8.4}  value {:>9.3}  entropy {:>7.3}",
                row.update + 1,
                row.mean_reward,
                row.policy_loss,
                row.value_loss,
                row.entropy
            );
        }
    })?;
    write_train_log(&out.log, &cfg.run_dir.join("metrics.csv"))?;
    let path = cfg.policy_checkpoint();
    Checkpoint::from(&out.params).save(&path)?;
    Ok(path)
}

/// Collects planner rollouts on the training worlds, samples and saves the
/// pair dataset, trains the ending predictor and saves its checkpoint.
pub fn train_ending(cfg: &RunConfig, seed: u64) -> Result<NepmReport> {
    std::fs::create_dir_all(&cfg.run_dir)?;
    let w = cfg.workers();
    let e = &cfg.ending;
    let worlds = generate_worlds(&cfg.sim, TRAIN_WORLD_SEED_BASE, cfg.goal.train_worlds.max(1), w)?;
    let trajs = collect_trajectories(&worlds, &cfg.sim, e.trajectories, e.trajectory_steps, derive_seed(seed, 0), w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let pairs = build_pair_dataset(&trajs, e, &mut rng)?;
    write_pairs_jsonl(&pairs, &cfg.run_dir.join("pairs.jsonl"))?;
    let mut params = NepmParams::new(e.arch, cfg.sim.panorama.max_range_m, derive_seed(seed, 2));
    let report = train_nepm(&pairs, &mut params, e, &mut rng)?;
    let mut f = std::fs::File::create(cfg.run_dir.join("metrics.csv"))?;
    writeln!(f, "n_train,n_test,accuracy,precision,recall,first_loss,final_loss,asymmetry")?;
    writeln!(
        f,
        "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        report.n_train,
        report.n_test,
        report.accuracy,
        report.precision,
        report.recall,
        report.first_loss,
        report.final_loss,
        report.asymmetry
    )?;
    Checkpoint::from(&params).save(&cfg.nepm_checkpoint())?;
    Ok(report)
}

fn load_policy(path: &Path) -> Result<PolicyParams> {
    if !path.exists() {
        return Err(NavError::Config(format!("missing policy checkpoint {}", path.display())));
    }
    Checkpoint::load(path)?.try_into()
}

fn load_nepm(path: &Path) -> Result<NepmParams> {
    if !path.exists() {
        return Err(NavError::Config(format!("missing ending checkpoint {}", path.display())));
    }
    Checkpoint::load(path)?.try_into()
}

/// Evaluates the configured agents from the run's checkpoints.
pub fn eval(cfg: &RunConfig, seed: u64) -> Result<Vec<(AgentKind, MetricsReport)>> {
    let agents = &cfg.eval.agents;
    let policy = agents.contains(&AgentKind::Policy).then(|| load_policy(&cfg.policy_checkpoint())).transpose()?;
    let needs_nepm = agents.iter().any(|a| *a != AgentKind::RandomAgent);
    let nepm = needs_nepm.then(|| load_nepm(&cfg.nepm_checkpoint())).transpose()?;
    let ckpt = Checkpoints { policy: policy.as_ref(), nepm: nepm.as_ref() };
    let out = evaluate(&cfg.eval, &cfg.sim, cfg.goal.train_worlds, ckpt, seed)?;
    write_eval_outputs(&out, &cfg.eval, &cfg.run_dir)?;
    Ok(out.results.into_iter().map(|r| (r.agent, r.report)).collect())
}

fn load_world(file: &Option<PathBuf>, cfg: &RunConfig, seed: u64) -> Result<World> {
    match file {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| NavError::Config(format!("cannot read world {}: {e}", p.display())))?
            .parse(),
        None => World::generate(&cfg.sim.world, seed),
    }
}

fn pick_cell(world: &World, given: Option<[usize; 2]>, rng: &mut ChaCha8Rng) -> Result<Cell> {
    match given {
        Some([row, col]) => {
            let c = Cell::new(row, col);
            if !world.obstacle_grid().contains(c) || world.is_occupied(c) {
                return Err(NavError::InvalidInput(format!("cell {c:?} is outside the world or occupied")));
            }
            Ok(c)
        }
        None => {
            let comp = world.free_component();
            Ok(comp[rng.random_range(0..comp.len())])
        }
    }
}

#[derive(serde::Serialize)]
struct PathLine {
    step: usize,
    index: usize,
    row: usize,
    col: usize,
}

/// Distance field from the goal (`plan_distance.pgm`) and the descent path
/// from the start (`plan_path.jsonl`, one cell index per line).
pub fn plan(cfg: &RunConfig, seed: u64) -> Result<Vec<Cell>> {
    std::fs::create_dir_all(&cfg.run_dir)?;
    let world = load_world(&cfg.plan.world, cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let start = pick_cell(&world, cfg.plan.start, &mut rng)?;
    let goal = pick_cell(&world, cfg.plan.goal, &mut rng)?;
    let field = solve_eikonal(world.obstacle_grid(), goal, world.cell_size())?;
    write_pgm(field.values(), &cfg.run_dir.join("plan_distance.pgm"))?;
    let path = extract_path(&field, start)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(cfg.run_dir.join("plan_path.jsonl"))?);
    let grid = world.obstacle_grid();
    for (step, c) in path.iter().enumerate() {
        let line = PathLine { step, index: grid.index(*c), row: c.row, col: c.col };
        serde_json::to_writer(&mut f, &line).map_err(|e| NavError::Parse(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(path)
}

/// World SVG and ASCII dumps plus the map channels after one scan from a
/// random free pose, under `viz/`.
pub fn viz(cfg: &RunConfig, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = cfg.run_dir.join("viz");
    std::fs::create_dir_all(&dir)?;
    let worlds: Vec<(String, World)> = match &cfg.viz.world {
        Some(_) => vec![("file".into(), load_world(&cfg.viz.world, cfg, seed)?)],
        None => (0..cfg.viz.count as u64)
            .map(|i| Ok((format!("seed{}", seed + i), World::generate(&cfg.sim.world, seed + i)?)))
            .collect::<Result<_>>()?,
    };
    let mut written = Vec::new();
    for (i, (name, world)) in worlds.iter().enumerate() {
        let svg_path = dir.join(format!("world_{name}.svg"));
        std::fs::write(&svg_path, svg::render_world(world))?;
        std::fs::write(dir.join(format!("world_{name}.txt")), world.to_ascii())?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let comp = world.free_component();
        let (x, y) = jittered_point(comp[rng.random_range(0..comp.len())], world.cell_size(), &mut rng);
        let pose = Pose::new(x, y, 0.0);
        let mut map = OccupancyMap::for_world(world);
        map.integrate_scan(&pose, &render_panorama(world, &pose, &cfg.sim.panorama), &cfg.sim.panorama)?;
        export_channels(&assemble_channels(&map, &pose)?, &dir, &format!("map_{name}"))?;
        written.push(svg_path);
    }
    Ok(written)
}
