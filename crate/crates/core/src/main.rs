use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use goalnav::cli;
use goalnav::config::RunConfig;

#[derive(Parser)]
#[command(name = "goalnav", version, about = "Image-goal navigation in synthetic grid worlds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the long-term goal policy with PPO.
    TrainGoal(Common),
    /// Train the ending predictor on sampled observation pairs.
    TrainEnding(Common),
    /// Evaluate agents on held-out worlds.
    Eval(Common),
    /// Plan on a fully known world and dump the distance field and path.
    Plan(Common),
    /// Render worlds and map channels.
    Viz(Common),
}

fn run(cmd: Cmd) -> goalnav::Result<()> {
    let (Cmd::TrainGoal(c) | Cmd::TrainEnding(c) | Cmd::Eval(c) | Cmd::Plan(c) | Cmd::Viz(c)) = &cmd;
    let cfg = RunConfig::load(&c.config)?;
    let seed = c.seed;
    match cmd {
        Cmd::TrainGoal(_) => {
            let path = cli::train_goal(&cfg, seed)?;
            println!("policy checkpoint: {}", path.display());
        }
        Cmd::TrainEnding(_) => {
            let r = cli::train_ending(&cfg, seed)?;
            println!(
                "held-out accuracy {:.4}  precision {:.4}  recall {:.4}  ({} pairs)",
                r.accuracy, r.precision, r.recall, r.n_test
            );
        }
        Cmd::Eval(_) => {
            for (agent, m) in cli::eval(&cfg, seed)? {
                println!("{:<13} SR {:.3}  SPL {:.3}  CR {:.3}  n={}", agent.name(), m.sr, m.spl, m.cr, m.n_episodes);
            }
        }
        Cmd::Plan(_) => {
            let path = cli::plan(&cfg, seed)?;
            println!("path of {} cells written to {}", path.len(), cfg.run_dir.display());
        }
        Cmd::Viz(_) => {
            for p in cli::viz(&cfg, seed)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
