//! `aoi-uav`: runs the traffic-estimation and UAV-learning stages from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use aoi_core::error::{Error, Result};
use aoi_core::experiment::{self, parse_predictor, ExperimentConfig, PolicyKind};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aoi-uav", version, about = "Multi-UAV age-of-information experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; layered over --preset when both are given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset (default, markov-d7, markov-d10, desk, high-activity, full-scale).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the activation history with hidden events and true probabilities.
    GenerateTraffic,
    /// Run the forward algorithm or fit the LSTM on the history.
    TrainPredictor {
        #[arg(long)]
        predictor: String,
    },
    /// Train the DQN agent on observations from the chosen predictor.
    TrainDqn {
        #[arg(long)]
        predictor: Option<String>,
    },
    /// Search the reward weights, training one agent per visited grid point.
    OptimizeReward {
        #[arg(long)]
        predictor: Option<String>,
    },
    /// Play a policy (trained, rw or greedy) over the evaluation seeds.
    Evaluate {
        #[arg(long)]
        policy: String,
        #[arg(long)]
        predictor: Option<String>,
    },
    /// Tabulate random walk against the genie, FA and LSTM agents.
    Compare,
}

fn config(common: &Common, predictor: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_sources(common.config.as_deref(), common.preset.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(p) = predictor {
        cfg.predictor = parse_predictor(p)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<PathBuf> {
    let c = &cli.common;
    match &cli.command {
        Command::GenerateTraffic => {
            let cfg = config(c, None)?;
            experiment::generate_traffic(&cfg, &cfg.output_dir)
        }
        Command::TrainPredictor { predictor } => {
            let kind = parse_predictor(predictor)?;
            let cfg = config(c, Some(predictor))?;
            experiment::train_predictor(&cfg, &cfg.output_dir, kind)
        }
        Command::TrainDqn { predictor } => {
            let cfg = config(c, predictor.as_deref())?;
            experiment::train_dqn(&cfg, &cfg.output_dir)
        }
        Command::OptimizeReward { predictor } => {
            let cfg = config(c, predictor.as_deref())?;
            experiment::optimize_reward(&cfg, &cfg.output_dir)
        }
        Command::Evaluate { policy, predictor } => {
            let policy = PolicyKind::parse(policy)?;
            let cfg = config(c, predictor.as_deref())?;
            experiment::evaluate(&cfg, &cfg.output_dir, policy)
        }
        Command::Compare => {
            let cfg = config(c, None)?;
            experiment::compare(&cfg, &cfg.output_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(Error::Config(String::new()).exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
