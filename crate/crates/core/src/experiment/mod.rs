//! Experiment configuration, presets and the run pipeline behind the command-line tool.

pub mod artifacts;
pub mod commands;
mod config;
pub mod pipeline;

pub use artifacts::{Manifest, RunDir};
pub use commands::{compare, evaluate, generate_traffic, optimize_reward, parse_predictor, train_dqn, train_predictor, PolicyKind};
pub use config::{
    preset_config, EvaluationConfig, ExperimentConfig, GeneratorSpec, HotSpec, Layout, ModelSpec, ScenarioConfig,
    TrafficRunConfig, PRESETS,
};
