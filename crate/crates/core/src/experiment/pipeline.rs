//! The stages of an experiment as plain functions: traffic history, predictor
//! training, agent training and evaluation. The subcommands persist what these
//! return; tests call them directly.
//!
//! Every stage draws from its own branch of the master [`SeedTree`], so stages
//! can be rerun in any order and still see the same random numbers.

use crate::dqn::{run_policy, train_with_selection, Policy, Trace, TrainRngs, TrainedAgent};
use crate::env::{Env, EnvMode};
use crate::error::{Error, Result};
use crate::feed::{FeedPredictor, PredictorKind, TrafficFeed};
use crate::kpi::KpiSummary;
use crate::lstm_predictor::{build_dataset, TrainedLstm};
use crate::meta::{InnerKpis, MetaAction};
use crate::neural::{LstmNetwork, Mlp};
use crate::rng::{SeedTree, Stream};
use crate::fa::FaTracker;
use crate::traffic::{activation_probs, TrafficProcess, TrafficSlot};

use super::ExperimentConfig;

/// Seed-tree branches, one per stage.
pub mod branch {
    pub const HISTORY: u64 = 1;
    pub const TRAIN_FEED: u64 = 2;
    pub const LSTM: u64 = 3;
    pub const AGENT: u64 = 4;
    pub const META: u64 = 5;
    pub const VALIDATION: u64 = 6;
    /// Evaluation seed `s` uses branch `EVAL + s`.
    pub const EVAL: u64 = 100;
}

/// The slots written by `generate-traffic` and used to fit the LSTM.
pub fn history(cfg: &ExperimentConfig, tree: &SeedTree) -> Result<Vec<TrafficSlot>> {
    let seeds = tree.child(branch::HISTORY);
    let mut process = TrafficProcess::stationary(cfg.model()?, seeds.stream(Stream::Events), seeds.stream(Stream::Activations));
    Ok((0..cfg.traffic.history_slots).map(|_| process.advance()).collect())
}

/// Forward-algorithm forecasts over a traffic history, paired with the true
/// activation probabilities of each forecast slot.
pub fn fa_forecasts(cfg: &ExperimentConfig, slots: &[TrafficSlot]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let model = cfg.model()?;
    let mut tracker = FaTracker::<f64>::new(model.clone(), cfg.fa_mode)?;
    let mut predicted = Vec::with_capacity(slots.len());
    let mut truth = Vec::with_capacity(slots.len());
    for s in slots {
        predicted.push(tracker.forecast().probs);
        truth.push(activation_probs(&s.events, &model)?);
        tracker.observe(&s.activity)?;
    }
    Ok((predicted, truth))
}

/// Fits the LSTM predictor on the traffic history.
pub fn train_lstm(cfg: &ExperimentConfig, tree: &SeedTree) -> Result<TrainedLstm> {
    let slots = history(cfg, tree)?;
    let activity: Vec<_> = slots.into_iter().map(|s| s.activity).collect();
    let dataset = build_dataset(&activity, cfg.lstm.window, cfg.lstm.train_fraction)?;
    let seeds = tree.child(branch::LSTM);
    let (mut init, mut shuffle) = (seeds.stream(Stream::Init), seeds.stream(Stream::Dataset));
    crate::lstm_predictor::train(&dataset, &cfg.lstm, tree.master(), &mut init, &mut shuffle)
}

/// Wraps a stored LSTM network so it can drive a feed.
pub fn lstm_predictor(cfg: &ExperimentConfig, network: LstmNetwork<f32>) -> TrainedLstm {
    TrainedLstm {
        network,
        window: cfg.lstm.window,
        initial_train_bce: f64::NAN,
        train_bce: Vec::new(),
        val_bce: Vec::new(),
        val_accuracy: Vec::new(),
        best_epoch: 0,
    }
}

/// A traffic feed on the given branch, forecasting with `predictor`.
pub fn feed(cfg: &ExperimentConfig, seeds: &SeedTree, predictor: PredictorKind, lstm: Option<&TrainedLstm>) -> Result<TrafficFeed> {
    let p = match predictor {
        PredictorKind::Fa => FeedPredictor::Fa(cfg.fa_mode),
        PredictorKind::Genie => FeedPredictor::Genie,
        PredictorKind::Lstm => FeedPredictor::Lstm(lstm.ok_or_else(|| Error::Dependency("the LSTM feed needs a trained LSTM predictor".into()))?),
    };
    TrafficFeed::new(cfg.model()?, seeds, p, cfg.traffic.warmup, cfg.traffic.feed_block)
}

/// Trains a DQN agent whose observations carry `predictor`'s forecasts. With
/// snapshot selection on, each candidate network plays the same greedy rollout
/// on validation traffic and is scored by its accumulated reward.
pub fn train_agent(cfg: &ExperimentConfig, tree: &SeedTree, predictor: PredictorKind, lstm: Option<&TrainedLstm>) -> Result<TrainedAgent> {
    let feed_train = feed(cfg, &tree.child(branch::TRAIN_FEED), predictor, lstm)?;
    let mut env = Env::new(cfg.world.clone(), feed_train, EnvMode::Training)?;
    let seeds = tree.child(branch::AGENT);
    let (mut init, mut exploration, mut replay) = (seeds.stream(Stream::Init), seeds.stream(Stream::Exploration), seeds.stream(Stream::Replay));
    let validation = tree.child(branch::VALIDATION);
    let score = |net: &Mlp<f32>| -> Result<f64> {
        let mut v_env = Env::new(cfg.world.clone(), feed(cfg, &validation, predictor, lstm)?, EnvMode::Evaluation)?;
        let trace = run_policy(&Policy::Trained(net), &mut v_env, cfg.agent.select_slots, &mut validation.stream(Stream::Policy))?;
        Ok(trace.records.iter().map(|r| r.reward).sum())
    };
    train_with_selection(
        &mut env,
        &cfg.agent,
        TrainRngs {
            init: &mut init,
            exploration: &mut exploration,
            replay: &mut replay,
        },
        score,
    )
}

/// Plays `policy` for the evaluation horizon on evaluation seed `eval_seed`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    tree: &SeedTree,
    eval_seed: u64,
    policy: &Policy<'_>,
    predictor: PredictorKind,
    lstm: Option<&TrainedLstm>,
) -> Result<Trace> {
    let seeds = tree.child(branch::EVAL + eval_seed);
    let feed = feed(cfg, &seeds, predictor, lstm)?;
    let mut env = Env::new(cfg.world.clone(), feed, EnvMode::Evaluation)?;
    run_policy(policy, &mut env, cfg.evaluation.slots, &mut seeds.stream(Stream::Policy))
}

/// An agent trained and evaluated inside reward-weight optimization.
pub struct InnerRun {
    pub kpis: InnerKpis,
    pub agent: TrainedAgent,
}

/// Trains and evaluates one agent under the reward weights `action` on its own
/// branch of the meta seed tree.
pub fn inner_run(cfg: &ExperimentConfig, tree: &SeedTree, step: usize, action: MetaAction, lstm: Option<&TrainedLstm>) -> Result<InnerRun> {
    let mut inner = cfg.clone();
    inner.world.zeta1 = action.zeta1;
    inner.world.zeta2 = action.zeta2;
    let seeds = tree.child(branch::META).child(step as u64);
    let agent = train_agent(&inner, &seeds, cfg.predictor, lstm)?;
    let trace = evaluate(&inner, &seeds, 0, &Policy::Trained(&agent.q_net), cfg.predictor, lstm)?;
    let k = KpiSummary::from_trace(&trace)?;
    Ok(InnerRun {
        kpis: InnerKpis {
            avg_aoi: k.ergodic_age,
            acc_regret: k.accumulated_regret,
            avg_power: k.ergodic_power,
        },
        agent,
    })
}
