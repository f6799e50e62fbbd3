use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::observation::{encode_observation, observation_len};
use super::replay::{Batch, Experience, ReplayBuffer};
use crate::env::{Env, JointAction, Move, UavAction};
use crate::error::{Error, Result};
use crate::feed::TrafficSource;
use crate::neural::{Activation, Adam, AdamConfig, Mlp};

/// How the last transition of a training episode is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeEnd {
    /// Battery depletion is absorbing: the TD target is the bare reward.
    Absorbing,
    /// The UAVs fly home and refill while ages and traffic keep evolving. The
    /// rewards of that gap are folded into the last transition, which then
    /// bootstraps from the first state of the next episode.
    Recharge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Environment steps between copies of the online network into the target network.
    pub target_update: usize,
    pub batch_size: usize,
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Rewards are multiplied by this before they enter the replay buffer.
    pub reward_scale: f64,
    /// Safety cap on the length of one training episode.
    pub max_episode_slots: usize,
    pub episode_end: EpisodeEnd,
    /// Quadratic TD loss inside this error, linear outside. `None` keeps the plain squared error.
    pub huber_delta: Option<f64>,
    /// Episodes between greedy validation rollouts; the best-scoring network is
    /// returned. Zero returns the final network.
    pub select_every: usize,
    /// Length of one validation rollout in slots.
    pub select_slots: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 0.0004,
            epsilon_start: 1.0,
            epsilon_decay: 0.995,
            epsilon_floor: 0.01,
            target_update: 1000,
            batch_size: 64,
            episodes: 2000,
            hidden: vec![64, 128, 128, 64],
            replay_capacity: 100_000,
            reward_scale: 0.01,
            max_episode_slots: 1000,
            episode_end: EpisodeEnd::Recharge,
            huber_delta: None,
            select_every: 0,
            select_slots: 1000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::Config(format!("epsilon decay must lie in (0, 1], got {}", self.epsilon_decay)));
        }
        if !((0.0..=1.0).contains(&self.epsilon_start) && (0.0..=1.0).contains(&self.epsilon_floor)) {
            return Err(Error::Config("epsilon start and floor must be probabilities".into()));
        }
        if self.target_update == 0 || self.batch_size == 0 || self.replay_capacity == 0 || self.max_episode_slots == 0 {
            return Err(Error::Config("target update, batch size, replay capacity and episode cap must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid hidden sizes {:?}", self.hidden)));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::Config("reward scale must be positive".into()));
        }
        if self.select_every > 0 && self.select_slots == 0 {
            return Err(Error::Config("validation rollouts need a positive length".into()));
        }
        if let Some(h) = self.huber_delta {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("huber delta must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// `max(floor, start · decay^episode)`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_floor)
    }
}

pub fn q_network<R: Rng + ?Sized>(inputs: usize, outputs: usize, hidden: &[usize], rng: &mut R) -> Result<Mlp<f32>> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(inputs);
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)
}

/// Lowest index among the maxima.
pub fn argmax(values: ArrayView1<f32>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: a uniform action with probability ε, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(q_net: &Mlp<f32>, obs: &[f32], epsilon: f64, rng: &mut R) -> Result<usize> {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        Ok(rng.random_range(0..q_net.outputs()))
    } else {
        let q = q_net.forward(ArrayView1::from(obs))?;
        Ok(argmax(q.view()))
    }
}

/// ε-greedy choice for every UAV in index order. A greedy UAV never requests a
/// device already requested by a lower-index UAV, since conflict resolution
/// would void that grant; exploratory draws stay uniform over all actions.
pub fn select_joint_action<R: Rng + ?Sized>(q_net: &Mlp<f32>, observations: &[Vec<f32>], epsilon: f64, rng: &mut R) -> Result<Vec<usize>> {
    let actions = q_net.outputs();
    let devices = actions / Move::ALL.len() - 1;
    let mut taken = vec![false; devices];
    let mut chosen = Vec::with_capacity(observations.len());
    for obs in observations {
        let explore = rng.random::<f64>() < epsilon;
        let a = if explore {
            rng.random_range(0..actions)
        } else {
            let q = q_net.forward(ArrayView1::from(obs.as_slice()))?;
            let mut best: Option<usize> = None;
            for a in 0..actions {
                let free = UavAction::from_index(a, devices)?.schedule.is_none_or(|d| !taken[d]);
                if free && best.is_none_or(|b| q[a] > q[b]) {
                    best = Some(a);
                }
            }
            best.expect("idle actions are always free")
        };
        if let Some(d) = UavAction::from_index(a, devices)?.schedule {
            taken[d] = true;
        }
        chosen.push(a);
    }
    Ok(chosen)
}

/// `y = r + γ^k max_a Q(s', a | θ₂)` for a transition spanning `k` slots, or `y = r`
/// at terminal transitions.
pub fn td_targets(rewards: &[f32], terminals: &[bool], spans: &[u32], next_q: &Array2<f32>, gamma: f64) -> Vec<f32> {
    rewards
        .iter()
        .zip(terminals)
        .zip(spans)
        .zip(next_q.outer_iter())
        .map(|(((&r, &t), &k), q)| if t { r } else { r + gamma.powi(k as i32) as f32 * q[argmax(q)] })
        .collect()
}

/// One Adam step on the TD error of the taken actions. The loss is the mean
/// squared error, or the Huber loss when `huber_delta` is given. Returns the loss.
pub fn dqn_update(q_net: &mut Mlp<f32>, target: &Mlp<f32>, adam: &mut Adam<f32>, batch: &Batch, gamma: f64, huber_delta: Option<f64>) -> Result<f32> {
    let n = batch.actions.len();
    let w = q_net.inputs();
    let s = Array2::from_shape_vec((n, w), batch.states.clone()).map_err(|e| Error::Numerical(e.to_string()))?;
    let s2 = Array2::from_shape_vec((n, w), batch.next_states.clone()).map_err(|e| Error::Numerical(e.to_string()))?;
    let next_q = target.forward_batch(s2.view())?;
    let y = td_targets(&batch.rewards, &batch.terminals, &batch.spans, &next_q, gamma);
    let cache = q_net.forward_cached(s.view())?;
    let mut d = Array2::<f32>::zeros(cache.output().raw_dim());
    let mut loss = 0.0f32;
    for (i, (&a, &yi)) in batch.actions.iter().zip(&y).enumerate() {
        let err = cache.output()[[i, a]] - yi;
        let (l, g) = match huber_delta.map(|h| h as f32) {
            Some(h) if err.abs() > h => (h * (2.0 * err.abs() - h), 2.0 * h * err.signum()),
            _ => (err * err, 2.0 * err),
        };
        loss += l;
        d[[i, a]] = g / n as f32;
    }
    loss /= n as f32;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite TD loss".into()));
    }
    let (grads, _) = q_net.backward(&cache, d.view());
    adam.step(q_net, &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    pub reward: f64,
    pub slots: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub q_net: Mlp<f32>,
    pub optimizer: Adam<f32>,
    pub log: Vec<EpisodeLog>,
    pub steps: usize,
    pub target_updates: usize,
    /// Validation scores as `(episode, score)`, empty when selection is off.
    pub validation: Vec<(usize, f64)>,
    /// Episode after which the returned network was taken.
    pub selected_episode: usize,
}

/// Random streams used by training.
pub struct TrainRngs<'a, R: ?Sized> {
    pub init: &'a mut R,
    pub exploration: &'a mut R,
    pub replay: &'a mut R,
}

/// Trains one parameter-shared Q-network for all UAVs; every UAV's transition
/// is stored separately with the shared slot reward.
pub fn train<F: TrafficSource, R: Rng + ?Sized>(env: &mut Env<F>, cfg: &AgentConfig, rngs: TrainRngs<'_, R>) -> Result<TrainedAgent> {
    train_with_selection(env, cfg, rngs, |_| Ok(0.0))
}

/// As [`train`], scoring the network with `score` every `select_every`
/// episodes and after the last one. The highest score wins; ties go to the later network.
pub fn train_with_selection<F: TrafficSource, R: Rng + ?Sized, S: FnMut(&Mlp<f32>) -> Result<f64>>(
    env: &mut Env<F>,
    cfg: &AgentConfig,
    rngs: TrainRngs<'_, R>,
    mut score: S,
) -> Result<TrainedAgent> {
    cfg.validate()?;
    let uavs = env.config().uavs;
    let devices = env.devices();
    let width = observation_len(uavs, devices);
    let actions = UavAction::space(devices);
    let mut q_net = q_network(width, actions, &cfg.hidden, rngs.init)?;
    let mut target = q_net.clone();
    let mut adam = Adam::new(&q_net, AdamConfig::with_lr(cfg.lr));
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, width)?;
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut steps = 0usize;
    let mut target_updates = 0usize;
    let mut validation = Vec::new();
    let mut best: Option<(f64, usize, Mlp<f32>)> = None;

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        env.reset()?;
        let mut obs: Vec<Vec<f32>> = (0..uavs).map(|u| encode_observation(env.state(), u, env.config())).collect();
        let mut total = 0.0;
        let mut slots = 0;
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        loop {
            let chosen = select_joint_action(&q_net, &obs, epsilon, rngs.exploration)?;
            let joint = JointAction(chosen.iter().map(|&a| UavAction::from_index(a, devices)).collect::<Result<_>>()?);
            let out = env.step(&joint)?;
            slots += 1;
            total += out.reward;
            let is_last = out.terminal || slots >= cfg.max_episode_slots;
            let mut value = out.reward;
            let mut span = 1u32;
            if out.terminal && cfg.episode_end == EpisodeEnd::Recharge {
                for r in env.recharge_all()? {
                    value += cfg.gamma.powi(span as i32) * r;
                    span += 1;
                }
                env.reset()?;
            }
            let next_obs: Vec<Vec<f32>> = (0..uavs).map(|u| encode_observation(env.state(), u, env.config())).collect();
            let scaled = (value * cfg.reward_scale) as f32;
            for u in 0..uavs {
                buffer.push(&Experience {
                    state: std::mem::take(&mut obs[u]),
                    action: chosen[u],
                    reward: scaled,
                    next_state: next_obs[u].clone(),
                    terminal: out.terminal && cfg.episode_end == EpisodeEnd::Absorbing,
                    span,
                })?;
            }
            obs = next_obs;
            if buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(cfg.batch_size, rngs.replay)?;
                let loss = dqn_update(&mut q_net, &target, &mut adam, &batch, cfg.gamma, cfg.huber_delta).map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("{m} (episode {}, step {})", episode + 1, steps + 1)),
                    other => other,
                })?;
                loss_sum += loss as f64;
                updates += 1;
            }
            steps += 1;
            if steps.is_multiple_of(cfg.target_update) {
                target = q_net.clone();
                target_updates += 1;
            }
            if is_last {
                break;
            }
        }
        log.push(EpisodeLog {
            episode: episode + 1,
            epsilon,
            reward: total,
            slots,
            mean_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
        });
        let done = episode + 1;
        if cfg.select_every > 0 && (done % cfg.select_every == 0 || done == cfg.episodes) {
            let v = score(&q_net)?;
            if best.as_ref().is_none_or(|(b, _, _)| v >= *b) {
                best = Some((v, done, q_net.clone()));
            }
            validation.push((done, v));
        }
    }
    let (q_net, selected_episode) = match best {
        Some((_, e, net)) => (net, e),
        None => (q_net, cfg.episodes),
    };
    Ok(TrainedAgent {
        q_net,
        optimizer: adam,
        log,
        steps,
        target_updates,
        validation,
        selected_episode,
    })
}
