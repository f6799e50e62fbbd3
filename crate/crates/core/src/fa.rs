//! Exact forward-algorithm inference over the joint event state.
//!
//! The belief is materialized over all `2^K` joint states and renormalized
//! after every observation; the discarded normalizers are accumulated in
//! `log_scale`, so `exp(log_scale) * weights` is the unnormalized joint
//! `Pr(S(t), W(1:t))`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::traffic::{emission_likelihood, ActivationModel, ActivationVector, EventState};

/// Largest event count whose joint state space is materialized.
pub const DEFAULT_MAX_EVENTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief<T> {
    weights: Vec<T>,
    log_scale: T,
    events: usize,
}

/// How next-slot probabilities are derived from the belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Condition on the single most likely joint state.
    #[default]
    Map,
    /// Average the per-state prediction over the whole belief.
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaPrediction<T> {
    pub probs: Vec<T>,
    pub map_state: EventState,
}

impl<T: Scalar> Belief<T> {
    fn check_events(events: usize, max_events: usize) -> Result<()> {
        if events > max_events {
            return Err(Error::Config(format!(
                "{events} events exceed the joint-state guard of {max_events}"
            )));
        }
        Ok(())
    }

    /// Product of the chains' stationary laws.
    pub fn stationary(model: &ActivationModel) -> Result<Self> {
        Self::stationary_with_guard(model, DEFAULT_MAX_EVENTS)
    }

    pub fn stationary_with_guard(model: &ActivationModel, max_events: usize) -> Result<Self> {
        let k = model.events();
        Self::check_events(k, max_events)?;
        let on: Vec<f64> = model.chains().iter().map(|c| c.stationary_on()).collect();
        let weights = (0..1usize << k)
            .map(|s| {
                let p: f64 = (0..k)
                    .map(|j| if s >> j & 1 == 1 { on[j] } else { 1.0 - on[j] })
                    .product();
                T::lit(p)
            })
            .collect();
        Ok(Self {
            weights,
            log_scale: T::zero(),
            events: k,
        })
    }

    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!("belief length {n} is not a power of two")));
        }
        if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
            return Err(Error::Config("belief weights must be finite and nonnegative".into()));
        }
        let events = n.trailing_zeros() as usize;
        Self::check_events(events, DEFAULT_MAX_EVENTS)?;
        let mut belief = Self {
            weights,
            log_scale: T::zero(),
            events,
        };
        belief.normalize()?;
        belief.log_scale = T::zero();
        Ok(belief)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_scale(&self) -> T {
        self.log_scale
    }

    pub fn events(&self) -> usize {
        self.events
    }

    fn normalize(&mut self) -> Result<()> {
        let total: T = self.weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::InconsistentObservation);
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self.log_scale += total.ln();
        Ok(())
    }

    /// Pushes the belief one slot forward through the chains, without an observation.
    pub fn propagate(&self, model: &ActivationModel) -> Result<Self> {
        check_dim("belief events", model.events(), self.events)?;
        let mut w = self.weights.clone();
        for (k, chain) in model.chains().iter().enumerate() {
            let on = T::lit(chain.eps_on());
            let off = T::lit(chain.eps_off());
            let bit = 1usize << k;
            for low in (0..w.len()).filter(|s| s & bit == 0) {
                let (w0, w1) = (w[low], w[low | bit]);
                w[low] = (T::one() - on) * w0 + off * w1;
                w[low | bit] = on * w0 + (T::one() - off) * w1;
            }
        }
        Ok(Self {
            weights: w,
            log_scale: self.log_scale,
            events: self.events,
        })
    }

    /// One forward recursion: propagate, weight by `Pr(W(t) | S(t))`, renormalize.
    pub fn forward_step(&self, obs: &ActivationVector, model: &ActivationModel) -> Result<Self> {
        check_dim("observation", model.devices(), obs.len())?;
        let mut next = self.propagate(model)?;
        for (s, w) in next.weights.iter_mut().enumerate() {
            let state = EventState::from_index(s, self.events);
            *w *= T::lit(emission_likelihood(obs, &state, model)?);
        }
        next.normalize()?;
        Ok(next)
    }

    /// Most likely joint state; ties go to the lowest joint index.
    pub fn map_state(&self) -> EventState {
        let mut best = 0;
        for (s, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = s;
            }
        }
        EventState::from_index(best, self.events)
    }

    pub fn predict_next(&self, model: &ActivationModel) -> Result<FaPrediction<T>> {
        self.predict_next_with(model, PredictMode::Map)
    }

    pub fn predict_next_with(&self, model: &ActivationModel, mode: PredictMode) -> Result<FaPrediction<T>> {
        check_dim("belief events", model.events(), self.events)?;
        let map_state = self.map_state();
        let probs = match mode {
            PredictMode::Map => next_slot_probs(&map_state, model),
            PredictMode::Marginal => {
                let mut acc = vec![T::zero(); model.devices()];
                for (s, w) in self.weights.iter().enumerate() {
                    if *w == T::zero() {
                        continue;
                    }
                    let state = EventState::from_index(s, self.events);
                    for (a, p) in acc.iter_mut().zip(next_slot_probs::<T>(&state, model)) {
                        *a += *w * p;
                    }
                }
                acc
            }
        };
        Ok(FaPrediction { probs, map_state })
    }
}

/// `Ỹ_d = 1 - Π_k c_k` given the event state at the current slot.
pub fn next_slot_probs<T: Scalar>(state: &EventState, model: &ActivationModel) -> Vec<T> {
    (0..model.devices())
        .map(|d| {
            let silent: f64 = state
                .0
                .iter()
                .enumerate()
                .map(|(k, &on)| {
                    let chain = model.chain(k);
                    let miss = 1.0 - model.influence(d, k);
                    if on {
                        chain.eps_off() + (1.0 - chain.eps_off()) * miss
                    } else {
                        1.0 - chain.eps_on() + chain.eps_on() * miss
                    }
                })
                .product();
            T::lit(1.0 - silent)
        })
        .collect()
}

/// Per-slot `(1/D) Σ_d (Y_d - Ỹ_d)²`.
pub fn slot_mse<T: Scalar>(predicted: &[T], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("no devices to score"));
    }
    let sum: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| (y - p.as_f64()).powi(2))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Per-slot MSE averaged over the horizon.
pub fn fa_mse<T: Scalar>(predicted: &[FaPrediction<T>], truth: &[Vec<f64>]) -> Result<f64> {
    let series = fa_mse_series(predicted, truth)?;
    if series.is_empty() {
        return Err(Error::Empty("no slots to score"));
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

pub fn fa_mse_series<T: Scalar>(predicted: &[FaPrediction<T>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| slot_mse(&p.probs, y))
        .collect()
}

/// Streaming FA predictor: feed each observed slot, read the next-slot forecast.
#[derive(Debug, Clone)]
pub struct FaTracker<T> {
    model: ActivationModel,
    belief: Belief<T>,
    mode: PredictMode,
}

impl<T: Scalar> FaTracker<T> {
    pub fn new(model: ActivationModel, mode: PredictMode) -> Result<Self> {
        let belief = Belief::stationary(&model)?;
        Ok(Self { model, belief, mode })
    }

    pub fn belief(&self) -> &Belief<T> {
        &self.belief
    }

    /// Forecast for the slot after the last observation. Before any
    /// observation the belief is over the current slot's predecessor.
    pub fn forecast(&self) -> FaPrediction<T> {
        self.belief
            .predict_next_with(&self.model, self.mode)
            .expect("tracker dimensions fixed at construction")
    }

    pub fn observe(&mut self, obs: &ActivationVector) -> Result<()> {
        self.belief = self.belief.forward_step(obs, &self.model)?;
        Ok(())
    }
}
