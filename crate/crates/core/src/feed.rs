//! The traffic stream seen by the environment: ground truth for every slot
//! together with what the chosen predictor expected for it.
//!
//! Traffic is exogenous to the UAVs and keeps running across episodes. Slots
//! are produced in blocks so that LSTM inference runs as batched matrix
//! products.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fa::{FaTracker, PredictMode};
use crate::lstm_predictor::{predict_batch, TrainedLstm};
use crate::neural::LstmNetwork;
use crate::rng::{SeedTree, SimRng, Stream};
use crate::traffic::{activation_probs, ActivationModel, ActivationVector, EventState, TrafficProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Fa,
    Lstm,
    Genie,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Fa => "fa",
            PredictorKind::Lstm => "lstm",
            PredictorKind::Genie => "genie",
        }
    }
}

/// Everything the environment needs about slot `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedSlot {
    pub slot: u64,
    pub events: EventState,
    pub activity: ActivationVector,
    /// Exact activation probabilities under `events`.
    pub truth_probs: Vec<f64>,
    /// Forecast for this slot made from activity up to the previous slot
    /// (the true activity for the genie).
    pub predicted: Vec<f64>,
}

/// A source of slots for the environment.
pub trait TrafficSource {
    fn devices(&self) -> usize;
    fn next_slot(&mut self) -> Result<FeedSlot>;
}

enum Forecaster {
    Fa(Box<FaTracker<f64>>),
    Lstm { net: LstmNetwork<f32>, window: usize },
    Genie,
}

pub struct TrafficFeed {
    process: TrafficProcess<SimRng>,
    forecaster: Forecaster,
    history: VecDeque<ActivationVector>,
    queue: VecDeque<FeedSlot>,
    block: usize,
    next_slot: u64,
}

/// Predictor plus whatever it was trained to carry.
pub enum FeedPredictor<'a> {
    Fa(PredictMode),
    Lstm(&'a TrainedLstm),
    Genie,
}

impl TrafficFeed {
    /// Starts the process from its stationary law and plays `warmup` unscored slots
    /// so that every predictor has history before the first scored slot.
    pub fn new(model: ActivationModel, seeds: &SeedTree, predictor: FeedPredictor<'_>, warmup: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::Config("feed block size must be positive".into()));
        }
        let forecaster = match predictor {
            FeedPredictor::Fa(mode) => Forecaster::Fa(Box::new(FaTracker::new(model.clone(), mode)?)),
            FeedPredictor::Lstm(trained) => {
                if trained.network.inputs() != model.devices() {
                    return Err(Error::Dimension {
                        context: "LSTM predictor devices",
                        expected: model.devices(),
                        actual: trained.network.inputs(),
                    });
                }
                Forecaster::Lstm {
                    net: trained.network.clone(),
                    window: trained.window,
                }
            }
            FeedPredictor::Genie => Forecaster::Genie,
        };
        let warmup = match &forecaster {
            Forecaster::Lstm { window, .. } => warmup.max(*window),
            _ => warmup,
        };
        let process = TrafficProcess::stationary(model, seeds.stream(Stream::Events), seeds.stream(Stream::Activations));
        let mut feed = Self {
            process,
            forecaster,
            history: VecDeque::new(),
            queue: VecDeque::new(),
            block,
            next_slot: 1,
        };
        for _ in 0..warmup {
            let slot = feed.process.advance();
            feed.remember(&slot.activity)?;
        }
        Ok(feed)
    }

    fn history_len(&self) -> usize {
        match &self.forecaster {
            Forecaster::Lstm { window, .. } => *window,
            _ => 0,
        }
    }

    fn remember(&mut self, w: &ActivationVector) -> Result<()> {
        if let Forecaster::Fa(tracker) = &mut self.forecaster {
            tracker.observe(w)?;
        }
        let keep = self.history_len();
        if keep > 0 {
            self.history.push_back(w.clone());
            while self.history.len() > keep {
                self.history.pop_front();
            }
        }
        Ok(())
    }

    fn refill(&mut self) -> Result<()> {
        let model = self.process.model().clone();
        let d = model.devices();
        let slots: Vec<_> = (0..self.block).map(|_| self.process.advance()).collect();
        let mut predicted: Vec<Vec<f64>> = Vec::with_capacity(self.block);
        match &mut self.forecaster {
            Forecaster::Fa(tracker) => {
                for s in &slots {
                    predicted.push(tracker.forecast().probs.clone());
                    tracker.observe(&s.activity)?;
                }
            }
            Forecaster::Genie => {
                predicted.extend(slots.iter().map(|s| s.activity.as_f64()));
            }
            Forecaster::Lstm { net, window } => {
                let w = *window;
                let rows = self.history.len() + slots.len();
                let mut all = Array2::<f32>::zeros((rows, d));
                for (t, a) in self.history.iter().chain(slots.iter().map(|s| &s.activity)).enumerate() {
                    for (j, &on) in a.0.iter().enumerate() {
                        all[[t, j]] = if on { 1.0 } else { 0.0 };
                    }
                }
                let windows: Vec<_> = (0..slots.len()).map(|j| all.slice(ndarray::s![j..j + w, ..])).collect();
                for chunk in windows.chunks(256) {
                    for p in predict_batch(net, chunk)? {
                        predicted.push(p.active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect());
                    }
                }
            }
        }
        for (s, pred) in slots.into_iter().zip(predicted) {
            if matches!(self.forecaster, Forecaster::Lstm { .. }) {
                self.history.push_back(s.activity.clone());
                if self.history.len() > self.history_len() {
                    self.history.pop_front();
                }
            }
            let truth_probs = activation_probs(&s.events, &model)?;
            self.queue.push_back(FeedSlot {
                slot: self.next_slot,
                events: s.events,
                activity: s.activity,
                truth_probs,
                predicted: pred,
            });
            self.next_slot += 1;
        }
        Ok(())
    }
}

impl TrafficSource for TrafficFeed {
    fn devices(&self) -> usize {
        self.process.model().devices()
    }

    fn next_slot(&mut self) -> Result<FeedSlot> {
        if self.queue.is_empty() {
            self.refill()?;
        }
        Ok(self.queue.pop_front().expect("refilled"))
    }
}

/// A fixed, repeating list of slots, for tests and hand-built scenarios.
#[derive(Debug, Clone)]
pub struct ScriptedFeed {
    slots: Vec<FeedSlot>,
    cursor: usize,
    produced: u64,
}

impl ScriptedFeed {
    pub fn new(slots: Vec<FeedSlot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Empty("scripted feed needs at least one slot"));
        }
        Ok(Self {
            slots,
            cursor: 0,
            produced: 0,
        })
    }

    /// Every device active in every slot, predicted as such.
    pub fn always_active(devices: usize) -> Self {
        let events = EventState(vec![true]);
        let activity = ActivationVector(vec![true; devices]);
        Self::new(vec![FeedSlot {
            slot: 1,
            events,
            truth_probs: vec![1.0; devices],
            predicted: vec![1.0; devices],
            activity,
        }])
        .expect("one slot")
    }
}

impl TrafficSource for ScriptedFeed {
    fn devices(&self) -> usize {
        self.slots[0].activity.len()
    }

    fn next_slot(&mut self) -> Result<FeedSlot> {
        let mut s = self.slots[self.cursor].clone();
        self.cursor = (self.cursor + 1) % self.slots.len();
        self.produced += 1;
        s.slot = self.produced;
        Ok(s)
    }
}
