//! Markovian event process and the device activations it drives.
//!
//! `K` background on/off chains evolve independently. While event `k` is on
//! it activates device `d` with probability `p_dk`; silent events never
//! activate anything, and devices are conditionally independent given the
//! event state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

/// A two-state chain: `eps_on` is the off→on probability, `eps_off` on→off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawChain")]
pub struct EventChain {
    eps_on: f64,
    eps_off: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    eps_on: f64,
    eps_off: f64,
}

impl TryFrom<RawChain> for EventChain {
    type Error = Error;
    fn try_from(raw: RawChain) -> Result<Self> {
        EventChain::new(raw.eps_on, raw.eps_off)
    }
}

impl EventChain {
    pub fn new(eps_on: f64, eps_off: f64) -> Result<Self> {
        check_prob("eps_on", eps_on)?;
        check_prob("eps_off", eps_off)?;
        Ok(Self { eps_on, eps_off })
    }

    pub fn eps_on(&self) -> f64 {
        self.eps_on
    }

    pub fn eps_off(&self) -> f64 {
        self.eps_off
    }

    /// `Pr(next | current)`.
    pub fn transition(&self, current: bool, next: bool) -> f64 {
        match (current, next) {
            (false, true) => self.eps_on,
            (false, false) => 1.0 - self.eps_on,
            (true, false) => self.eps_off,
            (true, true) => 1.0 - self.eps_off,
        }
    }

    /// Long-run probability of the on state. A chain that never moves is
    /// given an uninformative 1/2.
    pub fn stationary_on(&self) -> f64 {
        let total = self.eps_on + self.eps_off;
        if total > 0.0 {
            self.eps_on / total
        } else {
            0.5
        }
    }
}

/// Event chains plus the `D×K` influence matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawModel")]
pub struct ActivationModel {
    chains: Vec<EventChain>,
    influence: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    chains: Vec<EventChain>,
    influence: Vec<Vec<f64>>,
}

impl TryFrom<RawModel> for ActivationModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        ActivationModel::new(raw.chains, raw.influence)
    }
}

impl ActivationModel {
    pub fn new(chains: Vec<EventChain>, influence: Vec<Vec<f64>>) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::Config("at least one event chain is required".into()));
        }
        if influence.is_empty() {
            return Err(Error::Config("at least one device is required".into()));
        }
        for (d, row) in influence.iter().enumerate() {
            if row.len() != chains.len() {
                return Err(Error::Config(format!(
                    "influence row {d} has {} entries, expected K = {}",
                    row.len(),
                    chains.len()
                )));
            }
            for &p in row {
                check_prob("p_dk", p)?;
            }
        }
        Ok(Self { chains, influence })
    }

    pub fn events(&self) -> usize {
        self.chains.len()
    }

    pub fn devices(&self) -> usize {
        self.influence.len()
    }

    pub fn chains(&self) -> &[EventChain] {
        &self.chains
    }

    pub fn chain(&self, k: usize) -> &EventChain {
        &self.chains[k]
    }

    /// `p_dk`.
    pub fn influence(&self, device: usize, event: usize) -> f64 {
        self.influence[device][event]
    }

    pub fn influence_rows(&self) -> &[Vec<f64>] {
        &self.influence
    }

    /// Product of the per-chain stationary laws, i.e. a sample-free initial state draw.
    pub fn stationary_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EventState {
        EventState(
            self.chains
                .iter()
                .map(|c| rng.random::<f64>() < c.stationary_on())
                .collect(),
        )
    }
}

/// Binary on/off vector of the `K` events.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventState(pub Vec<bool>);

impl EventState {
    pub fn off(events: usize) -> Self {
        Self(vec![false; events])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Joint-state index with bit `k` holding event `k`.
    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &on)| acc | ((on as usize) << k))
    }

    pub fn from_index(index: usize, events: usize) -> Self {
        Self((0..events).map(|k| index >> k & 1 == 1).collect())
    }
}

/// Binary active/silent vector of the `D` devices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivationVector(pub Vec<bool>);

impl ActivationVector {
    pub fn silent(devices: usize) -> Self {
        Self(vec![false; devices])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Advances every chain by one slot. Exactly one uniform draw per chain.
pub fn step_events<R: Rng + ?Sized>(
    state: &EventState,
    model: &ActivationModel,
    rng: &mut R,
) -> Result<EventState> {
    check_dim("event state", model.events(), state.len())?;
    let next = state
        .0
        .iter()
        .zip(&model.chains)
        .map(|(&on, chain)| {
            let u: f64 = rng.random();
            if on {
                u >= chain.eps_off
            } else {
                u < chain.eps_on
            }
        })
        .collect();
    Ok(EventState(next))
}

/// `1 - Π_k (1 - p_dk)^{S_k}`.
pub fn true_activation_prob(state: &EventState, model: &ActivationModel, device: usize) -> Result<f64> {
    check_dim("event state", model.events(), state.len())?;
    if device >= model.devices() {
        return Err(Error::IndexOutOfRange {
            context: "devices",
            index: device,
            len: model.devices(),
        });
    }
    Ok(activation_prob_unchecked(state, model, device))
}

fn activation_prob_unchecked(state: &EventState, model: &ActivationModel, device: usize) -> f64 {
    let silent: f64 = state
        .0
        .iter()
        .zip(&model.influence[device])
        .filter(|(&on, _)| on)
        .map(|(_, &p)| 1.0 - p)
        .product();
    1.0 - silent
}

/// Activation probability of every device under `state`.
pub fn activation_probs(state: &EventState, model: &ActivationModel) -> Result<Vec<f64>> {
    check_dim("event state", model.events(), state.len())?;
    Ok((0..model.devices())
        .map(|d| activation_prob_unchecked(state, model, d))
        .collect())
}

/// One uniform draw per device, active when below its activation probability.
pub fn sample_activations<R: Rng + ?Sized>(
    state: &EventState,
    model: &ActivationModel,
    rng: &mut R,
) -> Result<ActivationVector> {
    let probs = activation_probs(state, model)?;
    Ok(ActivationVector(
        probs
            .into_iter()
            .map(|q| {
                let u: f64 = rng.random();
                u < q
            })
            .collect(),
    ))
}

/// `Pr(W | S) = Π_d q_d^{w_d} (1 - q_d)^{1 - w_d}`.
pub fn emission_likelihood(obs: &ActivationVector, state: &EventState, model: &ActivationModel) -> Result<f64> {
    check_dim("observation", model.devices(), obs.len())?;
    let probs = activation_probs(state, model)?;
    Ok(obs
        .0
        .iter()
        .zip(probs)
        .map(|(&w, q)| if w { q } else { 1.0 - q })
        .product())
}

/// Event and activation streams kept apart so that each is reproducible on its own.
#[derive(Debug, Clone)]
pub struct TrafficProcess<R> {
    model: ActivationModel,
    state: EventState,
    events_rng: R,
    activations_rng: R,
}

/// One generated slot: hidden events and the activations they caused.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSlot {
    pub events: EventState,
    pub activity: ActivationVector,
}

impl<R: Rng> TrafficProcess<R> {
    pub fn new(model: ActivationModel, initial: EventState, events_rng: R, activations_rng: R) -> Result<Self> {
        check_dim("initial event state", model.events(), initial.len())?;
        Ok(Self {
            model,
            state: initial,
            events_rng,
            activations_rng,
        })
    }

    /// Starts from a draw of the stationary law taken from the event stream.
    pub fn stationary(model: ActivationModel, mut events_rng: R, activations_rng: R) -> Self {
        let state = model.stationary_state(&mut events_rng);
        Self {
            model,
            state,
            events_rng,
            activations_rng,
        }
    }

    pub fn model(&self) -> &ActivationModel {
        &self.model
    }

    pub fn state(&self) -> &EventState {
        &self.state
    }

    /// Events evolve first, then activations are drawn from the new state.
    pub fn advance(&mut self) -> TrafficSlot {
        let events = step_events(&self.state, &self.model, &mut self.events_rng)
            .expect("dimensions fixed at construction");
        let activity =
            sample_activations(&events, &self.model, &mut self.activations_rng).expect("dimensions fixed at construction");
        self.state = events.clone();
        TrafficSlot { events, activity }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedTree, Stream};

    fn model(chains: &[(f64, f64)], influence: Vec<Vec<f64>>) -> ActivationModel {
        ActivationModel::new(
            chains.iter().map(|&(on, off)| EventChain::new(on, off).unwrap()).collect(),
            influence,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_alternation() {
        let m = model(&[(1.0, 1.0)], vec![vec![1.0]]);
        let mut rng = SeedTree::new(1).stream(Stream::Events);
        let s = step_events(&EventState(vec![false]), &m, &mut rng).unwrap();
        assert_eq!(s.0, vec![true]);
        let s = step_events(&s, &m, &mut rng).unwrap();
        assert_eq!(s.0, vec![false]);
    }

    #[test]
    fn absorbing_chains_never_move() {
        let m = model(&[(0.0, 0.0), (0.0, 0.0)], vec![vec![0.5, 0.5]]);
        let mut rng = SeedTree::new(2).stream(Stream::Events);
        let start = EventState(vec![true, false]);
        let mut s = start.clone();
        for _ in 0..100 {
            s = step_events(&s, &m, &mut rng).unwrap();
        }
        assert_eq!(s, start);
    }

    #[test]
    fn long_run_on_fraction_matches_stationary_law() {
        let m = model(&[(0.3, 0.2)], vec![vec![0.0]]);
        let mut rng = SeedTree::new(3).stream(Stream::Events);
        let n = 100_000;
        let mut s = EventState(vec![false]);
        let mut on = 0usize;
        for _ in 0..n {
            s = step_events(&s, &m, &mut rng).unwrap();
            on += s.0[0] as usize;
        }
        let frac = on as f64 / n as f64;
        let pi = 0.3 / 0.5;
        // Autocorrelated samples: variance inflates by (1 + ρ) / (1 - ρ), ρ = 1 - ε¹ - ε⁰.
        let rho = 1.0 - 0.3 - 0.2;
        let se = (pi * (1.0 - pi) / n as f64 * (1.0 + rho) / (1.0 - rho)).sqrt();
        assert!((frac - pi).abs() < 3.0 * se, "frac {frac} vs {pi} (se {se})");
    }

    #[test]
    fn activation_probability_cases() {
        let m = model(&[(0.1, 0.1), (0.1, 0.1)], vec![vec![0.5, 0.5]]);
        assert_eq!(true_activation_prob(&EventState(vec![false, false]), &m, 0).unwrap(), 0.0);
        assert_eq!(true_activation_prob(&EventState(vec![true, true]), &m, 0).unwrap(), 0.75);
        let certain = model(&[(0.1, 0.1)], vec![vec![1.0]]);
        assert_eq!(true_activation_prob(&EventState(vec![true]), &certain, 0).unwrap(), 1.0);
        assert!(matches!(
            true_activation_prob(&EventState(vec![true, true]), &m, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            true_activation_prob(&EventState(vec![true]), &m, 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn silent_events_never_activate() {
        let m = model(&[(0.5, 0.5)], vec![vec![1.0]; 6]);
        let mut rng = SeedTree::new(4).stream(Stream::Activations);
        for _ in 0..200 {
            let w = sample_activations(&EventState(vec![false]), &m, &mut rng).unwrap();
            assert_eq!(w.count_active(), 0);
            let w = sample_activations(&EventState(vec![true]), &m, &mut rng).unwrap();
            assert_eq!(w.count_active(), 6);
        }
    }

    #[test]
    fn bernoulli_frequency() {
        let m = model(&[(0.5, 0.5)], vec![vec![0.5]]);
        let mut rng = SeedTree::new(5).stream(Stream::Activations);
        let n = 100_000;
        let hits: usize = (0..n)
            .map(|_| sample_activations(&EventState(vec![true]), &m, &mut rng).unwrap().count_active())
            .sum();
        let se = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn emission_cases() {
        let m = model(&[(0.5, 0.5)], vec![vec![0.5], vec![0.5]]);
        let off = EventState(vec![false]);
        assert_eq!(emission_likelihood(&ActivationVector(vec![false, false]), &off, &m).unwrap(), 1.0);
        assert_eq!(emission_likelihood(&ActivationVector(vec![true, false]), &off, &m).unwrap(), 0.0);
        let on = EventState(vec![true]);
        assert_eq!(emission_likelihood(&ActivationVector(vec![true, false]), &on, &m).unwrap(), 0.25);
    }

    #[test]
    fn emission_sums_to_one_over_all_observations() {
        let m = model(
            &[(0.1, 0.2), (0.3, 0.4)],
            (0..6).map(|d| vec![0.1 * d as f64, 0.9 - 0.1 * d as f64]).collect(),
        );
        for s in 0..4 {
            let state = EventState::from_index(s, 2);
            let total: f64 = (0..1usize << 6)
                .map(|bits| {
                    let obs = ActivationVector((0..6).map(|d| bits >> d & 1 == 1).collect());
                    emission_likelihood(&obs, &state, &m).unwrap()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(EventChain::new(1.2, 0.0).is_err());
        let c = EventChain::new(0.1, 0.1).unwrap();
        assert!(ActivationModel::new(vec![c], vec![vec![0.5, 0.5]]).is_err());
        assert!(ActivationModel::new(vec![c], vec![vec![-0.1]]).is_err());
        assert!(ActivationModel::new(vec![], vec![vec![]]).is_err());
        let parsed: std::result::Result<ActivationModel, _> =
            serde_json::from_str(r#"{"chains":[{"eps_on":0.1,"eps_off":2.0}],"influence":[[0.5]]}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn joint_index_round_trip() {
        for i in 0..16 {
            assert_eq!(EventState::from_index(i, 4).index(), i);
        }
    }

    #[test]
    fn process_is_reproducible() {
        let m = model(&[(0.2, 0.3), (0.1, 0.4)], vec![vec![0.7, 0.2], vec![0.1, 0.9], vec![0.5, 0.5]]);
        let run = |seed| {
            let tree = SeedTree::new(seed);
            let mut p = TrafficProcess::stationary(m.clone(), tree.stream(Stream::Events), tree.stream(Stream::Activations));
            (0..300).map(|_| p.advance()).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
