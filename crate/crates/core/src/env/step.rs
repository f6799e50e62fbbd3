use serde::{Deserialize, Serialize};

use super::config::{PowerMode, WorldConfig};
use super::physics::{step_energy, tx_power};
use super::state::{EnvState, GridPos, JointAction, Move, Recharge, UavAction, UavState};
use crate::error::{check_dim, Error, Result};
use crate::feed::{FeedSlot, TrafficSource};
use crate::traffic::{ActivationVector, EventState};

/// Training episodes stop at the first exhausted UAV; evaluation runs send it to recharge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    Training,
    Evaluation,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub positions: Vec<GridPos>,
    pub energy: Vec<u32>,
    pub delta: Vec<i64>,
    pub recharging: Vec<bool>,
    /// Effective grant of each UAV after conflict resolution.
    pub schedule: Vec<Option<usize>>,
    pub activity: Vec<bool>,
    pub aoi: Vec<u32>,
    /// Normalized transmit power per device, zero when not granted.
    pub power: Vec<f64>,
    pub power_w: f64,
    pub regret: u32,
    pub mean_aoi: f64,
    pub mean_power: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub record: SlotRecord,
}

/// `A_d ← 1` when granted, otherwise one older up to the cap.
pub fn update_aoi(aoi: &mut [u32], granted: &[bool], cap: u32) {
    for (a, &g) in aoi.iter_mut().zip(granted) {
        *a = if g { 1 } else { (*a + 1).min(cap) };
    }
}

/// `min(ω, η)`: grants wasted on silent devices against active devices left unserved.
pub fn regret(granted: &[bool], activity: &[bool]) -> u32 {
    let wasted = granted.iter().zip(activity).filter(|(&g, &a)| g && !a).count();
    let missed = granted.iter().zip(activity).filter(|(&g, &a)| !g && a).count();
    wasted.min(missed) as u32
}

/// `−(1/D) Σ_d (A_d + ζ1 P_d) − ζ2 R`.
pub fn reward(aoi: &[u32], power: &[f64], regret: u32, zeta1: f64, zeta2: f64) -> f64 {
    let d = aoi.len() as f64;
    let per_device: f64 = aoi.iter().zip(power).map(|(&a, &p)| a as f64 + zeta1 * p).sum();
    -per_device / d - zeta2 * regret as f64
}

/// Keeps the first grant of each device in UAV order and idles later duplicates.
pub fn resolve_conflicts(requested: &[Option<usize>], devices: usize) -> Vec<Option<usize>> {
    let mut taken = vec![false; devices];
    requested
        .iter()
        .map(|r| match *r {
            Some(d) if !taken[d] => {
                taken[d] = true;
                Some(d)
            }
            _ => None,
        })
        .collect()
}

/// Moves every UAV (off-grid moves hover in place) and returns whether each actually moved.
pub fn apply_moves(uavs: &mut [UavState], moves: &[Move], cfg: &WorldConfig) -> Vec<bool> {
    uavs.iter_mut()
        .zip(moves)
        .map(|(u, &m)| match u.position.shifted(m, cfg.grid_size) {
            Some(p) if m != Move::Hover => {
                u.position = p;
                true
            }
            _ => false,
        })
        .collect()
}

pub struct Env<F> {
    cfg: WorldConfig,
    feed: F,
    mode: EnvMode,
    state: EnvState,
    pending: Option<FeedSlot>,
    reference_power: f64,
    terminal: bool,
}

impl<F: TrafficSource> Env<F> {
    pub fn new(cfg: WorldConfig, feed: F, mode: EnvMode) -> Result<Self> {
        cfg.validate()?;
        let d = feed.devices();
        check_dim("device locations", d, cfg.device_locations.len())?;
        let reference_power = cfg.reference_power();
        let mut env = Self {
            state: EnvState {
                uavs: Vec::new(),
                aoi: vec![1; d],
                event_state: EventState(Vec::new()),
                activity: ActivationVector::silent(d),
                predicted: vec![0.0; d],
                slot: 0,
            },
            cfg,
            feed,
            mode,
            pending: None,
            reference_power,
            terminal: false,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn devices(&self) -> usize {
        self.state.aoi.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn reference_power(&self) -> f64 {
        self.reference_power
    }

    fn fresh_uav(&self, u: usize) -> UavState {
        let position = self.cfg.corners()[u % 4];
        let energy = self.cfg.battery.quanta;
        UavState {
            position,
            energy,
            delta: energy as i64 - self.cfg.return_cost(position),
            recharge: None,
        }
    }

    /// New episode: UAVs full at their corner depots. Device ages and traffic carry on.
    pub fn reset(&mut self) -> Result<&EnvState> {
        self.state.uavs = (0..self.cfg.uavs).map(|u| self.fresh_uav(u)).collect();
        if self.pending.is_none() {
            self.pending = Some(self.feed.next_slot()?);
        }
        self.state.predicted = self.pending.as_ref().expect("just filled").predicted.clone();
        self.terminal = false;
        Ok(&self.state)
    }

    /// Flies every UAV home and refills it with the evaluation-mode recharge
    /// procedure while traffic and ages keep evolving without grants. Returns
    /// the reward of each slot spent doing so. Call [`Env::reset`] afterwards.
    pub fn recharge_all(&mut self) -> Result<Vec<f64>> {
        let mode = self.mode;
        self.mode = EnvMode::Evaluation;
        self.terminal = false;
        for uav in self.state.uavs.iter_mut() {
            uav.recharge = Some(Recharge::Returning);
            advance_recharge(uav, &self.cfg);
        }
        let idle = JointAction(vec![UavAction::idle(Move::Hover); self.cfg.uavs]);
        let mut rewards = Vec::new();
        while self.state.uavs.iter().any(|u| u.recharge.is_some()) {
            match self.step(&idle) {
                Ok(out) => rewards.push(out.reward),
                Err(e) => {
                    self.mode = mode;
                    return Err(e);
                }
            }
        }
        self.mode = mode;
        Ok(rewards)
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        if self.terminal {
            return Err(Error::Terminal);
        }
        let d = self.devices();
        check_dim("joint action", self.cfg.uavs, action.0.len())?;
        for a in &action.0 {
            if let Some(dev) = a.schedule {
                if dev >= d {
                    return Err(Error::IndexOutOfRange {
                        context: "scheduled device",
                        index: dev,
                        len: d,
                    });
                }
            }
        }
        let slot = match self.pending.take() {
            Some(s) => s,
            None => self.feed.next_slot()?,
        };
        self.state.slot = slot.slot;
        self.state.event_state = slot.events;
        self.state.activity = slot.activity;

        let effective: Vec<UavAction> = self
            .state
            .uavs
            .iter()
            .zip(&action.0)
            .map(|(u, a)| match u.recharge {
                Some(Recharge::Returning) => UavAction::idle(u.position.step_towards(self.cfg.nearest_depot(u.position))),
                Some(Recharge::Charging { .. }) => UavAction::idle(Move::Hover),
                None => *a,
            })
            .collect();
        let moves: Vec<Move> = effective.iter().map(|a| a.movement).collect();
        let moved = apply_moves(&mut self.state.uavs, &moves, &self.cfg);
        let requested: Vec<Option<usize>> = effective.iter().map(|a| a.schedule).collect();
        let schedule = resolve_conflicts(&requested, d);

        for (u, uav) in self.state.uavs.iter_mut().enumerate() {
            let charging = matches!(uav.recharge, Some(Recharge::Charging { .. }));
            if !charging {
                let (cx, cy) = self.cfg.position_m(uav.position);
                let cost = step_energy(moved[u], schedule[u].is_some(), cx.hypot(cy), &self.cfg);
                uav.energy = uav.energy.saturating_sub(cost);
            }
        }

        let mut granted = vec![false; d];
        let mut power = vec![0.0; d];
        let mut power_w = 0.0;
        for (u, s) in schedule.iter().enumerate() {
            if let Some(dev) = *s {
                granted[dev] = true;
                let dist = self.cfg.horizontal_distance(self.cfg.device_locations[dev], self.state.uavs[u].position);
                let p = tx_power(dist, &self.cfg);
                power_w += p;
                power[dev] = p / self.reference_power;
            }
        }
        update_aoi(&mut self.state.aoi, &granted, self.cfg.aoi_cap);
        let r_slot = regret(&granted, &self.state.activity.0);
        let reward_power: Vec<f64> = match self.cfg.power_mode {
            PowerMode::Normalized => power.clone(),
            PowerMode::RawWatts => power.iter().map(|p| p * self.reference_power).collect(),
        };
        let r = reward(&self.state.aoi, &reward_power, r_slot, self.cfg.zeta1, self.cfg.zeta2);

        let mut terminal = false;
        for uav in self.state.uavs.iter_mut() {
            uav.delta = uav.energy as i64 - self.cfg.return_cost(uav.position);
            match self.mode {
                EnvMode::Training => terminal |= uav.delta <= 0,
                EnvMode::Evaluation => advance_recharge(uav, &self.cfg),
            }
        }
        self.terminal = terminal;

        let record = SlotRecord {
            slot: self.state.slot,
            positions: self.state.uavs.iter().map(|u| u.position).collect(),
            energy: self.state.uavs.iter().map(|u| u.energy).collect(),
            delta: self.state.uavs.iter().map(|u| u.delta).collect(),
            recharging: self.state.uavs.iter().map(|u| u.recharge.is_some()).collect(),
            schedule,
            activity: self.state.activity.0.clone(),
            aoi: self.state.aoi.clone(),
            mean_aoi: self.state.aoi.iter().map(|&a| a as f64).sum::<f64>() / d as f64,
            mean_power: power.iter().sum::<f64>() / d as f64,
            power,
            power_w,
            regret: r_slot,
            reward: r,
        };

        let next = self.feed.next_slot()?;
        self.state.predicted = next.predicted.clone();
        self.pending = Some(next);
        Ok(StepOutcome {
            reward: r,
            terminal,
            record,
        })
    }
}

/// Evaluation-mode battery handling after a slot has been played.
fn advance_recharge(uav: &mut UavState, cfg: &WorldConfig) {
    let at_depot = cfg.steps_to_depot(uav.position) == 0;
    uav.recharge = match uav.recharge {
        None if uav.delta <= 0 => Some(Recharge::Returning),
        other => other,
    };
    if uav.recharge == Some(Recharge::Returning) && at_depot {
        uav.recharge = Some(Recharge::Charging {
            remaining: cfg.recharge_dwell,
        });
        if cfg.recharge_dwell > 0 {
            return;
        }
    }
    if let Some(Recharge::Charging { remaining }) = uav.recharge {
        if remaining <= 1 {
            uav.energy = cfg.battery.quanta;
            uav.delta = uav.energy as i64 - cfg.return_cost(uav.position);
            uav.recharge = None;
        } else {
            uav.recharge = Some(Recharge::Charging { remaining: remaining - 1 });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aoi_rules() {
        let mut a = vec![5, 50, 7];
        update_aoi(&mut a, &[false, false, true], 50);
        assert_eq!(a, vec![6, 50, 1]);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret(&[false, true], &[true, false]), 1);
        assert_eq!(regret(&[true, false], &[true, false]), 0);
        assert_eq!(regret(&[true, true, false], &[false, false, true]), 1);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(&[1, 1, 1], &[0.0; 3], 0, 0.0, 0.0), -1.0);
        assert_eq!(reward(&[10, 10], &[0.0; 2], 1, 0.0, 500.0), -510.0);
    }

    #[test]
    fn recharge_all_refills_every_uav_at_a_depot() {
        let cfg = WorldConfig {
            grid_size: 4,
            uavs: 2,
            device_locations: vec![GridPos::new(1, 1), GridPos::new(2, 2)],
            ..WorldConfig::default()
        };
        let mut env = Env::new(cfg.clone(), crate::feed::ScriptedFeed::always_active(2), EnvMode::Training).unwrap();
        env.state.uavs[0].position = GridPos::new(1, 1);
        env.state.uavs[1].position = GridPos::new(2, 1);
        let before = env.state.slot;
        let rewards = env.recharge_all().unwrap();
        let flight = 2;
        assert_eq!(rewards.len() as u32, flight + cfg.recharge_dwell);
        assert_eq!(env.state.slot - before, rewards.len() as u64);
        for u in &env.state.uavs {
            assert!(cfg.corners().contains(&u.position));
            assert_eq!(u.energy, cfg.battery.quanta);
            assert!(u.recharge.is_none());
        }
        assert!(env.state.aoi.iter().all(|&a| a as usize > rewards.len()));
        assert_eq!(env.mode, EnvMode::Training);
    }

    #[test]
    fn duplicate_grants_go_to_the_lower_uav() {
        assert_eq!(resolve_conflicts(&[Some(1), Some(1), Some(0)], 3), vec![Some(1), None, Some(0)]);
    }
}
