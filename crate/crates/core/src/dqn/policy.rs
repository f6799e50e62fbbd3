use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::select_joint_action;
use super::observation::encode_observation;
use crate::env::{Env, EnvState, JointAction, Move, SlotRecord, UavAction, WorldConfig};
use crate::error::Result;
use crate::feed::TrafficSource;
use crate::neural::Mlp;

/// How UAV decisions are made during an evaluation run.
pub enum Policy<'a> {
    /// Greedy actions of a frozen Q-network.
    Trained(&'a Mlp<f32>),
    /// Uniformly random moves and grants.
    RandomWalk,
    /// Each UAV grants a distinct device, predicted-active ones first and older ones
    /// before younger, and flies towards it.
    Greedy,
}

impl Policy<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Trained(_) => "trained",
            Policy::RandomWalk => "random-walk",
            Policy::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub devices: usize,
    pub uavs: usize,
    pub records: Vec<SlotRecord>,
}

fn greedy_action(state: &EnvState, cfg: &WorldConfig) -> JointAction {
    let mut taken = vec![false; state.aoi.len()];
    let actions = state
        .uavs
        .iter()
        .map(|u| {
            let pick = (0..state.aoi.len())
                .filter(|&d| !taken[d])
                .max_by_key(|&d| (state.predicted[d] >= 0.5, state.aoi[d], std::cmp::Reverse(d)));
            match pick {
                Some(d) => {
                    taken[d] = true;
                    let mv = u.position.step_towards(cfg.device_locations[d]);
                    UavAction {
                        movement: if mv == Move::Hover { Move::North } else { mv },
                        schedule: Some(d),
                    }
                }
                None => UavAction::idle(Move::North),
            }
        })
        .collect();
    JointAction(actions)
}

/// Plays `slots` slots with the given policy. The environment should be in
/// evaluation mode so exhausted UAVs recharge instead of ending the run.
pub fn run_policy<F: TrafficSource, R: Rng + ?Sized>(policy: &Policy<'_>, env: &mut Env<F>, slots: usize, rng: &mut R) -> Result<Trace> {
    let uavs = env.config().uavs;
    let devices = env.devices();
    let mut records = Vec::with_capacity(slots);
    for _ in 0..slots {
        if env.is_terminal() {
            env.reset()?;
        }
        let joint = match policy {
            Policy::Trained(net) => {
                let obs: Vec<Vec<f32>> = (0..uavs).map(|u| encode_observation(env.state(), u, env.config())).collect();
                JointAction(
                    select_joint_action(net, &obs, 0.0, rng)?
                        .into_iter()
                        .map(|a| UavAction::from_index(a, devices))
                        .collect::<Result<_>>()?,
                )
            }
            Policy::RandomWalk => JointAction(
                (0..uavs)
                    .map(|_| UavAction::from_index(rng.random_range(0..UavAction::space(devices)), devices))
                    .collect::<Result<_>>()?,
            ),
            Policy::Greedy => greedy_action(env.state(), env.config()),
        };
        records.push(env.step(&joint)?.record);
    }
    Ok(Trace {
        devices,
        uavs,
        records,
    })
}
