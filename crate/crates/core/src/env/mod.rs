//! The multi-UAV grid world: geometry, energy, age of information, regret and reward.

mod config;
mod physics;
mod state;
mod step;

pub use config::{BatteryConfig, PowerMode, Propulsion, RadioConfig, WorldConfig};
pub use physics::{
    blade_power, channel_gain_to_bs, flight_power, flight_power_naive, induced_power, induced_power_naive,
    parasite_power, relay_power, step_energy, tx_power,
};
pub use state::{EnvState, GridPos, JointAction, Move, Recharge, UavAction, UavState};
pub use step::{apply_moves, regret, resolve_conflicts, reward, update_aoi, Env, EnvMode, SlotRecord, StepOutcome};
