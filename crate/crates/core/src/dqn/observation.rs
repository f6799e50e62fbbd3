use crate::env::{EnvState, WorldConfig};

/// Observation length for `uavs` UAVs and `devices` devices: `2U + 1 + 2D`.
pub fn observation_len(uavs: usize, devices: usize) -> usize {
    2 * uavs + 1 + 2 * devices
}

/// Flattens the state as seen by UAV `uav`, in the order: own position,
/// other UAVs' positions (by index), own headroom, AoI vector on a log scale (`ln A / ln A_max`), predicted activity.
pub fn encode_observation(state: &EnvState, uav: usize, cfg: &WorldConfig) -> Vec<f32> {
    let span = (cfg.grid_size - 1) as f32;
    let mut v = Vec::with_capacity(observation_len(state.uavs.len(), state.aoi.len()));
    let me = &state.uavs[uav];
    v.push(me.position.x as f32 / span);
    v.push(me.position.y as f32 / span);
    for (i, other) in state.uavs.iter().enumerate() {
        if i != uav {
            v.push(other.position.x as f32 / span);
            v.push(other.position.y as f32 / span);
        }
    }
    v.push(me.delta as f32 / cfg.battery.quanta as f32);
    let cap = (cfg.aoi_cap.max(2) as f32).ln();
    v.extend(state.aoi.iter().map(|&a| (a.max(1) as f32).ln() / cap));
    v.extend(state.predicted.iter().map(|&p| p as f32));
    v
}
