//! Channel, transmit-power and propulsion formulas.

use super::config::{Propulsion, WorldConfig};
use crate::scalar::Scalar;

/// Line-of-sight gain between a UAV at horizontal distance `horizontal_m` from the BS and the BS.
pub fn channel_gain_to_bs(horizontal_m: f64, cfg: &WorldConfig) -> f64 {
    let dh = cfg.uav_height_m - cfg.bs_height_m;
    cfg.radio.g0 / (dh * dh + horizontal_m * horizontal_m)
}

/// Device power needed to deliver one packet to a UAV at horizontal distance `horizontal_m`.
pub fn tx_power(horizontal_m: f64, cfg: &WorldConfig) -> f64 {
    let r = &cfg.radio;
    r.snr_factor() * (r.noise_w / r.g0) * (horizontal_m * horizontal_m + cfg.uav_height_m * cfg.uav_height_m)
}

/// Power the UAV spends relaying one packet to the BS.
pub fn relay_power(horizontal_m: f64, cfg: &WorldConfig) -> f64 {
    cfg.radio.noise_w / channel_gain_to_bs(horizontal_m, cfg) * cfg.radio.snr_factor()
}

/// Blade-profile power.
pub fn blade_power<T: Scalar>(v: T, p: &Propulsion) -> T {
    let v_tip = T::lit(p.v_tip);
    T::lit(p.p0) * (T::one() + T::lit(3.0) * v * v / (v_tip * v_tip))
}

/// Induced power, through `√(1+a) − √a = 1 / (√(1+a) + √a)` with `a = v⁴ / 4v0⁴`.
pub fn induced_power<T: Scalar>(v: T, p: &Propulsion) -> T {
    let ratio = v / T::lit(p.v0);
    let sqrt_a = ratio * ratio / T::lit(2.0);
    let a = sqrt_a * sqrt_a;
    let gap = T::one() / ((T::one() + a).sqrt() + sqrt_a);
    T::lit(p.p1) * gap.sqrt()
}

/// Induced power evaluated as written, `(√(1+a) − √a)^{1/2}`; cancels catastrophically at cruise speed.
pub fn induced_power_naive<T: Scalar>(v: T, p: &Propulsion) -> T {
    let v0 = T::lit(p.v0);
    let v2 = v * v;
    let inner = (T::one() + v2 * v2 / (T::lit(4.0) * v0 * v0 * v0 * v0)).sqrt() - v2 / (T::lit(2.0) * v0 * v0);
    T::lit(p.p1) * inner.max(T::zero()).sqrt()
}

/// Parasite power.
pub fn parasite_power<T: Scalar>(v: T, p: &Propulsion) -> T {
    T::lit(0.5) * v * v * v * T::lit(p.d0 * p.rho * p.mu0 * p.z)
}

/// Total propulsion power at horizontal speed `v`.
pub fn flight_power<T: Scalar>(v: T, p: &Propulsion) -> T {
    blade_power(v, p) + induced_power(v, p) + parasite_power(v, p)
}

pub fn flight_power_naive<T: Scalar>(v: T, p: &Propulsion) -> T {
    blade_power(v, p) + induced_power_naive(v, p) + parasite_power(v, p)
}

/// Battery quanta charged for one slot at the given position.
///
/// `moved` selects cruise versus hover flight power; a schedule adds the relay energy to the BS.
pub fn step_energy(moved: bool, scheduled: bool, horizontal_to_bs_m: f64, cfg: &WorldConfig) -> u32 {
    let speed = if moved { cfg.uav_speed_mps } else { 0.0 };
    let mut quanta = cfg.flight_quanta(speed);
    if scheduled {
        quanta += cfg.quanta_per_joule() * relay_power(horizontal_to_bs_m, cfg) * cfg.slot_s();
    }
    quanta.ceil() as u32
}
