use serde::{Deserialize, Serialize};

use super::physics::{flight_power, tx_power};
use super::state::GridPos;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Linear channel gain at the 1 m reference distance.
    pub g0: f64,
    pub noise_w: f64,
    pub bandwidth_hz: f64,
    pub packet_bits: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            g0: 1000.0,
            noise_w: 1e-13,
            bandwidth_hz: 1e6,
            packet_bits: 5e6,
        }
    }
}

impl RadioConfig {
    /// `2^{M/B} - 1`.
    pub fn snr_factor(&self) -> f64 {
        (self.packet_bits / self.bandwidth_hz).exp2() - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub capacity_j: f64,
    pub quanta: u32,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            capacity_j: 10_000.0,
            quanta: 200,
        }
    }
}

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Propulsion {
    pub p0: f64,
    pub p1: f64,
    pub v_tip: f64,
    pub v0: f64,
    pub d0: f64,
    pub rho: f64,
    pub mu0: f64,
    pub z: f64,
}

impl Default for Propulsion {
    fn default() -> Self {
        Self {
            p0: 99.66,
            p1: 120.16,
            v_tip: 120.0,
            v0: 0.002,
            d0: 0.48,
            rho: 1.225,
            mu0: 0.0001,
            z: 0.5,
        }
    }
}

/// How transmit power enters the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Divided by the power needed at the largest distance on the grid, so it lies in (0, 1].
    #[default]
    Normalized,
    RawWatts,
}

/// Geometry, radio, battery and reward constants of the grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub grid_size: usize,
    pub cell_m: f64,
    pub bs_height_m: f64,
    pub uav_height_m: f64,
    pub uav_speed_mps: f64,
    pub uavs: usize,
    /// Grid cell of every device; left empty, the experiment layer places them.
    pub device_locations: Vec<GridPos>,
    pub radio: RadioConfig,
    pub battery: BatteryConfig,
    pub propulsion: Propulsion,
    pub aoi_cap: u32,
    pub zeta1: f64,
    pub zeta2: f64,
    pub power_mode: PowerMode,
    /// Slots a UAV spends at a depot before its battery is full again (evaluation runs only).
    pub recharge_dwell: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid_size: 11,
            cell_m: 100.0,
            bs_height_m: 15.0,
            uav_height_m: 100.0,
            uav_speed_mps: 25.0,
            uavs: 2,
            device_locations: Vec::new(),
            radio: RadioConfig::default(),
            battery: BatteryConfig::default(),
            propulsion: Propulsion::default(),
            aoi_cap: 50,
            zeta1: 25.0,
            zeta2: 500.0,
            power_mode: PowerMode::Normalized,
            recharge_dwell: 10,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config(format!("grid needs at least 2 cells per side, got {}", self.grid_size)));
        }
        if self.uavs == 0 {
            return Err(Error::Config("at least one UAV is required".into()));
        }
        if self.aoi_cap == 0 || self.battery.quanta == 0 {
            return Err(Error::Config("aoi_cap and battery quanta must be at least 1".into()));
        }
        for (name, x) in [
            ("cell_m", self.cell_m),
            ("bs_height_m", self.bs_height_m),
            ("uav_height_m", self.uav_height_m),
            ("uav_speed_mps", self.uav_speed_mps),
            ("g0", self.radio.g0),
            ("noise_w", self.radio.noise_w),
            ("bandwidth_hz", self.radio.bandwidth_hz),
            ("packet_bits", self.radio.packet_bits),
            ("capacity_j", self.battery.capacity_j),
            ("v_tip", self.propulsion.v_tip),
            ("v0", self.propulsion.v0),
        ] {
            positive(name, x)?;
        }
        for (name, x) in [
            ("p0", self.propulsion.p0),
            ("p1", self.propulsion.p1),
            ("d0", self.propulsion.d0),
            ("rho", self.propulsion.rho),
            ("mu0", self.propulsion.mu0),
            ("z", self.propulsion.z),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {x}")));
            }
        }
        if self.uav_height_m == self.bs_height_m {
            return Err(Error::Config("UAV and BS heights must differ".into()));
        }
        if !(self.zeta1 >= 0.0 && self.zeta2 >= 0.0) {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        for p in &self.device_locations {
            if p.x >= self.grid_size || p.y >= self.grid_size {
                return Err(Error::Config(format!("device location {p:?} outside the {0}x{0} grid", self.grid_size)));
            }
        }
        Ok(())
    }

    /// Slot length `τ = L_g / v_u`.
    pub fn slot_s(&self) -> f64 {
        self.cell_m / self.uav_speed_mps
    }

    pub fn quanta_per_joule(&self) -> f64 {
        self.battery.quanta as f64 / self.battery.capacity_j
    }

    /// Flight energy of one slot in (unrounded) quanta.
    pub fn flight_quanta(&self, speed: f64) -> f64 {
        self.quanta_per_joule() * flight_power(speed, &self.propulsion) * self.slot_s()
    }

    /// Quanta charged for one grid step without scheduling; also the unit of the return cost.
    pub fn move_cost(&self) -> u32 {
        self.flight_quanta(self.uav_speed_mps).ceil() as u32
    }

    pub fn corners(&self) -> [GridPos; 4] {
        let m = self.grid_size - 1;
        [GridPos::new(0, 0), GridPos::new(m, 0), GridPos::new(0, m), GridPos::new(m, m)]
    }

    /// Horizontal coordinate in metres, with the BS at the grid centre.
    pub fn position_m(&self, p: GridPos) -> (f64, f64) {
        let c = (self.grid_size as f64 - 1.0) / 2.0;
        ((p.x as f64 - c) * self.cell_m, (p.y as f64 - c) * self.cell_m)
    }

    pub fn horizontal_distance(&self, a: GridPos, b: GridPos) -> f64 {
        let (ax, ay) = self.position_m(a);
        let (bx, by) = self.position_m(b);
        (ax - bx).hypot(ay - by)
    }

    /// Transmit power at the largest device-to-UAV distance on the grid.
    pub fn reference_power(&self) -> f64 {
        let span = (self.grid_size as f64 - 1.0) * self.cell_m;
        tx_power(span * std::f64::consts::SQRT_2, self)
    }

    pub fn steps_to_depot(&self, p: GridPos) -> u32 {
        self.corners().iter().map(|c| p.manhattan(*c)).min().expect("four corners")
    }

    pub fn nearest_depot(&self, p: GridPos) -> GridPos {
        *self
            .corners()
            .iter()
            .min_by_key(|c| p.manhattan(**c))
            .expect("four corners")
    }

    /// Quanta needed to fly from `p` to the nearest depot.
    pub fn return_cost(&self, p: GridPos) -> i64 {
        self.move_cost() as i64 * self.steps_to_depot(p) as i64
    }
}
