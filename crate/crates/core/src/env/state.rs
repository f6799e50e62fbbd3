use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{ActivationVector, EventState};

/// A cell of the square grid, `x` growing east and `y` growing north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: usize,
    pub y: usize,
}

impl GridPos {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: GridPos) -> u32 {
        (self.x.abs_diff(other.x) + self.y.abs_diff(other.y)) as u32
    }

    /// The neighbouring cell in direction `m`, or `None` when it would leave an `n × n` grid.
    pub fn shifted(self, m: Move, n: usize) -> Option<GridPos> {
        let (x, y) = (self.x, self.y);
        match m {
            Move::North => (y + 1 < n).then(|| GridPos::new(x, y + 1)),
            Move::South => y.checked_sub(1).map(|y| GridPos::new(x, y)),
            Move::East => (x + 1 < n).then(|| GridPos::new(x + 1, y)),
            Move::West => x.checked_sub(1).map(|x| GridPos::new(x, y)),
            Move::Hover => Some(self),
        }
    }

    /// One step along a shortest path to `target`, closing the x gap first.
    pub fn step_towards(self, target: GridPos) -> Move {
        if self.x < target.x {
            Move::East
        } else if self.x > target.x {
            Move::West
        } else if self.y < target.y {
            Move::North
        } else if self.y > target.y {
            Move::South
        } else {
            Move::Hover
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    North,
    South,
    East,
    West,
    Hover,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::North, Move::South, Move::East, Move::West, Move::Hover];

    pub fn index(self) -> usize {
        Move::ALL.iter().position(|m| *m == self).expect("listed")
    }
}

/// One UAV's decision: a move and a grant to at most one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UavAction {
    pub movement: Move,
    pub schedule: Option<usize>,
}

impl UavAction {
    pub const fn idle(movement: Move) -> Self {
        Self {
            movement,
            schedule: None,
        }
    }

    /// Number of per-UAV actions: five moves times `devices + 1` grant choices.
    pub fn space(devices: usize) -> usize {
        Move::ALL.len() * (devices + 1)
    }

    /// Index `move · (D + 1) + grant`, where grant `D` means idle.
    pub fn index(&self, devices: usize) -> usize {
        self.movement.index() * (devices + 1) + self.schedule.unwrap_or(devices)
    }

    pub fn from_index(index: usize, devices: usize) -> Result<Self> {
        if index >= Self::space(devices) {
            return Err(Error::IndexOutOfRange {
                context: "per-UAV action space",
                index,
                len: Self::space(devices),
            });
        }
        let grant = index % (devices + 1);
        Ok(Self {
            movement: Move::ALL[index / (devices + 1)],
            schedule: (grant < devices).then_some(grant),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction(pub Vec<UavAction>);

/// Autopilot phase of a UAV that ran out of headroom during an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "phase")]
pub enum Recharge {
    Returning,
    Charging { remaining: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavState {
    pub position: GridPos,
    pub energy: u32,
    /// Energy minus the quanta needed to reach the nearest depot.
    pub delta: i64,
    pub recharge: Option<Recharge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub uavs: Vec<UavState>,
    pub aoi: Vec<u32>,
    pub event_state: EventState,
    pub activity: ActivationVector,
    /// Predictor output for the slot about to be played.
    pub predicted: Vec<f64>,
    pub slot: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_index_round_trips() {
        for d in [1, 5, 10] {
            for i in 0..UavAction::space(d) {
                assert_eq!(UavAction::from_index(i, d).unwrap().index(d), i);
            }
        }
        assert_eq!(UavAction::space(10), 55);
        assert!(UavAction::from_index(55, 10).is_err());
        assert_eq!(UavAction::from_index(5, 5).unwrap(), UavAction::idle(Move::North));
    }

    #[test]
    fn shifts_clamp_at_edges() {
        let p = GridPos::new(0, 0);
        assert_eq!(p.shifted(Move::North, 3), Some(GridPos::new(0, 1)));
        assert_eq!(p.shifted(Move::South, 3), None);
        assert_eq!(GridPos::new(2, 2).shifted(Move::North, 3), None);
        assert_eq!(p.shifted(Move::Hover, 3), Some(p));
    }
}
