//! Discrete gridworld with slippery moves and two observation models.
//!
//! Coordinates are `(x, y)` with `y = 0` on the first map row; `Up` decreases `y`.

mod dynamics;
mod map;
mod observe;

pub use dynamics::{EnvParams, EnvState, GridWorld, SlipMode, StepResult, Termination};
pub use map::{parse_map, CellKind, GridMap, Pos};
pub use observe::{obs_key, ObsKey, Observation, ObservationMode, PatchCell, PATCH_RADIUS, PATCH_SIZE};

use serde::{Deserialize, Serialize};

/// Movement actions. The ordinal order is fixed and drives every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "Up",
            Action::Down => "Down",
            Action::Left => "Left",
            Action::Right => "Right",
        }
    }

    pub(crate) fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Action {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" | "0" => Ok(Action::Up),
            "down" | "1" => Ok(Action::Down),
            "left" | "2" => Ok(Action::Left),
            "right" | "3" => Ok(Action::Right),
            other => Err(crate::Error::Validation(format!("unknown action {other:?}"))),
        }
    }
}
