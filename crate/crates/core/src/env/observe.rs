use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CellKind, GridMap, Pos};

pub const PATCH_RADIUS: usize = 2;
pub const PATCH_SIZE: usize = 2 * PATCH_RADIUS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// Exact `(x, y)` coordinates.
    #[default]
    Full,
    /// The 5x5 neighbourhood centred on the agent.
    Patch,
}

impl std::str::FromStr for ObservationMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ObservationMode::Full),
            "patch" => Ok(ObservationMode::Patch),
            other => Err(crate::Error::Validation(format!("unknown observation mode {other:?}"))),
        }
    }
}

impl fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObservationMode::Full => "full",
            ObservationMode::Patch => "patch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchCell {
    Free = 0,
    Wall = 1,
    Trap = 2,
    Goal = 3,
    OutOfBounds = 4,
}

impl From<Option<CellKind>> for PatchCell {
    fn from(kind: Option<CellKind>) -> Self {
        match kind {
            Some(CellKind::Free) => PatchCell::Free,
            Some(CellKind::Wall) => PatchCell::Wall,
            Some(CellKind::Trap) => PatchCell::Trap,
            Some(CellKind::Goal) => PatchCell::Goal,
            None => PatchCell::OutOfBounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "ObservationWire", try_from = "ObservationWire")]
pub enum Observation {
    FullState {
        x: usize,
        y: usize,
    },
    /// Indexed `[row][col]`; the agent sits at `[2][2]`.
    Patch([[PatchCell; PATCH_SIZE]; PATCH_SIZE]),
}

impl Observation {
    pub fn at(map: &GridMap, pos: Pos, mode: ObservationMode) -> Observation {
        match mode {
            ObservationMode::Full => Observation::FullState { x: pos.x, y: pos.y },
            ObservationMode::Patch => {
                let mut patch = [[PatchCell::OutOfBounds; PATCH_SIZE]; PATCH_SIZE];
                for (r, row) in patch.iter_mut().enumerate() {
                    for (c, cell) in row.iter_mut().enumerate() {
                        let x = pos.x as isize + c as isize - PATCH_RADIUS as isize;
                        let y = pos.y as isize + r as isize - PATCH_RADIUS as isize;
                        *cell = map.get(x, y).into();
                    }
                }
                Observation::Patch(patch)
            }
        }
    }
}

impl PatchCell {
    pub fn symbol(self) -> char {
        match self {
            PatchCell::Free => '.',
            PatchCell::Wall => '#',
            PatchCell::Trap => 'T',
            PatchCell::Goal => 'G',
            PatchCell::OutOfBounds => '?',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            '.' => PatchCell::Free,
            '#' => PatchCell::Wall,
            'T' => PatchCell::Trap,
            'G' => PatchCell::Goal,
            '?' => PatchCell::OutOfBounds,
            _ => return None,
        })
    }
}

/// Wire shape: patches travel as five row strings, `?` marking off-map cells.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ObservationWire {
    Full { x: usize, y: usize },
    Patch { rows: Vec<String> },
}

impl From<Observation> for ObservationWire {
    fn from(obs: Observation) -> Self {
        match obs {
            Observation::FullState { x, y } => ObservationWire::Full { x, y },
            Observation::Patch(p) => {
                ObservationWire::Patch { rows: p.iter().map(|row| row.iter().map(|c| c.symbol()).collect()).collect() }
            }
        }
    }
}

impl TryFrom<ObservationWire> for Observation {
    type Error = String;

    fn try_from(wire: ObservationWire) -> Result<Self, Self::Error> {
        match wire {
            ObservationWire::Full { x, y } => Ok(Observation::FullState { x, y }),
            ObservationWire::Patch { rows } => {
                let mut patch = [[PatchCell::OutOfBounds; PATCH_SIZE]; PATCH_SIZE];
                if rows.len() != PATCH_SIZE {
                    return Err(format!("patch needs {PATCH_SIZE} rows"));
                }
                for (r, row) in rows.iter().enumerate() {
                    let cells: Vec<char> = row.chars().collect();
                    if cells.len() != PATCH_SIZE {
                        return Err(format!("patch row {r} needs {PATCH_SIZE} cells"));
                    }
                    for (c, ch) in cells.into_iter().enumerate() {
                        patch[r][c] = PatchCell::from_symbol(ch).ok_or_else(|| format!("bad patch symbol {ch:?}"))?;
                    }
                }
                Ok(Observation::Patch(patch))
            }
        }
    }
}

/// Compact table key for an observation.
///
/// Full-state keys set the top bit and pack `x` and `y` into 31 bits each.
/// Patch keys are the 25 cells read row-major as base-5 digits, which stays
/// below `5^25 < 2^59`, so the two families never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObsKey(pub u64);

const FULL_TAG: u64 = 1 << 63;
const COORD_MASK: u64 = (1 << 31) - 1;

impl ObsKey {
    /// Inverse of the full-state encoding.
    pub fn as_full_state(self) -> Option<Pos> {
        (self.0 & FULL_TAG != 0)
            .then(|| Pos::new(((self.0 >> 31) & COORD_MASK) as usize, (self.0 & COORD_MASK) as usize))
    }
}

impl fmt::Display for ObsKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn obs_key(obs: &Observation) -> ObsKey {
    match *obs {
        Observation::FullState { x, y } => {
            assert!(x as u64 <= COORD_MASK && y as u64 <= COORD_MASK, "coordinates too large for key");
            ObsKey(FULL_TAG | (x as u64) << 31 | y as u64)
        }
        Observation::Patch(ref patch) => ObsKey(patch.iter().flatten().fold(0u64, |acc, &c| acc * 5 + c as u64)),
    }
}
