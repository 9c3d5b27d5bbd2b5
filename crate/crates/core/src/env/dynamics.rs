use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{Action, CellKind, GridMap, Observation, ObservationMode, Pos};

/// What a slipped move may turn into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipMode {
    /// Uniform over all four directions, the intended one included.
    #[default]
    Inclusive,
    /// Uniform over the three other directions.
    Exclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    /// Probability that the intended move is executed before slip is considered.
    pub psi: f64,
    pub step_penalty: f64,
    pub trap_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    pub max_steps: u32,
    pub slip: SlipMode,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            psi: 0.45,
            step_penalty: -0.1,
            trap_reward: -10.0,
            goal_reward: 10.0,
            gamma: 0.95,
            max_steps: 200,
            slip: SlipMode::Inclusive,
        }
    }
}

impl EnvParams {
    pub fn with_psi(self, psi: f64) -> Self {
        EnvParams { psi, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.psi) {
            return Err(Error::Validation(format!("psi {} outside [0, 1]", self.psi)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Validation(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if self.max_steps == 0 {
            return Err(Error::Validation("max_steps must be at least 1".into()));
        }
        if self.step_penalty.is_nan() || self.step_penalty > 0.0 {
            return Err(Error::Validation(format!("step_penalty {} must be <= 0", self.step_penalty)));
        }
        Ok(())
    }

    /// Probability that a non-forced move in direction `actual` happens when `intended` was chosen.
    pub fn move_probability(&self, intended: Action, actual: Action) -> f64 {
        let slip = 1.0 - self.psi;
        match (self.slip, intended == actual) {
            (SlipMode::Inclusive, true) => self.psi + slip / 4.0,
            (SlipMode::Inclusive, false) => slip / 4.0,
            (SlipMode::Exclusive, true) => self.psi,
            (SlipMode::Exclusive, false) => slip / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Goal,
    Trap,
    StepLimit,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::Running
    }

    /// Goal and trap end the process; a step limit only truncates it.
    pub fn is_absorbing(self) -> bool {
        matches!(self, Termination::Goal | Termination::Trap)
    }
}

/// Mutable episode state. Holds its own generator so an episode replays
/// exactly from its seed.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub pos: Pos,
    pub steps_taken: u32,
    pub status: Termination,
    rng: ChaCha8Rng,
}

impl EnvState {
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub status: Termination,
}

/// A map together with its dynamics and reward constants.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub map: GridMap,
    pub params: EnvParams,
}

impl GridWorld {
    pub fn new(map: GridMap, params: EnvParams) -> Result<Self> {
        params.validate()?;
        Ok(GridWorld { map, params })
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        self.reset_at(self.map.start(), seed)
    }

    /// Starts an episode from an arbitrary free cell.
    pub fn reset_at(&self, pos: Pos, seed: u64) -> EnvState {
        debug_assert_eq!(self.map.cell(pos), CellKind::Free);
        EnvState { pos, steps_taken: 0, status: Termination::Running, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Reward for a move that lands on `dest`.
    pub fn reward_on_entry(&self, dest: Pos) -> (f64, Termination) {
        let p = &self.params;
        match self.map.cell(dest) {
            CellKind::Trap => (p.step_penalty + p.trap_reward, Termination::Trap),
            CellKind::Goal => (p.step_penalty + p.goal_reward, Termination::Goal),
            _ => (p.step_penalty, Termination::Running),
        }
    }

    /// Direction actually executed. Forced moves never slip and draw nothing from the generator.
    fn executed(&self, state: &mut EnvState, action: Action, forced: bool) -> Action {
        if forced {
            return action;
        }
        let u: f64 = state.rng.random();
        if u < self.params.psi {
            return action;
        }
        match self.params.slip {
            SlipMode::Inclusive => Action::ALL[state.rng.random_range(0..4)],
            SlipMode::Exclusive => {
                let i = state.rng.random_range(0..3);
                *Action::ALL.iter().filter(|&&a| a != action).nth(i).unwrap()
            }
        }
    }

    pub fn step(&self, state: &mut EnvState, action: Action, forced: bool) -> Result<StepResult> {
        if state.status.is_done() {
            return Err(Error::IllegalTransition(format!("episode already ended ({:?})", state.status)));
        }
        let dir = self.executed(state, action, forced);
        let dest = self.map.destination(state.pos, dir);
        let (reward, mut status) = self.reward_on_entry(dest);
        state.pos = dest;
        state.steps_taken += 1;
        if status == Termination::Running && state.steps_taken >= self.params.max_steps {
            status = Termination::StepLimit;
        }
        state.status = status;
        Ok(StepResult { reward, status })
    }

    /// Successor distribution of a move from `pos`, merged by destination.
    /// Entries appear in action-ordinal order of their first contributing direction.
    pub fn transitions(&self, pos: Pos, action: Action, forced: bool) -> Vec<(Pos, f64)> {
        if forced {
            return vec![(self.map.destination(pos, action), 1.0)];
        }
        let mut out: Vec<(Pos, f64)> = Vec::with_capacity(4);
        for actual in Action::ALL {
            let p = self.params.move_probability(action, actual);
            if p == 0.0 {
                continue;
            }
            let dest = self.map.destination(pos, actual);
            match out.iter_mut().find(|(d, _)| *d == dest) {
                Some((_, q)) => *q += p,
                None => out.push((dest, p)),
            }
        }
        out
    }

    pub fn observe(&self, state: &EnvState, mode: ObservationMode) -> Observation {
        Observation::at(&self.map, state.pos, mode)
    }
}
