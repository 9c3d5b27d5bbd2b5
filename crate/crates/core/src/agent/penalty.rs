//! Baseline that treats calling the expert as a fifth action, penalised by a
//! constant during training only.

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Action, GridWorld, ObsKey, ObservationMode, Pos, StepResult};
use crate::expert::ExpertPolicy;
use crate::learner::{run_q_learning, TrainConfig, Trained, ValueTable};
use crate::{Error, Result};

use super::{Controller, Decision, Source};

/// Index of the call action in five-action tables; after the moves so moves win ties.
pub const CALL_EXPERT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Added to the reward of every training step that calls the expert; at most zero.
    pub call_penalty: f64,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// Q-learning over `{Up, Down, Left, Right, CallExpert}`. A call executes the
/// expert's slip-free move and is charged `call_penalty`; the returned log's
/// `expert_calls` counts every call made while training.
pub fn penalty_train(
    world: &GridWorld,
    mode: ObservationMode,
    cfg: &PenaltyConfig,
    expert: &ExpertPolicy,
) -> Result<Trained> {
    if cfg.call_penalty.is_nan() || cfg.call_penalty > 0.0 {
        return Err(Error::Validation(format!("call penalty {} must be <= 0", cfg.call_penalty)));
    }
    let calls = Cell::new(0u64);
    let mut trained = run_q_learning(world, mode, &cfg.train, CALL_EXPERT + 1, |state, a| {
        if a == CALL_EXPERT {
            calls.set(calls.get() + 1);
            let action = expert.expert_action(state.pos)?;
            let step = world.step(state, action, true)?;
            Ok(StepResult { reward: step.reward + cfg.call_penalty, ..step })
        } else {
            world.step(state, Action::ALL[a], false)
        }
    })?;
    trained.log.expert_calls = calls.get();
    Ok(trained)
}

/// Greedy over five actions; a chosen call resolves to the expert's move with no penalty.
pub fn penalty_act(q5: &ValueTable, key: ObsKey, state: Pos, expert: &ExpertPolicy) -> Result<(Action, Source)> {
    match q5.greedy(key) {
        CALL_EXPERT => Ok((expert.expert_action(state)?, Source::Expert)),
        a => Ok((Action::ALL[a], Source::Agent)),
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyAgent {
    pub q5: Arc<ValueTable>,
}

impl Controller for PenaltyAgent {
    fn decide(&self, key: ObsKey) -> Decision {
        match self.q5.greedy(key) {
            CALL_EXPERT => Decision::Expert { variance: None },
            a => Decision::Agent { action: Action::ALL[a], variance: None },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{parse_map, EnvParams};
    use crate::expert::plan_optimal;

    fn setup() -> (GridWorld, ExpertPolicy) {
        let w = GridWorld::new(parse_map("S..G").unwrap(), EnvParams::default()).unwrap();
        let e = plan_optimal(&w).unwrap();
        (w, e)
    }

    fn row(values: [f64; 5]) -> ValueTable {
        let mut t = ValueTable::new(5, 0.0);
        for (a, v) in values.into_iter().enumerate() {
            t.insert(ObsKey(9), a, v, 1);
        }
        t
    }

    #[test]
    fn call_resolves_to_expert() {
        let (_, e) = setup();
        let q = row([0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(penalty_act(&q, ObsKey(9), Pos::new(0, 0), &e).unwrap(), (Action::Right, Source::Expert));
    }

    #[test]
    fn movement_choice_is_agent() {
        let (_, e) = setup();
        let q = row([0.0, 0.0, 2.0, 0.0, 1.0]);
        assert_eq!(penalty_act(&q, ObsKey(9), Pos::new(0, 0), &e).unwrap(), (Action::Left, Source::Agent));
    }

    #[test]
    fn moves_win_ties_with_call() {
        let (_, e) = setup();
        let q = row([1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(penalty_act(&q, ObsKey(9), Pos::new(0, 0), &e).unwrap(), (Action::Up, Source::Agent));
    }

    #[test]
    fn training_consumes_calls() {
        let (w, e) = setup();
        let cfg =
            PenaltyConfig { call_penalty: -1.0, train: TrainConfig { max_episodes: 200, ..TrainConfig::default() } };
        let t = penalty_train(&w, ObservationMode::Full, &cfg, &e).unwrap();
        assert!(t.log.expert_calls > 0);
        assert_eq!(t.q.n_actions(), 5);
    }

    #[test]
    fn positive_penalty_rejected() {
        let (w, e) = setup();
        let cfg = PenaltyConfig { call_penalty: 1.0, train: TrainConfig::default() };
        assert!(penalty_train(&w, ObservationMode::Full, &cfg, &e).is_err());
    }
}
