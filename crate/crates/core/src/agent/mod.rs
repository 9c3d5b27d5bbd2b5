//! Deployment-time policies and the episode runner they share.

mod episode;
mod penalty;

pub use episode::{run_episode, Controller, Decision, Episode, EpisodeTrace, Outcome, Progress, Source, TraceStep};
pub use penalty::{penalty_act, penalty_train, PenaltyAgent, PenaltyConfig, CALL_EXPERT};

use crate::env::{Action, ObsKey, Pos};
use crate::expert::{Expert, ExpertRequest, WIRE_VERSION};
use crate::learner::{greedy_action, greedy_variance, ValueTable};
use crate::Result;

use std::sync::Arc;

/// Greedy agent that asks for an expert action whenever the variance of
/// return at its greedy action reaches `epsilon`.
#[derive(Debug, Clone)]
pub struct ThresholdAgent {
    pub q: Arc<ValueTable>,
    pub m: Arc<ValueTable>,
    pub epsilon: f64,
}

impl Controller for ThresholdAgent {
    fn decide(&self, key: ObsKey) -> Decision {
        let variance = greedy_variance(&self.q, &self.m, key);
        if variance >= self.epsilon {
            Decision::Expert { variance: Some(variance) }
        } else {
            Decision::Agent { action: greedy_action(&self.q, key), variance: Some(variance) }
        }
    }
}

/// Never calls the expert. With `m` present it reports the same variance
/// column as [`ThresholdAgent`], so traces of the two compare directly.
#[derive(Debug, Clone)]
pub struct GreedyAgent {
    pub q: Arc<ValueTable>,
    pub m: Option<Arc<ValueTable>>,
}

impl Controller for GreedyAgent {
    fn decide(&self, key: ObsKey) -> Decision {
        Decision::Agent {
            action: greedy_action(&self.q, key),
            variance: self.m.as_ref().map(|m| greedy_variance(&self.q, m, key)),
        }
    }
}

/// One decision of the threshold rule, resolving expert calls immediately.
pub fn hula_act(
    q: &ValueTable,
    m: &ValueTable,
    key: ObsKey,
    state: Pos,
    epsilon: f64,
    expert: &impl Expert,
) -> Result<(Action, Source)> {
    let variance = greedy_variance(q, m, key);
    if variance >= epsilon {
        let request = ExpertRequest {
            version: WIRE_VERSION,
            episode_id: String::new(),
            state,
            observation: crate::env::Observation::FullState { x: state.x, y: state.y },
            obs_key: key,
            variance,
            step: 0,
        };
        Ok((expert.advise(&request)?, Source::Expert))
    } else {
        Ok((greedy_action(q, key), Source::Agent))
    }
}
