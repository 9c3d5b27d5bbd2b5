use serde::{Deserialize, Serialize};

use crate::env::{obs_key, Action, EnvState, GridWorld, ObsKey, ObservationMode, Pos, Termination};
use crate::expert::{Expert, ExpertRequest, WIRE_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Agent,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Goal,
    Trap,
    StepLimit,
}

impl TryFrom<Termination> for Outcome {
    type Error = Error;

    fn try_from(t: Termination) -> Result<Self> {
        match t {
            Termination::Goal => Ok(Outcome::Goal),
            Termination::Trap => Ok(Outcome::Trap),
            Termination::StepLimit => Ok(Outcome::StepLimit),
            Termination::Running => Err(Error::Conflict("episode still running".into())),
        }
    }
}

/// What a controller wants to do at the current observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Agent { action: Action, variance: Option<f64> },
    Expert { variance: Option<f64> },
}

pub trait Controller {
    fn decide(&self, key: ObsKey) -> Decision;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Position before the move.
    pub state: Pos,
    pub obs_key: ObsKey,
    pub action: Action,
    pub source: Source,
    pub reward: f64,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    /// Discounted return.
    pub total_return: f64,
    pub expert_calls: u32,
    pub outcome: Outcome,
}

impl EpisodeTrace {
    /// Recomputes the call count and discounted return from the steps.
    pub fn check(&self, gamma: f64) -> Result<()> {
        let calls = self.steps.iter().filter(|s| s.source == Source::Expert).count() as u32;
        if calls != self.expert_calls {
            return Err(Error::Validation(format!(
                "trace records {} calls but has {calls} expert steps",
                self.expert_calls
            )));
        }
        let ret = discounted(self.steps.iter().map(|s| s.reward), gamma);
        if ret != self.total_return {
            return Err(Error::Validation(format!("trace return {} differs from recomputed {ret}", self.total_return)));
        }
        Ok(())
    }
}

pub(crate) fn discounted(rewards: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let (mut total, mut discount) = (0.0, 1.0);
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    Stepped(TraceStep),
    AwaitingExpert(ExpertRequest),
    Finished(Outcome),
}

/// A deployment episode that can stop at every expert call and resume later.
///
/// The episode does not own the world or the controller; callers pass the same
/// ones on every call.
#[derive(Debug, Clone)]
pub struct Episode {
    id: String,
    mode: ObservationMode,
    state: EnvState,
    steps: Vec<TraceStep>,
    total_return: f64,
    discount: f64,
    pending: Option<ExpertRequest>,
}

impl Episode {
    pub fn new(world: &GridWorld, mode: ObservationMode, seed: u64, id: impl Into<String>) -> Self {
        Episode {
            id: id.into(),
            mode,
            state: world.reset(seed),
            steps: Vec::new(),
            total_return: 0.0,
            discount: 1.0,
            pending: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn pending(&self) -> Option<&ExpertRequest> {
        self.pending.as_ref()
    }

    pub fn total_return(&self) -> f64 {
        self.total_return
    }

    pub fn expert_calls(&self) -> u32 {
        self.steps.iter().filter(|s| s.source == Source::Expert).count() as u32
    }

    pub fn is_finished(&self) -> bool {
        self.state.status.is_done()
    }

    fn apply(&mut self, world: &GridWorld, action: Action, source: Source, variance: Option<f64>) -> Result<TraceStep> {
        let key = obs_key(&world.observe(&self.state, self.mode));
        let pos = self.state.pos;
        let result = world.step(&mut self.state, action, source == Source::Expert)?;
        let step = TraceStep { state: pos, obs_key: key, action, source, reward: result.reward, variance };
        self.total_return += self.discount * result.reward;
        self.discount *= world.params.gamma;
        self.steps.push(step);
        Ok(step)
    }

    /// Takes one decision. Agent moves are applied at once; an expert call
    /// parks the episode until [`Episode::submit_expert`].
    pub fn advance(&mut self, world: &GridWorld, controller: &dyn Controller) -> Result<Progress> {
        if self.pending.is_some() {
            return Err(Error::Conflict("waiting for an expert action".into()));
        }
        if self.is_finished() {
            return Err(Error::Conflict("episode has finished".into()));
        }
        let obs = world.observe(&self.state, self.mode);
        let key = obs_key(&obs);
        match controller.decide(key) {
            Decision::Agent { action, variance } => {
                Ok(Progress::Stepped(self.apply(world, action, Source::Agent, variance)?))
            }
            Decision::Expert { variance } => {
                let request = ExpertRequest {
                    version: WIRE_VERSION,
                    episode_id: self.id.clone(),
                    state: self.state.pos,
                    observation: obs,
                    obs_key: key,
                    variance: variance.unwrap_or(f64::NAN),
                    step: self.state.steps_taken,
                };
                self.pending = Some(request.clone());
                Ok(Progress::AwaitingExpert(request))
            }
        }
    }

    /// Executes the expert's answer to the pending request without slip.
    pub fn submit_expert(&mut self, world: &GridWorld, action: Action) -> Result<TraceStep> {
        let Some(request) = self.pending.take() else {
            return Err(Error::Conflict("no expert request pending".into()));
        };
        let variance = Some(request.variance).filter(|v| !v.is_nan());
        self.apply(world, action, Source::Expert, variance)
    }

    /// Runs to the end, answering calls with `expert`. An unavailable expert
    /// leaves the request pending and returns [`Error::ExpertUnavailable`];
    /// calling `play` again resumes.
    pub fn play(&mut self, world: &GridWorld, controller: &dyn Controller, expert: &dyn Expert) -> Result<()> {
        loop {
            if let Some(request) = &self.pending {
                let action = expert.advise(request)?;
                self.submit_expert(world, action)?;
            }
            if self.is_finished() {
                return Ok(());
            }
            self.advance(world, controller)?;
        }
    }

    pub fn into_trace(self) -> Result<EpisodeTrace> {
        let outcome = Outcome::try_from(self.state.status)?;
        let expert_calls = self.expert_calls();
        Ok(EpisodeTrace { steps: self.steps, total_return: self.total_return, expert_calls, outcome })
    }
}

/// Plays one full deployment episode from the map start.
pub fn run_episode(
    world: &GridWorld,
    mode: ObservationMode,
    controller: &dyn Controller,
    expert: &dyn Expert,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut episode = Episode::new(world, mode, seed, format!("seed-{seed}"));
    episode.play(world, controller, expert)?;
    episode.into_trace()
}
