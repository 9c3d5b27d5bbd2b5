//! Step-by-step deployment sessions that pause at every expert call.
//!
//! The manager is transport-agnostic: every mutation returns the events it
//! produced, and the caller decides how to publish them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::agent::{Episode, EpisodeTrace, Outcome, Progress, ThresholdAgent, TraceStep};
use crate::env::{Action, EnvParams, GridWorld, ObservationMode, Pos, Termination};
use crate::expert::{ExpertRequest, WIRE_VERSION};
use crate::learner::TableFile;
use crate::maps;
use crate::oracle::learned_variance_map;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingExpert,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellVariance {
    pub x: usize,
    pub y: usize,
    pub variance: f64,
}

/// Everything a client needs to render a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub version: u32,
    pub id: String,
    pub map: String,
    pub grid: Vec<String>,
    pub mode: ObservationMode,
    pub epsilon: f64,
    pub seed: u64,
    pub pos: Pos,
    pub steps_taken: u32,
    pub status: SessionStatus,
    pub outcome: Option<Outcome>,
    pub pending_request: Option<ExpertRequest>,
    pub trace: Vec<TraceStep>,
    pub total_return: f64,
    pub expert_calls: u32,
    pub variance_map: Vec<CellVariance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Snapshot,
    Step,
    ExpertRequest,
    Finished,
}

/// One message on a session's event stream. Each carries a full snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub version: u32,
    pub seq: u64,
    pub kind: EventKind,
    pub session: SessionView,
}

/// Body of a session creation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub version: u32,
    pub map: String,
    /// Path to a saved table file.
    pub table: String,
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub env: Option<EnvParams>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub version: u32,
    pub id: String,
}

/// Body of an advance request; it carries nothing but the protocol version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub version: u32,
}

impl Default for AdvanceRequest {
    fn default() -> Self {
        AdvanceRequest { version: WIRE_VERSION }
    }
}

/// Body of an expert action submission. The action is kept as text so that
/// an unknown name is reported as a validation error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertActionBody {
    pub version: u32,
    pub action: String,
}

pub(crate) fn check_version(version: u32) -> Result<()> {
    if version != WIRE_VERSION {
        return Err(Error::Validation(format!("unsupported message version {version}, expected {WIRE_VERSION}")));
    }
    Ok(())
}

struct Session {
    id: String,
    world: GridWorld,
    mode: ObservationMode,
    agent: ThresholdAgent,
    epsilon: f64,
    seed: u64,
    episode: Episode,
    variance_map: Vec<CellVariance>,
    seq: u64,
}

impl Session {
    fn status(&self) -> SessionStatus {
        if self.episode.pending().is_some() {
            SessionStatus::AwaitingExpert
        } else if self.episode.is_finished() {
            SessionStatus::Finished
        } else {
            SessionStatus::Running
        }
    }

    fn view(&self) -> SessionView {
        let state = self.episode.state();
        let outcome = match state.status {
            Termination::Running => None,
            t => Outcome::try_from(t).ok(),
        };
        SessionView {
            version: WIRE_VERSION,
            id: self.id.clone(),
            map: self.world.map.name().to_string(),
            grid: self.world.map.rows(),
            mode: self.mode,
            epsilon: self.epsilon,
            seed: self.seed,
            pos: state.pos,
            steps_taken: state.steps_taken,
            status: self.status(),
            outcome,
            pending_request: self.episode.pending().cloned(),
            trace: self.episode.steps().to_vec(),
            total_return: self.episode.total_return(),
            expert_calls: self.episode.expert_calls(),
            variance_map: self.variance_map.clone(),
        }
    }

    fn event(&mut self, kind: EventKind) -> SessionEvent {
        self.seq += 1;
        SessionEvent { version: WIRE_VERSION, seq: self.seq, kind, session: self.view() }
    }

    fn after_step(&mut self) -> Vec<SessionEvent> {
        let mut events = vec![self.event(EventKind::Step)];
        if self.episode.is_finished() {
            events.push(self.event(EventKind::Finished));
        }
        events
    }
}

/// Result of a mutating call: the new view and the events to publish.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub view: SessionView,
    pub events: Vec<SessionEvent>,
}

/// Owns all live sessions. Mutations lock one session at a time; reads of
/// different sessions never contend.
#[derive(Default)]
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a session at the start state of `map`, driven by `tables` with
    /// threshold `epsilon`.
    pub fn create_session(
        &self,
        map: &str,
        tables: &TableFile,
        epsilon: f64,
        seed: u64,
        env: Option<EnvParams>,
    ) -> Result<String> {
        let grid = maps::builtin(map).ok_or_else(|| Error::NotFound(format!("map {map:?}")))?;
        if tables.meta.map != grid.name() {
            return Err(Error::Validation(format!(
                "tables were trained on {:?}, not {:?}",
                tables.meta.map,
                grid.name()
            )));
        }
        if epsilon.is_nan() {
            return Err(Error::Validation("threshold must be a number".into()));
        }
        let params = env.unwrap_or(EnvParams { gamma: tables.meta.gamma, ..EnvParams::default() });
        let world = GridWorld::new(grid, params)?;
        let mode = tables.meta.mode;
        let agent = ThresholdAgent { q: Arc::new(tables.q.clone()), m: Arc::new(tables.m.clone()), epsilon };
        let variance_map = learned_variance_map(&world, mode, &agent.q, &agent.m, "greedy")
            .values
            .into_iter()
            .map(|(p, variance)| CellVariance { x: p.x, y: p.y, variance })
            .collect();
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("s{n}-{:016x}", rand::random::<u64>());
        let episode = Episode::new(&world, mode, seed, id.clone());
        let session = Session { id: id.clone(), world, mode, agent, epsilon, seed, episode, variance_map, seq: 0 };
        self.sessions.write().expect("session registry poisoned").insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id:?}")))
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        let session = self.session(id)?;
        let guard = session.lock().expect("session poisoned");
        Ok(guard.view())
    }

    /// An event holding the current snapshot, for new stream subscribers.
    pub fn snapshot(&self, id: &str) -> Result<SessionEvent> {
        let session = self.session(id)?;
        let guard = session.lock().expect("session poisoned");
        Ok(SessionEvent { version: WIRE_VERSION, seq: guard.seq, kind: EventKind::Snapshot, session: guard.view() })
    }

    /// Takes one decision of the threshold rule.
    pub fn advance(&self, id: &str) -> Result<Update> {
        let session = self.session(id)?;
        let mut guard = session.lock().expect("session poisoned");
        let s = &mut *guard;
        let events = match s.episode.advance(&s.world, &s.agent)? {
            Progress::Stepped(_) => s.after_step(),
            Progress::AwaitingExpert(_) => vec![s.event(EventKind::ExpertRequest)],
            Progress::Finished(_) => vec![s.event(EventKind::Finished)],
        };
        Ok(Update { view: s.view(), events })
    }

    /// Executes the expert's action for the pending request, without slip.
    pub fn submit_expert_action(&self, id: &str, action: &str) -> Result<Update> {
        let action: Action = action.parse()?;
        let session = self.session(id)?;
        let mut guard = session.lock().expect("session poisoned");
        let s = &mut *guard;
        s.episode.submit_expert(&s.world, action)?;
        let events = s.after_step();
        Ok(Update { view: s.view(), events })
    }

    /// The completed trace of a finished session.
    pub fn trace(&self, id: &str) -> Result<EpisodeTrace> {
        let session = self.session(id)?;
        let guard = session.lock().expect("session poisoned");
        guard.episode.clone().into_trace()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session registry poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CreateSession {
    /// Loads the table file and opens the session.
    pub fn open(&self, manager: &SessionManager) -> Result<CreatedSession> {
        check_version(self.version)?;
        if maps::builtin(&self.map).is_none() {
            return Err(Error::NotFound(format!("map {:?}", self.map)));
        }
        let tables = TableFile::load(&self.table)?;
        let id = manager.create_session(&self.map, &tables, self.epsilon, self.seed, self.env)?;
        Ok(CreatedSession { version: WIRE_VERSION, id })
    }
}

impl AdvanceRequest {
    pub fn submit(&self, manager: &SessionManager, id: &str) -> Result<Update> {
        check_version(self.version)?;
        manager.advance(id)
    }
}

impl ExpertActionBody {
    pub fn submit(&self, manager: &SessionManager, id: &str) -> Result<Update> {
        check_version(self.version)?;
        manager.submit_expert_action(id, &self.action)
    }
}
