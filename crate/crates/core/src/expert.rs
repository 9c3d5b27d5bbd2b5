//! The scripted expert: optimal play on slip-free dynamics, planned by value iteration.
//!
//! Expert actions are executed with `forced = true`, so the planner works on the
//! deterministic version of the world with the same reward constants. Traps and
//! goals are absorbing; their reward is collected on entry.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{Action, CellKind, GridWorld, ObsKey, Observation, Pos};
use crate::{Error, Result};

pub const WIRE_VERSION: u32 = 1;

const VI_TOLERANCE: f64 = 1e-9;
const VI_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPolicy {
    width: usize,
    /// Row-major; `None` for walls, terminals and cells with no path to a goal.
    action_of: Vec<Option<Action>>,
    values: Vec<Option<f64>>,
}

impl ExpertPolicy {
    fn idx(&self, p: Pos) -> Option<usize> {
        let i = p.y * self.width + p.x;
        (p.x < self.width && i < self.action_of.len()).then_some(i)
    }

    pub fn expert_action(&self, p: Pos) -> Result<Action> {
        self.idx(p)
            .and_then(|i| self.action_of[i])
            .ok_or_else(|| Error::Coverage(format!("expert has no action at {p}")))
    }

    /// Optimal slip-free return from `p`.
    pub fn value(&self, p: Pos) -> Option<f64> {
        self.idx(p).and_then(|i| self.values[i])
    }

    pub fn covers(&self, p: Pos) -> bool {
        self.idx(p).is_some_and(|i| self.action_of[i].is_some())
    }
}

/// Value iteration on slip-free moves. Ties within the convergence tolerance
/// go to the lowest action ordinal.
pub fn plan_optimal(world: &GridWorld) -> Result<ExpertPolicy> {
    let map = &world.map;
    let gamma = world.params.gamma;
    let n = map.width() * map.height();

    // Cells with a slip-free path to some goal; planning is restricted to them
    // so undiscounted worlds still converge.
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<Pos> = map.positions().filter(|&p| map.cell(p) == CellKind::Goal).collect();
    for &g in &queue {
        reaches[map.index(g)] = true;
    }
    while let Some(p) = queue.pop_front() {
        for cand in map.free_cells() {
            if reaches[map.index(cand)] {
                continue;
            }
            if Action::ALL.iter().any(|&a| map.destination(cand, a) == p) {
                reaches[map.index(cand)] = true;
                queue.push_back(cand);
            }
        }
    }
    if !reaches[map.index(map.start())] {
        return Err(Error::Planning(format!("no goal reachable from start {}", map.start())));
    }

    let states: Vec<Pos> = map.free_cells().into_iter().filter(|&p| reaches[map.index(p)]).collect();
    let backup = |values: &[f64], p: Pos, a: Action| -> Option<f64> {
        let dest = map.destination(p, a);
        let (reward, status) = world.reward_on_entry(dest);
        if status.is_absorbing() {
            Some(reward)
        } else if reaches[map.index(dest)] {
            Some(reward + gamma * values[map.index(dest)])
        } else {
            None
        }
    };

    let mut values = vec![0.0; n];
    let mut converged = false;
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for &p in &states {
            let best = Action::ALL.iter().filter_map(|&a| backup(&values, p, a)).fold(f64::NEG_INFINITY, f64::max);
            let i = map.index(p);
            delta = delta.max((best - values[i]).abs());
            values[i] = best;
        }
        if delta < VI_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Planning("value iteration did not converge".into()));
    }

    let mut action_of = vec![None; n];
    let mut out_values = vec![None; n];
    for &p in &states {
        let mut best: Option<(Action, f64)> = None;
        for a in Action::ALL {
            if let Some(v) = backup(&values, p, a) {
                if best.is_none_or(|(_, b)| v > b + VI_TOLERANCE) {
                    best = Some((a, v));
                }
            }
        }
        let i = map.index(p);
        action_of[i] = best.map(|(a, _)| a);
        out_values[i] = Some(values[i]);
    }
    Ok(ExpertPolicy { width: map.width(), action_of, values: out_values })
}

/// What the deployment loop tells an expert when it asks for help.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRequest {
    pub version: u32,
    pub episode_id: String,
    /// True position; experts always see the full state.
    pub state: Pos,
    pub observation: Observation,
    pub obs_key: ObsKey,
    pub variance: f64,
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertReply {
    pub version: u32,
    pub action: Action,
}

/// Anything that can answer an [`ExpertRequest`].
pub trait Expert {
    /// Returns [`Error::ExpertUnavailable`] when no answer can be given right now.
    fn advise(&self, request: &ExpertRequest) -> Result<Action>;
}

impl Expert for ExpertPolicy {
    fn advise(&self, request: &ExpertRequest) -> Result<Action> {
        self.expert_action(request.state)
    }
}

/// An expert that never answers; deployments using it pause at the first call.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbsentExpert;

impl Expert for AbsentExpert {
    fn advise(&self, _: &ExpertRequest) -> Result<Action> {
        Err(Error::ExpertUnavailable)
    }
}
