use std::collections::BTreeMap;

use crate::env::{obs_key, Action, GridWorld, Observation, ObservationMode, Pos, Termination};
use crate::learner::Policy;
use crate::{Error, Result};

use super::{Provenance, VarianceMap};

const TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000_000;

struct Outcome {
    dest: usize,
    prob: f64,
    reward: f64,
    absorbing: bool,
}

/// Exact `Q` and second moment `M` of a fixed policy, for every free cell and action.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEval {
    cells: Vec<Pos>,
    index: BTreeMap<Pos, usize>,
    policy: Vec<Action>,
    q: Vec<[f64; 4]>,
    m: Vec<[f64; 4]>,
    var: Vec<[f64; 4]>,
}

impl ExactEval {
    fn slot(&self, p: Pos) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn cells(&self) -> &[Pos] {
        &self.cells
    }

    pub fn policy_action(&self, p: Pos) -> Option<Action> {
        self.slot(p).map(|i| self.policy[i])
    }

    pub fn q(&self, p: Pos, a: Action) -> Option<f64> {
        self.slot(p).map(|i| self.q[i][a.ordinal()])
    }

    pub fn m(&self, p: Pos, a: Action) -> Option<f64> {
        self.slot(p).map(|i| self.m[i][a.ordinal()])
    }

    /// Variance of the return, `M - Q^2`, solved directly rather than by
    /// subtraction so it carries no cancellation error.
    pub fn variance(&self, p: Pos, a: Action) -> Option<f64> {
        self.slot(p).map(|i| self.var[i][a.ordinal()].max(0.0))
    }

    /// Per-state variance at the evaluated policy's own action.
    pub fn variance_map(&self, policy_id: impl Into<String>) -> VarianceMap {
        let values =
            self.cells.iter().map(|&p| (p, self.variance(p, self.policy_action(p).unwrap()).unwrap())).collect();
        VarianceMap { values, stderr: None, policy_id: policy_id.into(), provenance: Provenance::ExactDp }
    }
}

/// Evaluates `policy` on the true slippery kernel by fixed-point iteration.
///
/// `Q(s,a) = sum p(s'|s,a) [r + g Q(s', pi(s'))]` and
/// `M(s,a) = sum p(s'|s,a) [r^2 + 2 g r Q(s', pi(s')) + g^2 M(s', pi(s'))]`.
/// When `max_steps < 10 / (1 - g)` the step cap is modelled exactly by backward
/// induction over the horizon; otherwise the infinite-horizon fixed point is used.
/// The policy must be defined on every free cell reachable from the start.
pub fn exact_policy_eval<P: Policy + ?Sized>(
    world: &GridWorld,
    mode: ObservationMode,
    policy: &P,
) -> Result<ExactEval> {
    let map = &world.map;
    let params = &world.params;
    let gamma = params.gamma;

    let all_free = map.free_cells();
    let mut index = BTreeMap::new();
    let mut cells = Vec::new();
    let mut actions = Vec::new();
    for &p in &all_free {
        if let Some(a) = policy.action(obs_key(&Observation::at(map, p, mode))) {
            index.insert(p, cells.len());
            cells.push(p);
            actions.push(a);
        }
    }

    // Coverage: every free cell reachable from the start by any move sequence.
    let mut seen = vec![false; map.width() * map.height()];
    let mut stack = vec![map.start()];
    seen[map.index(map.start())] = true;
    while let Some(p) = stack.pop() {
        if !index.contains_key(&p) {
            return Err(Error::Coverage(format!("policy has no action at reachable cell {p}")));
        }
        for a in Action::ALL {
            let d = map.destination(p, a);
            if !seen[map.index(d)] && !map.cell(d).is_terminal() {
                seen[map.index(d)] = true;
                stack.push(d);
            }
        }
    }

    let mut kernel: Vec<[Vec<Outcome>; 4]> = Vec::with_capacity(cells.len());
    for &p in &cells {
        let per_action = Action::ALL.map(|a| {
            world
                .transitions(p, a, false)
                .into_iter()
                .map(|(dest, prob)| {
                    let (reward, status) = world.reward_on_entry(dest);
                    let absorbing = status == Termination::Goal || status == Termination::Trap;
                    Outcome {
                        dest: if absorbing { usize::MAX } else { index.get(&dest).copied().unwrap_or(usize::MAX) },
                        prob,
                        reward,
                        absorbing,
                    }
                })
                .collect::<Vec<_>>()
        });
        for outs in &per_action {
            if outs.iter().any(|o| !o.absorbing && o.dest == usize::MAX) {
                return Err(Error::Coverage(format!("policy has no action at a successor of {p}")));
            }
        }
        kernel.push(per_action);
    }

    // Mean, second moment and variance of the one-step backup. The variance
    // uses the law of total variance, so a single certain outcome gives exactly 0.
    let backup = |v: &[f64], w: &[f64], u: &[f64], i: usize, a: usize| -> (f64, f64, f64) {
        let outs = &kernel[i][a];
        let value = |o: &Outcome| if o.absorbing { o.reward } else { o.reward + gamma * v[o.dest] };
        let q: f64 = outs.iter().map(|o| o.prob * value(o)).sum();
        let (mut m, mut var) = (0.0, 0.0);
        for o in outs {
            let r = o.reward;
            let x = value(o);
            var += o.prob * (x - q) * (x - q);
            if o.absorbing {
                m += o.prob * r * r;
            } else {
                m += o.prob * (r * r + 2.0 * gamma * r * v[o.dest] + gamma * gamma * w[o.dest]);
                var += o.prob * gamma * gamma * u[o.dest];
            }
        }
        (q, m, var)
    };

    let n = cells.len();
    let pol: Vec<usize> = actions.iter().map(|a| a.ordinal()).collect();
    let finite = gamma >= 1.0 || (params.max_steps as f64) < 10.0 / (1.0 - gamma);
    // v, w, u: Q, M and variance at the policy action.
    let (mut v, mut w, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    if finite {
        for _ in 1..params.max_steps {
            let next: Vec<(f64, f64, f64)> = (0..n).map(|i| backup(&v, &w, &u, i, pol[i])).collect();
            v = next.iter().map(|x| x.0).collect();
            w = next.iter().map(|x| x.1).collect();
            u = next.iter().map(|x| x.2).collect();
        }
    } else {
        // The mean converges on its own; the second moment and variance are then solved against it.
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let q = backup(&v, &w, &u, i, pol[i]).0;
                delta = delta.max((q - v[i]).abs());
                v[i] = q;
            }
            if delta < TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Domain("policy evaluation did not converge".into()));
        }
        for _ in 0..MAX_SWEEPS {
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let (_, m, var) = backup(&v, &w, &u, i, pol[i]);
                delta = delta.max((m - w[i]).abs() / m.abs().max(1.0));
                delta = delta.max((var - u[i]).abs() / var.abs().max(1.0));
                w[i] = m;
                u[i] = var;
            }
            if delta < TOLERANCE {
                break;
            }
        }
    }

    let mut q = vec![[0.0; 4]; n];
    let mut m = vec![[0.0; 4]; n];
    let mut var = vec![[0.0; 4]; n];
    for i in 0..n {
        for a in 0..4 {
            (q[i][a], m[i][a], var[i][a]) = backup(&v, &w, &u, i, a);
        }
    }
    Ok(ExactEval { cells, index, policy: actions, q, m, var })
}
