use serde::{Deserialize, Serialize};

use crate::env::{Action, ObsKey};

use super::ValueTable;

/// One sampled step as the tables see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub key: ObsKey,
    pub action: usize,
    pub reward: f64,
    pub next_key: ObsKey,
    /// The successor is absorbing (goal or trap); its continuation value is zero.
    pub next_done: bool,
}

/// Form of the cross term in the second-moment target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MUpdateMode {
    /// `r^2 + 2 g r Q' + g^2 M'`, the expansion of `E[(r + g R')^2]`.
    #[default]
    Corrected,
    /// `r^2 + 2 g Q' + g^2 M'`, with the reward factor dropped from the cross term.
    #[serde(alias = "paper_literal")]
    Literal,
}

impl std::str::FromStr for MUpdateMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corrected" => Ok(MUpdateMode::Corrected),
            "literal" | "paper_literal" => Ok(MUpdateMode::Literal),
            other => Err(crate::Error::Validation(format!("unknown m-update mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for MUpdateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MUpdateMode::Corrected => "corrected",
            MUpdateMode::Literal => "literal",
        })
    }
}

pub fn q_target(q: &ValueTable, t: &Transition, gamma: f64) -> f64 {
    if t.next_done {
        t.reward
    } else {
        t.reward + gamma * q.max_value(t.next_key)
    }
}

/// `Q(k,a) <- (1-alpha) Q(k,a) + alpha * (r + gamma * max_a' Q(k',a'))`.
pub fn q_update(q: &mut ValueTable, t: &Transition, alpha: f64, gamma: f64) {
    let target = q_target(q, t, gamma);
    let old = q.get(t.key, t.action);
    q.apply(t.key, t.action, (1.0 - alpha) * old + alpha * target);
}

/// Sampled second-moment target, continuing with the greedy action of `q` at the successor.
pub fn m_target(m: &ValueTable, q: &ValueTable, t: &Transition, gamma: f64, mode: MUpdateMode) -> f64 {
    let r = t.reward;
    if t.next_done {
        return r * r;
    }
    let next_a = q.greedy(t.next_key);
    let q_next = q.get(t.next_key, next_a);
    let m_next = m.get(t.next_key, next_a);
    let cross = match mode {
        MUpdateMode::Corrected => 2.0 * gamma * r * q_next,
        MUpdateMode::Literal => 2.0 * gamma * q_next,
    };
    r * r + cross + gamma * gamma * m_next
}

pub fn m_update(m: &mut ValueTable, q: &ValueTable, t: &Transition, alpha: f64, gamma: f64, mode: MUpdateMode) {
    let target = m_target(m, q, t, gamma, mode);
    let old = m.get(t.key, t.action);
    m.apply(t.key, t.action, (1.0 - alpha) * old + alpha * target);
}

/// `max(0, M - Q^2)`; the clamp absorbs transient inconsistency between the two estimates.
pub fn variance(q: &ValueTable, m: &ValueTable, key: ObsKey, action: usize) -> f64 {
    let mean = q.get(key, action);
    (m.get(key, action) - mean * mean).max(0.0)
}

/// Greedy movement action; lower ordinals win ties.
pub fn greedy_action(q: &ValueTable, key: ObsKey) -> Action {
    let row: Vec<f64> = Action::ALL.iter().map(|a| q.get(key, a.ordinal())).collect();
    Action::ALL[super::table::argmax(&row)]
}

/// Variance at the action the greedy agent would take.
pub fn greedy_variance(q: &ValueTable, m: &ValueTable, key: ObsKey) -> f64 {
    variance(q, m, key, q.greedy(key))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(u64, usize, f64)]) -> ValueTable {
        let mut t = ValueTable::new(4, 0.0);
        for &(k, a, v) in entries {
            t.insert(ObsKey(k), a, v, 1);
        }
        t
    }

    fn tr(reward: f64, next_done: bool) -> Transition {
        Transition { key: ObsKey(1), action: 3, reward, next_key: ObsKey(2), next_done }
    }

    #[test]
    fn q_half_step() {
        let mut q = ValueTable::new(4, 0.0);
        q_update(&mut q, &tr(1.0, false), 0.5, 0.9);
        assert_eq!(q.get(ObsKey(1), 3), 0.5);
        assert_eq!(q.visits(ObsKey(1), 3), 1);
    }

    #[test]
    fn q_alpha_endpoints() {
        let base = table(&[(1, 3, 2.0), (2, 0, 4.0)]);
        let mut q = base.clone();
        q_update(&mut q, &tr(1.0, false), 1.0, 0.5);
        assert_eq!(q.get(ObsKey(1), 3), 3.0);
        let mut q = base.clone();
        q_update(&mut q, &tr(1.0, false), 1e-12, 0.5);
        assert!((q.get(ObsKey(1), 3) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn q_terminal_target() {
        let mut q = table(&[(2, 0, 100.0)]);
        q_update(&mut q, &tr(10.0, true), 1.0, 0.9);
        assert_eq!(q.get(ObsKey(1), 3), 10.0);
    }

    #[test]
    fn m_terminal_is_reward_squared() {
        let q = table(&[(2, 0, 5.0)]);
        for mode in [MUpdateMode::Corrected, MUpdateMode::Literal] {
            let mut m = ValueTable::new(4, 0.0);
            m_update(&mut m, &q, &tr(3.0, true), 1.0, 0.9, mode);
            assert_eq!(m.get(ObsKey(1), 3), 9.0);
        }
    }

    #[test]
    fn m_modes_differ_by_reward_factor() {
        let q = table(&[(2, 1, 2.0)]);
        let m = table(&[(2, 1, 4.0)]);
        let t = tr(2.0, false);
        assert_eq!(m_target(&m, &q, &t, 0.5, MUpdateMode::Corrected), 9.0);
        assert_eq!(m_target(&m, &q, &t, 0.5, MUpdateMode::Literal), 7.0);
        // r = 1 makes the two forms agree
        let t1 = tr(1.0, false);
        assert_eq!(
            m_target(&m, &q, &t1, 0.5, MUpdateMode::Corrected),
            m_target(&m, &q, &t1, 0.5, MUpdateMode::Literal)
        );
    }

    #[test]
    fn m_uses_greedy_successor() {
        // Successor greedy action is 1 (value 2); action 0 holds a distractor second moment.
        let q = table(&[(2, 0, 1.0), (2, 1, 2.0)]);
        let m = table(&[(2, 0, 100.0), (2, 1, 4.0)]);
        assert_eq!(m_target(&m, &q, &tr(2.0, false), 0.5, MUpdateMode::Corrected), 9.0);
    }

    #[test]
    fn variance_clamps() {
        let q = table(&[(1, 0, 3.0)]);
        for (mv, want) in [(9.0, 0.0), (10.0, 1.0), (8.0, 0.0)] {
            let m = table(&[(1, 0, mv)]);
            assert_eq!(variance(&q, &m, ObsKey(1), 0), want);
        }
    }

    #[test]
    fn greedy_ties() {
        assert_eq!(greedy_action(&table(&[(1, 0, 1.0)]), ObsKey(1)), Action::Up);
        assert_eq!(greedy_action(&table(&[]), ObsKey(1)), Action::Up);
        assert_eq!(greedy_action(&table(&[(1, 1, 2.0), (1, 2, 2.0)]), ObsKey(1)), Action::Down);
    }
}
