use std::collections::HashMap;

use crate::env::ObsKey;

/// Largest action set any table holds: four moves plus the call action of the penalty baseline.
pub const MAX_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Row {
    values: [f64; MAX_ACTIONS],
    visits: [u64; MAX_ACTIONS],
}

/// Sparse `(observation key, action) -> value` table with per-entry visit counts.
///
/// Used for both the expected-return table and the second-moment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n_actions: usize,
    default_value: f64,
    rows: HashMap<ObsKey, Row>,
}

impl ValueTable {
    pub fn new(n_actions: usize, default_value: f64) -> Self {
        assert!((1..=MAX_ACTIONS).contains(&n_actions), "unsupported action count {n_actions}");
        ValueTable { n_actions, default_value, rows: HashMap::new() }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn get(&self, key: ObsKey, action: usize) -> f64 {
        debug_assert!(action < self.n_actions);
        self.rows.get(&key).map_or(self.default_value, |r| r.values[action])
    }

    pub fn visits(&self, key: ObsKey, action: usize) -> u64 {
        self.rows.get(&key).map_or(0, |r| r.visits[action])
    }

    pub fn total_visits(&self, key: ObsKey) -> u64 {
        self.rows.get(&key).map_or(0, |r| r.visits[..self.n_actions].iter().sum())
    }

    pub fn contains(&self, key: ObsKey) -> bool {
        self.rows.contains_key(&key)
    }

    /// Writes a new value and counts it as one applied update.
    pub fn apply(&mut self, key: ObsKey, action: usize, value: f64) {
        debug_assert!(action < self.n_actions);
        let default = self.default_value;
        let row = self.rows.entry(key).or_insert(Row { values: [default; MAX_ACTIONS], visits: [0; MAX_ACTIONS] });
        row.values[action] = value;
        row.visits[action] += 1;
    }

    /// Sets a value and visit count directly, as when loading a saved table.
    pub fn insert(&mut self, key: ObsKey, action: usize, value: f64, visits: u64) {
        let default = self.default_value;
        let row = self.rows.entry(key).or_insert(Row { values: [default; MAX_ACTIONS], visits: [0; MAX_ACTIONS] });
        row.values[action] = value;
        row.visits[action] = visits;
    }

    /// Index of the largest value; the lowest index wins ties.
    pub fn greedy(&self, key: ObsKey) -> usize {
        match self.rows.get(&key) {
            None => 0,
            Some(row) => argmax(&row.values[..self.n_actions]),
        }
    }

    pub fn max_value(&self, key: ObsKey) -> f64 {
        self.get(key, self.greedy(key))
    }

    /// Keys in ascending order.
    pub fn keys(&self) -> Vec<ObsKey> {
        let mut keys: Vec<_> = self.rows.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// First index of the maximum. NaN never wins.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
