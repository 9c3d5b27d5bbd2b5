use std::collections::HashMap;

use crate::env::{Action, ObsKey};

use super::{update::greedy_action, ValueTable};

/// A deterministic movement policy over observation keys.
pub trait Policy {
    /// `None` when the policy has no action for `key`.
    fn action(&self, key: ObsKey) -> Option<Action>;
}

/// Greedy movement policy of a Q table. Defined everywhere; unseen keys pick `Up`.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a>(pub &'a ValueTable);

impl Policy for GreedyPolicy<'_> {
    fn action(&self, key: ObsKey) -> Option<Action> {
        Some(greedy_action(self.0, key))
    }
}

impl Policy for HashMap<ObsKey, Action> {
    fn action(&self, key: ObsKey) -> Option<Action> {
        self.get(&key).copied()
    }
}
