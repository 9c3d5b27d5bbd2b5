//! Ground truth for return variance: exact dynamic programming on the known
//! kernel, Monte-Carlo rollouts, and the top-N overlap metric.

mod exact;
mod mc;

pub use exact::{exact_policy_eval, ExactEval};
pub use mc::mc_variance;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{obs_key, GridWorld, Observation, ObservationMode, Pos};
use crate::learner::{greedy_variance, ValueTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactDp,
    MonteCarlo(usize),
    Learned,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::ExactDp => f.write_str("exact_dp"),
            Provenance::MonteCarlo(k) => write!(f, "monte_carlo({k})"),
            Provenance::Learned => f.write_str("learned"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_dp" => Ok(Provenance::ExactDp),
            "learned" => Ok(Provenance::Learned),
            _ => s
                .strip_prefix("monte_carlo(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.parse().ok())
                .map(Provenance::MonteCarlo)
                .ok_or_else(|| Error::Validation(format!("unknown provenance {s:?}"))),
        }
    }
}

/// Per-state variance of return, keyed by true position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceMap {
    pub values: BTreeMap<Pos, f64>,
    /// Standard error of each value; Monte-Carlo maps only.
    pub stderr: Option<BTreeMap<Pos, f64>>,
    pub policy_id: String,
    pub provenance: Provenance,
}

impl VarianceMap {
    pub fn max_value(&self) -> f64 {
        self.values.values().copied().fold(0.0, f64::max)
    }
}

/// Learned variance at each free cell, read through the cell's observation key.
/// Aliased cells share a value.
pub fn learned_variance_map(
    world: &GridWorld,
    mode: ObservationMode,
    q: &ValueTable,
    m: &ValueTable,
    policy_id: impl Into<String>,
) -> VarianceMap {
    let values = world
        .map
        .free_cells()
        .into_iter()
        .map(|p| (p, greedy_variance(q, m, obs_key(&Observation::at(&world.map, p, mode)))))
        .collect();
    VarianceMap { values, stderr: None, policy_id: policy_id.into(), provenance: Provenance::Learned }
}

/// The `n` highest-variance states; equal values fall back to row-major order.
fn top_n(map: &VarianceMap, n: usize) -> Vec<Pos> {
    let mut cells: Vec<(Pos, f64)> = map.values.iter().map(|(&p, &v)| (p, v)).collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cells.into_iter().take(n).map(|(p, _)| p).collect()
}

/// Fraction of the true top-`n` variance states that the estimate also ranks in its top `n`.
pub fn topn_accuracy(estimated: &VarianceMap, truth: &VarianceMap, n: usize) -> Result<f64> {
    if !estimated.values.keys().eq(truth.values.keys()) {
        return Err(Error::Domain("variance maps cover different states".into()));
    }
    if n == 0 || n > truth.values.len() {
        return Err(Error::Domain(format!("N = {n} outside 1..={}", truth.values.len())));
    }
    let a = top_n(estimated, n);
    let b = top_n(truth, n);
    let hits = a.iter().filter(|p| b.contains(p)).count();
    Ok(hits as f64 / n as f64)
}
