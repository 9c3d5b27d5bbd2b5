use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, Controller, EpisodeTrace, PenaltyAgent, PenaltyConfig, ThresholdAgent};
use crate::env::{GridWorld, ObservationMode};
use crate::expert::{Expert, ExpertPolicy};
use crate::learner::{greedy_variance, TrainConfig, ValueTable};
use crate::seed::derive_seed;
use crate::{agent, Result};

/// Aggregate of one deployment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// The swept threshold or call penalty.
    #[serde(rename = "param")]
    pub param_value: f64,
    #[serde(rename = "calls")]
    pub mean_expert_calls: f64,
    #[serde(rename = "return")]
    pub mean_return: f64,
    #[serde(rename = "stderr")]
    pub return_stderr: f64,
    pub episodes: usize,
}

impl SweepPoint {
    fn from_traces(param_value: f64, traces: &[EpisodeTrace]) -> Self {
        let n = traces.len() as f64;
        let mean_expert_calls = traces.iter().map(|t| t.expert_calls as f64).sum::<f64>() / n;
        let mean_return = traces.iter().map(|t| t.total_return).sum::<f64>() / n;
        let return_stderr = if traces.len() > 1 {
            let ss: f64 = traces.iter().map(|t| (t.total_return - mean_return).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        SweepPoint { param_value, mean_expert_calls, mean_return, return_stderr, episodes: traces.len() }
    }
}

/// Runs `episodes` deployments with seeds `derive(seed, 0..episodes)`.
/// The same seeds are used for every configuration evaluated with one master seed.
pub fn evaluate(
    world: &GridWorld,
    mode: ObservationMode,
    controller: &(dyn Controller + Sync),
    expert: &(dyn Expert + Sync),
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeTrace>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| run_episode(world, mode, controller, expert, derive_seed(seed, i as u64)))
        .collect()
}

/// Largest greedy-action variance anywhere in the tables.
pub fn max_table_variance(q: &ValueTable, m: &ValueTable) -> f64 {
    q.keys().into_iter().map(|k| greedy_variance(q, m, k)).fold(0.0, f64::max)
}

/// Twenty thresholds spaced geometrically from `1e-3` up to `max_variance`.
pub fn default_eps_grid(max_variance: f64) -> Vec<f64> {
    let lo: f64 = 1e-3;
    let hi = max_variance.max(2.0 * lo);
    let n = 20;
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn default_c_grid() -> Vec<f64> {
    vec![0.0, -0.1, -0.3, -1.0, -3.0, -10.0, -30.0, -100.0]
}

/// Threshold sweep over fixed tables. Points come back ordered by mean expert
/// calls, ties in grid order.
#[allow(clippy::too_many_arguments)]
pub fn sweep_threshold(
    world: &GridWorld,
    mode: ObservationMode,
    q: &ValueTable,
    m: &ValueTable,
    expert: &(dyn Expert + Sync),
    eps_grid: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let (q, m) = (Arc::new(q.clone()), Arc::new(m.clone()));
    let mut points = eps_grid
        .par_iter()
        .map(|&epsilon| {
            let agent = ThresholdAgent { q: q.clone(), m: m.clone(), epsilon };
            let traces = evaluate(world, mode, &agent, expert, episodes, seed)?;
            Ok(SweepPoint::from_traces(epsilon, &traces))
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.mean_expert_calls.total_cmp(&b.mean_expert_calls));
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySweep {
    pub points: Vec<SweepPoint>,
    /// `(c, expert calls spent in training)` in grid order.
    pub training_calls: Vec<(f64, u64)>,
}

impl PenaltySweep {
    pub fn total_training_calls(&self) -> u64 {
        self.training_calls.iter().map(|t| t.1).sum()
    }
}

/// Trains one call-penalty agent per `c` (training seed derived from `seed` and
/// the grid index) and deploys each without the penalty.
pub fn sweep_penalty(
    world: &GridWorld,
    mode: ObservationMode,
    c_grid: &[f64],
    base: &TrainConfig,
    expert: &ExpertPolicy,
    episodes: usize,
    seed: u64,
) -> Result<PenaltySweep> {
    let results = c_grid
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let cfg = PenaltyConfig {
                call_penalty: c,
                train: TrainConfig { seed: derive_seed(seed, 1_000_000 + i as u64), ..base.clone() },
            };
            let trained = agent::penalty_train(world, mode, &cfg, expert)?;
            let controller = PenaltyAgent { q5: Arc::new(trained.q) };
            let traces = evaluate(world, mode, &controller, expert, episodes, seed)?;
            Ok((SweepPoint::from_traces(c, &traces), (c, trained.log.expert_calls)))
        })
        .collect::<Result<Vec<_>>>()?;
    let training_calls = results.iter().map(|r| r.1).collect();
    let mut points: Vec<SweepPoint> = results.into_iter().map(|r| r.0).collect();
    points.sort_by(|a, b| a.mean_expert_calls.total_cmp(&b.mean_expert_calls));
    Ok(PenaltySweep { points, training_calls })
}

/// Trailing moving average of every coordinate; `len - window + 1` points.
/// Standard errors are averaged the same way and `episodes` keeps the minimum.
pub fn rolling_mean(points: &[SweepPoint], window: usize) -> Vec<SweepPoint> {
    if window == 0 || window > points.len() {
        return Vec::new();
    }
    points
        .windows(window)
        .map(|w| {
            let n = w.len() as f64;
            let avg = |f: fn(&SweepPoint) -> f64| w.iter().map(f).sum::<f64>() / n;
            SweepPoint {
                param_value: avg(|p| p.param_value),
                mean_expert_calls: avg(|p| p.mean_expert_calls),
                mean_return: avg(|p| p.mean_return),
                return_stderr: avg(|p| p.return_stderr),
                episodes: w.iter().map(|p| p.episodes).min().unwrap_or(0),
            }
        })
        .collect()
}
