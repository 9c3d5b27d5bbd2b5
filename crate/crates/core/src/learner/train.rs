use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvState, GridWorld, ObsKey, ObservationMode, StepResult};
use crate::seed::derive_seed;
use crate::{Error, Result};

use super::policy::Policy;
use super::update::{m_update, q_update, MUpdateMode, Transition};
use super::ValueTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    #[default]
    Constant,
    /// `1 / (1 + visits)` per table entry.
    VisitDecay,
}

impl std::str::FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(AlphaMode::Constant),
            "visit_decay" => Ok(AlphaMode::VisitDecay),
            other => Err(Error::Validation(format!("unknown step-size mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha_mode: AlphaMode,
    /// Step size used by [`AlphaMode::Constant`].
    pub alpha: f64,
    pub explore_eps_start: f64,
    pub explore_eps_end: f64,
    /// Fraction of `max_episodes` over which exploration anneals linearly.
    pub explore_fraction: f64,
    /// Episodes collected with a frozen table before the batch of updates.
    pub episodes_per_iter: usize,
    pub max_episodes: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub m_update_mode: MUpdateMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha_mode: AlphaMode::Constant,
            alpha: 0.1,
            explore_eps_start: 1.0,
            explore_eps_end: 0.05,
            explore_fraction: 0.5,
            episodes_per_iter: 10,
            max_episodes: 20_000,
            convergence_window: 500,
            convergence_tol: 0.01,
            m_update_mode: MUpdateMode::Corrected,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.explore_eps_start, self.explore_eps_end, self.explore_fraction];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("exploration settings must lie in [0, 1]".into()));
        }
        if self.alpha_mode == AlphaMode::Constant && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.episodes_per_iter == 0 || self.max_episodes == 0 || self.convergence_window == 0 {
            return Err(Error::Validation("episode counts must be positive".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, visits: u64) -> f64 {
        match self.alpha_mode {
            AlphaMode::Constant => self.alpha,
            AlphaMode::VisitDecay => 1.0 / (1.0 + visits as f64),
        }
    }

    fn anneal_episodes(&self) -> usize {
        (self.explore_fraction * self.max_episodes as f64).round() as usize
    }

    /// Exploration rate for a given episode index.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let span = self.anneal_episodes();
        if span == 0 || episode >= span {
            return self.explore_eps_end;
        }
        let frac = episode as f64 / span as f64;
        self.explore_eps_start + (self.explore_eps_end - self.explore_eps_start) * frac
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Discounted return of every training episode.
    pub episode_returns: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Expert actions executed during training.
    pub expert_calls: u64,
    pub transitions: u64,
    pub converged: bool,
}

impl TrainingLog {
    pub fn episodes(&self) -> usize {
        self.episode_returns.len()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub q: ValueTable,
    pub m: ValueTable,
    pub log: TrainingLog,
}

pub(crate) fn key_of(world: &GridWorld, state: &EnvState, mode: ObservationMode) -> ObsKey {
    crate::env::obs_key(&world.observe(state, mode))
}

/// Rolling-mean stability test: three consecutive checks within tolerance.
struct ConvergenceCheck {
    last_mean: Option<f64>,
    stable: usize,
}

impl ConvergenceCheck {
    fn observe(&mut self, cfg: &TrainConfig, returns: &[f64]) -> bool {
        if returns.len() < cfg.convergence_window {
            return false;
        }
        let tail = &returns[returns.len() - cfg.convergence_window..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        match self.last_mean.replace(mean) {
            Some(prev) if (mean - prev).abs() < cfg.convergence_tol => self.stable += 1,
            _ => self.stable = 0,
        }
        self.stable >= 3
    }
}

/// Shared batch Q-learning loop. `exec` carries out action index `a` on the state;
/// it is where the penalty baseline splices in its call action.
pub(crate) fn run_q_learning<E>(
    world: &GridWorld,
    mode: ObservationMode,
    cfg: &TrainConfig,
    n_actions: usize,
    mut exec: E,
) -> Result<Trained>
where
    E: FnMut(&mut EnvState, usize) -> Result<StepResult>,
{
    cfg.validate()?;
    let gamma = world.params.gamma;
    let mut q = ValueTable::new(n_actions, 0.0);
    let mut m = ValueTable::new(n_actions, 0.0);
    let mut log = TrainingLog::default();
    let mut explore = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
    let mut check = ConvergenceCheck { last_mean: None, stable: 0 };
    let anneal_end = cfg.anneal_episodes();
    let mut batch: Vec<Transition> = Vec::new();

    while log.episodes() < cfg.max_episodes {
        batch.clear();
        let n = cfg.episodes_per_iter.min(cfg.max_episodes - log.episodes());
        for _ in 0..n {
            let episode = log.episodes();
            let eps = cfg.epsilon_at(episode);
            let mut state = world.reset(derive_seed(cfg.seed, episode as u64));
            let mut key = key_of(world, &state, mode);
            let (mut ret, mut discount) = (0.0, 1.0);
            loop {
                let action = if eps > 0.0 && explore.random::<f64>() < eps {
                    explore.random_range(0..n_actions)
                } else {
                    q.greedy(key)
                };
                let step = exec(&mut state, action)?;
                let next_key = key_of(world, &state, mode);
                batch.push(Transition {
                    key,
                    action,
                    reward: step.reward,
                    next_key,
                    next_done: step.status.is_absorbing(),
                });
                ret += discount * step.reward;
                discount *= gamma;
                key = next_key;
                if step.status.is_done() {
                    break;
                }
            }
            log.episode_returns.push(ret);
            log.epsilons.push(eps);
        }
        for t in &batch {
            let alpha = cfg.step_size(q.visits(t.key, t.action));
            q_update(&mut q, t, alpha, gamma);
            let alpha = cfg.step_size(m.visits(t.key, t.action));
            m_update(&mut m, &q, t, alpha, gamma, cfg.m_update_mode);
        }
        log.transitions += batch.len() as u64;
        if log.episodes() >= anneal_end && check.observe(cfg, &log.episode_returns) {
            log.converged = true;
            break;
        }
    }
    Ok(Trained { q, m, log })
}

/// Expert-free training of the Q and second-moment tables.
///
/// Episodes are collected `episodes_per_iter` at a time under epsilon-greedy
/// exploration of the current Q, then every transition is replayed in
/// collection order through [`q_update`] and [`m_update`]. Convergence is only
/// tested once exploration has finished annealing.
pub fn train(world: &GridWorld, mode: ObservationMode, cfg: &TrainConfig) -> Result<Trained> {
    run_q_learning(world, mode, cfg, Action::COUNT, |state, a| world.step(state, Action::ALL[a], false))
}

/// Temporal-difference evaluation of a fixed policy: both targets continue
/// with the policy's own action instead of the greedy one.
pub fn evaluate_policy<P: Policy>(
    world: &GridWorld,
    mode: ObservationMode,
    policy: &P,
    cfg: &TrainConfig,
) -> Result<(ValueTable, ValueTable)> {
    cfg.validate()?;
    let gamma = world.params.gamma;
    let mut q = ValueTable::new(Action::COUNT, 0.0);
    let mut m = ValueTable::new(Action::COUNT, 0.0);
    let act = |key: ObsKey| policy.action(key).ok_or_else(|| Error::Coverage(format!("observation {key}")));
    for episode in 0..cfg.max_episodes {
        let mut state = world.reset(derive_seed(cfg.seed, episode as u64));
        let mut key = key_of(world, &state, mode);
        loop {
            let a = act(key)?;
            let step = world.step(&mut state, a, false)?;
            let next_key = key_of(world, &state, mode);
            let (mut qt, mut mt) = (step.reward, step.reward * step.reward);
            if !step.status.is_absorbing() {
                let na = act(next_key)?.ordinal();
                let (qn, mn) = (q.get(next_key, na), m.get(next_key, na));
                qt += gamma * qn;
                mt += 2.0 * gamma * step.reward * qn + gamma * gamma * mn;
            }
            let i = a.ordinal();
            let alpha = cfg.step_size(q.visits(key, i));
            q.apply(key, i, (1.0 - alpha) * q.get(key, i) + alpha * qt);
            let alpha = cfg.step_size(m.visits(key, i));
            m.apply(key, i, (1.0 - alpha) * m.get(key, i) + alpha * mt);
            key = next_key;
            if step.status.is_done() {
                break;
            }
        }
    }
    Ok((q, m))
}
