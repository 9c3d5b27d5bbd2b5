use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::env::{obs_key, GridWorld, Observation, ObservationMode, Pos};
use crate::learner::Policy;
use crate::seed::derive_seed;
use crate::{Error, Result};

use super::{Provenance, VarianceMap};

/// Unbiased sample variance and its standard error.
pub(crate) fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let s2 = m2 / (n - 1.0);
    let mu4 = m4 / n;
    let var_s2 = mu4 / n - s2 * s2 * (n - 3.0) / (n * (n - 1.0));
    (s2, var_s2.max(0.0).sqrt())
}

/// Monte-Carlo variance of the discounted return from every free cell the
/// policy covers: `k` independent rollouts per cell, no expert, episodes
/// capped at `max_steps`.
pub fn mc_variance<P: Policy + Sync + ?Sized>(
    world: &GridWorld,
    mode: ObservationMode,
    policy: &P,
    k: usize,
    seed: u64,
    policy_id: impl Into<String>,
) -> Result<VarianceMap> {
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 rollouts per state, got {k}")));
    }
    let map = &world.map;
    let cells: Vec<Pos> = map
        .free_cells()
        .into_iter()
        .filter(|&p| policy.action(obs_key(&Observation::at(map, p, mode))).is_some())
        .collect();
    let stats: Vec<(Pos, f64, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let cell_seed = derive_seed(seed, i as u64);
            let mut returns = Vec::with_capacity(k);
            for r in 0..k {
                let mut state = world.reset_at(start, derive_seed(cell_seed, r as u64));
                let (mut ret, mut discount) = (0.0, 1.0);
                while !state.status.is_done() {
                    let key = obs_key(&world.observe(&state, mode));
                    let action = policy
                        .action(key)
                        .ok_or_else(|| Error::Coverage(format!("policy has no action at {}", state.pos)))?;
                    let step = world.step(&mut state, action, false)?;
                    ret += discount * step.reward;
                    discount *= world.params.gamma;
                }
                returns.push(ret);
            }
            let (var, se) = sample_variance(&returns);
            Ok((start, var, se))
        })
        .collect::<Result<_>>()?;
    Ok(VarianceMap {
        values: stats.iter().map(|&(p, v, _)| (p, v)).collect(),
        stderr: Some(stats.iter().map(|&(p, _, se)| (p, se)).collect::<BTreeMap<_, _>>()),
        policy_id: policy_id.into(),
        provenance: Provenance::MonteCarlo(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_variance_small() {
        let (v, _) = sample_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert!((v - 5.0 / 3.0).abs() < 1e-12);
        let (v, se) = sample_variance(&[2.0; 10]);
        assert_eq!((v, se), (0.0, 0.0));
    }
}
