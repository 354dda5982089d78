//! Stochastic episode rollouts, data-parallel across seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Env, GaussianPolicy};
use crate::datagen::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub seed: u64,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// True only at the last element.
    pub dones: Vec<bool>,
    /// Value of the state after the last step when the episode was cut off,
    /// zero when it ended in a terminal state.
    pub bootstrap: f64,
    pub success: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Samples one episode of at most `horizon` steps. The action noise stream is
/// derived from `seed`, so the trajectory is a function of policy, env and seed.
pub fn rollout<E: Env>(policy: &GaussianPolicy, env: &mut E, seed: u64, horizon: usize) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Config("rollout horizon must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5A));
    let mut obs = env.reset(seed)?;
    policy.check_obs(&obs)?;
    let mut traj = Trajectory {
        seed,
        ..Trajectory::default()
    };
    for t in 0..horizon {
        let (a, lp, v) = policy.sample(&obs, &mut rng);
        let step = env.step(&a).inspect_err(|e| log::warn!("rollout seed {seed} aborted at step {t}: {e}"))?;
        if !step.reward.is_finite() {
            return Err(Error::Diverged(format!("non-finite reward at step {t} of seed {seed}")));
        }
        traj.obs.push(obs);
        traj.actions.push(a);
        traj.rewards.push(step.reward);
        traj.values.push(v);
        traj.log_probs.push(lp);
        let last = step.done || t + 1 == horizon;
        traj.dones.push(last);
        if last {
            traj.bootstrap = if step.terminal { 0.0 } else { policy.value_of(&step.obs) };
            traj.success = step.success;
            break;
        }
        obs = step.obs;
    }
    Ok(traj)
}

/// One trajectory per seed, in seed-list order regardless of scheduling.
pub fn collect<E, F>(policy: &GaussianPolicy, make_env: F, seeds: &[u64], horizon: usize) -> Result<Vec<Trajectory>>
where
    E: Env,
    F: Fn() -> E + Sync,
{
    seeds
        .par_iter()
        .map(|&s| rollout(policy, &mut make_env(), s, horizon))
        .collect()
}
