//! Clipped-surrogate policy-gradient update with a value baseline and
//! generalized advantage estimation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::log_prob;
use super::{GaussianPolicy, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Approximate KL above which the remaining epochs are skipped.
    pub kl_stop: f64,
    pub lr: f64,
    pub value_lr: f64,
    pub minibatch: usize,
    pub max_grad_norm: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            kl_stop: 0.5,
            lr: 3e-4,
            value_lr: 1e-3,
            minibatch: 256,
            max_grad_norm: 1.0,
        }
    }
}

/// Advantages and value targets of one trajectory.
pub fn gae(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut next_value = traj.bootstrap;
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
        next_value = traj.values[t];
    }
    let returns = adv.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to mean 0 and (population) std 1. A constant batch
/// becomes all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 0.0 };
    adv.iter_mut().for_each(|a| *a = (*a - mean) * scale);
}

/// Flattened training batch in trajectory order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    /// Computes advantages per trajectory, then normalizes them over the batch.
    pub fn from_trajectories(trajs: &[Trajectory], hyper: &PpoHyper) -> Self {
        let mut b = Self::default();
        for t in trajs {
            let (adv, ret) = gae(t, hyper.gamma, hyper.lambda);
            b.obs.extend(t.obs.iter().cloned());
            b.actions.extend(t.actions.iter().cloned());
            b.log_probs.extend_from_slice(&t.log_probs);
            b.advantages.extend(adv);
            b.returns.extend(ret);
        }
        normalize_advantages(&mut b.advantages);
        b
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Per-sample clipped objective `min(r A, clip(r) A)` and its derivative in
/// `r`. The derivative is zero whenever the clipped term is the one selected.
pub fn surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    let (u, c) = (ratio * adv, clipped * adv);
    if u <= c {
        (u, adv)
    } else {
        (c, 0.0)
    }
}

fn obs_matrix(policy: &GaussianPolicy, rows: &[&Vec<f64>]) -> DMatrix<f64> {
    let dim = policy.obs_dim();
    let mut x = DMatrix::zeros(dim, rows.len());
    for (j, o) in rows.iter().enumerate() {
        x.set_column(j, &nalgebra::DVector::from_vec(policy.normalize(o)));
    }
    x
}

/// Negative mean clipped surrogate over `idx`, its gradient with respect to
/// the actor parameters and the approximate KL `mean((r - 1) - ln r)`.
pub fn ppo_loss(policy: &GaussianPolicy, batch: &Batch, idx: &[usize], clip: f64) -> (f64, Vec<f64>, f64) {
    let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &batch.obs[i]).collect();
    let trace = policy.mean.forward_batch(obs_matrix(policy, &rows));
    let mu = trace.output();
    let act = policy.act_dim();
    let n = idx.len() as f64;
    let mut d_out = DMatrix::zeros(act, idx.len());
    let mut g_log_std = vec![0.0; act];
    let (mut loss, mut kl) = (0.0, 0.0);
    for (j, &i) in idx.iter().enumerate() {
        let mean: Vec<f64> = mu.column(j).iter().copied().collect();
        let a = &batch.actions[i];
        let lp = log_prob(&mean, &policy.log_std, a);
        let ratio = (lp - batch.log_probs[i]).exp();
        let (obj, d_ratio) = surrogate(ratio, batch.advantages[i], clip);
        loss -= obj / n;
        kl += ((ratio - 1.0) - (lp - batch.log_probs[i])) / n;
        let d_lp = -d_ratio * ratio / n;
        if d_lp != 0.0 {
            for k in 0..act {
                let var = (2.0 * policy.log_std[k]).exp();
                let diff = a[k] - mean[k];
                d_out[(k, j)] = d_lp * diff / var;
                g_log_std[k] += d_lp * (diff * diff / var - 1.0);
            }
        }
    }
    let (mut grad, _) = policy.mean.backward(&trace, &d_out);
    grad.extend(g_log_std);
    (loss, grad, kl)
}

/// Half mean squared value error over `idx` and its gradient.
fn value_loss(policy: &GaussianPolicy, batch: &Batch, idx: &[usize]) -> (f64, Vec<f64>) {
    let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &batch.obs[i]).collect();
    let trace = policy.value.forward_batch(obs_matrix(policy, &rows));
    let v = trace.output();
    let n = idx.len() as f64;
    let mut d = DMatrix::zeros(1, idx.len());
    let mut loss = 0.0;
    for (j, &i) in idx.iter().enumerate() {
        let e = v[(0, j)] - batch.returns[i];
        loss += 0.5 * e * e / n;
        d[(0, j)] = e / n;
    }
    (loss, policy.value.backward(&trace, &d).0)
}

/// Optimizer state carried across updates.
#[derive(Debug, Clone)]
pub struct PpoOptimizer {
    actor: Adam,
    critic: Adam,
    rng: ChaCha8Rng,
}

impl PpoOptimizer {
    pub fn new(policy: &GaussianPolicy, hyper: &PpoHyper, seed: u64) -> Self {
        Self {
            actor: Adam::new(policy.actor_params().len(), hyper.lr),
            critic: Adam::new(policy.value.params().len(), hyper.value_lr),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub epochs: usize,
    pub early_stopped: bool,
    /// Approximate KL of the last completed epoch.
    pub kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Up to `hyper.epochs` passes of shuffled minibatch steps; stops early once
/// the approximate KL to the behavior policy exceeds `hyper.kl_stop`.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    batch: &Batch,
    hyper: &PpoHyper,
    opt: &mut PpoOptimizer,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Input("empty policy-gradient batch".into()));
    }
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let size = hyper.minibatch.max(1);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut opt.rng);
        let (mut pl, mut vl, mut kl) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(size) {
            let w = chunk.len() as f64 / batch.len() as f64;
            let (l, mut g, k) = ppo_loss(policy, batch, chunk, hyper.clip);
            clip_grad_norm(&mut g, hyper.max_grad_norm);
            let mut p = policy.actor_params();
            opt.actor.step(&mut p, &g);
            policy.set_actor_params(&p);
            let (v, mut gv) = value_loss(policy, batch, chunk);
            clip_grad_norm(&mut gv, hyper.max_grad_norm);
            opt.critic.step(policy.value.params_mut(), &gv);
            pl += w * l;
            vl += w * v;
            kl += w * k;
        }
        if !(pl.is_finite() && vl.is_finite()) || policy.actor_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged("non-finite policy-gradient loss or parameters".into()));
        }
        stats.epochs += 1;
        stats.kl = kl;
        stats.policy_loss = pl;
        stats.value_loss = vl;
        if kl > hyper.kl_stop {
            stats.early_stopped = true;
            break;
        }
    }
    Ok(stats)
}
