//! Behavior-cloning trainer: minibatch Adam with data-parallel gradient shards.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::obs::{Action, Observation, Standardizer, ACTION_DIM, OBS_DIM};
use super::{loss_grad_sum, target_vector, PolicyParams, HIDDEN};
use crate::error::{Error, Result};
use crate::nn::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcHyper {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Gradient shards per minibatch; the result does not depend on the thread count.
    pub shards: usize,
    pub hidden: Vec<usize>,
    pub out_gain: f64,
}

impl Default for BcHyper {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 64,
            epochs: 30,
            seed: 0,
            shards: 4,
            hidden: HIDDEN.to_vec(),
            out_gain: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcSample {
    pub obs: Observation,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    /// Minibatch loss of every step.
    pub curve: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub steps: usize,
}

/// Columns `idx` of `m`.
fn gather(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

pub fn train_bc(samples: &[BcSample], hyper: &BcHyper) -> Result<(PolicyParams, BcReport)> {
    if samples.is_empty() {
        return Err(Error::Dataset("behavior cloning needs at least one sample".into()));
    }
    if hyper.batch == 0 || hyper.shards == 0 || !(hyper.lr > 0.0) {
        return Err(Error::Config(format!("invalid trainer hyperparameters {hyper:?}")));
    }
    let stats = Standardizer::fit(samples.iter().map(|s| &s.obs[..]), OBS_DIM);
    let n = samples.len();
    let x = DMatrix::from_fn(OBS_DIM, n, |r, c| (samples[c].obs[r] - stats.mean[r]) / stats.std[r]);
    let targets: Vec<_> = samples.iter().map(|s| target_vector(&s.action)).collect();
    let y = DMatrix::from_fn(ACTION_DIM, n, |r, c| targets[c][r]);

    let mut policy = PolicyParams::init(&hyper.hidden, hyper.out_gain, hyper.seed);
    policy.stats = Some(stats);
    let mut opt = Adam::new(policy.net.params().len(), hyper.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_bc);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = BcReport {
        curve: Vec::new(),
        epoch_losses: Vec::new(),
        final_loss: f64::NAN,
        steps: 0,
    };
    let mut initial = None;
    let mut bad_epochs = 0;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(hyper.batch) {
            let shard_len = batch.len().div_ceil(hyper.shards);
            let net = &policy.net;
            let parts: Vec<(f64, Vec<f64>)> = batch
                .par_chunks(shard_len)
                .map(|idx| loss_grad_sum(net, gather(&x, idx), &gather(&y, idx)))
                .collect();
            let mut loss = 0.0;
            let mut grad = vec![0.0; net.params().len()];
            for (l, g) in &parts {
                loss += l;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            let m = batch.len() as f64;
            loss /= m;
            grad.iter_mut().for_each(|g| *g /= m);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, step {}",
                    report.steps
                )));
            }
            initial.get_or_insert(loss);
            opt.step(policy.net.params_mut(), &grad);
            report.curve.push(loss);
            report.steps += 1;
            epoch_sum += loss;
            batches += 1;
        }
        let epoch_loss = epoch_sum / batches as f64;
        report.epoch_losses.push(epoch_loss);
        let init = initial.expect("at least one batch");
        if epoch_loss > 10.0 * init {
            bad_epochs += 1;
            if bad_epochs >= 3 {
                return Err(Error::Diverged(format!(
                    "epoch loss {epoch_loss:.4e} above 10x initial {init:.4e} for 3 epochs (epoch {epoch}, lr {})",
                    hyper.lr
                )));
            }
        } else {
            bad_epochs = 0;
        }
        log::debug!("bc epoch {epoch}: loss {epoch_loss:.5}");
    }
    policy.quantize();
    report.final_loss = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok((policy, report))
}
