//! Diagonal Gaussian policy with a state-independent learned log-std and a
//! separate value network.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::policy::{HeadKind, ModelFile, Standardizer};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    pub stats: Standardizer,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// `log N(a; mean, exp(log_std)^2)` summed over dimensions.
pub fn log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

impl GaussianPolicy {
    /// Small output gain on the mean head, so the initial policy is nearly
    /// centered on zero.
    pub fn init(obs_dim: usize, act_dim: usize, hidden: &[usize], log_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            mean: Mlp::init(&sizes(obs_dim, hidden, act_dim), 0.01, &mut rng),
            log_std: vec![log_std; act_dim],
            value: Mlp::init(&sizes(obs_dim, hidden, 1), 1.0, &mut rng),
            stats: Standardizer::identity(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.output_dim()
    }

    pub fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Shape(format!("observation has {} values, policy expects {}", obs.len(), self.obs_dim())));
        }
        Ok(())
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        self.stats.apply(obs)
    }

    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.forward(&self.normalize(obs))
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(&self.normalize(obs))[0]
    }

    /// Sampled action, its log-probability and the value estimate.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64, f64) {
        let x = self.normalize(obs);
        let mean = self.mean.forward(&x);
        let a: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_prob(&mean, &self.log_std, &a);
        (a, lp, self.value.forward(&x)[0])
    }

    /// Actor parameters: mean network, then log-std.
    pub fn actor_params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_actor_params(&mut self, p: &[f64]) {
        let n = self.mean.params().len();
        self.mean.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            head: HeadKind::Gaussian,
            net: self.mean.clone(),
            mean: self.stats.mean.clone(),
            std: self.stats.std.clone(),
            extra: self.log_std.clone(),
        }
    }

    pub fn value_model_file(&self) -> ModelFile {
        ModelFile {
            head: HeadKind::Linear,
            net: self.value.clone(),
            mean: self.stats.mean.clone(),
            std: self.stats.std.clone(),
            extra: Vec::new(),
        }
    }

    /// Actor from a Gaussian model file; the value network is reset to zeros
    /// unless `value` is given.
    pub fn from_model_files(actor: ModelFile, value: Option<ModelFile>) -> Result<Self> {
        if actor.head != HeadKind::Gaussian {
            return Err(Error::ModelFile(format!("expected a Gaussian model, found {:?}", actor.head)));
        }
        if actor.extra.len() != actor.net.output_dim() {
            return Err(Error::ModelFile(format!(
                "{} log-std values for {} outputs",
                actor.extra.len(),
                actor.net.output_dim()
            )));
        }
        let dim = actor.net.input_dim();
        let stats = if actor.mean.is_empty() {
            Standardizer::identity(dim)
        } else {
            Standardizer { mean: actor.mean, std: actor.std }
        };
        let value = match value {
            Some(v) if v.net.input_dim() == dim && v.net.output_dim() == 1 => v.net,
            Some(v) => return Err(Error::ModelFile(format!("value network {:?} does not fit input {dim}", v.net.sizes()))),
            None => {
                let mut s = actor.net.sizes().to_vec();
                *s.last_mut().expect("non-empty") = 1;
                Mlp::zeros(&s)
            }
        };
        Ok(Self {
            mean: actor.net,
            log_std: actor.extra,
            value,
            stats,
        })
    }

    pub fn quantize(&mut self) {
        let mut a = self.to_model_file();
        let mut v = self.value_model_file();
        a.quantize();
        v.quantize();
        *self = Self::from_model_files(a, Some(v)).expect("same architecture");
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model_files(ModelFile::load(path)?, None)
    }
}
