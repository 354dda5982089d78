//! Teacher-student distillation by dataset aggregation: the student drives,
//! the teacher labels every visited state, the student regresses onto the
//! growing dataset.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{InHandEnv, ObsMode};
use super::train::{eval_seeds, evaluate_policy, EvalStats};
use super::{Env, GaussianPolicy, RlConfig, SubSkillId, STUDENT_OBS_DIM};
use crate::datagen::derive_seed;
use crate::error::{Error, IoContext, Result};
use crate::nn::{Adam, Mlp};
use crate::policy::Standardizer;
use crate::sim::Simulator;

pub const STUDENT_FILE: &str = "student.dxpm";
pub const DISTILL_REPORT_FILE: &str = "distill_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub rounds: usize,
    pub episodes_per_round: usize,
    /// Step cap of the data-collection episodes.
    pub horizon: usize,
    /// Regression passes over the aggregated data after each round.
    pub epochs: usize,
    pub lr: f64,
    pub minibatch: usize,
    /// Student/teacher success ratio below which distillation is reported as failed.
    pub min_ratio: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            episodes_per_round: 50,
            horizon: 60,
            epochs: 20,
            lr: 1e-3,
            minibatch: 128,
            min_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub samples: usize,
    /// Mean squared error to the teacher's mean action, per dimension.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub skill: SubSkillId,
    pub rounds: Vec<RoundMetrics>,
    pub teacher: EvalStats,
    pub student: EvalStats,
}

impl DistillReport {
    pub fn ratio(&self) -> f64 {
        if self.teacher.successes == 0 {
            return 0.0;
        }
        self.student.rate() / self.teacher.rate()
    }
}

/// Mean squared error over samples and dimensions, and its parameter gradient.
fn regression(net: &Mlp, stats: &Standardizer, x: &[Vec<f64>], y: &[Vec<f64>], idx: &[usize]) -> (f64, Vec<f64>) {
    let mut m = DMatrix::zeros(net.input_dim(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        m.set_column(j, &nalgebra::DVector::from_vec(stats.apply(&x[i])));
    }
    let trace = net.forward_batch(m);
    let out = trace.output();
    let scale = (idx.len() * net.output_dim()) as f64;
    let mut d = DMatrix::zeros(net.output_dim(), idx.len());
    let mut loss = 0.0;
    for (j, &i) in idx.iter().enumerate() {
        for k in 0..net.output_dim() {
            let e = out[(k, j)] - y[i][k];
            loss += e * e / scale;
            d[(k, j)] = 2.0 * e / scale;
        }
    }
    (loss, net.backward(&trace, &d).0)
}

/// One episode driven by the student (or the teacher in round 0), labelled
/// by the teacher: `(student observation, teacher mean action)` pairs.
fn labelled_episode(
    sim: &Simulator,
    cfg: &RlConfig,
    skill: SubSkillId,
    teacher: &GaussianPolicy,
    student: Option<&GaussianPolicy>,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut env = InHandEnv::new(sim, cfg, skill, ObsMode::Teacher);
    env.horizon = cfg.distill.horizon;
    let mut obs = env.reset(seed)?;
    let mut out = Vec::new();
    for _ in 0..cfg.distill.horizon {
        let s_obs = env.student_observation();
        let label = teacher.mean_action(&obs);
        let act = match student {
            Some(s) => s.mean_action(&s_obs),
            None => label.clone(),
        };
        out.push((s_obs, label));
        let step = env.step(&act)?;
        if step.done {
            break;
        }
        obs = step.obs;
    }
    Ok(out)
}

/// Distills `teacher` into a student on force-feedback observations and
/// evaluates both on the same held-out seeds.
pub fn distill(
    sim: &Simulator,
    cfg: &RlConfig,
    skill: SubSkillId,
    teacher: &GaussianPolicy,
    out: Option<&Path>,
) -> Result<(GaussianPolicy, DistillReport)> {
    cfg.validate()?;
    let dc = &cfg.distill;
    let base = derive_seed(cfg.seed, 0xD157 + skill.index() as u64);
    let mut student = GaussianPolicy::init(STUDENT_OBS_DIM, teacher.act_dim(), &cfg.hidden, cfg.initial_log_std, base);
    student.log_std = teacher.log_std.clone();
    let mut opt = Adam::new(student.mean.params().len(), dc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, u64::MAX));
    let (mut xs, mut ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (Vec::new(), Vec::new());
    let mut rounds = Vec::with_capacity(dc.rounds);
    for round in 0..dc.rounds {
        let seeds: Vec<u64> = (0..dc.episodes_per_round)
            .map(|e| derive_seed(base, (round * dc.episodes_per_round + e) as u64))
            .collect();
        let driver = (round > 0).then_some(&student);
        let episodes = seeds
            .par_iter()
            .map(|&s| labelled_episode(sim, cfg, skill, teacher, driver, s))
            .collect::<Result<Vec<_>>>()?;
        for (x, y) in episodes.into_iter().flatten() {
            xs.push(x);
            ys.push(y);
        }
        if round == 0 {
            student.stats = Standardizer::fit(xs.iter().map(Vec::as_slice), STUDENT_OBS_DIM);
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..dc.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(dc.minibatch.max(1)) {
                let (_, g) = regression(&student.mean, &student.stats, &xs, &ys, chunk);
                opt.step(student.mean.params_mut(), &g);
            }
        }
        let all: Vec<usize> = (0..xs.len()).collect();
        let (mse, _) = regression(&student.mean, &student.stats, &xs, &ys, &all);
        if !mse.is_finite() {
            return Err(Error::Diverged(format!("student regression loss {mse} in round {round}")));
        }
        log::info!("{} distill round {round}: {} samples, mse {mse:.5}", skill.name(), xs.len());
        rounds.push(RoundMetrics {
            round,
            samples: xs.len(),
            mse,
        });
    }
    student.quantize();
    let seeds = eval_seeds(cfg, skill, cfg.eval_episodes);
    let budget = cfg.sequencer.inhand_budget;
    let report = DistillReport {
        skill,
        rounds,
        teacher: evaluate_policy(sim, cfg, skill, teacher, ObsMode::Teacher, &seeds, budget)?,
        student: evaluate_policy(sim, cfg, skill, &student, ObsMode::Student, &seeds, budget)?,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).at(dir)?;
        student.save(&dir.join(STUDENT_FILE))?;
        crate::io::write_json_atomic(&dir.join(DISTILL_REPORT_FILE), &report)?;
    }
    if report.teacher.successes > 0 && report.ratio() < dc.min_ratio {
        return Err(Error::DistillationFailure(format!(
            "{} student {}/{} vs teacher {}/{}",
            skill.name(),
            report.student.successes,
            report.student.episodes,
            report.teacher.successes,
            report.teacher.episodes
        )));
    }
    Ok((student, report))
}

/// Mean squared difference of two equally shaped action lists.
pub fn action_mse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n: usize = a.iter().map(Vec::len).sum();
    let s: f64 = a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2))).sum();
    s / n.max(1) as f64
}
