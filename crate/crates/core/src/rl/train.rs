//! Teacher training runs and deterministic policy evaluation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{rotation_reached, InHandEnv, ObsMode};
use super::ppo::{ppo_update, Batch, PpoHyper, PpoOptimizer, UpdateStats};
use super::{collect, Env, GaussianPolicy, RlConfig, SubSkillId, TEACHER_OBS_DIM};
use crate::datagen::derive_seed;
use crate::error::{Error, IoContext, Result};
use crate::kinematics::REDUCED_DOF;
use crate::policy::Standardizer;
use crate::sim::{Phase, Simulator};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TEACHER_FILE: &str = "teacher.dxpm";
pub const TEACHER_VALUE_FILE: &str = "teacher_value.dxpm";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub updates: usize,
    pub episodes_per_update: usize,
    pub horizon: usize,
    pub ppo: PpoHyper,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub episodes: usize,
    pub steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub stats: UpdateStats,
}

/// Fits the observation standardizer on rollouts of the current policy.
pub fn fit_stats<E, F>(policy: &mut GaussianPolicy, make_env: F, seeds: &[u64], horizon: usize) -> Result<()>
where
    E: Env,
    F: Fn() -> E + Sync,
{
    let trajs = collect(policy, make_env, seeds, horizon)?;
    let rows = trajs.iter().flat_map(|t| t.obs.iter().map(Vec::as_slice));
    policy.stats = Standardizer::fit(rows, policy.obs_dim());
    Ok(())
}

/// Runs `opts.updates` collect-then-update rounds. Episode seeds are
/// `derive_seed(opts.seed, k)` for the running episode count `k`.
pub fn train_policy<E, F>(
    policy: &mut GaussianPolicy,
    make_env: F,
    opts: &TrainOptions,
    mut on_update: impl FnMut(&UpdateMetrics, &GaussianPolicy) -> Result<()>,
) -> Result<Vec<UpdateMetrics>>
where
    E: Env,
    F: Fn() -> E + Sync,
{
    let mut opt = PpoOptimizer::new(policy, &opts.ppo, derive_seed(opts.seed, u64::MAX));
    let mut history = Vec::with_capacity(opts.updates);
    for u in 0..opts.updates {
        let first = (u * opts.episodes_per_update) as u64;
        let seeds: Vec<u64> = (0..opts.episodes_per_update as u64)
            .map(|e| derive_seed(opts.seed, first + e))
            .collect();
        let trajs = collect(policy, &make_env, &seeds, opts.horizon)?;
        let batch = Batch::from_trajectories(&trajs, &opts.ppo);
        let stats = ppo_update(policy, &batch, &opts.ppo, &mut opt)?;
        let n = trajs.len() as f64;
        let m = UpdateMetrics {
            update: u,
            episodes: trajs.len(),
            steps: batch.len(),
            mean_return: trajs.iter().map(|t| t.total_reward()).sum::<f64>() / n,
            success_rate: trajs.iter().filter(|t| t.success).count() as f64 / n,
            stats,
        };
        on_update(&m, policy)?;
        history.push(m);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    pub drops: usize,
    pub mean_steps: f64,
}

impl EvalStats {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.episodes.max(1) as f64
    }
}

/// Success of the mean action over `seeds`, each run for at most `budget`
/// steps from its held start state.
pub fn evaluate_policy(
    sim: &Simulator,
    cfg: &RlConfig,
    skill: SubSkillId,
    policy: &GaussianPolicy,
    mode: ObsMode,
    seeds: &[u64],
    budget: usize,
) -> Result<EvalStats> {
    let tol = cfg.sequencer.rotation_tolerance_deg.to_radians();
    let target = cfg.target_rotation(skill);
    let runs: Vec<(bool, bool, usize)> = seeds
        .par_iter()
        .map(|&seed| -> Result<(bool, bool, usize)> {
            let mut env = InHandEnv::new(sim, cfg, skill, mode);
            env.horizon = budget;
            let mut obs = env.reset(seed)?;
            if env.state().is_some_and(|s| rotation_reached(s, target, tol)) {
                return Ok((true, false, 0));
            }
            for t in 0..budget {
                let step = env.step(&policy.mean_action(&obs))?;
                if step.done {
                    let dropped = env.state().is_some_and(|s| s.phase() != Phase::Held);
                    return Ok((step.success, dropped, t + 1));
                }
                obs = step.obs;
            }
            Ok((false, false, budget))
        })
        .collect::<Result<_>>()?;
    Ok(EvalStats {
        episodes: runs.len(),
        successes: runs.iter().filter(|r| r.0).count(),
        drops: runs.iter().filter(|r| r.1).count(),
        mean_steps: runs.iter().map(|r| r.2 as f64).sum::<f64>() / runs.len().max(1) as f64,
    })
}

/// Held-out evaluation seeds of `skill`, disjoint from its training stream.
pub fn eval_seeds(cfg: &RlConfig, skill: SubSkillId, n: usize) -> Vec<u64> {
    let base = derive_seed(cfg.seed, 0xE000 + skill.index() as u64);
    (0..n as u64).map(|i| derive_seed(base, i)).collect()
}

fn train_seed(cfg: &RlConfig, skill: SubSkillId) -> u64 {
    derive_seed(cfg.seed, 0x7000 + skill.index() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubskillReport {
    pub skill: SubSkillId,
    pub increment_deg: f64,
    pub seed: u64,
    pub updates: Vec<UpdateMetrics>,
    pub eval: EvalStats,
}

/// Trains the teacher of `skill` on privileged observations and evaluates it
/// on held-out seeds. With `out`, writes the run directory: config snapshot,
/// per-update metrics, checkpoints, final model and report.
pub fn train_subskill(
    sim: &Simulator,
    cfg: &RlConfig,
    skill: SubSkillId,
    out: Option<&Path>,
) -> Result<(GaussianPolicy, SubskillReport)> {
    cfg.validate()?;
    let seed = train_seed(cfg, skill);
    let mut metrics_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir.join(CHECKPOINT_DIR)).at(dir)?;
            crate::io::write_json_atomic(&dir.join(CONFIG_FILE), cfg)?;
            let p = dir.join(METRICS_FILE);
            Some((std::fs::File::create(&p).at(&p)?, p))
        }
        None => None,
    };
    let make_env = || InHandEnv::new(sim, cfg, skill, ObsMode::Teacher);
    let mut policy = GaussianPolicy::init(TEACHER_OBS_DIM, REDUCED_DOF, &cfg.hidden, cfg.initial_log_std, seed);
    let warm: Vec<u64> = (0..16).map(|i| derive_seed(seed, 0xF17 + i)).collect();
    fit_stats(&mut policy, make_env, &warm, cfg.train_horizon)?;
    let opts = TrainOptions {
        updates: cfg.updates,
        episodes_per_update: cfg.episodes_per_update,
        horizon: cfg.train_horizon,
        ppo: cfg.ppo.clone(),
        seed,
    };
    let every = (cfg.updates / 5).max(1);
    let updates = train_policy(&mut policy, make_env, &opts, |m, p| {
        log::info!(
            "{} update {}: return {:.3} success {:.2} kl {:.4}",
            skill.name(),
            m.update,
            m.mean_return,
            m.success_rate,
            m.stats.kl
        );
        if let (Some((f, path)), Some(dir)) = (metrics_file.as_mut(), out) {
            writeln!(f, "{}", serde_json::to_string(m)?).at(&*path)?;
            if (m.update + 1) % every == 0 {
                p.save(&dir.join(CHECKPOINT_DIR).join(format!("update_{:04}.dxpm", m.update + 1)))?;
            }
        }
        Ok(())
    })?;
    policy.quantize();
    let seeds = eval_seeds(cfg, skill, cfg.eval_episodes);
    let eval = evaluate_policy(sim, cfg, skill, &policy, ObsMode::Teacher, &seeds, cfg.sequencer.inhand_budget)?;
    let report = SubskillReport {
        skill,
        increment_deg: cfg.increment(skill).to_degrees(),
        seed,
        updates,
        eval,
    };
    if let Some(dir) = out {
        policy.save(&dir.join(TEACHER_FILE))?;
        policy.value_model_file().save(&dir.join(TEACHER_VALUE_FILE))?;
        crate::io::write_json_atomic(&dir.join(REPORT_FILE), &report)?;
    }
    if report.eval.rate() < cfg.min_success {
        return Err(Error::TrainingFailure(format!(
            "{} teacher succeeded on {}/{} held-out seeds",
            skill.name(),
            report.eval.successes,
            report.eval.episodes
        )));
    }
    Ok((policy, report))
}
