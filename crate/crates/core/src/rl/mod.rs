//! In-hand rotation sub-skills: privileged teachers trained with a clipped
//! surrogate policy gradient, then distilled into force-feedback-only students.

mod distill;
mod env;
mod gaussian;
mod obs;
mod oracle;
mod ppo;
mod reward;
mod rollout;
mod train;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use distill::{action_mse, distill, DistillConfig, DistillReport, RoundMetrics, DISTILL_REPORT_FILE, STUDENT_FILE};
pub use env::{clamp_action, finger_command, rotation_reached, BanditEnv, Env, InHandEnv, ObsMode, StepResult};
pub use gaussian::{log_prob, GaussianPolicy};
pub use obs::{
    student_frame, teacher_privileged, StudentHistory, PRIVILEGED_DIM, STUDENT_FRAME_DIM, STUDENT_OBS_DIM,
    TEACHER_OBS_DIM,
};
pub use oracle::{held_start, scripted_rotation, OracleConfig};
pub use ppo::{gae, normalize_advantages, ppo_loss, ppo_update, surrogate, Batch, PpoHyper, PpoOptimizer, UpdateStats};
pub use reward::{pattern_term, reward, RewardContext, RewardWeights};
pub use rollout::{collect, rollout, Trajectory};
pub use train::{
    eval_seeds, evaluate_policy, fit_stats, train_policy, train_subskill, EvalStats, SubskillReport, TrainOptions,
    UpdateMetrics, CHECKPOINT_DIR, CONFIG_FILE, METRICS_FILE, REPORT_FILE, TEACHER_FILE, TEACHER_VALUE_FILE,
};

use crate::datagen::ExpertConfig;
use crate::error::{Error, Result};
use crate::kinematics::REDUCED_DOF;
use crate::sequencer::SequencerConfig;
use crate::sim::RandomizationSpec;

/// Finger-command change per step at a normalized action of 1 (rad).
pub const FINGER_STEP: f64 = 0.04;

/// Axis of the in-hand rotation, world frame: yaw seen from above the palm.
pub fn rotation_axis() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubSkillId {
    InHand1,
    InHand2,
    InHand3,
    InHand4,
}

impl SubSkillId {
    pub const ALL: [Self; 4] = [Self::InHand1, Self::InHand2, Self::InHand3, Self::InHand4];

    pub fn index(self) -> usize {
        self as usize
    }

    /// From the 1-based skill number used on the command line.
    pub fn from_number(n: usize) -> Result<Self> {
        Self::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Config(format!("sub-skill must be 1..4, got {n}")))
    }

    pub fn name(self) -> &'static str {
        ["inhand1", "inhand2", "inhand3", "inhand4"][self.index()]
    }
}

/// Primitive finger motion of a sub-skill as a unit joint-velocity direction
/// in the reduced command space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    pub direction: [f64; REDUCED_DOF],
}

impl Pattern {
    pub fn unit(&self) -> [f64; REDUCED_DOF] {
        let n = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = [0.0; REDUCED_DOF];
        if n > 0.0 {
            for (o, d) in out.iter_mut().zip(&self.direction) {
                *o = d / n;
            }
        }
        out
    }
}

fn default_patterns() -> [Pattern; 4] {
    let p = |name: &str, direction| Pattern {
        name: name.into(),
        direction,
    };
    [
        p("thumb_reposition", [1.0, 0.1, 0.0, 0.0, -0.6, 0.1, 0.0]),
        p("opposing_roll", [0.6, 0.15, 0.0, 0.0, -1.0, 0.15, 0.0]),
        p("thumb_roll", [1.0, 0.2, 0.0, 0.0, -0.8, 0.2, 0.0]),
        p("regrasp_settle", [0.8, 0.3, 0.0, 0.0, -0.8, 0.3, 0.0]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub patterns: [Pattern; 4],
    pub weights: RewardWeights,
    /// Spawn distribution of the training and evaluation worlds.
    pub spawn: RandomizationSpec,
    pub expert: ExpertConfig,
    pub oracle: OracleConfig,
    pub sequencer: SequencerConfig,
    pub hidden: Vec<usize>,
    pub initial_log_std: f64,
    pub ppo: PpoHyper,
    /// Policy updates of one training run.
    pub updates: usize,
    pub episodes_per_update: usize,
    /// Episode cap during training; evaluation uses the sequencer budget.
    pub train_horizon: usize,
    pub eval_episodes: usize,
    /// Success rate below which training is reported as failed.
    pub min_success: f64,
    pub distill: DistillConfig,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            patterns: default_patterns(),
            weights: RewardWeights::default(),
            spawn: RandomizationSpec::nominal(),
            expert: ExpertConfig::default(),
            oracle: OracleConfig::default(),
            sequencer: SequencerConfig::default(),
            hidden: vec![64, 64],
            initial_log_std: -0.7,
            ppo: PpoHyper::default(),
            updates: 60,
            episodes_per_update: 32,
            train_horizon: 60,
            eval_episodes: 100,
            min_success: 0.1,
            distill: DistillConfig::default(),
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn increment(&self, skill: SubSkillId) -> f64 {
        self.sequencer.inhand_increments_deg[skill.index()].to_radians()
    }

    /// Cumulative rotation before `skill` starts (rad).
    pub fn start_rotation(&self, skill: SubSkillId) -> f64 {
        self.sequencer.inhand_increments_deg[..skill.index()].iter().sum::<f64>().to_radians()
    }

    /// Cumulative rotation `skill` has to reach (rad).
    pub fn target_rotation(&self, skill: SubSkillId) -> f64 {
        self.start_rotation(skill) + self.increment(skill)
    }

    pub fn validate(&self) -> Result<()> {
        let inc = &self.sequencer.inhand_increments_deg;
        if inc.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Config(format!("increments must be finite and non-negative: {inc:?}")));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid hidden sizes {:?}", self.hidden)));
        }
        if self.episodes_per_update == 0 || self.train_horizon == 0 {
            return Err(Error::Config("episodes_per_update and train_horizon must be positive".into()));
        }
        self.spawn.validate()
    }
}
