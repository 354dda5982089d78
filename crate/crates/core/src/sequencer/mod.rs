//! Skill pipeline Reach → GraspLift → InHand1..4 and the trial evaluator.

mod grasp;
mod inhand;
mod reach;
mod trial;

use serde::{Deserialize, Serialize};

pub use grasp::{grasp_succeeded, run_grasp_lift, run_grasp_lift_with};
pub use inhand::{cumulative_rotation, cumulative_target, run_inhand};
pub use reach::{reach_target, run_reach};
pub use trial::{
    config_hash, evaluate, run_pipeline, run_trial, student_file, EvaluationReport, HandoffStats, Policies, SkillRecord, StartSummary,
    TrialReport, GRASP_MODEL_FILE,
};

/// Thresholds and budgets of the pipeline, kept in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequencerConfig {
    /// Wrist height above the object's top at the end of Reach (m).
    pub reach_offset: f64,
    pub reach_budget: usize,
    pub ik_restarts: usize,
    pub grasp_budget: usize,
    /// Lift above the table that counts as a successful grasp (m).
    pub lift_success: f64,
    pub inhand_budget: usize,
    /// Slack on the cumulative rotation target (deg).
    pub rotation_tolerance_deg: f64,
    /// Rotation increment of each in-hand skill (deg).
    pub inhand_increments_deg: [f64; 4],
    /// Control period (s).
    pub dt: f64,
}

impl Default for SequencerConfig {
    fn default() -> Self {
        Self {
            reach_offset: 0.12,
            reach_budget: 100,
            ik_restarts: 10,
            grasp_budget: 300,
            lift_success: 0.05,
            inhand_budget: 1000,
            rotation_tolerance_deg: 2.0,
            inhand_increments_deg: [20.0; 4],
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillId {
    Reach,
    GraspLift,
    InHand1,
    InHand2,
    InHand3,
    InHand4,
}

impl SkillId {
    pub const ALL: [SkillId; 6] = [
        SkillId::Reach,
        SkillId::GraspLift,
        SkillId::InHand1,
        SkillId::InHand2,
        SkillId::InHand3,
        SkillId::InHand4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SkillId::Reach => "reach",
            SkillId::GraspLift => "grasp_lift",
            SkillId::InHand1 => "inhand1",
            SkillId::InHand2 => "inhand2",
            SkillId::InHand3 => "inhand3",
            SkillId::InHand4 => "inhand4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum Outcome {
    Success,
    Failure(String),
    NotReached,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    pub outcome: Outcome,
    pub steps: usize,
}

impl SkillResult {
    pub fn success(steps: usize) -> Self {
        Self {
            outcome: Outcome::Success,
            steps,
        }
    }

    pub fn failure(reason: impl Into<String>, steps: usize) -> Self {
        Self {
            outcome: Outcome::Failure(reason.into()),
            steps,
        }
    }
}
