//! Shaped per-step reward of the rotation sub-skills.

use serde::{Deserialize, Serialize};

use super::{rotation_axis, Pattern};
use crate::kinematics::REDUCED_DOF;
use crate::sim::{object_rotation_about, Phase, SensorReading, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub rotation: f64,
    pub pattern: f64,
    pub drop: f64,
    pub slip: f64,
    pub action: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            rotation: 10.0,
            pattern: 1.0,
            drop: 50.0,
            slip: 0.5,
            action: 0.01,
        }
    }
}

impl RewardWeights {
    /// Largest possible `|r|` when the increment is at most `max_increment`
    /// and the action has at most `max_action_sq` squared norm.
    pub fn bound(&self, max_increment: f64, max_action_sq: f64) -> f64 {
        self.rotation * max_increment + self.pattern + self.drop + self.slip + self.action * max_action_sq
    }
}

/// What a transition is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    /// Cumulative rotation the skill aims for (rad).
    pub target: f64,
    /// The skill's own increment; per-step progress is clipped to it.
    pub increment: f64,
}

/// Alignment of a normalized action with the skill's pattern, in `[-1, 1]`;
/// zero for a zero action.
pub fn pattern_term(pattern: &Pattern, action: &[f64; REDUCED_DOF]) -> f64 {
    let u = pattern.unit();
    let dot: f64 = u.iter().zip(action).map(|(a, b)| a * b).sum();
    dot.clamp(-1.0, 1.0)
}

/// Reward of `prev --action--> next`, where `reading` is the sensor reading of
/// the step and `action` the normalized, clamped finger action.
pub fn reward(
    weights: &RewardWeights,
    pattern: &Pattern,
    ctx: &RewardContext,
    prev: &WorldState,
    action: &[f64; REDUCED_DOF],
    next: &WorldState,
    reading: &SensorReading,
) -> f64 {
    let axis = rotation_axis();
    let before = (ctx.target - object_rotation_about(prev, &axis)).abs();
    let after = (ctx.target - object_rotation_about(next, &axis)).abs();
    let progress = (before - after).clamp(-ctx.increment, ctx.increment);
    let dropped = next.phase() == Phase::Dropped && prev.phase() != Phase::Dropped;
    let effort: f64 = action.iter().map(|a| a * a).sum();
    weights.rotation * progress + weights.pattern * pattern_term(pattern, action)
        - weights.drop * f64::from(u8::from(dropped))
        - weights.slip * f64::from(u8::from(reading.slip_event))
        - weights.action * effort
}
