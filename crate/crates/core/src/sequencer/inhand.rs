//! In-hand rotation: one distilled student per sub-skill, driven on force
//! feedback until the cumulative rotation target is met.

use super::{SequencerConfig, SkillResult};
use crate::rl::{clamp_action, finger_command, rotation_axis, rotation_reached, GaussianPolicy, StudentHistory, SubSkillId, STUDENT_OBS_DIM};
use crate::sim::{object_rotation_about, Phase, Simulator, WorldState};

/// Cumulative rotation sub-skill `k` must reach (rad).
pub fn cumulative_target(cfg: &SequencerConfig, k: SubSkillId) -> f64 {
    cfg.inhand_increments_deg[..=k.index()].iter().sum::<f64>().to_radians()
}

/// Rotation about the task axis since spawn (rad).
pub fn cumulative_rotation(state: &WorldState) -> f64 {
    object_rotation_about(state, &rotation_axis())
}

/// Runs `student` for at most `inhand_budget` steps. Success once the object
/// is held and turned to within the tolerance of the cumulative target.
pub fn run_inhand(
    sim: &Simulator,
    state: &WorldState,
    student: &GaussianPolicy,
    k: SubSkillId,
    cfg: &SequencerConfig,
) -> (WorldState, SkillResult) {
    let target = cumulative_target(cfg, k);
    let tol = cfg.rotation_tolerance_deg.to_radians();
    if rotation_reached(state, target, tol) {
        return (state.clone(), SkillResult::success(0));
    }
    if student.obs_dim() != STUDENT_OBS_DIM {
        return (state.clone(), SkillResult::failure(format!("policy: expects {} inputs", student.obs_dim()), 0));
    }
    let mut history = StudentHistory::default();
    history.push(&sim.sensor_reading(state, false), &state.hand_command);
    let mut s = state.clone();
    for steps in 1..=cfg.inhand_budget {
        let a = match clamp_action(&student.mean_action(&history.observation())) {
            Ok(a) => a,
            Err(e) => return (s, SkillResult::failure(format!("policy: {e}"), steps - 1)),
        };
        match sim.step(&s, &finger_command(sim, &s, &a), cfg.dt) {
            Ok((next, reading)) => {
                history.push(&reading, &next.hand_command);
                s = next;
            }
            Err(e) => return (s, SkillResult::failure(format!("step: {e}"), steps - 1)),
        }
        if s.phase() != Phase::Held {
            return (s, SkillResult::failure("drop", steps));
        }
        if rotation_reached(&s, target, tol) {
            return (s, SkillResult::success(steps));
        }
    }
    (s, SkillResult::failure("stall", cfg.inhand_budget))
}
