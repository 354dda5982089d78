//! GraspLift: closed-loop rollout of the behavior-cloned policy.

use super::{SequencerConfig, SkillResult};
use crate::error::{Error, Result};
use crate::policy::{Action, ObsHistory, Observation, PolicyParams};
use crate::sim::{Phase, Simulator, WorldState};

/// Held and lifted at least `lift_success` above the table.
pub fn grasp_succeeded(sim: &Simulator, state: &WorldState, cfg: &SequencerConfig) -> bool {
    state.phase() == Phase::Held && state.object_bottom() - sim.config().table_height >= cfg.lift_success
}

/// Runs the policy until it signals termination or the budget runs out.
pub fn run_grasp_lift(
    sim: &Simulator,
    state: &WorldState,
    policy: &PolicyParams,
    cfg: &SequencerConfig,
) -> (WorldState, SkillResult) {
    run_grasp_lift_with(sim, state, cfg, |obs| policy.act(obs))
}

/// The grasp loop with any action source in place of the policy.
pub fn run_grasp_lift_with(
    sim: &Simulator,
    state: &WorldState,
    cfg: &SequencerConfig,
    mut act: impl FnMut(&Observation) -> Result<Action>,
) -> (WorldState, SkillResult) {
    let mut history = ObsHistory::default();
    history.push(state, &sim.sensor_reading(state, false));
    let mut s = state.clone();
    let mut steps = 0;
    let mut terminated = false;
    while steps < cfg.grasp_budget {
        let action = match history.observation().and_then(|o| act(&o)) {
            Ok(a) => a,
            Err(e) => return (s, SkillResult::failure(format!("grasp/policy: {e}"), steps)),
        };
        match sim.step(&s, &action.to_command(&s), cfg.dt) {
            Ok((next, reading)) => {
                history.push(&next, &reading);
                s = next;
            }
            Err(Error::IkFailure { .. } | Error::Unreachable { .. }) => {
                return (s, SkillResult::failure("grasp/ik", steps));
            }
            Err(e) => return (s, SkillResult::failure(format!("grasp/step: {e}"), steps)),
        }
        steps += 1;
        if action.terminate > 0.5 {
            terminated = true;
            break;
        }
    }
    let result = if grasp_succeeded(sim, &s, cfg) {
        SkillResult::success(steps)
    } else if s.phase() == Phase::Dropped {
        SkillResult::failure("grasp/drop", steps)
    } else if !terminated {
        SkillResult::failure("grasp/budget", steps)
    } else {
        SkillResult::failure("grasp/early-termination", steps)
    };
    (s, result)
}
