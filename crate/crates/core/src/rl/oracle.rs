//! Scripted finger-sweep rotation and the held start states of the sub-skills.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rotation_axis, RlConfig, SubSkillId};
use crate::datagen::{derive_seed, scripted_grasp};
use crate::error::{Error, Result};
use crate::kinematics::ReducedHandCommand;
use crate::sim::{object_rotation_about, ArmTarget, Command, Phase, Simulator, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Opposite swing of thumb and opposing fingers per step (rad).
    pub sweep: f64,
    /// Flexion added to both groups per step (rad).
    pub squeeze: f64,
    pub max_steps: usize,
    /// Spawn seeds tried before a start state is given up on.
    pub attempts: u64,
    /// Half-width of the uniform offset added to every reduced hand command
    /// dimension of a start state (rad).
    pub grip_jitter: f64,
    /// Steps the offset command is held for before the start state is taken.
    pub settle_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sweep: 0.01,
            squeeze: 0.006,
            max_steps: 200,
            attempts: 8,
            grip_jitter: 0.06,
            settle_steps: 3,
        }
    }
}

/// Sweeps thumb and opposing fingers in opposite directions until the object
/// has turned `target` about the rotation axis. Returns the final state and
/// whether the target was reached while still held.
pub fn scripted_rotation(
    sim: &Simulator,
    state: &WorldState,
    target: f64,
    cfg: &OracleConfig,
    dt: f64,
) -> Result<(WorldState, bool)> {
    let axis = rotation_axis();
    let mut s = state.clone();
    for _ in 0..cfg.max_steps {
        if s.phase() != Phase::Held {
            return Ok((s, false));
        }
        if object_rotation_about(&s, &axis) >= target {
            return Ok((s, true));
        }
        let mut hand = s.hand_command;
        hand.thumb[0] += cfg.sweep;
        hand.thumb[1] += cfg.squeeze;
        hand.opposing[0] -= cfg.sweep;
        hand.opposing[1] += cfg.squeeze;
        let cmd = Command {
            arm: ArmTarget::Joints(s.robot.arm),
            hand: sim.hand().clamp_reduced(&hand),
        };
        s = sim.step(&s, &cmd, dt)?.0;
    }
    let ok = s.phase() == Phase::Held && object_rotation_about(&s, &axis) >= target;
    Ok((s, ok))
}

/// Drives the hand toward its command plus a uniform offset in every reduced
/// dimension. `None` when the object is lost.
fn jitter_grip(sim: &Simulator, state: &WorldState, cfg: &OracleConfig, seed: u64, dt: f64) -> Result<Option<WorldState>> {
    if cfg.grip_jitter <= 0.0 {
        return Ok(Some(state.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hand = state.hand_command.to_array();
    for h in &mut hand {
        *h += rng.random_range(-cfg.grip_jitter..cfg.grip_jitter);
    }
    let cmd = Command {
        arm: ArmTarget::Joints(state.robot.arm),
        hand: sim.hand().clamp_reduced(&ReducedHandCommand::from_slice(&hand)),
    };
    let mut s = state.clone();
    for _ in 0..cfg.settle_steps {
        s = sim.step(&s, &cmd, dt)?.0;
    }
    Ok((s.phase() == Phase::Held).then_some(s))
}

/// Held state a sub-skill starts from: a scripted grasp of a spawn drawn with
/// `seed`, scripted rotation through the earlier increments and a random grip
/// offset. Falls back to derived seeds when any stage loses the object.
pub fn held_start(sim: &Simulator, cfg: &RlConfig, skill: SubSkillId, seed: u64) -> Result<WorldState> {
    let pre = cfg.start_rotation(skill);
    for attempt in 0..cfg.oracle.attempts {
        let spec = cfg.spawn.with_seed(derive_seed(seed, attempt));
        let Some(held) = scripted_grasp(sim, &spec, &cfg.expert, &cfg.sequencer)? else {
            continue;
        };
        let dt = cfg.sequencer.dt;
        let rotated = if pre <= 0.0 {
            held
        } else {
            match scripted_rotation(sim, &held, pre, &cfg.oracle, dt)? {
                (s, true) => s,
                _ => continue,
            }
        };
        if let Some(s) = jitter_grip(sim, &rotated, &cfg.oracle, derive_seed(seed, 0x6A1 + attempt), dt)? {
            return Ok(s);
        }
    }
    Err(Error::Dataset(format!(
        "no held start state for {} from seed {seed} after {} attempts",
        skill.name(),
        cfg.oracle.attempts
    )))
}
