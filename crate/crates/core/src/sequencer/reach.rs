//! Reach: IK to a fixed offset above the object, palm in the configured orientation.

use nalgebra::Vector3;

use super::{SequencerConfig, SkillResult};
use crate::error::Error;
use crate::kinematics::{geodesic_angle, IkOptions, IkTolerance, Pose};
use crate::sim::{ArmTarget, Command, Simulator, WorldState};

/// Wrist pose `reach_offset` above the object's highest point.
pub fn reach_target(sim: &Simulator, state: &WorldState, cfg: &SequencerConfig) -> Pose {
    let poly = state.polytope();
    let top = poly
        .vertices
        .iter()
        .map(|v| state.object.transform_point(v).z)
        .fold(f64::NEG_INFINITY, f64::max);
    let p = state.object.position;
    Pose::new(
        Vector3::new(p.x, p.y, top + cfg.reach_offset),
        sim.description().reach_orientation().orientation(),
    )
}

pub fn run_reach(sim: &Simulator, state: &WorldState, cfg: &SequencerConfig) -> (WorldState, SkillResult) {
    let target = reach_target(sim, state, cfg);
    let opts = IkOptions {
        restarts: cfg.ik_restarts,
        restart_seed: state.rng_seed,
        ..IkOptions::default()
    };
    let q = match sim.arm().ik(&target, &state.robot.arm, &opts) {
        Ok(sol) => sol.joints,
        Err(Error::Unreachable { .. }) => return (state.clone(), SkillResult::failure("reachability", 0)),
        Err(_) => return (state.clone(), SkillResult::failure("ik", 0)),
    };
    let cmd = Command {
        arm: ArmTarget::Joints(q),
        hand: sim.open_hand(),
    };
    let mut s = state.clone();
    let mut steps = 0;
    while steps < cfg.reach_budget && s.robot.arm != q {
        match sim.step(&s, &cmd, cfg.dt) {
            Ok((next, _)) => s = next,
            Err(e) => return (s, SkillResult::failure(format!("step: {e}"), steps)),
        }
        steps += 1;
    }
    let tol = IkTolerance::default();
    let pos = (s.wrist.position - target.position).norm();
    let rot = geodesic_angle(&s.wrist.orientation(), &target.orientation());
    if pos <= tol.pos_m && rot <= tol.rot_rad {
        (s, SkillResult::success(steps))
    } else {
        (s, SkillResult::failure("ik", steps))
    }
}
