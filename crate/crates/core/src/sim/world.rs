//! The stepper: velocity-capped robot motion, contacts, quasi-static object
//! update and the phase machine.

use nalgebra::{UnitQuaternion, Vector3};

use super::contact::{self, RawContact};
use super::randomization::RandomizationSpec;
use super::shape::Polytope;
use super::state::{read_torques, ContactPoint, Phase, PhaseFlags, SensorReading, WorldState};
use crate::error::{Error, Result};
use crate::kinematics::{
    Arm, Hand, IkOptions, JointConfig, Pose, ReducedHandCommand, ARM_DOF, FINGERS, HAND_DOF,
};
use crate::robot::RobotDescription;

/// Physical constants of the world, kept in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub table_height: f64,
    /// Penalty stiffness of fingertip contacts (N/m).
    pub contact_stiffness: f64,
    /// Normal force each side of a grasp needs for the object to count as held (N).
    pub f_hold: f64,
    pub lift_threshold: f64,
    pub drop_threshold: f64,
    pub gravity: f64,
    /// Displacement per newton of unbalanced load during slip (m/N).
    pub slip_compliance: f64,
    pub max_slip_step: f64,
    /// Upward grip motion per step that breaks an object free of the table (m);
    /// below it table friction keeps a resting object in place.
    pub lift_onset: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            table_height: 0.0,
            contact_stiffness: 500.0,
            f_hold: 0.5,
            lift_threshold: 0.005,
            drop_threshold: 0.001,
            gravity: 9.81,
            slip_compliance: 0.02,
            max_slip_step: 0.01,
            lift_onset: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmTarget {
    Joints([f64; ARM_DOF]),
    Wrist(Pose),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub arm: ArmTarget,
    pub hand: ReducedHandCommand,
}

impl Command {
    /// Hold the current configuration.
    pub fn hold(state: &WorldState) -> Self {
        Self {
            arm: ArmTarget::Joints(state.robot.arm),
            hand: state.hand_command,
        }
    }

    fn is_finite(&self) -> bool {
        let arm_ok = match &self.arm {
            ArmTarget::Joints(q) => q.iter().all(|v| v.is_finite()),
            ArmTarget::Wrist(p) => p.is_finite(),
        };
        arm_ok && self.hand.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    desc: RobotDescription,
    arm: Arm,
    hand: Hand,
    cfg: SimConfig,
}

fn approach(cur: f64, target: f64, max_delta: f64) -> f64 {
    cur + (target - cur).clamp(-max_delta, max_delta)
}

impl Simulator {
    pub fn new(desc: RobotDescription, cfg: SimConfig) -> Self {
        Self {
            arm: desc.arm(),
            hand: desc.hand(),
            desc,
            cfg,
        }
    }

    pub fn canonical() -> Self {
        Self::new(RobotDescription::canonical(), SimConfig::default())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn description(&self) -> &RobotDescription {
        &self.desc
    }

    pub fn arm(&self) -> &Arm {
        &self.arm
    }

    pub fn hand(&self) -> &Hand {
        &self.hand
    }

    pub fn ready_arm(&self) -> [f64; ARM_DOF] {
        let mut q = [0.0; ARM_DOF];
        q.copy_from_slice(&self.desc.arm.ready);
        q
    }

    pub fn open_hand(&self) -> ReducedHandCommand {
        self.desc.hand.open.clone().into()
    }

    pub fn closed_hand(&self) -> ReducedHandCommand {
        self.desc.hand.closed.clone().into()
    }

    /// Object drawn from `spec` (with `spec.seed`) resting on the table; arm at
    /// the ready configuration with the hand open.
    pub fn spawn(&self, spec: &RandomizationSpec) -> Result<WorldState> {
        let s = spec.sample()?;
        let poly = Polytope::new(s.shape, &s.extents);
        let mut object = Pose::from_wxyz([s.position[0], s.position[1], 0.0], [1.0, 0.0, 0.0, 0.0]);
        object.position.z = self.cfg.table_height - poly.lowest_z(&object);
        let arm = self.ready_arm();
        let hand_command = self.hand.clamp_reduced(&self.open_hand());
        let hand = self.hand.expand(&hand_command).angles;
        let mut state = WorldState {
            robot: JointConfig { arm, hand },
            wrist: self.arm.fk(&arm)?,
            object,
            extents: s.extents,
            mass: s.mass,
            friction_mu: s.friction_mu,
            contacts: Vec::new(),
            phase_flags: Phase::OnTable.into(),
            tick: 0,
            rng_seed: spec.seed,
            shape: s.shape,
            spawn_object: object,
            appearance_noise_sigma: spec.appearance_noise_sigma,
            hand_command,
        };
        let raw = self.detect(&state, &state.object, &poly);
        state.contacts = contact::normal_only(&raw);
        Ok(state)
    }

    pub fn tips_world(&self, wrist: &Pose, hand: &[f64; HAND_DOF]) -> [Vector3<f64>; FINGERS] {
        self.hand.fingertips(hand).map(|t| wrist.transform_point(&t))
    }

    fn detect(&self, state: &WorldState, object: &Pose, poly: &Polytope) -> Vec<RawContact> {
        let tips = self.tips_world(&state.wrist, &state.robot.hand);
        contact::detect(poly, object, &tips, self.hand.tip_radius(), self.cfg.contact_stiffness)
    }

    pub fn read_torques(&self, state: &WorldState) -> [f64; FINGERS] {
        read_torques(&self.hand, state)
    }

    pub fn sensor_reading(&self, state: &WorldState, slip_event: bool) -> SensorReading {
        SensorReading {
            torques: self.read_torques(state),
            joint_positions: state.robot.hand,
            wrist: state.wrist,
            slip_event,
        }
    }

    fn arm_target(&self, state: &WorldState, target: &ArmTarget) -> Result<[f64; ARM_DOF]> {
        let mut q = match target {
            ArmTarget::Joints(q) => *q,
            ArmTarget::Wrist(p) => self.arm.ik(p, &state.robot.arm, &IkOptions::default())?.joints,
        };
        self.arm.clamp(&mut q);
        Ok(q)
    }

    /// Moves the robot toward its command. Object, contacts and phase are left
    /// for [`settle`](Self::settle).
    fn move_robot(&self, state: &WorldState, cmd: &Command, dt: f64) -> Result<WorldState> {
        let arm_goal = self.arm_target(state, &cmd.arm)?;
        let hand_command = self.hand.clamp_reduced(&cmd.hand);
        let hand_goal = self.hand.expand(&hand_command).angles;
        let mut next = state.clone();
        let arm_step = self.desc.arm.max_velocity * dt;
        let hand_step = self.desc.hand.max_velocity * dt;
        for j in 0..ARM_DOF {
            next.robot.arm[j] = approach(state.robot.arm[j], arm_goal[j], arm_step);
        }
        for j in 0..HAND_DOF {
            next.robot.hand[j] = approach(state.robot.hand[j], hand_goal[j], hand_step);
        }
        next.wrist = self.arm.fk(&next.robot.arm)?;
        next.hand_command = hand_command;
        Ok(next)
    }

    pub fn step(&self, state: &WorldState, cmd: &Command, dt: f64) -> Result<(WorldState, SensorReading)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Command(format!("dt must be positive and finite, got {dt}")));
        }
        if !cmd.is_finite() {
            return Err(Error::Command("non-finite value in command".into()));
        }
        let mut next = self.move_robot(state, cmd, dt)?;
        let slip = self.settle(state, &mut next);
        next.tick = state.tick + 1;
        let reading = self.sensor_reading(&next, slip);
        Ok((next, reading))
    }
}

impl Simulator {
    fn rest_on_table(&self, poly: &Polytope, object: &mut Pose) {
        let gap = poly.lowest_z(object) - self.cfg.table_height;
        if gap < 0.0 {
            object.position.z -= gap;
        }
    }

    fn drop_to_table(&self, poly: &Polytope, object: &mut Pose) {
        object.position.z -= poly.lowest_z(object) - self.cfg.table_height;
    }

    fn is_lifted(&self, poly: &Polytope, object: &Pose) -> bool {
        poly.lowest_z(object) > self.cfg.table_height + 1e-9
    }

    /// Contacts at `object`, letting the object fall when nothing holds it.
    /// Returns the persisted contacts and the load deficit when the grip slips.
    fn resolve(
        &self,
        state: &WorldState,
        poly: &Polytope,
        object: &mut Pose,
    ) -> (Vec<ContactPoint>, Option<Vector3<f64>>, bool) {
        let raw = self.detect(state, object, poly);
        if !self.is_lifted(poly, object) {
            return (contact::normal_only(&raw), None, false);
        }
        if !contact::is_grasp(raw.iter().map(|c| (c.finger, c.force)), f64::MIN_POSITIVE) {
            self.drop_to_table(poly, object);
            let raw = self.detect(state, object, poly);
            return (contact::normal_only(&raw), None, true);
        }
        let support = object.orientation().inverse() * Vector3::new(0.0, 0.0, state.mass * self.cfg.gravity);
        let split = contact::split_load(&raw, &support, state.friction_mu);
        let deficit = split.slipped.then_some(split.deficit);
        (split.contacts, deficit, false)
    }

    /// Quasi-static object update after the robot moved from `prev` to `next`.
    /// Returns whether the grip slipped.
    fn settle(&self, prev: &WorldState, next: &mut WorldState) -> bool {
        let poly = next.polytope();
        let phase = prev.phase();
        let mut object = prev.object;
        let prev_grasp = phase != Phase::Dropped
            && contact::is_grasp(prev.contacts.iter().map(|c| (c.finger_index, c.normal_force)), f64::MIN_POSITIVE);
        if prev_grasp {
            let before = self.tips_world(&prev.wrist, &prev.robot.hand);
            let after = self.tips_world(&next.wrist, &next.robot.hand);
            let rot = prev.object.orientation();
            let items: Vec<_> = prev
                .contacts
                .iter()
                .filter(|c| c.normal_force > 0.0)
                .map(|c| {
                    (
                        prev.object.transform_point(&c.location),
                        rot * c.normal,
                        after[c.finger_index] - before[c.finger_index],
                        c.normal_force.sqrt(),
                    )
                })
                .collect();
            let (v, w) = contact::fit_motion(&items, &object.position);
            let resting = !self.is_lifted(&poly, &object);
            if !resting || v.z >= self.cfg.lift_onset {
                object.position += v;
                object.set_orientation(UnitQuaternion::from_scaled_axis(w) * object.orientation());
                self.rest_on_table(&poly, &mut object);
            }
        }

        let (mut contacts, deficit, fell) = self.resolve(next, &poly, &mut object);
        let slip = deficit.is_some() || (fell && prev_grasp);
        if let Some(deficit) = deficit {
            // the object moves along the net force the clipped grip leaves unbalanced
            let mut d = -(object.orientation() * deficit) * self.cfg.slip_compliance;
            let n = d.norm();
            if n > self.cfg.max_slip_step {
                d *= self.cfg.max_slip_step / n;
            }
            object.position += d;
            self.rest_on_table(&poly, &mut object);
            // a remaining deficit only means the slip continues next step
            contacts = self.resolve(next, &poly, &mut object).0;
        }

        next.object = object;
        next.contacts = contacts;
        let bottom = poly.lowest_z(&object) - self.cfg.table_height;
        let holding = contact::is_grasp(
            next.contacts.iter().map(|c| (c.finger_index, c.normal_force)),
            self.cfg.f_hold,
        );
        let touching = contact::is_grasp(
            next.contacts.iter().map(|c| (c.finger_index, c.normal_force)),
            f64::MIN_POSITIVE,
        );
        let new_phase = match phase {
            Phase::OnTable if holding && bottom >= self.cfg.lift_threshold => Phase::Held,
            Phase::Held if !touching && bottom < self.cfg.drop_threshold => Phase::Dropped,
            p => p,
        };
        next.phase_flags = PhaseFlags::from(new_phase);
        slip
    }
}
