//! Four-finger hand: fingertip kinematics in the wrist frame, the sensing-joint
//! torque map, and the virtual-finger reduction between the 16 hand joints and the
//! 7-dimensional command (4 thumb + 3 shared opposing-finger angles).

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::robot::{HandDescription, RobotDescription};

pub const HAND_DOF: usize = 16;
pub const FINGERS: usize = 4;
pub const JOINTS_PER_FINGER: usize = 4;
pub const REDUCED_DOF: usize = 7;
pub const THUMB: usize = 0;

/// Virtual-finger command: the thumb's four joints verbatim plus one set of three
/// angles shared by the three opposing fingers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReducedHandCommand {
    pub thumb: [f64; 4],
    pub opposing: [f64; 3],
}

impl ReducedHandCommand {
    pub fn to_array(&self) -> [f64; REDUCED_DOF] {
        let mut out = [0.0; REDUCED_DOF];
        out[..4].copy_from_slice(&self.thumb);
        out[4..].copy_from_slice(&self.opposing);
        out
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), REDUCED_DOF, "reduced command has 7 values");
        let mut c = Self::default();
        c.thumb.copy_from_slice(&v[..4]);
        c.opposing.copy_from_slice(&v[4..]);
        c
    }

    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; REDUCED_DOF];
        for i in 0..REDUCED_DOF {
            out[i] = (1.0 - t) * a[i] + t * b[i];
        }
        Self::from_slice(&out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandedHand {
    pub angles: [f64; HAND_DOF],
    /// Set when at least one joint had to be clamped into its limit.
    pub clamped: bool,
}

/// Thumb copied verbatim; opposing = mean of fingers 1-3 over their first three joints.
pub fn reduce_hand(hand: &[f64; HAND_DOF]) -> ReducedHandCommand {
    let mut cmd = ReducedHandCommand::default();
    cmd.thumb.copy_from_slice(&hand[..4]);
    for j in 0..3 {
        let sum: f64 = (1..FINGERS).map(|f| hand[f * JOINTS_PER_FINGER + j]).sum();
        cmd.opposing[j] = sum / 3.0;
    }
    cmd
}

#[derive(Debug, Clone)]
pub struct Hand {
    bases: [Vector3<f64>; FINGERS],
    links: [f64; 3],
    flex_sign: [f64; FINGERS],
    tip_radius: f64,
    lower: [f64; HAND_DOF],
    upper: [f64; HAND_DOF],
    coupling: f64,
    sensing_joint: usize,
}

/// Joint origins, positive joint axes and tip center of one finger, wrist frame.
#[derive(Debug, Clone, Copy)]
pub struct FingerFrames {
    pub origins: [Vector3<f64>; JOINTS_PER_FINGER],
    pub axes: [Vector3<f64>; JOINTS_PER_FINGER],
    pub tip: Vector3<f64>,
}

impl Hand {
    pub fn new(desc: &RobotDescription) -> Self {
        Self::from_description(&desc.hand)
    }

    pub fn from_description(h: &HandDescription) -> Self {
        let mut lower = [0.0; HAND_DOF];
        let mut upper = [0.0; HAND_DOF];
        lower.copy_from_slice(&h.lower);
        upper.copy_from_slice(&h.upper);
        Self {
            bases: h.finger_bases.map(Vector3::from),
            links: h.link_lengths,
            flex_sign: h.flex_sign,
            tip_radius: h.tip_radius,
            lower,
            upper,
            coupling: h.coupling_ratio,
            sensing_joint: h.sensing_joint,
        }
    }

    pub fn tip_radius(&self) -> f64 {
        self.tip_radius
    }

    pub fn sensing_joint(&self) -> usize {
        self.sensing_joint
    }

    pub fn limits(&self) -> (&[f64; HAND_DOF], &[f64; HAND_DOF]) {
        (&self.lower, &self.upper)
    }

    pub fn clamp(&self, hand: &mut [f64; HAND_DOF]) -> bool {
        let mut clamped = false;
        for i in 0..HAND_DOF {
            let c = hand[i].clamp(self.lower[i], self.upper[i]);
            clamped |= c != hand[i];
            hand[i] = c;
        }
        clamped
    }

    /// Clamps a reduced command into the limits of the joints it drives.
    pub fn clamp_reduced(&self, cmd: &ReducedHandCommand) -> ReducedHandCommand {
        let mut out = *cmd;
        for j in 0..4 {
            out.thumb[j] = out.thumb[j].clamp(self.lower[j], self.upper[j]);
        }
        for j in 0..3 {
            let lo = (1..FINGERS).map(|f| self.lower[f * 4 + j]).fold(f64::MIN, f64::max);
            let hi = (1..FINGERS).map(|f| self.upper[f * 4 + j]).fold(f64::MAX, f64::min);
            out.opposing[j] = out.opposing[j].clamp(lo, hi);
        }
        // Coupled fourth joint must stay feasible too.
        let (lo3, hi3) = (1..FINGERS).fold((f64::MIN, f64::MAX), |(lo, hi), f| {
            (lo.max(self.lower[f * 4 + 3]), hi.min(self.upper[f * 4 + 3]))
        });
        if self.coupling > 0.0 {
            out.opposing[2] = out.opposing[2].clamp(lo3 / self.coupling, hi3 / self.coupling);
        }
        out
    }

    /// Thumb copied; opposing fingers take the shared first three joints and
    /// couple the fourth to the third.
    pub fn expand(&self, cmd: &ReducedHandCommand) -> ExpandedHand {
        let mut angles = [0.0; HAND_DOF];
        angles[..4].copy_from_slice(&cmd.thumb);
        for f in 1..FINGERS {
            let base = f * JOINTS_PER_FINGER;
            angles[base..base + 3].copy_from_slice(&cmd.opposing);
            angles[base + 3] = self.coupling * cmd.opposing[2];
        }
        let clamped = self.clamp(&mut angles);
        ExpandedHand { angles, clamped }
    }

    pub fn finger_frames(&self, finger: usize, hand: &[f64; HAND_DOF]) -> FingerFrames {
        let q = &hand[finger * JOINTS_PER_FINGER..(finger + 1) * JOINTS_PER_FINGER];
        let s = self.flex_sign[finger];
        let swing = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), q[0]);
        let flex_axis = swing * (Vector3::x() * s);
        let base = self.bases[finger];
        let mut origins = [base; JOINTS_PER_FINGER];
        let mut axes = [flex_axis; JOINTS_PER_FINGER];
        axes[0] = Vector3::y();
        let mut p = base;
        let mut bend = 0.0;
        for (k, &len) in self.links.iter().enumerate() {
            origins[k + 1] = p;
            bend += q[k + 1];
            let dir = swing * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), s * bend) * Vector3::z();
            p += dir * len;
        }
        FingerFrames { origins, axes, tip: p }
    }

    pub fn fingertips(&self, hand: &[f64; HAND_DOF]) -> [Vector3<f64>; FINGERS] {
        std::array::from_fn(|f| self.finger_frames(f, hand).tip)
    }

    /// Torque the sensing joint of `finger` must supply for the finger to press
    /// `force` (wrist frame) at `point` (wrist frame): the joint's column of `Jᵀ f`.
    pub fn sensing_torque(
        &self,
        finger: usize,
        hand: &[f64; HAND_DOF],
        point: &Vector3<f64>,
        force: &Vector3<f64>,
    ) -> f64 {
        let frames = self.finger_frames(finger, hand);
        let j = self.sensing_joint;
        frames.axes[j].dot(&(point - frames.origins[j]).cross(force))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand() -> Hand {
        RobotDescription::canonical().hand()
    }

    #[test]
    fn reduce_takes_mean_of_opposing() {
        let mut q = [0.0; HAND_DOF];
        q[4] = 0.1;
        q[8] = 0.2;
        q[12] = 0.3;
        let c = reduce_hand(&q);
        assert!((c.opposing[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identical_fingers_reduce_to_that_finger() {
        let mut q = [0.0; HAND_DOF];
        for f in 1..4 {
            q[f * 4..f * 4 + 4].copy_from_slice(&[0.1, 0.4, -0.05, 0.3]);
        }
        q[..4].copy_from_slice(&[0.7, 0.2, 0.1, 0.0]);
        let c = reduce_hand(&q);
        for (got, want) in c.opposing.iter().zip([0.1, 0.4, -0.05]) {
            assert!((got - want).abs() <= 2.0 * f64::EPSILON * want.abs());
        }
        assert_eq!(c.thumb, [0.7, 0.2, 0.1, 0.0]);
    }

    #[test]
    fn zero_command_expands_to_zero_hand() {
        let e = hand().expand(&ReducedHandCommand::default());
        assert_eq!(e.angles, [0.0; HAND_DOF]);
        assert!(!e.clamped);
    }

    #[test]
    fn coupling_rule_sets_fourth_joint() {
        let cmd = ReducedHandCommand {
            thumb: [0.0; 4],
            opposing: [0.5, 0.5, 0.5],
        };
        let e = hand().expand(&cmd);
        for f in 1..4 {
            assert_eq!(&e.angles[f * 4..f * 4 + 4], &[0.5, 0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn over_limit_command_is_clamped_and_flagged() {
        let h = hand();
        let (_, upper) = h.limits();
        let cmd = ReducedHandCommand {
            thumb: [0.0; 4],
            opposing: [0.0, upper[5] + 0.2, 0.0],
        };
        let e = h.expand(&cmd);
        assert!(e.clamped);
        assert_eq!(e.angles[5], upper[5]);
    }

    #[test]
    fn straight_finger_tip_hangs_below_base() {
        let h = hand();
        let tips = h.fingertips(&[0.0; HAND_DOF]);
        let len: f64 = RobotDescription::canonical().hand.link_lengths.iter().sum();
        let base = Vector3::from(RobotDescription::canonical().hand.finger_bases[2]);
        assert!((tips[2] - base - Vector3::new(0.0, 0.0, len)).norm() < 1e-12);
    }

    #[test]
    fn flexion_closes_toward_the_palm_center() {
        let h = hand();
        let mut q = [0.0; HAND_DOF];
        let open = h.fingertips(&q);
        for f in 0..4 {
            q[f * 4 + 1] = 0.3;
        }
        let closed = h.fingertips(&q);
        assert!(closed[0].y > open[0].y, "thumb moves toward +y");
        for f in 1..4 {
            assert!(closed[f].y < open[f].y, "finger {f} moves toward -y");
        }
    }
}
