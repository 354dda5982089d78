//! Arm and hand kinematics.

mod arm;
mod hand;
mod pose;

use serde::{Deserialize, Serialize};

pub use arm::{Arm, IkOptions, IkSolution, IkTolerance, Jacobian, ARM_DOF};
pub use hand::{
    reduce_hand, ExpandedHand, FingerFrames, Hand, ReducedHandCommand, FINGERS, HAND_DOF,
    JOINTS_PER_FINGER, REDUCED_DOF, THUMB,
};
pub use pose::{geodesic_angle, rotation_error, Pose};

use crate::error::{Error, Result};

/// Full robot configuration. Hand joints `[0..4)` thumb, `[4..8)` first,
/// `[8..12)` middle, `[12..16)` ring finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub arm: [f64; ARM_DOF],
    pub hand: [f64; HAND_DOF],
}

impl JointConfig {
    pub fn check_limits(&self, arm: &Arm, hand: &Hand) -> Result<()> {
        arm.check_limits(&self.arm)?;
        let (lo, hi) = hand.limits();
        for (i, &v) in self.hand.iter().enumerate() {
            if !v.is_finite() || v < lo[i] || v > hi[i] {
                return Err(Error::LimitViolation {
                    joint: format!("hand_{i}"),
                    value: v,
                    lower: lo[i],
                    upper: hi[i],
                });
            }
        }
        Ok(())
    }
}
