//! Human teleoperation: operator input retargeting, the recording session state
//! machine and a 15 Hz WebSocket server around it.

mod protocol;
mod server;
mod session;

pub use protocol::{Button, ClientMessage, ServerMessage};
pub use server::{serve, ServerConfig, ServerHandle, TICK_HZ};
pub use session::{Session, SessionConfig, SessionState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Pose, ReducedHandCommand, REDUCED_DOF};
use crate::policy::{Action, MAX_WRIST_ROTATION, MAX_WRIST_TRANSLATION};

/// One operator message: relative wrist motion since the previous message and
/// the normalized thumb-to-middle-finger closing degree.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorInput {
    /// Translation (m), world frame.
    pub wrist_delta: [f64; 3],
    /// Rotation vector (rad), world frame.
    #[serde(default)]
    pub wrist_rot_delta: [f64; 3],
    /// 0 open, 1 closed.
    pub pinch: f64,
}

impl OperatorInput {
    pub fn is_finite(&self) -> bool {
        self.wrist_delta.iter().chain(&self.wrist_rot_delta).all(|v| v.is_finite()) && self.pinch.is_finite()
    }

    /// Pinch in [0, 1], deltas within the per-message caps.
    pub fn clamped(&self) -> Self {
        Self {
            wrist_delta: self.wrist_delta.map(|v| v.clamp(-MAX_WRIST_TRANSLATION, MAX_WRIST_TRANSLATION)),
            wrist_rot_delta: self.wrist_rot_delta.map(|v| v.clamp(-MAX_WRIST_ROTATION, MAX_WRIST_ROTATION)),
            pinch: self.pinch.clamp(0.0, 1.0),
        }
    }
}

/// Per-session mapping data, established by a reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub open: [f64; REDUCED_DOF],
    pub closed: [f64; REDUCED_DOF],
    /// Wrist pose the operator's hand position is measured from.
    pub wrist_reference: Pose,
}

impl Calibration {
    pub fn new(open: &ReducedHandCommand, closed: &ReducedHandCommand, wrist_reference: Pose) -> Self {
        Self {
            open: open.to_array(),
            closed: closed.to_array(),
            wrist_reference,
        }
    }
}

/// Reduced hand command for closing degree `pinch` (clamped to [0, 1]).
pub fn finger_target(pinch: f64, calib: &Calibration) -> [f64; REDUCED_DOF] {
    let p = pinch.clamp(0.0, 1.0);
    std::array::from_fn(|k| (1.0 - p) * calib.open[k] + p * calib.closed[k])
}

/// Action moving the wrist by the clamped input deltas and the fingers toward
/// the pinch posture from `current`, within the action caps. Never terminates.
pub fn retarget(input: &OperatorInput, calib: Option<&Calibration>, current: &ReducedHandCommand) -> Result<Action> {
    let calib = calib.ok_or(Error::CalibrationRequired)?;
    if !input.is_finite() {
        return Err(Error::Input("operator input has a non-finite value".into()));
    }
    let i = input.clamped();
    let target = finger_target(i.pinch, calib);
    let cur = current.to_array();
    let mut wrist_delta = [0.0; 6];
    wrist_delta[..3].copy_from_slice(&i.wrist_delta);
    wrist_delta[3..].copy_from_slice(&i.wrist_rot_delta);
    Ok(Action {
        wrist_delta,
        fingers: std::array::from_fn(|k| target[k] - cur[k]),
        terminate: 0.0,
    }
    .clamped())
}
