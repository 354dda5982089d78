//! Student and teacher observations of the rotation sub-skills.
//!
//! A student frame is built from a sensor reading and the hand command alone,
//! so it cannot carry anything derived from the object pose.

use crate::kinematics::{ReducedHandCommand, FINGERS, HAND_DOF, REDUCED_DOF};
use crate::policy::HISTORY;
use crate::sim::{SensorReading, WorldState};

pub const STUDENT_FRAME_DIM: usize = FINGERS + HAND_DOF + REDUCED_DOF;
pub const STUDENT_OBS_DIM: usize = STUDENT_FRAME_DIM * HISTORY;
/// Object position and orientation in the wrist frame, contact normal forces
/// per finger, friction coefficient.
pub const PRIVILEGED_DIM: usize = 3 + 6 + FINGERS + 1;
pub const TEACHER_OBS_DIM: usize = STUDENT_OBS_DIM + PRIVILEGED_DIM;

pub type StudentFrame = [f64; STUDENT_FRAME_DIM];

pub fn student_frame(reading: &SensorReading, command: &ReducedHandCommand) -> StudentFrame {
    let mut f = [0.0; STUDENT_FRAME_DIM];
    f[..FINGERS].copy_from_slice(&reading.torques);
    f[FINGERS..FINGERS + HAND_DOF].copy_from_slice(&reading.joint_positions);
    f[FINGERS + HAND_DOF..].copy_from_slice(&command.to_array());
    f
}

/// Privileged features of the current state.
pub fn teacher_privileged(state: &WorldState) -> [f64; PRIVILEGED_DIM] {
    let mut out = [0.0; PRIVILEGED_DIM];
    let rel = state.wrist.inverse().compose(&state.object);
    out[..3].copy_from_slice(rel.position.as_slice());
    let m = rel.rotation_matrix();
    for k in 0..3 {
        out[3 + k] = m[(k, 0)];
        out[6 + k] = m[(k, 1)];
    }
    for c in &state.contacts {
        out[9 + c.finger_index] += c.normal_force;
    }
    out[9 + FINGERS] = state.friction_mu;
    out
}

/// Rolling three-frame student history, padded with its first frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudentHistory {
    frames: Vec<StudentFrame>,
}

impl StudentHistory {
    pub fn push(&mut self, reading: &SensorReading, command: &ReducedHandCommand) {
        if self.frames.len() == HISTORY {
            self.frames.remove(0);
        }
        self.frames.push(student_frame(reading, command));
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `[t-2, t-1, t]`; empty history gives zeros.
    pub fn observation(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(STUDENT_OBS_DIM);
        let pad = HISTORY - self.frames.len().min(HISTORY);
        if let Some(first) = self.frames.first() {
            for _ in 0..pad {
                out.extend_from_slice(first);
            }
            for f in &self.frames {
                out.extend_from_slice(f);
            }
        } else {
            out.resize(STUDENT_OBS_DIM, 0.0);
        }
        out
    }

    /// Student observation followed by the privileged features of `state`.
    pub fn teacher_observation(&self, state: &WorldState) -> Vec<f64> {
        let mut out = self.observation();
        out.extend_from_slice(&teacher_privileged(state));
        out
    }
}
