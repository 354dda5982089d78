//! Observation and action encoding of the grasp-and-lift policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{reduce_hand, REDUCED_DOF};
use crate::sim::SensorReading;

pub const OBJECT_FEATURES: usize = 9;
pub const FRAME_DIM: usize = OBJECT_FEATURES + 4 + REDUCED_DOF;
pub const HISTORY: usize = 3;
pub const OBS_DIM: usize = FRAME_DIM * HISTORY;
pub const ACTION_DIM: usize = 14;
pub const REGRESSION_DIM: usize = ACTION_DIM - 1;

pub const MAX_WRIST_TRANSLATION: f64 = 0.02;
pub const MAX_WRIST_ROTATION: f64 = 0.1;
pub const MAX_FINGER_DELTA: f64 = 0.1;

/// Per-dimension clamp of the 13 regression outputs.
pub const ACTION_CLAMP: [f64; REGRESSION_DIM] = [
    MAX_WRIST_TRANSLATION,
    MAX_WRIST_TRANSLATION,
    MAX_WRIST_TRANSLATION,
    MAX_WRIST_ROTATION,
    MAX_WRIST_ROTATION,
    MAX_WRIST_ROTATION,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
    MAX_FINGER_DELTA,
];

/// One history frame: object features, the four torques, reduced hand state.
pub type ObsFrame = [f64; FRAME_DIM];
pub type Observation = [f64; OBS_DIM];

pub fn frame(object_features: &[f64; OBJECT_FEATURES], reading: &SensorReading) -> ObsFrame {
    let mut f = [0.0; FRAME_DIM];
    f[..OBJECT_FEATURES].copy_from_slice(object_features);
    f[OBJECT_FEATURES..OBJECT_FEATURES + 4].copy_from_slice(&reading.torques);
    f[OBJECT_FEATURES + 4..].copy_from_slice(&reduce_hand(&reading.joint_positions).to_array());
    f
}

/// Stacks the last three frames as `[t-2, t-1, t]`, padding a short history
/// with copies of its first frame.
pub fn build_obs(history: &[ObsFrame]) -> Result<Observation> {
    let Some(first) = history.first() else {
        return Err(Error::Input("observation needs at least one frame".into()));
    };
    if let Some(bad) = history.iter().flatten().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite feature at flat index {bad}")));
    }
    let tail = &history[history.len().saturating_sub(HISTORY)..];
    let mut obs = [0.0; OBS_DIM];
    let pad = HISTORY - tail.len();
    for k in 0..HISTORY {
        let src = if k < pad { first } else { &tail[k - pad] };
        obs[k * FRAME_DIM..(k + 1) * FRAME_DIM].copy_from_slice(src);
    }
    Ok(obs)
}

/// Per-feature standardization fitted on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Features with (near) zero spread keep unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1;
            for k in 0..dim {
                let d = row[k] - mean[k];
                mean[k] += d / n as f64;
                m2[k] += d * (row[k] - mean[k]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-6 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    /// Translation (m) then rotation vector (rad), world frame.
    pub wrist_delta: [f64; 6],
    /// Reduced-command deltas: thumb 4, opposing 3 (rad).
    pub fingers: [f64; REDUCED_DOF],
    pub terminate: f64,
}

impl Action {
    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        let mut a = [0.0; ACTION_DIM];
        a[..6].copy_from_slice(&self.wrist_delta);
        a[6..13].copy_from_slice(&self.fingers);
        a[13] = self.terminate;
        a
    }

    pub fn from_array(a: &[f64; ACTION_DIM]) -> Self {
        let mut out = Self::default();
        out.wrist_delta.copy_from_slice(&a[..6]);
        out.fingers.copy_from_slice(&a[6..13]);
        out.terminate = a[13];
        out
    }

    /// Regression dims clamped to their caps, terminate to [0, 1].
    pub fn clamped(&self) -> Self {
        let mut a = self.to_array();
        for k in 0..REGRESSION_DIM {
            a[k] = a[k].clamp(-ACTION_CLAMP[k], ACTION_CLAMP[k]);
        }
        a[13] = a[13].clamp(0.0, 1.0);
        Self::from_array(&a)
    }

    /// Regression dims divided by their caps (in `[-1, 1]` for clamped actions).
    pub fn normalized(&self) -> [f64; REGRESSION_DIM] {
        let a = self.to_array();
        std::array::from_fn(|k| a[k] / ACTION_CLAMP[k])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}
