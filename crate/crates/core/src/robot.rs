//! Robot-description file: arm DH table, joint limits, hand geometry, home pose,
//! reachable shell, coupling ratio and the teleop finger postures.
//!
//! The file is TOML with a `format_version = "MAJOR.MINOR"` field; loaders reject
//! any major version other than [`SUPPORTED_MAJOR`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::kinematics::{Arm, Hand, Pose, ReducedHandCommand};

pub const SUPPORTED_MAJOR: u32 = 1;

const CANONICAL: &str = include_str!("../assets/robot.toml");

/// Standard Denavit-Hartenberg row: `Rz(θ) Tz(d) Tx(a) Rx(alpha)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DhRow {
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmDescription {
    pub dh: Vec<DhRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Configuration the simulator spawns the robot in.
    pub ready: Vec<f64>,
    /// rad/s
    pub max_velocity: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Wrist pose at the all-zero configuration.
    pub home_position: [f64; 3],
    pub home_orientation: [f64; 4],
    /// Palm orientation held while reaching and grasping (w, x, y, z).
    pub reach_orientation: [f64; 4],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Posture {
    pub thumb: [f64; 4],
    pub opposing: [f64; 3],
}

impl From<Posture> for ReducedHandCommand {
    fn from(p: Posture) -> Self {
        ReducedHandCommand {
            thumb: p.thumb,
            opposing: p.opposing,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandDescription {
    /// Finger base positions in the wrist frame, thumb first.
    pub finger_bases: [[f64; 3]; 4],
    /// Proximal, middle, distal link lengths (m).
    pub link_lengths: [f64; 3],
    /// +1 flexes toward -y (opposing fingers), -1 toward +y (thumb).
    pub flex_sign: [f64; 4],
    pub tip_radius: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Fourth joint of each opposing finger = ratio × third joint.
    pub coupling_ratio: f64,
    /// Joint index within each finger whose torque is sensed.
    pub sensing_joint: usize,
    pub max_velocity: f64,
    pub open: Posture,
    pub closed: Posture,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotDescription {
    pub format_version: String,
    pub arm: ArmDescription,
    pub hand: HandDescription,
}

pub(crate) fn check_version(found: &str) -> Result<()> {
    let major = found
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| Error::Config(format!("malformed format_version {found:?}")))?;
    if major != SUPPORTED_MAJOR {
        return Err(Error::FormatVersion {
            found: found.to_string(),
            expected: SUPPORTED_MAJOR,
        });
    }
    Ok(())
}

impl RobotDescription {
    /// The description shipped with the crate.
    pub fn canonical() -> Self {
        Self::from_toml_str(CANONICAL).expect("shipped robot description is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionOnly {
            format_version: String,
        }
        let v: VersionOnly =
            toml::from_str(text).map_err(|e| Error::Config(format!("robot description: {e}")))?;
        check_version(&v.format_version)?;
        let desc: RobotDescription =
            toml::from_str(text).map_err(|e| Error::Config(format!("robot description: {e}")))?;
        desc.validate()?;
        Ok(desc)
    }

    fn validate(&self) -> Result<()> {
        let a = &self.arm;
        if a.dh.len() != 6 || a.lower.len() != 6 || a.upper.len() != 6 || a.ready.len() != 6 {
            return Err(Error::Config("arm needs exactly 6 joints".into()));
        }
        let h = &self.hand;
        if h.lower.len() != 16 || h.upper.len() != 16 {
            return Err(Error::Config("hand needs exactly 16 joint limits".into()));
        }
        for (lo, hi) in a.lower.iter().zip(&a.upper).chain(h.lower.iter().zip(&h.upper)) {
            if !(lo < hi) {
                return Err(Error::Config(format!("empty joint limit [{lo}, {hi}]")));
            }
        }
        if !(a.r_min >= 0.0 && a.r_min < a.r_max) {
            return Err(Error::Config("reachable shell must satisfy 0 <= r_min < r_max".into()));
        }
        let arm = Arm::new(self);
        let fk0 = arm.fk_unchecked(&[0.0; 6]);
        let home = self.home_pose();
        if (fk0.position - home.position).norm() > 1e-9
            || crate::kinematics::geodesic_angle(&fk0.orientation(), &home.orientation()) > 1e-9
        {
            return Err(Error::Config(format!(
                "home pose does not match the zero configuration (fk gives {:?} {:?})",
                fk0.position.as_slice(),
                fk0.wxyz()
            )));
        }
        Ok(())
    }

    pub fn home_pose(&self) -> Pose {
        Pose::from_wxyz(self.arm.home_position, self.arm.home_orientation)
    }

    pub fn reach_orientation(&self) -> Pose {
        Pose::from_wxyz([0.0; 3], self.arm.reach_orientation)
    }

    pub fn arm(&self) -> Arm {
        Arm::new(self)
    }

    pub fn hand(&self) -> Hand {
        Hand::new(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("description serializes")
    }
}
