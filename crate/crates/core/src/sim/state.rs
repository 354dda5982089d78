//! World state, contact and sensor records, and snapshot serialization.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::shape::{ObjectShape, Polytope};
use crate::error::{Error, Result};
use crate::kinematics::{Hand, JointConfig, Pose, ReducedHandCommand, FINGERS, HAND_DOF};

pub const SNAPSHOT_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    OnTable,
    Held,
    Dropped,
}

/// Exactly one flag is set; construct through [`PhaseFlags::from`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseFlags {
    pub on_table: bool,
    pub held: bool,
    pub dropped: bool,
}

impl From<Phase> for PhaseFlags {
    fn from(p: Phase) -> Self {
        Self {
            on_table: p == Phase::OnTable,
            held: p == Phase::Held,
            dropped: p == Phase::Dropped,
        }
    }
}

impl PhaseFlags {
    pub fn phase(&self) -> Result<Phase> {
        match (self.on_table, self.held, self.dropped) {
            (true, false, false) => Ok(Phase::OnTable),
            (false, true, false) => Ok(Phase::Held),
            (false, false, true) => Ok(Phase::Dropped),
            _ => Err(Error::Input(format!("phase flags not exclusive: {self:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub finger_index: usize,
    /// Contact point on the object surface, object frame.
    pub location: Vector3<f64>,
    /// Outward face normal at the contact, object frame.
    pub normal: Vector3<f64>,
    pub normal_force: f64,
    /// Components along [`tangent_basis`] of `normal`.
    pub tangential_force: [f64; 2],
}

/// Orthonormal pair spanning the plane orthogonal to unit `n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if n.z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    let t1 = a.cross(n).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

impl ContactPoint {
    /// Force exerted by the finger on the object, object frame.
    pub fn force_object_frame(&self) -> Vector3<f64> {
        let (t1, t2) = tangent_basis(&self.normal);
        -self.normal * self.normal_force + t1 * self.tangential_force[0] + t2 * self.tangential_force[1]
    }

    pub fn tangential_magnitude(&self) -> f64 {
        self.tangential_force[0].hypot(self.tangential_force[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub torques: [f64; FINGERS],
    pub joint_positions: [f64; HAND_DOF],
    pub wrist: Pose,
    pub slip_event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: JointConfig,
    pub wrist: Pose,
    pub object: Pose,
    pub extents: [f64; 3],
    pub mass: f64,
    pub friction_mu: f64,
    pub contacts: Vec<ContactPoint>,
    pub phase_flags: PhaseFlags,
    pub tick: u64,
    pub rng_seed: u64,
    pub shape: ObjectShape,
    pub spawn_object: Pose,
    pub appearance_noise_sigma: f64,
    /// Last reduced hand command the robot was driven toward.
    pub hand_command: ReducedHandCommand,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: String,
    #[serde(flatten)]
    state: WorldState,
}

impl WorldState {
    pub fn phase(&self) -> Phase {
        self.phase_flags.phase().expect("phase flags are kept exclusive")
    }

    pub fn polytope(&self) -> Polytope {
        Polytope::new(self.shape, &self.extents)
    }

    /// Height of the object's lowest vertex above the table plane z = 0.
    pub fn object_bottom(&self) -> f64 {
        self.polytope().lowest_z(&self.object)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Snapshot {
            format_version: SNAPSHOT_VERSION.into(),
            state: self.clone(),
        })
        .expect("world state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v
            .get("format_version")
            .and_then(|f| f.as_str())
            .ok_or_else(|| Error::Input("snapshot without format_version".into()))?;
        crate::robot::check_version(found)?;
        let snap: Snapshot = serde_json::from_value(v)?;
        Ok(snap.state)
    }

    /// Object features as the robot sees them: position relative to the wrist
    /// and the first two columns of the relative rotation, both in the wrist frame.
    pub fn true_object_features(&self) -> [f64; 9] {
        let rel_p = self.wrist.inverse_transform_point(&self.object.position);
        let rel_r: Matrix3<f64> = self.wrist.rotation_matrix().transpose() * self.object.rotation_matrix();
        [
            rel_p.x,
            rel_p.y,
            rel_p.z,
            rel_r[(0, 0)],
            rel_r[(1, 0)],
            rel_r[(2, 0)],
            rel_r[(0, 1)],
            rel_r[(1, 1)],
            rel_r[(2, 1)],
        ]
    }

    /// [`true_object_features`](Self::true_object_features) plus appearance noise.
    /// The noise is a function of `(rng_seed, tick)` only.
    pub fn object_features(&self) -> [f64; 9] {
        let mut f = self.true_object_features();
        if self.appearance_noise_sigma > 0.0 {
            let key = self.rng_seed ^ self.tick.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            let n = Normal::new(0.0, self.appearance_noise_sigma).expect("sigma is finite");
            for v in f.iter_mut() {
                *v += n.sample(&mut rng);
            }
        }
        f
    }
}

/// Sensing-joint torque of every finger from the stored contact forces.
pub fn read_torques(hand: &Hand, state: &WorldState) -> [f64; FINGERS] {
    let mut tau = [0.0; FINGERS];
    let wrist_rot = state.wrist.orientation().inverse();
    for c in &state.contacts {
        let f_world = state.object.orientation() * c.force_object_frame();
        let p_world = state.object.transform_point(&c.location);
        let f_wrist = wrist_rot * f_world;
        let p_wrist = state.wrist.inverse_transform_point(&p_world);
        tau[c.finger_index] += hand.sensing_torque(c.finger_index, &state.robot.hand, &p_wrist, &f_wrist);
    }
    tau
}

/// Signed rotation of the object relative to its spawn frame about `axis`
/// (world frame): the twist angle of the swing-twist decomposition.
pub fn object_rotation_about(state: &WorldState, axis: &Vector3<f64>) -> f64 {
    let norm = axis.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        log::warn!("object_rotation_about: degenerate axis {:?}", axis.as_slice());
        return 0.0;
    }
    if (norm - 1.0).abs() > 1e-9 {
        log::warn!("object_rotation_about: axis normalized from length {norm}");
    }
    let a = axis / norm;
    let rel: UnitQuaternion<f64> = state.object.orientation() * state.spawn_object.orientation().inverse();
    let q = rel.quaternion();
    let (w, proj) = if q.w < 0.0 { (-q.w, -q.imag().dot(&a)) } else { (q.w, q.imag().dot(&a)) };
    2.0 * proj.atan2(w)
}
