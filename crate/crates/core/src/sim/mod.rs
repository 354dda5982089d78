//! Deterministic quasi-static world: table, one object, fingertip contacts with
//! Coulomb friction, torque sensing and domain randomization.

mod contact;
mod randomization;
mod shape;
mod state;
mod world;

pub use randomization::{ObjectSample, PositionRange, RandomizationSpec};
pub use shape::{Face, ObjectShape, Polytope, DIAMOND_SHEAR};
pub use state::{
    object_rotation_about, read_torques, tangent_basis, ContactPoint, Phase, PhaseFlags, SensorReading,
    WorldState, SNAPSHOT_VERSION,
};
pub use world::{ArmTarget, Command, SimConfig, Simulator};
