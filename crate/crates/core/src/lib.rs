//! Multi-step dexterous manipulation on a simulated 6-DoF arm with a 16-joint
//! four-finger hand: an IK reaching controller, a behavior-cloned grasp-and-lift
//! policy and four force-feedback-only in-hand rotation skills, sequenced into
//! one pipeline, plus the teleoperation and data-generation machinery around them.

pub mod ablation;
pub mod datagen;
pub mod episode;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod nn;
pub mod policy;
pub mod rl;
pub mod robot;
pub mod sequencer;
pub mod sim;
pub mod teleop;

pub use error::{Error, Result};
