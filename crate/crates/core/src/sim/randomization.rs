//! Domain randomization: the distribution objects are spawned from.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shape::ObjectShape;
use crate::error::{Error, Result};

/// Axis-aligned box on the table top, `[lo, hi]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSpec {
    pub position_range: PositionRange,
    pub scale_range: [f64; 2],
    pub shape_set: Vec<ObjectShape>,
    /// Standard deviation of additive noise on the object features (the lighting stand-in).
    pub appearance_noise_sigma: f64,
    pub friction_range: [f64; 2],
    pub mass_range: [f64; 2],
    /// Half-sizes of the object at scale 1.
    pub base_extents: [f64; 3],
    pub seed: u64,
}

/// Object parameters drawn from a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSample {
    pub position: [f64; 2],
    pub scale: f64,
    pub shape: ObjectShape,
    pub extents: [f64; 3],
    pub friction_mu: f64,
    pub mass: f64,
}

fn check_interval(name: &str, iv: [f64; 2], positive: bool) -> Result<()> {
    let [lo, hi] = iv;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name}: empty or non-finite interval [{lo}, {hi}]")));
    }
    if positive && lo <= 0.0 {
        return Err(Error::Config(format!("{name}: interval must be positive, got [{lo}, {hi}]")));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

impl RandomizationSpec {
    /// Nominal box with fixed parameters everywhere except friction and mass.
    pub fn nominal() -> Self {
        Self {
            position_range: PositionRange {
                x: [-0.46, -0.44],
                y: [-0.01, 0.01],
            },
            scale_range: [1.0, 1.0],
            shape_set: vec![ObjectShape::Box],
            appearance_noise_sigma: 0.0,
            friction_range: [0.6, 1.0],
            mass_range: [0.08, 0.12],
            base_extents: [0.045, 0.035, 0.025],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_interval("position_range.x", self.position_range.x, false)?;
        check_interval("position_range.y", self.position_range.y, false)?;
        check_interval("scale_range", self.scale_range, true)?;
        check_interval("friction_range", self.friction_range, true)?;
        check_interval("mass_range", self.mass_range, true)?;
        if self.shape_set.is_empty() {
            return Err(Error::Config("shape_set is empty".into()));
        }
        if !(self.appearance_noise_sigma >= 0.0 && self.appearance_noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "appearance_noise_sigma must be >= 0, got {}",
                self.appearance_noise_sigma
            )));
        }
        if !self.base_extents.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::Config("base_extents must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn sample(&self) -> Result<ObjectSample> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let x = draw(&mut rng, self.position_range.x);
        let y = draw(&mut rng, self.position_range.y);
        let scale = draw(&mut rng, self.scale_range);
        let shape = *self.shape_set.choose(&mut rng).expect("non-empty");
        let friction_mu = draw(&mut rng, self.friction_range);
        let mass = draw(&mut rng, self.mass_range);
        Ok(ObjectSample {
            position: [x, y],
            scale,
            shape,
            extents: self.base_extents.map(|e| e * scale),
            friction_mu,
            mass,
        })
    }
}
