//! Demonstration episodes: recorded (observation, action, reading) frames with
//! provenance, stored one per JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::policy::{Action, BcSample, Observation, OBS_DIM};
use crate::sim::{RandomizationSpec, SensorReading, Simulator, WorldState};

pub const EPISODE_VERSION: &str = "1.0";
pub const DEFAULT_GRASP_TYPE: &str = "grasp the object from above";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Teleop,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub provenance: Provenance,
    pub spec: RandomizationSpec,
    pub grasp_type: String,
    /// Unix seconds for teleop recordings; 0 for generated episodes so their bytes
    /// depend on the seed only.
    pub timestamp: u64,
    pub seed: u64,
    /// Control period the actions were applied with (s).
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFrame {
    pub tick: u64,
    pub observation: Vec<f64>,
    pub action: Action,
    /// Reading after the action was applied.
    pub reading: SensorReading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub format_version: String,
    pub metadata: EpisodeMetadata,
    /// World state the first action was applied to.
    pub initial_state: WorldState,
    pub frames: Vec<EpisodeFrame>,
}

impl EpisodeRecord {
    pub fn new(metadata: EpisodeMetadata, initial_state: WorldState, frames: Vec<EpisodeFrame>) -> Result<Self> {
        let r = Self {
            format_version: EPISODE_VERSION.into(),
            metadata,
            initial_state,
            frames,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Dataset(m));
        crate::robot::check_version(&self.format_version)?;
        let Some(last) = self.frames.last() else {
            return bad("episode has no frames".into());
        };
        if last.action.terminate != 1.0 {
            return bad(format!("last frame terminate label is {}, not 1", last.action.terminate));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.observation.len() != OBS_DIM {
                return bad(format!("frame {i}: observation has {} values", f.observation.len()));
            }
            if !f.observation.iter().all(|v| v.is_finite()) || !f.action.is_finite() {
                return bad(format!("frame {i}: non-finite value"));
            }
            if i > 0 && f.tick <= self.frames[i - 1].tick {
                return bad(format!("frame {i}: tick {} not after {}", f.tick, self.frames[i - 1].tick));
            }
        }
        if !(self.metadata.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.metadata.dt));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let version = v.get("format_version").and_then(|f| f.as_str()).unwrap_or("");
        crate::robot::check_version(version)?;
        let r: Self = serde_json::from_value(v)?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_json(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
    }

    /// Re-applies the recorded actions from the recorded initial state.
    pub fn replay(&self, sim: &Simulator) -> Result<Vec<SensorReading>> {
        let mut state = self.initial_state.clone();
        let mut out = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let (next, reading) = sim.step(&state, &f.action.to_command(&state), self.metadata.dt)?;
            state = next;
            out.push(reading);
        }
        Ok(out)
    }

    /// Whether replay reproduces every recorded reading bit for bit.
    pub fn replays_exactly(&self, sim: &Simulator) -> Result<bool> {
        let readings = self.replay(sim)?;
        Ok(readings.iter().zip(&self.frames).all(|(r, f)| *r == f.reading))
    }

    pub fn samples(&self) -> impl Iterator<Item = BcSample> + '_ {
        self.frames.iter().map(|f| {
            let mut obs: Observation = [0.0; OBS_DIM];
            obs.copy_from_slice(&f.observation);
            BcSample { obs, action: f.action }
        })
    }
}
