//! Recording session: Idle → (start) Recording → (stop) Saving → Idle.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::protocol::{Button, ClientMessage, ServerMessage};
use super::{retarget, Calibration, OperatorInput};
use crate::datagen::derive_seed;
use crate::episode::{EpisodeFrame, EpisodeMetadata, EpisodeRecord, Provenance, DEFAULT_GRASP_TYPE};
use crate::error::{Error, Result};
use crate::policy::{Action, ObsHistory, MAX_WRIST_ROTATION, MAX_WRIST_TRANSLATION};
use crate::sequencer::{run_reach, SequencerConfig};
use crate::sim::{RandomizationSpec, SensorReading, Simulator, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Recording,
    Saving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub spec: RandomizationSpec,
    pub sequencer: SequencerConfig,
    /// Directory episodes are written to; `None` keeps them in memory only.
    pub out: Option<PathBuf>,
    pub grasp_type: String,
    /// Spawn index of the first world; each reset advances it.
    pub first_spawn: u64,
}

impl SessionConfig {
    pub fn new(spec: RandomizationSpec, out: Option<PathBuf>) -> Self {
        Self {
            spec,
            sequencer: SequencerConfig::default(),
            out,
            grasp_type: DEFAULT_GRASP_TYPE.into(),
            first_spawn: 0,
        }
    }
}

pub struct Session {
    sim: Arc<Simulator>,
    cfg: SessionConfig,
    state: SessionState,
    world: WorldState,
    reading: SensorReading,
    spawn_seed: u64,
    next_spawn: u64,
    calib: Option<Calibration>,
    /// Latest unconsumed input; later messages overwrite earlier ones.
    slot: Option<OperatorInput>,
    pinch: f64,
    last_seq: Option<u64>,
    history: ObsHistory,
    initial: Option<WorldState>,
    frames: Vec<EpisodeFrame>,
    last_episode: Option<EpisodeRecord>,
    saved: Vec<PathBuf>,
}

fn next_free(dir: &Path) -> PathBuf {
    (0u64..)
        .map(|k| dir.join(format!("teleop_{k:05}.json")))
        .find(|p| !p.exists())
        .expect("unbounded index")
}

impl Session {
    /// Spawns the first world, reached above the object, uncalibrated.
    pub fn new(sim: Arc<Simulator>, cfg: SessionConfig) -> Result<Self> {
        cfg.spec.validate()?;
        let world = sim.spawn(&cfg.spec)?;
        let mut s = Self {
            reading: sim.sensor_reading(&world, false),
            world,
            sim,
            state: SessionState::Idle,
            spawn_seed: 0,
            next_spawn: cfg.first_spawn,
            calib: None,
            slot: None,
            pinch: 0.0,
            last_seq: None,
            history: ObsHistory::default(),
            initial: None,
            frames: Vec::new(),
            last_episode: None,
            saved: Vec::new(),
            cfg,
        };
        s.respawn()?;
        Ok(s)
    }

    fn respawn(&mut self) -> Result<()> {
        self.spawn_seed = derive_seed(self.cfg.spec.seed, self.next_spawn);
        self.next_spawn += 1;
        let spawned = self.sim.spawn(&self.cfg.spec.with_seed(self.spawn_seed))?;
        let (world, r) = run_reach(&self.sim, &spawned, &self.cfg.sequencer);
        if !r.outcome.is_success() {
            log::warn!("teleop spawn {:#x}: reach failed ({:?}), starting from the spawn pose", self.spawn_seed, r.outcome);
        }
        self.reading = self.sim.sensor_reading(&world, false);
        self.world = world;
        self.slot = None;
        self.pinch = 0.0;
        Ok(())
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn is_calibrated(&self) -> bool {
        self.calib.is_some()
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    /// Most recent episode finished by a stop, saved or not.
    pub fn last_episode(&self) -> Option<&EpisodeRecord> {
        self.last_episode.as_ref()
    }

    pub fn saved(&self) -> &[PathBuf] {
        &self.saved
    }

    /// Handles one raw line. Malformed or out-of-order messages get an error
    /// reply and leave the session unchanged.
    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(line) {
            Ok((seq, msg)) => self.handle(seq, &msg),
            Err(e) => vec![ServerMessage::error(&e, None)],
        }
    }

    pub fn handle(&mut self, seq: u64, msg: &ClientMessage) -> Vec<ServerMessage> {
        if self.last_seq.is_some_and(|last| seq <= last) {
            let e = Error::Protocol(format!("seq {seq} does not follow {}", self.last_seq.unwrap_or(0)));
            return vec![ServerMessage::error(&e, Some(seq))];
        }
        match self.dispatch(msg) {
            Ok(out) => {
                self.last_seq = Some(seq);
                out
            }
            Err(e) => vec![ServerMessage::error(&e, Some(seq))],
        }
    }

    fn dispatch(&mut self, msg: &ClientMessage) -> Result<Vec<ServerMessage>> {
        let protocol = |m: &str| Err(Error::Protocol(m.into()));
        Ok(match (msg, self.state) {
            (ClientMessage::Hello { client }, _) => {
                log::info!("teleop client connected: {client}");
                vec![ServerMessage::event(
                    "welcome",
                    json!({
                        "state": self.state,
                        "calibrated": self.is_calibrated(),
                        "tick_hz": super::TICK_HZ,
                        "max_translation": MAX_WRIST_TRANSLATION,
                        "max_rotation": MAX_WRIST_ROTATION,
                        "grasp_type": self.cfg.grasp_type,
                    }),
                )]
            }
            (ClientMessage::Input(i), _) => {
                if self.calib.is_none() {
                    return Err(Error::CalibrationRequired);
                }
                self.slot = Some(i.clamped());
                Vec::new()
            }
            (ClientMessage::Button(Button::Reset), SessionState::Idle) => {
                self.respawn()?;
                self.calib = Some(Calibration::new(&self.sim.open_hand(), &self.sim.closed_hand(), self.world.wrist));
                vec![ServerMessage::event("calibrated", json!({ "seed": self.spawn_seed }))]
            }
            (ClientMessage::Button(Button::Start), SessionState::Idle) => {
                if self.calib.is_none() {
                    return Err(Error::CalibrationRequired);
                }
                self.state = SessionState::Recording;
                self.initial = Some(self.world.clone());
                self.frames.clear();
                self.history = ObsHistory::default();
                self.history.push(&self.world, &self.reading);
                vec![ServerMessage::event("recording_started", json!({ "seed": self.spawn_seed }))]
            }
            (ClientMessage::Button(Button::Stop), SessionState::Recording) => self.finish()?,
            (ClientMessage::Button(Button::Discard), SessionState::Recording) => {
                self.discard();
                vec![ServerMessage::event("discarded", json!({ "reason": "discard" }))]
            }
            (ClientMessage::Button(b), s) => return protocol(&format!("{b:?} not allowed while {s:?}")),
        })
    }

    fn discard(&mut self) {
        self.frames.clear();
        self.initial = None;
        self.state = SessionState::Idle;
    }

    fn finish(&mut self) -> Result<Vec<ServerMessage>> {
        self.state = SessionState::Saving;
        let mut frames = std::mem::take(&mut self.frames);
        let initial = self.initial.take();
        self.state = SessionState::Idle;
        let (Some(last), Some(initial)) = (frames.last_mut(), initial) else {
            return Ok(vec![ServerMessage::event("discarded", json!({ "reason": "empty" }))]);
        };
        last.action.terminate = 1.0;
        let meta = EpisodeMetadata {
            provenance: Provenance::Teleop,
            spec: self.cfg.spec.with_seed(self.spawn_seed),
            grasp_type: self.cfg.grasp_type.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            seed: self.spawn_seed,
            dt: self.cfg.sequencer.dt,
        };
        let n = frames.len();
        let record = EpisodeRecord::new(meta, initial, frames)?;
        let path = match &self.cfg.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
                let p = next_free(dir);
                record.save(&p)?;
                self.saved.push(p.clone());
                Some(p)
            }
            None => None,
        };
        self.last_episode = Some(record);
        Ok(vec![ServerMessage::event("saved", json!({ "frames": n, "path": path }))])
    }

    /// Connection lost: an in-progress recording is dropped. Returns whether
    /// one was.
    pub fn disconnect(&mut self) -> bool {
        let recording = self.state == SessionState::Recording;
        if recording {
            log::warn!("teleop client disconnected mid-recording; {} frames discarded", self.frames.len());
            self.discard();
        }
        self.last_seq = None;
        self.slot = None;
        recording
    }

    /// Advances the world one control period with the latest input, or a
    /// zero wrist delta at the last pinch when none arrived.
    pub fn tick(&mut self) -> Result<()> {
        let action = match &self.calib {
            Some(c) => {
                let input = self.slot.take().unwrap_or(OperatorInput {
                    pinch: self.pinch,
                    ..OperatorInput::default()
                });
                self.pinch = input.pinch;
                retarget(&input, Some(c), &self.world.hand_command)?
            }
            None => Action::default(),
        };
        let observation = (self.state == SessionState::Recording)
            .then(|| self.history.observation())
            .transpose()?;
        let (next, reading) = self.sim.step(&self.world, &action.to_command(&self.world), self.cfg.sequencer.dt)?;
        if let Some(observation) = observation {
            self.history.push(&next, &reading);
            self.frames.push(EpisodeFrame {
                tick: next.tick,
                observation: observation.to_vec(),
                action,
                reading: reading.clone(),
            });
        }
        self.world = next;
        self.reading = reading;
        Ok(())
    }

    pub fn snapshot(&self) -> ServerMessage {
        let world: serde_json::Value = serde_json::from_str(&self.world.to_json()).expect("snapshot is json");
        ServerMessage::Snapshot(json!({
            "tick": self.world.tick,
            "session": self.state,
            "calibrated": self.is_calibrated(),
            "frames": self.frames.len(),
            "seed": self.spawn_seed,
            "world": world,
            "reading": self.reading,
        }))
    }
}
