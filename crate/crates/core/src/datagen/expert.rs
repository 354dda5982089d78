//! Scripted grasp-and-lift expert with privileged access to the object pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeFrame, EpisodeMetadata, EpisodeRecord, Provenance, DEFAULT_GRASP_TYPE};
use crate::error::Result;
use crate::kinematics::{rotation_error, FINGERS, THUMB};
use crate::policy::{Action, ObsHistory};
use crate::sequencer::{grasp_succeeded, run_reach, SequencerConfig};
use crate::sim::{RandomizationSpec, Simulator, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Per-axis wrist translation per step while descending (m).
    pub descent_step: f64,
    /// Flexion added per step to a finger group that is not yet touching.
    pub close_step: f64,
    /// Flexion added to both groups once both touch.
    pub squeeze: f64,
    pub lift_height: f64,
    pub lift_steps: usize,
    pub max_steps: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            descent_step: 0.018,
            close_step: 0.04,
            squeeze: 0.03,
            lift_height: 0.08,
            lift_steps: 4,
            max_steps: 80,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Descend,
    Close,
    Lift(usize),
}

/// Reactive expert: the wrist goal comes from the true object pose, finger
/// closure stops on contact, so every decision after the descent depends only
/// on quantities the policy also observes.
pub struct ScriptedExpert {
    cfg: ExpertConfig,
    stage: Stage,
}

impl ScriptedExpert {
    pub fn new(cfg: ExpertConfig) -> Self {
        Self {
            cfg,
            stage: Stage::Descend,
        }
    }

    fn descend(&self, sim: &Simulator, state: &WorldState) -> Option<Action> {
        let tips = sim.tips_world(&state.wrist, &state.robot.hand);
        let tip_z = tips.iter().map(|t| t.z).sum::<f64>() / tips.len() as f64;
        let goal = Vector3::new(
            state.object.position.x,
            state.object.position.y,
            state.object.position.z + (state.wrist.position.z - tip_z),
        );
        let d = goal - state.wrist.position;
        if d.amax() < 1.5e-3 {
            return None;
        }
        let target = sim.description().reach_orientation().orientation();
        let r = rotation_error(&state.wrist.orientation(), &target);
        let s = self.cfg.descent_step;
        let mut a = Action::default();
        for k in 0..3 {
            a.wrist_delta[k] = d[k].clamp(-s, s);
            a.wrist_delta[k + 3] = r[k].clamp(-0.05, 0.05);
        }
        Some(a)
    }

    /// Next action, or `None` when the expert gives up.
    pub fn act(&mut self, sim: &Simulator, state: &WorldState) -> Option<Action> {
        let mut a = Action::default();
        match self.stage {
            Stage::Descend => {
                if let Some(a) = self.descend(sim, state) {
                    return Some(a);
                }
                self.stage = Stage::Close;
                self.act(sim, state)
            }
            Stage::Close => {
                let touching = |f: usize| state.contacts.iter().any(|c| c.finger_index == f && c.normal_force > 0.0);
                let thumb = touching(THUMB);
                let opposing = (1..FINGERS).any(touching);
                if thumb && opposing {
                    a.fingers[1] = self.cfg.squeeze;
                    a.fingers[5] = self.cfg.squeeze;
                    self.stage = Stage::Lift(0);
                } else {
                    if !thumb {
                        a.fingers[1] = self.cfg.close_step;
                    }
                    if !opposing {
                        a.fingers[5] = self.cfg.close_step;
                    }
                }
                Some(a)
            }
            Stage::Lift(k) => {
                if k >= self.cfg.lift_steps {
                    return None;
                }
                self.stage = Stage::Lift(k + 1);
                a.wrist_delta[2] = self.cfg.lift_height / self.cfg.lift_steps as f64;
                if k + 1 == self.cfg.lift_steps {
                    a.terminate = 1.0;
                }
                Some(a)
            }
        }
    }
}

/// Reached start state, recorded frames and final state of one expert run, or
/// `None` when reaching or the grasp fails.
fn run_expert(
    sim: &Simulator,
    spec: &RandomizationSpec,
    expert: &ExpertConfig,
    seq: &SequencerConfig,
) -> Result<Option<(WorldState, Vec<EpisodeFrame>, WorldState)>> {
    let spawned = sim.spawn(spec)?;
    let (start, reach) = run_reach(sim, &spawned, seq);
    if !reach.outcome.is_success() {
        return Ok(None);
    }
    let mut ex = ScriptedExpert::new(expert.clone());
    let mut history = ObsHistory::default();
    history.push(&start, &sim.sensor_reading(&start, false));
    let mut state = start.clone();
    let mut frames = Vec::new();
    while frames.len() < expert.max_steps {
        let Some(action) = ex.act(sim, &state) else { return Ok(None) };
        let observation = history.observation()?.to_vec();
        let (next, reading) = sim.step(&state, &action.to_command(&state), seq.dt)?;
        history.push(&next, &reading);
        frames.push(EpisodeFrame {
            tick: next.tick,
            observation,
            action,
            reading,
        });
        state = next;
        if action.terminate == 1.0 {
            break;
        }
    }
    if !grasp_succeeded(sim, &state, seq) || frames.last().map(|f| f.action.terminate) != Some(1.0) {
        return Ok(None);
    }
    Ok(Some((start, frames, state)))
}

/// Spawns from `spec`, reaches, and records the scripted expert. `Ok(None)` when
/// reaching or the grasp fails.
pub fn scripted_episode(
    sim: &Simulator,
    spec: &RandomizationSpec,
    expert: &ExpertConfig,
    seq: &SequencerConfig,
) -> Result<Option<EpisodeRecord>> {
    let Some((start, frames, _)) = run_expert(sim, spec, expert, seq)? else {
        return Ok(None);
    };
    let meta = EpisodeMetadata {
        provenance: Provenance::Scripted,
        spec: spec.clone(),
        grasp_type: DEFAULT_GRASP_TYPE.into(),
        timestamp: 0,
        seed: spec.seed,
        dt: seq.dt,
    };
    EpisodeRecord::new(meta, start, frames).map(Some)
}

/// Held, lifted state at the end of a successful expert grasp.
pub fn scripted_grasp(
    sim: &Simulator,
    spec: &RandomizationSpec,
    expert: &ExpertConfig,
    seq: &SequencerConfig,
) -> Result<Option<WorldState>> {
    Ok(run_expert(sim, spec, expert, seq)?.map(|(_, _, end)| end))
}
