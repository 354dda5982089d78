//! Episodic environments the policy-gradient trainer runs on.

use super::obs::{StudentHistory, STUDENT_OBS_DIM, TEACHER_OBS_DIM};
use super::{held_start, reward, rotation_axis, RewardContext, RlConfig, SubSkillId, FINGER_STEP};
use crate::error::{Error, Result};
use crate::kinematics::REDUCED_DOF;
use crate::sim::{object_rotation_about, ArmTarget, Command, Phase, Simulator, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The episode ended on its own: success, failure or the env's step cap.
    pub done: bool,
    /// Ended in a terminal state, so the return is not bootstrapped.
    pub terminal: bool,
    pub success: bool,
}

pub trait Env {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

/// One-step world with reward `-(a - optimum)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditEnv {
    pub optimum: f64,
}

impl Env for BanditEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let d = action[0] - self.optimum;
        Ok(StepResult {
            obs: vec![1.0],
            reward: -d * d,
            done: true,
            terminal: true,
            success: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    Teacher,
    Student,
}

/// Normalized finger action clamped to `[-1, 1]` per dimension.
pub fn clamp_action(action: &[f64]) -> Result<[f64; REDUCED_DOF]> {
    if action.len() != REDUCED_DOF {
        return Err(Error::Shape(format!("finger action has {} values, expected {REDUCED_DOF}", action.len())));
    }
    if action.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite finger action".into()));
    }
    let mut a = [0.0; REDUCED_DOF];
    for (o, v) in a.iter_mut().zip(action) {
        *o = v.clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Arm held in place, hand command moved by the clamped action.
pub fn finger_command(sim: &Simulator, state: &WorldState, action: &[f64; REDUCED_DOF]) -> Command {
    let mut hand = state.hand_command.to_array();
    for (h, a) in hand.iter_mut().zip(action) {
        *h += FINGER_STEP * a;
    }
    Command {
        arm: ArmTarget::Joints(state.robot.arm),
        hand: sim.hand().clamp_reduced(&crate::kinematics::ReducedHandCommand::from_slice(&hand)),
    }
}

/// Held and turned to within the tolerance of `target`.
pub fn rotation_reached(state: &WorldState, target: f64, tolerance: f64) -> bool {
    state.phase() == Phase::Held && object_rotation_about(state, &rotation_axis()) >= target - tolerance
}

/// One rotation sub-skill from a scripted held start state.
pub struct InHandEnv<'a> {
    sim: &'a Simulator,
    cfg: &'a RlConfig,
    skill: SubSkillId,
    mode: ObsMode,
    /// Step cap after which an episode is truncated.
    pub horizon: usize,
    state: Option<WorldState>,
    history: StudentHistory,
    steps: usize,
}

impl<'a> InHandEnv<'a> {
    pub fn new(sim: &'a Simulator, cfg: &'a RlConfig, skill: SubSkillId, mode: ObsMode) -> Self {
        Self {
            sim,
            cfg,
            skill,
            mode,
            horizon: cfg.train_horizon,
            state: None,
            history: StudentHistory::default(),
            steps: 0,
        }
    }

    pub fn state(&self) -> Option<&WorldState> {
        self.state.as_ref()
    }

    pub fn teacher_observation(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| self.history.teacher_observation(s))
    }

    pub fn student_observation(&self) -> Vec<f64> {
        self.history.observation()
    }

    fn observation(&self, state: &WorldState) -> Vec<f64> {
        match self.mode {
            ObsMode::Teacher => self.history.teacher_observation(state),
            ObsMode::Student => self.history.observation(),
        }
    }

    fn tolerance(&self) -> f64 {
        self.cfg.sequencer.rotation_tolerance_deg.to_radians()
    }
}

impl Env for InHandEnv<'_> {
    fn obs_dim(&self) -> usize {
        match self.mode {
            ObsMode::Teacher => TEACHER_OBS_DIM,
            ObsMode::Student => STUDENT_OBS_DIM,
        }
    }

    fn act_dim(&self) -> usize {
        REDUCED_DOF
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let s = held_start(self.sim, self.cfg, self.skill, seed)?;
        self.history = StudentHistory::default();
        self.history.push(&self.sim.sensor_reading(&s, false), &s.hand_command);
        self.steps = 0;
        let obs = self.observation(&s);
        self.state = Some(s);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let prev = self
            .state
            .take()
            .ok_or_else(|| Error::Command("step before reset".into()))?;
        let a = clamp_action(action)?;
        let (next, reading) = self.sim.step(&prev, &finger_command(self.sim, &prev, &a), self.cfg.sequencer.dt)?;
        let ctx = RewardContext {
            target: self.cfg.target_rotation(self.skill),
            increment: self.cfg.increment(self.skill),
        };
        let r = reward(&self.cfg.weights, &self.cfg.patterns[self.skill.index()], &ctx, &prev, &a, &next, &reading);
        self.history.push(&reading, &next.hand_command);
        self.steps += 1;
        let success = rotation_reached(&next, ctx.target, self.tolerance());
        let terminal = success || next.phase() != Phase::Held;
        let obs = self.observation(&next);
        self.state = Some(next);
        Ok(StepResult {
            obs,
            reward: r,
            done: terminal || self.steps >= self.horizon,
            terminal,
            success,
        })
    }
}
