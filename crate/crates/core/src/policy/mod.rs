//! Grasp-and-lift policy: a 60→128→128→14 tanh network whose head maps 13
//! outputs into the action caps and one into a terminate probability, trained
//! by behavior cloning.

mod model_file;
mod obs;
mod train;

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use model_file::{HeadKind, ModelFile, MAGIC, MODEL_VERSION};
pub use obs::{
    build_obs, frame, Action, ObsFrame, Observation, Standardizer, ACTION_CLAMP, ACTION_DIM, FRAME_DIM,
    HISTORY, MAX_FINGER_DELTA, MAX_WRIST_ROTATION, MAX_WRIST_TRANSLATION, OBJECT_FEATURES, OBS_DIM,
    REGRESSION_DIM,
};
pub use train::{train_bc, BcHyper, BcReport, BcSample};

use crate::error::{Error, Result};
use crate::kinematics::ReducedHandCommand;
use crate::nn::{Mlp, Trace};
use crate::sim::{ArmTarget, Command, SensorReading, WorldState};

pub const HIDDEN: [usize; 2] = [128, 128];

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Action {
    /// Simulator command: wrist moved by the (clamped) delta in the world frame,
    /// reduced hand command offset by the finger deltas.
    pub fn to_command(&self, state: &WorldState) -> Command {
        let a = self.clamped();
        let t = nalgebra::Vector3::new(a.wrist_delta[0], a.wrist_delta[1], a.wrist_delta[2]);
        let r = nalgebra::Vector3::new(a.wrist_delta[3], a.wrist_delta[4], a.wrist_delta[5]);
        let mut hand = state.hand_command.to_array();
        for (h, d) in hand.iter_mut().zip(&a.fingers) {
            *h += d;
        }
        Command {
            arm: ArmTarget::Wrist(state.wrist.apply_delta(&t, &r)),
            hand: ReducedHandCommand::from_slice(&hand),
        }
    }
}

/// Rolling three-frame observation history.
#[derive(Debug, Clone, Default)]
pub struct ObsHistory {
    frames: Vec<ObsFrame>,
}

impl ObsHistory {
    pub fn push(&mut self, state: &WorldState, reading: &SensorReading) {
        if self.frames.len() == HISTORY {
            self.frames.remove(0);
        }
        self.frames.push(frame(&state.object_features(), reading));
    }

    pub fn observation(&self) -> Result<Observation> {
        build_obs(&self.frames)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub net: Mlp,
    /// Observation standardization; `None` means inputs are used as given.
    pub stats: Option<Standardizer>,
}

fn sizes(hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![OBS_DIM];
    s.extend_from_slice(hidden);
    s.push(ACTION_DIM);
    s
}

/// Per-sample loss terms and `∂loss/∂output` for one output column.
fn head_loss(u: &[f64], target: &[f64], d_out: &mut [f64]) -> f64 {
    let mut mse = 0.0;
    for k in 0..REGRESSION_DIM {
        let t = u[k].tanh();
        let e = t - target[k];
        mse += e * e;
        d_out[k] = 2.0 * e * (1.0 - t * t) / REGRESSION_DIM as f64;
    }
    let (z, y) = (u[REGRESSION_DIM], target[REGRESSION_DIM]);
    d_out[REGRESSION_DIM] = sigmoid(z) - y;
    mse / REGRESSION_DIM as f64 + softplus(z) - y * z
}

/// Network targets: normalized regression dims, then the terminate label.
pub fn target_vector(a: &Action) -> [f64; ACTION_DIM] {
    let mut t = [0.0; ACTION_DIM];
    for (k, v) in a.normalized().iter().enumerate() {
        t[k] = v.clamp(-1.0, 1.0);
    }
    t[REGRESSION_DIM] = a.terminate.clamp(0.0, 1.0);
    t
}

/// Sum over the batch columns of the loss and of its parameter gradient.
pub(crate) fn loss_grad_sum(net: &Mlp, x: DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let trace: Trace = net.forward_batch(x);
    let out = trace.output();
    let mut d_out = DMatrix::zeros(ACTION_DIM, out.ncols());
    let mut loss = 0.0;
    for c in 0..out.ncols() {
        let mut d = [0.0; ACTION_DIM];
        loss += head_loss(out.column(c).as_slice(), y.column(c).as_slice(), &mut d);
        d_out.column_mut(c).copy_from_slice(&d);
    }
    let (g, _) = net.backward(&trace, &d_out);
    (loss, g)
}

impl PolicyParams {
    pub fn init(hidden: &[usize], out_gain: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::init(&sizes(hidden), out_gain, &mut rng),
            stats: None,
        }
    }

    pub fn zeros() -> Self {
        Self {
            net: Mlp::zeros(&sizes(&HIDDEN)),
            stats: None,
        }
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.net.input_dim() {
            return Err(Error::Shape(format!(
                "observation has {} values, network expects {}",
                obs.len(),
                self.net.input_dim()
            )));
        }
        Ok(())
    }

    /// Action for an already standardized observation.
    pub fn forward(&self, obs: &[f64]) -> Result<Action> {
        self.check_input(obs)?;
        let u = self.net.forward(obs);
        let mut a = [0.0; ACTION_DIM];
        for k in 0..REGRESSION_DIM {
            a[k] = ACTION_CLAMP[k] * u[k].tanh();
        }
        a[REGRESSION_DIM] = sigmoid(u[REGRESSION_DIM]);
        Ok(Action::from_array(&a))
    }

    /// [`forward`](Self::forward) over many standardized observations at once.
    pub fn forward_many(&self, obs: &[Vec<f64>]) -> Result<Vec<Action>> {
        for o in obs {
            self.check_input(o)?;
        }
        let x = DMatrix::from_fn(self.net.input_dim(), obs.len(), |r, c| obs[c][r]);
        let trace = self.net.forward_batch(x);
        Ok(trace
            .output()
            .column_iter()
            .map(|u| {
                let mut a = [0.0; ACTION_DIM];
                for k in 0..REGRESSION_DIM {
                    a[k] = ACTION_CLAMP[k] * u[k].tanh();
                }
                a[REGRESSION_DIM] = sigmoid(u[REGRESSION_DIM]);
                Action::from_array(&a)
            })
            .collect())
    }

    pub fn standardize(&self, obs: &[f64]) -> Vec<f64> {
        match &self.stats {
            Some(s) => s.apply(obs),
            None => obs.to_vec(),
        }
    }

    /// Action for a raw observation, standardized with the stored stats.
    pub fn act(&self, obs: &Observation) -> Result<Action> {
        self.forward(&self.standardize(obs))
    }

    /// Mean loss (MSE over the 13 normalized regression dims + BCE on terminate)
    /// and its exact gradient over a batch of network inputs.
    pub fn grad(&self, obs: &[Vec<f64>], targets: &[Action]) -> Result<(f64, Vec<f64>)> {
        if obs.is_empty() || obs.len() != targets.len() {
            return Err(Error::Input(format!(
                "batch needs matching non-empty obs/targets, got {} and {}",
                obs.len(),
                targets.len()
            )));
        }
        for o in obs {
            self.check_input(o)?;
        }
        let n = obs.len();
        let x = DMatrix::from_fn(self.net.input_dim(), n, |r, c| obs[c][r]);
        let ys: Vec<_> = targets.iter().map(target_vector).collect();
        let y = DMatrix::from_fn(ACTION_DIM, n, |r, c| ys[c][r]);
        let (loss, mut g) = loss_grad_sum(&self.net, x, &y);
        g.iter_mut().for_each(|v| *v /= n as f64);
        Ok((loss / n as f64, g))
    }

    pub fn to_model_file(&self) -> ModelFile {
        let (mean, std) = match &self.stats {
            Some(s) => (s.mean.clone(), s.std.clone()),
            None => (Vec::new(), Vec::new()),
        };
        ModelFile {
            head: HeadKind::BehaviorCloning,
            net: self.net.clone(),
            mean,
            std,
            extra: Vec::new(),
        }
    }

    pub fn from_model_file(m: ModelFile) -> Result<Self> {
        if m.head != HeadKind::BehaviorCloning {
            return Err(Error::ModelFile(format!("expected a behavior-cloning model, found {:?}", m.head)));
        }
        if m.net.input_dim() != OBS_DIM || m.net.output_dim() != ACTION_DIM {
            return Err(Error::ModelFile(format!("architecture {:?} is not {OBS_DIM}→…→{ACTION_DIM}", m.net.sizes())));
        }
        let stats = (!m.mean.is_empty()).then_some(Standardizer { mean: m.mean, std: m.std });
        Ok(Self { net: m.net, stats })
    }

    /// Rounds all values to `f32`, the precision of the model file.
    pub fn quantize(&mut self) {
        let mut m = self.to_model_file();
        m.quantize();
        *self = Self::from_model_file(m).expect("same architecture");
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model_file(ModelFile::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_deltas_and_even_terminate() {
        let a = PolicyParams::zeros().forward(&[0.3; OBS_DIM]).unwrap();
        assert_eq!(a.wrist_delta, [0.0; 6]);
        assert_eq!(a.fingers, [0.0; 7]);
        assert_eq!(a.terminate, 0.5);
    }

    #[test]
    fn wrong_width_is_a_shape_error() {
        assert!(matches!(PolicyParams::zeros().forward(&[0.0; 10]), Err(Error::Shape(_))));
    }

    #[test]
    fn matching_target_has_no_regression_gradient() {
        let p = PolicyParams::init(&[8], 1.0, 4);
        let obs = vec![vec![0.1; OBS_DIM]];
        let a = p.forward(&obs[0]).unwrap();
        let (_, g) = p.grad(&obs, &[a]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn duplicated_batch_equals_single_sample() {
        let p = PolicyParams::init(&[8], 1.0, 5);
        let o = vec![0.2; OBS_DIM];
        let t = Action {
            fingers: [0.05; 7],
            terminate: 1.0,
            ..Action::default()
        };
        let (l1, g1) = p.grad(&[o.clone()], &[t]).unwrap();
        let (l2, g2) = p.grad(&[o.clone(), o], &[t, t]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300) + 1e-18);
        }
    }
}
