//! Serial 6R arm: forward kinematics, geometric Jacobian and damped-least-squares IK.

use nalgebra::{Isometry3, Matrix6, SMatrix, Translation3, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pose::{geodesic_angle, rotation_error, Pose};
use crate::error::{Error, Result};
use crate::robot::{DhRow, RobotDescription};

pub const ARM_DOF: usize = 6;

pub type Jacobian = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkTolerance {
    pub pos_m: f64,
    pub rot_rad: f64,
}

impl Default for IkTolerance {
    fn default() -> Self {
        Self {
            pos_m: 1e-3,
            rot_rad: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IkOptions {
    pub tol: IkTolerance,
    pub max_iters: usize,
    pub damping: f64,
    /// Largest joint change per iteration (rad); the step is scaled uniformly.
    pub max_step: f64,
    /// Re-seeds from uniform joint-space samples after a failed solve.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol: IkTolerance::default(),
            max_iters: 200,
            damping: 1e-2,
            max_step: 0.2,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkSolution {
    pub joints: [f64; ARM_DOF],
    pub iterations: usize,
    pub pos_residual: f64,
    pub rot_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Arm {
    dh: [DhRow; ARM_DOF],
    lower: [f64; ARM_DOF],
    upper: [f64; ARM_DOF],
    r_min: f64,
    r_max: f64,
}

fn dh_transform(row: &DhRow, theta: f64) -> Isometry3<f64> {
    let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
    let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), row.alpha);
    // Rz(θ) Tz(d) Tx(a) Rx(α)
    let t = rz * Vector3::new(row.a, 0.0, row.d);
    Isometry3::from_parts(Translation3::from(t), rz * rx)
}

fn to_array(v: &[f64]) -> [f64; ARM_DOF] {
    let mut out = [0.0; ARM_DOF];
    out.copy_from_slice(v);
    out
}

impl Arm {
    pub fn new(desc: &RobotDescription) -> Self {
        let a = &desc.arm;
        let mut dh = [DhRow {
            d: 0.0,
            a: 0.0,
            alpha: 0.0,
        }; ARM_DOF];
        dh.copy_from_slice(&a.dh);
        Self {
            dh,
            lower: to_array(&a.lower),
            upper: to_array(&a.upper),
            r_min: a.r_min,
            r_max: a.r_max,
        }
    }

    pub fn limits(&self) -> (&[f64; ARM_DOF], &[f64; ARM_DOF]) {
        (&self.lower, &self.upper)
    }

    pub fn shell(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn dh(&self) -> &[DhRow; ARM_DOF] {
        &self.dh
    }

    pub fn check_limits(&self, q: &[f64; ARM_DOF]) -> Result<()> {
        for (j, &v) in q.iter().enumerate() {
            if !v.is_finite() || v < self.lower[j] || v > self.upper[j] {
                return Err(Error::LimitViolation {
                    joint: format!("arm_{j}"),
                    value: v,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut [f64; ARM_DOF]) {
        for j in 0..ARM_DOF {
            q[j] = q[j].clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Frames after each joint: `frames[0]` is the base, `frames[6]` the wrist.
    fn frames(&self, q: &[f64; ARM_DOF]) -> [Isometry3<f64>; ARM_DOF + 1] {
        let mut frames = [Isometry3::identity(); ARM_DOF + 1];
        for j in 0..ARM_DOF {
            frames[j + 1] = frames[j] * dh_transform(&self.dh[j], q[j]);
        }
        frames
    }

    pub(crate) fn fk_unchecked(&self, q: &[f64; ARM_DOF]) -> Pose {
        Pose::from_isometry(&self.frames(q)[ARM_DOF])
    }

    pub fn fk(&self, q: &[f64; ARM_DOF]) -> Result<Pose> {
        self.check_limits(q)?;
        Ok(self.fk_unchecked(q))
    }

    fn jacobian_unchecked(&self, q: &[f64; ARM_DOF]) -> Jacobian {
        let frames = self.frames(q);
        let p_end = frames[ARM_DOF].translation.vector;
        let mut jac = Jacobian::zeros();
        for j in 0..ARM_DOF {
            // Joint j rotates about the z axis of the frame preceding it.
            let z = frames[j].rotation * Vector3::z();
            let p = frames[j].translation.vector;
            let lin = z.cross(&(p_end - p));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
        }
        jac
    }

    /// Geometric Jacobian: rows 0..3 linear wrist velocity, rows 3..6 angular velocity.
    pub fn jacobian(&self, q: &[f64; ARM_DOF]) -> Result<Jacobian> {
        self.check_limits(q)?;
        Ok(self.jacobian_unchecked(q))
    }

    pub fn check_reachable(&self, target: &Pose) -> Result<()> {
        let distance = target.position.norm();
        if !(distance >= self.r_min && distance <= self.r_max) {
            return Err(Error::Unreachable {
                distance,
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        Ok(())
    }

    fn residual(&self, q: &[f64; ARM_DOF], target: &Pose) -> (Vector6<f64>, f64, f64) {
        let cur = self.fk_unchecked(q);
        let dp = target.position - cur.position;
        let dr = rotation_error(&cur.orientation(), &target.orientation());
        let mut e = Vector6::zeros();
        e.fixed_rows_mut::<3>(0).copy_from(&dp);
        e.fixed_rows_mut::<3>(3).copy_from(&dr);
        let rot = geodesic_angle(&cur.orientation(), &target.orientation());
        (e, dp.norm(), rot)
    }

    fn solve_from(
        &self,
        target: &Pose,
        seed: [f64; ARM_DOF],
        opts: &IkOptions,
    ) -> std::result::Result<IkSolution, (f64, f64)> {
        let mut q = seed;
        self.clamp(&mut q);
        let lambda2 = opts.damping * opts.damping;
        let mut best = (f64::INFINITY, f64::INFINITY);
        for it in 0..=opts.max_iters {
            let (e, pos, rot) = self.residual(&q, target);
            if pos <= opts.tol.pos_m && rot <= opts.tol.rot_rad {
                return Ok(IkSolution {
                    joints: q,
                    iterations: it,
                    pos_residual: pos,
                    rot_residual: rot,
                });
            }
            if pos + rot < best.0 + best.1 {
                best = (pos, rot);
            }
            if it == opts.max_iters {
                break;
            }
            let jac = self.jacobian_unchecked(&q);
            let jjt = jac * jac.transpose() + Matrix6::identity() * lambda2;
            let Some(chol) = jjt.cholesky() else { break };
            let dq = jac.transpose() * chol.solve(&e);
            let peak = dq.amax();
            let scale = if peak > opts.max_step { opts.max_step / peak } else { 1.0 };
            for j in 0..ARM_DOF {
                q[j] += dq[j] * scale;
            }
            self.clamp(&mut q);
        }
        Err(best)
    }

    /// Damped-least-squares IK. Returns the first iterate within tolerance.
    pub fn ik(&self, target: &Pose, seed: &[f64; ARM_DOF], opts: &IkOptions) -> Result<IkSolution> {
        self.check_reachable(target)?;
        let mut best = match self.solve_from(target, *seed, opts) {
            Ok(sol) => return Ok(sol),
            Err(b) => b,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
        for _ in 0..opts.restarts {
            let mut s = [0.0; ARM_DOF];
            for (j, v) in s.iter_mut().enumerate() {
                *v = rng.random_range(self.lower[j]..=self.upper[j]);
            }
            match self.solve_from(target, s, opts) {
                Ok(sol) => return Ok(sol),
                Err(b) if b.0 + b.1 < best.0 + best.1 => best = b,
                Err(_) => {}
            }
        }
        Err(Error::IkFailure {
            iterations: opts.max_iters,
            pos_residual: best.0,
            rot_residual: best.1,
        })
    }
}
