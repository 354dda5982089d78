use std::f64::consts::FRAC_PI_2;

use dexpipe::kinematics::{geodesic_angle, reduce_hand, IkOptions, Pose, ReducedHandCommand, ARM_DOF};
use dexpipe::robot::RobotDescription;
use dexpipe::Error;
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M4 = [[f64; 4]; 4];

fn matmul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Reference chain: explicit homogeneous DH matrices multiplied in sequence.
fn oracle_fk(desc: &RobotDescription, q: &[f64; ARM_DOF]) -> [f64; 3] {
    let mut m: M4 = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    for (row, &th) in desc.arm.dh.iter().zip(q) {
        let (ct, st) = (th.cos(), th.sin());
        let (ca, sa) = (row.alpha.cos(), row.alpha.sin());
        let t: M4 = [
            [ct, -st * ca, st * sa, row.a * ct],
            [st, ct * ca, -ct * sa, row.a * st],
            [0.0, sa, ca, row.d],
            [0.0, 0.0, 0.0, 1.0],
        ];
        m = matmul(&m, &t);
    }
    [m[0][3], m[1][3], m[2][3]]
}

fn random_config(rng: &mut ChaCha8Rng, desc: &RobotDescription) -> [f64; ARM_DOF] {
    std::array::from_fn(|j| rng.random_range(desc.arm.lower[j]..=desc.arm.upper[j]))
}

#[test]
fn zero_configuration_is_home() {
    let desc = RobotDescription::canonical();
    let p = desc.arm().fk(&[0.0; ARM_DOF]).unwrap();
    let home = desc.home_pose();
    assert!((p.position - home.position).norm() < 1e-12);
    assert!(geodesic_angle(&p.orientation(), &home.orientation()) < 1e-9);
}

#[test]
fn base_rotation_preserves_radius() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let home = arm.fk(&[0.0; ARM_DOF]).unwrap();
    let rotated = arm.fk(&[FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2) * home.position;
    assert!((rotated.position - expected).norm() < 1e-12);
    assert!((rotated.position.norm() - home.position.norm()).abs() < 1e-12);
}

#[test]
fn fk_matches_chain_multiplication_oracle() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let q = random_config(&mut rng, &desc);
        let p = arm.fk(&q).unwrap();
        let o = oracle_fk(&desc, &q);
        for k in 0..3 {
            assert!((p.position[k] - o[k]).abs() < 1e-12, "{:?} vs {:?}", p.position, o);
        }
    }
}

#[test]
fn out_of_limit_angle_names_joint() {
    let desc = RobotDescription::canonical();
    let mut q = [0.0; ARM_DOF];
    q[2] = 4.0;
    match desc.arm().fk(&q) {
        Err(Error::LimitViolation { joint, .. }) => assert_eq!(joint, "arm_2"),
        other => panic!("expected limit violation, got {other:?}"),
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // stay h away from limits
        let q: [f64; 6] = std::array::from_fn(|j| rng.random_range(desc.arm.lower[j] + 0.01..desc.arm.upper[j] - 0.01));
        let jac = arm.jacobian(&q).unwrap();
        for j in 0..ARM_DOF {
            let (mut qp, mut qm) = (q, q);
            qp[j] += h;
            qm[j] -= h;
            let (pp, pm) = (arm.fk(&qp).unwrap(), arm.fk(&qm).unwrap());
            let lin = (pp.position - pm.position) / (2.0 * h);
            let ang = (pp.orientation() * pm.orientation().inverse()).scaled_axis() / (2.0 * h);
            let col = jac.column(j);
            let fd = [lin.x, lin.y, lin.z, ang.x, ang.y, ang.z];
            let num: f64 = (0..6).map(|r| (col[r] - fd[r]).powi(2)).sum::<f64>().sqrt();
            let den: f64 = (0..6).map(|r| col[r].powi(2)).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(num / den);
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn zero_joint_velocity_gives_zero_twist() {
    let desc = RobotDescription::canonical();
    let jac = desc.arm().jacobian(&[0.3, -1.0, 1.2, 0.1, -0.5, 2.0]).unwrap();
    let twist = jac * nalgebra::Vector6::zeros();
    assert_eq!(twist.norm(), 0.0);
}

#[test]
fn base_column_linear_part_is_perpendicular_to_base_axis() {
    let desc = RobotDescription::canonical();
    let jac = desc.arm().jacobian(&[0.3, -1.0, 1.2, 0.1, -0.5, 2.0]).unwrap();
    assert!(jac[(2, 0)].abs() < 1e-15);
}

#[test]
fn ik_fixed_point_returns_seed() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let q0: [f64; 6] = desc.arm.ready.clone().try_into().unwrap();
    let target = arm.fk(&q0).unwrap();
    let sol = arm.ik(&target, &q0, &IkOptions::default()).unwrap();
    assert_eq!(sol.iterations, 0);
    assert_eq!(sol.joints, q0);
}

#[test]
fn ik_outside_shell_is_unreachable() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let target = Pose::from_wxyz([desc.arm.r_max + 0.1, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]);
    let seed: [f64; 6] = desc.arm.ready.clone().try_into().unwrap();
    assert!(matches!(arm.ik(&target, &seed, &IkOptions::default()), Err(Error::Unreachable { .. })));
}

#[test]
fn converged_solves_under_different_damping_both_round_trip() {
    let desc = RobotDescription::canonical();
    let arm = desc.arm();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let seed: [f64; 6] = desc.arm.ready.clone().try_into().unwrap();
    let mut checked = 0;
    for _ in 0..50 {
        let q: [f64; 6] = std::array::from_fn(|j| seed[j] + rng.random_range(-0.4..0.4));
        let target = arm.fk(&q).unwrap();
        for damping in [1e-2, 5e-2] {
            let opts = IkOptions { damping, ..IkOptions::default() };
            if let Ok(sol) = arm.ik(&target, &seed, &opts) {
                let p = arm.fk(&sol.joints).unwrap();
                assert!((p.position - target.position).norm() <= opts.tol.pos_m);
                assert!(geodesic_angle(&p.orientation(), &target.orientation()) <= opts.tol.rot_rad);
                checked += 1;
            }
        }
    }
    assert!(checked > 80);
}

proptest! {
    #[test]
    fn reduce_after_expand_is_identity(
        thumb in proptest::array::uniform4(-0.3f64..0.7),
        opposing in proptest::array::uniform3(-0.3f64..0.7),
    ) {
        let hand = RobotDescription::canonical().hand();
        let c = ReducedHandCommand { thumb, opposing };
        let back = reduce_hand(&hand.expand(&c).angles);
        prop_assert_eq!(back.thumb, c.thumb);
        for j in 0..3 {
            // mean of three identical values: one rounding step at most
            prop_assert!((back.opposing[j] - c.opposing[j]).abs() <= 2.0 * f64::EPSILON * c.opposing[j].abs());
        }
    }

    #[test]
    fn pose_serialization_is_bit_exact(
        axes in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 1..20),
        angles in proptest::collection::vec(-3.0f64..3.0, 20),
        position in proptest::array::uniform3(-1.0f64..1.0),
    ) {
        let mut q = UnitQuaternion::identity();
        for (a, t) in axes.iter().zip(&angles) {
            let axis = Vector3::from(*a);
            if axis.norm() > 1e-3 {
                q = UnitQuaternion::from_scaled_axis(axis.normalize() * *t) * q;
            }
        }
        let p = Pose::new(Vector3::from(position), q);
        let back: Pose = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back.wxyz().map(f64::to_bits), p.wxyz().map(f64::to_bits));
        prop_assert_eq!(back.position, p.position);
    }
}
