//! Fingertip contact detection, grasped-object motion and the quasi-static
//! force split with Coulomb clipping.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::shape::Polytope;
use super::state::{tangent_basis, ContactPoint};
use crate::kinematics::{Pose, FINGERS, THUMB};

#[derive(Debug, Clone, Copy)]
pub(crate) struct RawContact {
    pub finger: usize,
    pub location: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Penalty normal force `k * depth`.
    pub force: f64,
}

pub(crate) fn detect(
    poly: &Polytope,
    object: &Pose,
    tips_world: &[Vector3<f64>; FINGERS],
    radius: f64,
    stiffness: f64,
) -> Vec<RawContact> {
    let mut out = Vec::new();
    for (finger, tip) in tips_world.iter().enumerate() {
        let p = object.inverse_transform_point(tip);
        let (sd, face) = poly.signed_distance(&p);
        let depth = radius - sd;
        if depth > 0.0 {
            let f = poly.faces[face];
            let location = p - f.normal * (f.normal.dot(&p) - f.offset);
            out.push(RawContact {
                finger,
                location,
                normal: f.normal,
                force: stiffness * depth,
            });
        }
    }
    out
}

/// Thumb against at least one opposing finger, both with force `>= threshold`.
pub(crate) fn is_grasp<'a>(forces: impl Iterator<Item = (usize, f64)> + 'a, threshold: f64) -> bool {
    let (mut thumb, mut opposing) = (false, false);
    for (finger, f) in forces {
        if f >= threshold {
            if finger == THUMB {
                thumb = true;
            } else {
                opposing = true;
            }
        }
    }
    thumb && opposing
}

fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

/// Minimum-norm rigid motion `(v, ω)` of the object about `center` whose
/// tangential point velocities best match the fingertip displacements, in the
/// weighted least-squares sense. Each item is `(contact point, unit normal,
/// fingertip displacement, weight)`, world frame.
pub(crate) fn fit_motion(
    items: &[(Vector3<f64>, Vector3<f64>, Vector3<f64>, f64)],
    center: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    if items.is_empty() {
        return (Vector3::zeros(), Vector3::zeros());
    }
    let mut a = DMatrix::zeros(3 * items.len(), 6);
    let mut b = DVector::zeros(3 * items.len());
    for (i, (c, n, d, w)) in items.iter().enumerate() {
        let proj = (Matrix3::identity() - n * n.transpose()) * *w;
        let lin = proj;
        // ω × r = -[r]× ω
        let ang = -proj * skew(&(c - center));
        a.view_mut((3 * i, 0), (3, 3)).copy_from(&lin);
        a.view_mut((3 * i, 3), (3, 3)).copy_from(&ang);
        b.rows_mut(3 * i, 3).copy_from(&(proj * d));
    }
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * 1e-6;
    let x = svd.solve(&b, tol).expect("u and v were computed");
    (
        Vector3::new(x[0], x[1], x[2]),
        Vector3::new(x[3], x[4], x[5]),
    )
}

/// Normal-only contact forces (object resting on the table).
pub(crate) fn normal_only(raw: &[RawContact]) -> Vec<ContactPoint> {
    raw.iter()
        .map(|c| ContactPoint {
            finger_index: c.finger,
            location: c.location,
            normal: c.normal,
            normal_force: c.force,
            tangential_force: [0.0, 0.0],
        })
        .collect()
}

pub(crate) struct Split {
    pub contacts: Vec<ContactPoint>,
    /// Support the clipped forces fail to provide (object frame); zero when sticking.
    pub deficit: Vector3<f64>,
    pub slipped: bool,
}

/// Cost of a normal correction relative to a tangential one when the penalty
/// forces are rebalanced; normal corrections stand for the small object shift
/// that equalizes penetrations.
const NORMAL_CORRECTION_COST: f64 = 1e-2;

/// Splits the load `support` (object frame; the force the contacts must supply
/// together) over the contacts: each keeps its penalty normal force plus the
/// least-cost correction that makes the total equal `support`. Normal corrections
/// are cheap; tangential ones are shared in proportion to the penalty forces.
/// Forces outside the friction cone are clipped.
pub(crate) fn split_load(raw: &[RawContact], support: &Vector3<f64>, mu: f64) -> Split {
    let pressed: Vector3<f64> = raw.iter().map(|c| -c.normal * c.force).sum();
    let mean = raw.iter().map(|c| c.force).sum::<f64>() / raw.len().max(1) as f64;
    let inv = |c: &RawContact| {
        let nn = c.normal * c.normal.transpose();
        nn / NORMAL_CORRECTION_COST + (Matrix3::identity() - nn) * (c.force / mean)
    };
    let s: Matrix3<f64> = raw.iter().map(inv).sum();
    let lambda = s.try_inverse().map(|m| m * (support - pressed)).unwrap_or_else(Vector3::zeros);
    let mut slipped = false;
    let mut total = Vector3::zeros();
    let contacts = raw
        .iter()
        .map(|c| {
            let f = -c.normal * c.force + inv(c) * lambda;
            let mut fn_ = -f.dot(&c.normal);
            let (t1, t2) = tangent_basis(&c.normal);
            let mut t = [f.dot(&t1), f.dot(&t2)];
            let tmag = t[0].hypot(t[1]);
            if fn_ < 0.0 {
                fn_ = 0.0;
                slipped = true;
            }
            let cap = mu * fn_;
            if tmag > cap {
                slipped = true;
                let s = if tmag > 0.0 { cap / tmag } else { 0.0 };
                t = [t[0] * s, t[1] * s];
            }
            let cp = ContactPoint {
                finger_index: c.finger,
                location: c.location,
                normal: c.normal,
                normal_force: fn_,
                tangential_force: t,
            };
            total += cp.force_object_frame();
            cp
        })
        .collect();
    Split {
        contacts,
        deficit: if slipped { support - total } else { Vector3::zeros() },
        slipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinch(force: f64) -> Vec<RawContact> {
        vec![
            RawContact {
                finger: 0,
                location: Vector3::new(0.0, 0.03, 0.0),
                normal: Vector3::y(),
                force,
            },
            RawContact {
                finger: 2,
                location: Vector3::new(0.0, -0.03, 0.0),
                normal: -Vector3::y(),
                force,
            },
        ]
    }

    #[test]
    fn strong_pinch_sticks_and_balances() {
        let w = Vector3::new(0.0, 0.0, 0.981);
        let s = split_load(&pinch(2.0), &w, 0.8);
        assert!(!s.slipped);
        let sum: Vector3<f64> = s.contacts.iter().map(|c| c.force_object_frame()).sum();
        assert!((sum - w).norm() < 1e-12);
    }

    #[test]
    fn weak_pinch_slips_with_downward_deficit() {
        let w = Vector3::new(0.0, 0.0, 0.981);
        let s = split_load(&pinch(0.3), &w, 0.5);
        assert!(s.slipped);
        assert!(s.deficit.z > 0.0);
        for c in &s.contacts {
            assert!(c.tangential_magnitude() <= 0.5 * c.normal_force + 1e-12);
        }
    }

    #[test]
    fn translation_of_pinching_fingers_is_recovered() {
        let d = Vector3::new(0.0, 0.0, 0.02);
        let items = [
            (Vector3::new(0.0, 0.03, 0.0), Vector3::y(), d, 1.0),
            (Vector3::new(0.0, -0.03, 0.0), -Vector3::y(), d, 2.0),
        ];
        let (v, w) = fit_motion(&items, &Vector3::zeros());
        assert!((v - d).norm() < 1e-12);
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn opposite_sweeps_produce_yaw() {
        let items = [
            (Vector3::new(0.0, 0.03, 0.0), Vector3::y(), Vector3::new(0.003, 0.0, 0.0), 1.0),
            (Vector3::new(0.0, -0.03, 0.0), -Vector3::y(), Vector3::new(-0.003, 0.0, 0.0), 1.0),
        ];
        let (v, w) = fit_motion(&items, &Vector3::zeros());
        assert!(v.norm() < 1e-12);
        assert!((w.z + 0.1).abs() < 1e-9, "{w:?}");
    }
}
