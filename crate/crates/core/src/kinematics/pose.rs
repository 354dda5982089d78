use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid pose: position in meters and a unit quaternion with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    /// (w, x, y, z)
    orientation: [f64; 4],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        // Renormalizing a stored unit quaternion can flip its last bit.
        if (q.norm_squared() - 1.0).abs() < 1e-12 {
            let q = if w < 0.0 { -q } else { q };
            return Self {
                position: Vector3::from(r.position),
                orientation: UnitQuaternion::new_unchecked(q),
            };
        }
        Pose::new(Vector3::from(r.position), UnitQuaternion::from_quaternion(q))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.orientation.quaternion();
        PoseRepr {
            position: p.position.into(),
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    // Renormalize explicitly: chained products drift off the unit sphere.
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    UnitQuaternion::new_normalize(raw)
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Self {
        PoseRepr {
            position,
            orientation: wxyz,
        }
        .into()
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    pub fn set_orientation(&mut self, q: UnitQuaternion<f64>) {
        self.orientation = canonical(q);
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// `self ∘ other`: `other` expressed in this pose's frame, mapped to the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    /// Applies a world-frame translation and rotation vector (rad) about the pose origin.
    pub fn apply_delta(&self, translation: &Vector3<f64>, rotvec: &Vector3<f64>) -> Pose {
        Pose::new(
            self.position + translation,
            UnitQuaternion::from_scaled_axis(*rotvec) * self.orientation,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

/// Chart-free rotation distance: the angle of `a⁻¹ b`, in `[0, π]`.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.inverse() * b;
    let q = d.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// World-frame rotation vector taking `from` onto `to`.
pub fn rotation_error(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vector3<f64> {
    (to * from.inverse()).scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn canonicalizes_negative_w() {
        let p = Pose::from_wxyz([0.0; 3], [-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn compose_inverse_is_identity() {
        let a = Pose::new(
            Vector3::new(0.3, -0.2, 0.5),
            UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0),
        );
        let id = a.compose(&a.inverse());
        assert!(id.position.norm() < 1e-12);
        assert!(geodesic_angle(&id.orientation(), &UnitQuaternion::identity()) < 1e-9);
        assert!((id.orientation().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geodesic_handles_double_cover() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.7);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        assert!(geodesic_angle(&q, &neg) < 1e-12);
        let r = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI / 2.0);
        assert!((geodesic_angle(&UnitQuaternion::identity(), &r) - PI / 2.0).abs() < 1e-12);
    }
}
