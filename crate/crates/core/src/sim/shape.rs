//! Convex object geometry described by face planes in the object frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Box,
    /// Prism over a sheared (parallelogram) footprint: flat faces at ±y, slanted
    /// faces at the x ends, 8 vertices.
    DiamondPrism,
}

/// Shear of the diamond footprint as a fraction of the x half-extent.
pub const DIAMOND_SHEAR: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct Face {
    /// Outward unit normal, object frame.
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct Polytope {
    pub faces: Vec<Face>,
    pub vertices: Vec<Vector3<f64>>,
}

fn footprint(shape: ObjectShape, hx: f64, hy: f64) -> Vec<[f64; 2]> {
    match shape {
        ObjectShape::Box => vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]],
        ObjectShape::DiamondPrism => {
            let c = DIAMOND_SHEAR * hx;
            vec![[-hx - c, -hy], [hx - c, -hy], [hx + c, hy], [-hx + c, hy]]
        }
    }
}

impl Polytope {
    /// `extents` are half-sizes: footprint half-length, half-width, half-height.
    pub fn new(shape: ObjectShape, extents: &[f64; 3]) -> Self {
        let [hx, hy, hz] = *extents;
        let fp = footprint(shape, hx, hy);
        let mut faces = vec![
            Face {
                normal: Vector3::z(),
                offset: hz,
            },
            Face {
                normal: -Vector3::z(),
                offset: hz,
            },
        ];
        // counter-clockwise footprint: outward normal of edge (a→b) is (dy, -dx)
        for i in 0..fp.len() {
            let a = fp[i];
            let b = fp[(i + 1) % fp.len()];
            let n = Vector3::new(b[1] - a[1], -(b[0] - a[0]), 0.0).normalize();
            faces.push(Face {
                normal: n,
                offset: n.x * a[0] + n.y * a[1],
            });
        }
        let vertices = fp
            .iter()
            .flat_map(|&[x, y]| [Vector3::new(x, y, -hz), Vector3::new(x, y, hz)])
            .collect();
        Self { faces, vertices }
    }

    /// Signed distance proxy `max_i(n_i·p - d_i)` and the index of the maximizing face.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, f) in self.faces.iter().enumerate() {
            let s = f.normal.dot(p) - f.offset;
            if s > best.0 {
                best = (s, i);
            }
        }
        best
    }

    pub fn lowest_z(&self, pose: &Pose) -> f64 {
        self.vertices
            .iter()
            .map(|v| pose.transform_point(v).z)
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_faces_are_axis_aligned() {
        let p = Polytope::new(ObjectShape::Box, &[0.04, 0.03, 0.02]);
        assert_eq!(p.faces.len(), 6);
        assert_eq!(p.vertices.len(), 8);
        let (d, i) = p.signed_distance(&Vector3::new(0.0, 0.05, 0.0));
        assert!((d - 0.02).abs() < 1e-12);
        assert!((p.faces[i].normal - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn diamond_is_convex_with_flat_grasp_faces() {
        let p = Polytope::new(ObjectShape::DiamondPrism, &[0.04, 0.03, 0.02]);
        assert_eq!(p.vertices.len(), 8);
        for v in &p.vertices {
            for f in &p.faces {
                assert!(f.normal.dot(v) - f.offset <= 1e-12);
            }
        }
        let (d, i) = p.signed_distance(&Vector3::new(0.0, -0.04, 0.0));
        assert!((d - 0.01).abs() < 1e-12);
        assert!((p.faces[i].normal + Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn lowest_z_of_resting_box() {
        let p = Polytope::new(ObjectShape::Box, &[0.04, 0.03, 0.02]);
        let pose = Pose::from_wxyz([0.0, 0.0, 0.02], [1.0, 0.0, 0.0, 0.0]);
        assert!(p.lowest_z(&pose).abs() < 1e-15);
    }
}
