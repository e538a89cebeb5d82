//! Rigid transforms shared by the simulator, renderer and perception code.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Position in meters plus a unit quaternion stored as `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: [0.0; 3],
        orientation: [1.0, 0.0, 0.0, 0.0],
    };

    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion();
        Self {
            position: [position.x, position.y, position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.orientation;
        // Stored quaternions are normalized on construction; this keeps the
        // bits untouched instead of renormalizing on every read.
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation()), self.rotation())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let rotation = UnitQuaternion::new_normalize(iso.rotation.into_inner());
        Self::new(iso.translation.vector, rotation)
    }

    /// `self * other`, i.e. `other` expressed in this frame mapped to the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::from_isometry(&(self.isometry() * other.isometry()))
    }

    pub fn inverse(&self) -> Pose {
        Pose::from_isometry(&self.isometry().inverse())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (p - self.translation())
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.orientation.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.orientation.iter())
            .all(|c| c.is_finite())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

/// Rotation from an axis-angle vector (direction = axis, norm = angle in radians).
pub fn rotation_from_axis_angle(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// Scale `v` down so that its norm does not exceed `limit`.
pub fn clamp_norm(v: Vector3<f64>, limit: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > limit && n > 0.0 {
        v * (limit / n)
    } else {
        v
    }
}

/// Camera-style frame looking from `eye` toward `target`: +z forward, +x right, +y down.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up_hint: Vector3<f64>) -> Pose {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&up_hint);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vector3::x());
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let m = nalgebra::Matrix3::from_columns(&[right, down, forward]);
    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
    Pose::new(eye, rot)
}
