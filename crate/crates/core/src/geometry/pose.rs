use nalgebra::{Matrix3, Matrix4, Point3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform: a position in meters plus a unit-quaternion orientation.
///
/// Serialized as `{"position": [x, y, z], "orientation": [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose6D {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl From<PoseRepr> for Pose6D {
    fn from(r: PoseRepr) -> Self {
        let [w, x, y, z] = r.orientation;
        Pose6D {
            position: Vector3::from(r.position),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        }
    }
}

impl From<Pose6D> for PoseRepr {
    fn from(p: Pose6D) -> Self {
        let q = p.orientation.quaternion();
        PoseRepr {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6D {
    pub fn identity() -> Self {
        Pose6D {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose6D {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose6D {
            position: Vector3::new(x, y, z),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), orientation)
    }

    /// Rotation about a principal axis (0 = x, 1 = y, 2 = z).
    pub fn rot_axis(axis: usize, angle: f64) -> UnitQuaternion<f64> {
        let a = match axis {
            0 => Vector3::x_axis(),
            1 => Vector3::y_axis(),
            _ => Vector3::z_axis(),
        };
        UnitQuaternion::from_axis_angle(&a, angle)
    }

    /// Rigid composition `self ∘ other`: `other` is expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        Pose6D {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(self.orientation * other.orientation),
        }
    }

    pub fn inverse(&self) -> Pose6D {
        let inv = self.orientation.inverse();
        Pose6D {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        nalgebra::Isometry3::from_parts(Translation3::from(self.position), self.orientation)
            .to_homogeneous()
    }

    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.position)
    }

    /// Linear interpolation of position and spherical interpolation of orientation.
    pub fn interpolate(&self, other: &Pose6D, t: f64) -> Pose6D {
        let position = self.position.lerp(&other.position, t);
        let orientation = self
            .orientation
            .try_slerp(&other.orientation, t, 1e-12)
            .unwrap_or(self.orientation);
        Pose6D {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn translation_distance(&self, other: &Pose6D) -> f64 {
        (self.position - other.position).norm()
    }

    pub fn rotation_distance(&self, other: &Pose6D) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    pub fn translated(&self, delta: Vector3<f64>) -> Pose6D {
        Pose6D {
            position: self.position + delta,
            orientation: self.orientation,
        }
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    Unit::new_normalize(q.into_inner())
}
