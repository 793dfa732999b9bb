//! Points, planar poses and rigid transforms.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Azimuth angle in the xy-plane, in (−π, π].
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn elevation(&self) -> f64 {
        self.z.atan2(self.x.hypot(self.y))
    }

    pub fn distance_xy(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Wraps an angle into (−π, π]. Values already in range are returned unchanged.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    if a <= -PI {
        a += TAU;
    }
    a
}

/// Planar pose: position in meters and heading in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `self ⊕ delta`: applies a motion expressed in this pose's frame.
    pub fn compose(&self, delta: &Pose2) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.yaw + delta.yaw,
        )
    }

    /// Relative motion taking `self` to `other`, expressed in `self`'s frame.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, other.yaw - self.yaw)
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Absolute heading difference in radians, in [0, π].
    pub fn heading_error(&self, other: &Pose2) -> f64 {
        normalize_angle(self.yaw - other.yaw).abs()
    }

    /// Maps a point from this pose's frame into the parent frame (z untouched).
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y, p.z)
    }
}

pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Proper rigid motion in 3D. Construct through [`RigidTransform3::new`] to
/// have the rotation validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Checks `RᵀR = I` and `det R = +1` within [`ORTHOGONALITY_TOLERANCE`].
pub fn validate_rotation(rotation: &Matrix3<f64>) -> Result<()> {
    let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
    if !err.is_finite() || err > ORTHOGONALITY_TOLERANCE {
        return Err(Error::Config(format!(
            "rotation not orthogonal (max |RᵀR − I| = {err:e})"
        )));
    }
    let det = rotation.determinant();
    if (det - 1.0).abs() > ORTHOGONALITY_TOLERANCE {
        return Err(Error::Config(format!("rotation determinant {det} ≠ +1")));
    }
    Ok(())
}

impl RigidTransform3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        validate_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation about the z-axis followed by a translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn validate(&self) -> Result<()> {
        validate_rotation(&self.rotation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector() + self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform3) -> RigidTransform3 {
        RigidTransform3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform3 {
        let rt = self.rotation.transpose();
        RigidTransform3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians (axis-angle magnitude).
    pub fn rotation_angle(&self) -> f64 {
        let cos = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Yaw of the rotation projected onto the xy-plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}
