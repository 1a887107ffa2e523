//! Vector and rotation helpers, reference-frame conversions and the
//! smoothing spline used to interpolate track centerlines.
//!
//! Conventions used throughout the crate:
//!
//! * Route files and trajectories are expressed in a local north-east-down
//!   (NED) frame.
//! * The scene, the terrain and every sensor pose live in east-north-up (ENU).
//! * Vehicle attitude is a Z-Y-X intrinsic (yaw, pitch, roll) rotation taking
//!   the forward-right-down body frame into NED.
//! * Sensor frames are forward-left-up (FLU), like KITTI's velodyne frame.

mod spline;

use nalgebra::{Matrix3, Matrix3x4};
use serde::{Deserialize, Serialize};

pub use spline::{fit_smoothing_spline, SmoothingSpline};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Rotation = nalgebra::Rotation3<f64>;

/// Reference frame a world-frame quantity is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrameTag {
    Ned,
    Enu,
    Body,
    Sensor,
}

/// Maps NED components onto ENU: `(n, e, d) -> (e, n, -d)`.
pub fn ned_to_enu(v: &Vec3) -> Vec3 {
    Vec3::new(v.y, v.x, -v.z)
}

pub fn enu_to_ned(v: &Vec3) -> Vec3 {
    Vec3::new(v.y, v.x, -v.z)
}

/// Rotation matrix of the NED -> ENU permutation.
pub fn ned_to_enu_rotation() -> Rotation {
    Rotation::from_matrix_unchecked(Matrix3::new(
        0.0, 1.0, 0.0, //
        1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0,
    ))
}

/// Rotation taking forward-left-up vectors into forward-right-down.
/// It is its own inverse.
pub fn flu_to_frd_rotation() -> Rotation {
    Rotation::from_matrix_unchecked(Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0,
    ))
}

/// Z-Y-X intrinsic composition `Rz(yaw) * Ry(pitch) * Rx(roll)`.
///
/// With the NED convention, a yaw of +90° turns the body x axis (forward)
/// onto east.
pub fn rotation_from_euler(yaw: f64, pitch: f64, roll: f64) -> Rotation {
    Rotation::from_euler_angles(roll, pitch, yaw)
}

/// Inverse of [`rotation_from_euler`], returning `(yaw, pitch, roll)`.
pub fn euler_from_rotation(r: &Rotation) -> (f64, f64, f64) {
    let (roll, pitch, yaw) = r.euler_angles();
    (yaw, pitch, roll)
}

/// Largest deviation of `R^T R` from the identity and of `det R` from one.
pub fn orthonormality_error(r: &Rotation) -> f64 {
    let m = r.matrix();
    let gram = m.transpose() * m - Matrix3::identity();
    gram.abs().max().max((m.determinant() - 1.0).abs())
}

/// Rigid pose: `world = orientation * local + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
    pub frame: FrameTag,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation, frame: FrameTag) -> Self {
        Self {
            position,
            orientation,
            frame,
        }
    }

    pub fn identity(frame: FrameTag) -> Self {
        Self::new(Vec3::zeros(), Rotation::identity(), frame)
    }

    /// Pose of a child frame given its pose relative to `self`. The result
    /// keeps the parent's frame tag.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose {
            position: self.orientation * local.position + self.position,
            orientation: self.orientation * local.orientation,
            frame: self.frame,
        }
    }

    /// Inverse transform. The tag is kept because the caller decides what
    /// the inverted pose is relative to.
    pub fn inverse(&self) -> Pose {
        let r_inv = self.orientation.inverse();
        Pose {
            position: -(r_inv * self.position),
            orientation: r_inv,
            frame: self.frame,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    /// Top three rows of the homogeneous transform.
    pub fn matrix3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.orientation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    pub fn from_matrix3x4(m: &Matrix3x4<f64>, frame: FrameTag) -> Pose {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Pose {
            position: m.fixed_view::<3, 1>(0, 3).into_owned(),
            orientation: Rotation::from_matrix_unchecked(r),
            frame,
        }
    }

    /// ENU pose of a forward-left-up vehicle frame located at an NED point
    /// with the given NED attitude (body frame forward-right-down).
    pub fn vehicle_enu(position_ned: &Vec3, yaw: f64, pitch: f64, roll: f64) -> Pose {
        let orientation = ned_to_enu_rotation() * rotation_from_euler(yaw, pitch, roll) * flu_to_frd_rotation();
        Pose::new(ned_to_enu(position_ned), orientation, FrameTag::Enu)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// An inverted box that any `grow` call replaces.
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| other.min[k] >= self.min[k] && other.max[k] <= self.max[k])
    }

    pub fn centroid(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }
}

/// Horizontal unit normal pointing to the right of a travel direction given in NED.
pub fn right_normal_ned(tangent: &Vec3) -> Vec3 {
    let h = (tangent.x * tangent.x + tangent.y * tangent.y).sqrt();
    Vec3::new(-tangent.y / h, tangent.x / h, 0.0)
}
