//! Sensor emulation: rotating LiDAR, pinhole cameras and a 9-axis IMU.
//!
//! Sensor frames are forward-left-up and attached to the vehicle body
//! (also forward-left-up) through a mount pose.

pub mod camera;
pub mod imu;
pub mod lidar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FrameTag, Pose, Rotation, Vec3};

pub use camera::{
    cast_pixels, depth_from_hits, luminance, render_depth, render_segmentation, render_shaded, segmentation_from_hits,
    shade_hits, AmbientConfig, CameraConfig, DepthImage, PixelHit, RgbImage, SegImage, SunSlot,
};
pub use imu::{AxisNoise, Imu, ImuConfig, ImuSample, ImuTruth};
pub use lidar::{backscatter_intensity, lidar_scan, scan_pattern, LidarConfig, LidarPoint, PointCloud, ScanRay};

/// Placement of a sensor on the vehicle body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Mount {
    /// Forward, left, up offset from the vehicle reference point, m.
    pub translation_m: [f64; 3],
    /// Roll, pitch, yaw of the sensor relative to the body, degrees.
    pub rpy_deg: [f64; 3],
}

impl Mount {
    pub fn pose(&self) -> Pose {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Pose::new(
            Vec3::from(self.translation_m),
            Rotation::from_euler_angles(r, p, y),
            FrameTag::Body,
        )
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.translation_m.iter().chain(&self.rpy_deg).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("{field}.mount"), "values must be finite"))
        }
    }
}

/// World pose of a sensor given the vehicle pose.
pub fn sensor_pose(vehicle: &Pose, mount: &Mount) -> Pose {
    vehicle.compose(&mount.pose())
}

pub(crate) fn positive(field: &str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{field}.{name}"), format!("must be positive, got {v}")))
    }
}
