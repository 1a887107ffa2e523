//! Rotating multi-beam LiDAR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{positive, Mount};
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::raycast::Ray;
use crate::rng::CounterNoise;
use crate::scene::{Material, TracedScene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub n_beams: u32,
    pub vertical_fov_deg: f64,
    /// Elevation of the middle of the vertical fan, degrees.
    pub vertical_center_deg: f64,
    pub horizontal_fov_deg: f64,
    pub horizontal_resolution_deg: f64,
    pub range_m: f64,
    pub period_s: f64,
    /// Standard deviation of the additive range noise, m.
    pub range_noise_sigma_m: f64,
    /// Distance at which a normal-incidence diffuse return has full
    /// diffuse-scale intensity, m.
    pub intensity_reference_m: f64,
    pub mount: Mount,
}

impl Default for LidarConfig {
    /// VLP-16 profile.
    fn default() -> Self {
        Self {
            n_beams: 16,
            vertical_fov_deg: 30.0,
            vertical_center_deg: 0.0,
            horizontal_fov_deg: 360.0,
            horizontal_resolution_deg: 0.2,
            range_m: 100.0,
            period_s: 0.1,
            range_noise_sigma_m: 0.0,
            intensity_reference_m: 20.0,
            mount: Mount::default(),
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        let f = "lidar";
        if self.n_beams == 0 {
            return Err(Error::config("lidar.n_beams", "must be at least 1"));
        }
        if self.n_beams > u16::MAX as u32 {
            return Err(Error::config("lidar.n_beams", "too many beams"));
        }
        if !(self.vertical_fov_deg >= 0.0 && self.vertical_fov_deg <= 180.0) {
            return Err(Error::config("lidar.vertical_fov_deg", "must lie in [0, 180]"));
        }
        if self.n_beams > 1 && self.vertical_fov_deg == 0.0 {
            return Err(Error::config("lidar.vertical_fov_deg", "must be positive with several beams"));
        }
        if !self.vertical_center_deg.is_finite() {
            return Err(Error::config("lidar.vertical_center_deg", "must be finite"));
        }
        positive(f, "horizontal_fov_deg", self.horizontal_fov_deg)?;
        if self.horizontal_fov_deg > 360.0 {
            return Err(Error::config("lidar.horizontal_fov_deg", "must not exceed 360"));
        }
        positive(f, "horizontal_resolution_deg", self.horizontal_resolution_deg)?;
        if self.azimuth_count() == 0 {
            return Err(Error::config(
                "lidar.horizontal_resolution_deg",
                "must not exceed the horizontal field of view",
            ));
        }
        positive(f, "range_m", self.range_m)?;
        positive(f, "period_s", self.period_s)?;
        positive(f, "intensity_reference_m", self.intensity_reference_m)?;
        if !(self.range_noise_sigma_m >= 0.0 && self.range_noise_sigma_m.is_finite()) {
            return Err(Error::config("lidar.range_noise_sigma_m", "must be non-negative"));
        }
        self.mount.validate(f)
    }

    /// Number of azimuth steps per revolution.
    pub fn azimuth_count(&self) -> usize {
        // The small slack keeps exact ratios such as 360 / 0.2 from landing
        // one below the integer.
        (self.horizontal_fov_deg / self.horizontal_resolution_deg * (1.0 + 1e-12)).floor() as usize
    }

    pub fn rays_per_scan(&self) -> usize {
        self.azimuth_count() * self.n_beams as usize
    }

    /// Beam elevations, evenly spaced from bottom to top, radians.
    pub fn elevations(&self) -> Vec<f64> {
        let n = self.n_beams as usize;
        (0..n)
            .map(|i| {
                let e = if n == 1 {
                    self.vertical_center_deg
                } else {
                    self.vertical_center_deg - 0.5 * self.vertical_fov_deg + self.vertical_fov_deg * i as f64 / (n - 1) as f64
                };
                e.to_radians()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRay {
    pub beam: u16,
    pub azimuth: u32,
    /// Unit direction in the sensor frame.
    pub dir: Vec3,
}

/// Scan directions, azimuth-major: all beams of the first azimuth step,
/// then the next step. Azimuth `k` points at `(k - n/2) * resolution`
/// counter-clockwise from forward, so a centered step always looks straight
/// ahead.
pub fn scan_pattern(config: &LidarConfig) -> Vec<ScanRay> {
    let n_az = config.azimuth_count();
    let elevations = config.elevations();
    let res = config.horizontal_resolution_deg.to_radians();
    let mut out = Vec::with_capacity(n_az * elevations.len());
    for k in 0..n_az {
        let az = (k as f64 - (n_az / 2) as f64) * res;
        let (sa, ca) = az.sin_cos();
        for (b, el) in elevations.iter().enumerate() {
            let (se, ce) = el.sin_cos();
            out.push(ScanRay {
                beam: b as u16,
                azimuth: k as u32,
                dir: Vec3::new(ce * ca, ce * sa, se),
            });
        }
    }
    out
}

/// Share of the 0..=255 scale given to diffuse returns; the rest is kept
/// for retro-reflective highlights.
const DIFFUSE_SCALE: f64 = 100.0;
const SPECULAR_SCALE: f64 = 155.0;

/// Diffuse and specular intensity terms before clamping and quantization.
///
/// The diffuse term is `rho_d * cos(theta) * (d_ref / d)^2`. The specular
/// term is a Beckmann lobe in the backscatter direction,
/// `rho_s * exp(-tan^2(theta) / m^2) / (cos^5(theta) * m^2) * (d_ref / d)^2`.
pub fn intensity_terms(distance: f64, cos_theta: f64, material: &Material, d_ref: f64) -> (f64, f64) {
    let c = cos_theta.clamp(0.0, 1.0);
    if c <= 0.0 || c < material.max_incidence().cos() - 1e-15 {
        return (0.0, 0.0);
    }
    let falloff = (d_ref / distance.max(1e-9)).powi(2);
    let diffuse = material.diffuse * c * falloff;
    let m2 = material.roughness * material.roughness;
    let tan2 = (1.0 - c * c) / (c * c);
    let lobe = (-tan2 / m2).exp() / (c.powi(5) * m2);
    (diffuse, material.reflective * lobe * falloff)
}

/// Pre-quantization intensity on the 0..=255 scale.
pub fn raw_intensity(distance: f64, cos_theta: f64, material: &Material, d_ref: f64) -> f64 {
    let (d, s) = intensity_terms(distance, cos_theta, material, d_ref);
    DIFFUSE_SCALE * d.min(1.0) + SPECULAR_SCALE * s.min(1.0)
}

/// Returned intensity: zero beyond the material's maximum incidence angle,
/// diffuse-only targets within `0..=100`.
pub fn backscatter_intensity(distance: f64, cos_theta: f64, material: &Material, d_ref: f64) -> u8 {
    raw_intensity(distance, cos_theta, material, d_ref).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    /// Sensor frame, m.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: u8,
    pub class: u16,
    pub instance: u16,
    pub beam: u16,
    pub azimuth: u32,
}

impl LidarPoint {
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Semantic label word: class in the low 16 bits, instance in the high.
    pub fn label(&self) -> u32 {
        self.class as u32 | (self.instance as u32) << 16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub timestamp_ns: i64,
    /// World pose of the sensor for the whole revolution.
    pub pose: Pose,
    pub points: Vec<LidarPoint>,
}

/// One revolution from a frozen pose. Range noise is drawn per ray from
/// `noise` keyed by `(frame, ray index)`.
pub fn lidar_scan(
    pose: &Pose,
    config: &LidarConfig,
    pattern: &[ScanRay],
    scene: &TracedScene,
    noise: &CounterNoise,
    frame: u64,
    timestamp_ns: i64,
) -> PointCloud {
    let sigma = config.range_noise_sigma_m;
    let points = pattern
        .par_iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let world_dir = pose.orientation * r.dir;
            let ray = Ray::new(pose.position, world_dir, config.range_m);
            let hit = scene.cast(&ray)?;
            let cos = -world_dir.dot(&hit.hit.normal);
            let intensity = backscatter_intensity(hit.hit.t, cos, &hit.material, config.intensity_reference_m);
            let range = if sigma > 0.0 {
                hit.hit.t + sigma * noise.gaussian(frame, i as u64)
            } else {
                hit.hit.t
            };
            let p = r.dir * range;
            Some(LidarPoint {
                x: p.x,
                y: p.y,
                z: p.z,
                intensity,
                class: hit.class.id() as u16,
                instance: hit.instance as u16,
                beam: r.beam,
                azimuth: r.azimuth,
            })
        })
        .collect();
    PointCloud {
        timestamp_ns,
        pose: *pose,
        points,
    }
}
