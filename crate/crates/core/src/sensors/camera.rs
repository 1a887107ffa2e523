//! Pinhole cameras producing depth, segmentation and shaded images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{positive, Mount};
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::raycast::Ray;
use crate::scene::{SemanticClass, TracedScene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub horizontal_fov_deg: f64,
    pub depth_max_m: f64,
    /// Millimetres per depth PNG unit. When unset, 1 mm is used if
    /// `depth_max_m` fits in 16 bits, otherwise the smallest whole number of
    /// millimetres that does.
    pub depth_unit_mm: Option<u32>,
    pub period_s: f64,
    pub depth: bool,
    pub segmentation: bool,
    pub shaded: bool,
    pub mount: Mount,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            horizontal_fov_deg: 90.0,
            depth_max_m: 100.0,
            depth_unit_mm: None,
            period_s: 0.1,
            depth: true,
            segmentation: true,
            shaded: true,
            mount: Mount::default(),
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let f = "camera";
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("camera.width", "image size must be non-zero"));
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg < 180.0) {
            return Err(Error::config("camera.horizontal_fov_deg", "must lie in (0, 180)"));
        }
        positive(f, "depth_max_m", self.depth_max_m)?;
        positive(f, "period_s", self.period_s)?;
        if let Some(u) = self.depth_unit_mm {
            if u == 0 {
                return Err(Error::config("camera.depth_unit_mm", "must be at least 1"));
            }
            if self.depth_max_m * 1000.0 / u as f64 > u16::MAX as f64 {
                return Err(Error::config(
                    "camera.depth_unit_mm",
                    format!("depth_max_m {} does not fit 16 bits at {u} mm per unit", self.depth_max_m),
                ));
            }
        }
        self.mount.validate(f)
    }

    /// Effective millimetres per stored depth unit.
    pub fn depth_unit(&self) -> u32 {
        self.depth_unit_mm
            .unwrap_or_else(|| ((self.depth_max_m * 1000.0 / u16::MAX as f64).ceil() as u32).max(1))
    }

    pub fn focal_px(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.horizontal_fov_deg.to_radians()).tan()
    }

    /// Unit ray through the center of pixel `(u, v)` in the sensor frame
    /// (forward x, left y, up z). Row 0 is the top of the image.
    pub fn pixel_dir(&self, u: u32, v: u32) -> Vec3 {
        let f = self.focal_px();
        let x = (u as f64 + 0.5 - 0.5 * self.width as f64) / f;
        let y = (v as f64 + 0.5 - 0.5 * self.height as f64) / f;
        Vec3::new(1.0, -x, -y).normalize()
    }
}

/// Nearest hit along one pixel ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub distance: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub class: SemanticClass,
    pub instance: u32,
}

/// Casts one ray per pixel, row-major. Hits are not limited by `depth_max`
/// so segmentation still labels distant geometry.
pub fn cast_pixels(pose: &Pose, config: &CameraConfig, scene: &TracedScene) -> Vec<Option<PixelHit>> {
    let (w, h) = (config.width, config.height);
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = pose.orientation * config.pixel_dir(i % w, i / w);
            scene.cast(&Ray::new(pose.position, dir, f64::INFINITY)).map(|hit| PixelHit {
                distance: hit.hit.t,
                point: hit.hit.point,
                normal: hit.hit.normal,
                class: hit.class,
                instance: hit.instance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    /// Euclidean distance in metres, clamped to the maximum depth.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[u8; 3]>,
}

pub fn depth_from_hits(hits: &[Option<PixelHit>], config: &CameraConfig) -> DepthImage {
    DepthImage {
        width: config.width,
        height: config.height,
        data: hits
            .iter()
            .map(|h| h.map_or(config.depth_max_m, |h| h.distance.min(config.depth_max_m)))
            .collect(),
    }
}

pub fn segmentation_from_hits(hits: &[Option<PixelHit>], config: &CameraConfig) -> SegImage {
    SegImage {
        width: config.width,
        height: config.height,
        data: hits
            .iter()
            .map(|h| h.map_or(SemanticClass::Background, |h| h.class).id())
            .collect(),
    }
}

pub fn render_depth(pose: &Pose, config: &CameraConfig, scene: &TracedScene) -> DepthImage {
    depth_from_hits(&cast_pixels(pose, config, scene), config)
}

pub fn render_segmentation(pose: &Pose, config: &CameraConfig, scene: &TracedScene) -> SegImage {
    segmentation_from_hits(&cast_pixels(pose, config, scene), config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SunSlot {
    Morning,
    Evening,
    Night,
}

struct Lighting {
    /// Unit ENU vector pointing at the sun.
    sun: Vec3,
    sun_intensity: f64,
    ambient: f64,
    sky: [f64; 3],
}

impl SunSlot {
    fn lighting(self) -> Lighting {
        // (elevation, azimuth clockwise from north, sun, ambient, sky)
        let (el, az, sun, ambient, sky): (f64, f64, f64, f64, [f64; 3]) = match self {
            SunSlot::Morning => (25.0, 100.0, 0.85, 0.35, [135.0, 180.0, 235.0]),
            SunSlot::Evening => (8.0, 265.0, 0.6, 0.25, [235.0, 150.0, 100.0]),
            SunSlot::Night => (35.0, 180.0, 0.05, 0.08, [12.0, 16.0, 35.0]),
        };
        let (el, az) = (el.to_radians(), az.to_radians());
        Lighting {
            sun: Vec3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin()),
            sun_intensity: sun,
            ambient,
            sky,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmbientConfig {
    pub slot: SunSlot,
    /// Extinction coefficient of the fog, 1/m.
    pub fog_density: f64,
    pub fog_color: [u8; 3],
}

impl Default for AmbientConfig {
    fn default() -> Self {
        Self {
            slot: SunSlot::Morning,
            fog_density: 0.0,
            fog_color: [200, 200, 205],
        }
    }
}

impl AmbientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fog_density >= 0.0 {
            Ok(())
        } else {
            Err(Error::config("ambient.fog_density", "must be non-negative"))
        }
    }
}

/// Lambert shading of the class color with one shadow ray toward the sun
/// and exponential fog.
pub fn shade_hits(hits: &[Option<PixelHit>], config: &CameraConfig, scene: &TracedScene, ambient: &AmbientConfig) -> RgbImage {
    let light = ambient.slot.lighting();
    let fog = ambient.fog_color.map(f64::from);
    let data = hits
        .par_iter()
        .map(|h| {
            let (color, dist) = match h {
                None => (light.sky, f64::INFINITY),
                Some(h) => {
                    let base = h.class.color().map(f64::from);
                    let facing = h.normal.dot(&light.sun).max(0.0);
                    let lit = facing > 0.0
                        && light.sun_intensity > 0.0
                        && !scene.occluded(&Ray::new(h.point + h.normal * 1e-3, light.sun, 1e5));
                    let k = light.ambient + if lit { light.sun_intensity * facing } else { 0.0 };
                    (base.map(|c| c * k), h.distance)
                }
            };
            let keep = if ambient.fog_density > 0.0 {
                (-ambient.fog_density * dist).exp()
            } else {
                1.0
            };
            let mut out = [0u8; 3];
            for c in 0..3 {
                out[c] = (color[c] * keep + fog[c] * (1.0 - keep)).round().clamp(0.0, 255.0) as u8;
            }
            out
        })
        .collect();
    RgbImage {
        width: config.width,
        height: config.height,
        data,
    }
}

pub fn render_shaded(pose: &Pose, config: &CameraConfig, scene: &TracedScene, ambient: &AmbientConfig) -> RgbImage {
    shade_hits(&cast_pixels(pose, config, scene), config, scene, ambient)
}

/// Mean Rec. 709 luma of an image.
pub fn luminance(img: &RgbImage) -> f64 {
    let sum: f64 = img
        .data
        .iter()
        .map(|[r, g, b]| 0.2126 * *r as f64 + 0.7152 * *g as f64 + 0.0722 * *b as f64)
        .sum();
    sum / img.data.len().max(1) as f64
}
