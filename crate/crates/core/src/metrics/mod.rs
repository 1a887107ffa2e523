//! Evaluation: cloud-to-cloud RMSE, ICP registration and odometry errors.

mod icp;
mod kdtree;

pub use icp::{fit_rigid, icp_align, IcpParams, IcpResult};
pub use kdtree::{nearest_exhaustive, KdTree};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FrameTag, Pose, Rotation, Vec3};

/// `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_yaw_deg(yaw_deg: f64, translation: Vec3) -> Self {
        RigidTransform {
            rotation: Rotation::from_axis_angle(&Vec3::z_axis(), yaw_deg.to_radians()),
            translation,
        }
    }

    pub fn from_pose(p: &Pose) -> Self {
        RigidTransform {
            rotation: p.orientation,
            translation: p.position,
        }
    }

    pub fn to_pose(&self, frame: FrameTag) -> Pose {
        Pose::new(self.translation, self.rotation, frame)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self` after `other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    /// Rotation angle between the two transforms in degrees.
    pub fn angle_to_deg(&self, other: &RigidTransform) -> f64 {
        // atan2 of the skew and trace parts stays finite when rounding pushes
        // the trace past 3.
        let m = (self.rotation.inverse() * other.rotation).into_inner();
        let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        (0.5 * skew.norm()).atan2(0.5 * (m.trace() - 1.0)).to_degrees()
    }
}

/// Keeps points whose azimuth `atan2(y, x)` lies in `[min, max]` radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzimuthCrop {
    pub min_rad: f64,
    pub max_rad: f64,
}

impl AzimuthCrop {
    pub fn front_half() -> Self {
        AzimuthCrop {
            min_rad: -std::f64::consts::FRAC_PI_2,
            max_rad: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let a = p.y.atan2(p.x);
        a >= self.min_rad && a <= self.max_rad
    }
}

fn crop(points: &[Vec3], c: Option<AzimuthCrop>, name: &str) -> Result<Vec<Vec3>> {
    let out: Vec<Vec3> = points.iter().filter(|p| c.is_none_or(|c| c.contains(p))).copied().collect();
    if out.is_empty() {
        return Err(Error::invalid(format!("cloud {name} is empty after cropping")));
    }
    Ok(out)
}

/// RMS distance from each point of `a` to its nearest point in `b`, both
/// clouds cropped first.
pub fn pc_rmse(a: &[Vec3], b: &[Vec3], crop_to: Option<AzimuthCrop>) -> Result<f64> {
    let a = crop(a, crop_to, "A")?;
    let tree = KdTree::new(crop(b, crop_to, "B")?);
    let sum: f64 = a.par_iter().map(|p| tree.nearest(p).unwrap().1).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Larger of the two directed RMSE values.
pub fn pc_rmse_symmetric(a: &[Vec3], b: &[Vec3], crop_to: Option<AzimuthCrop>) -> Result<f64> {
    Ok(pc_rmse(a, b, crop_to)?.max(pc_rmse(b, a, crop_to)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl Stats {
    /// Population statistics; zeros for an empty slice.
    pub fn of(v: &[f64]) -> Stats {
        if v.is_empty() {
            return Stats::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stats {
            mean,
            std: var.sqrt(),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub tex_m: f64,
    pub tey_m: f64,
    /// Planar drift over distance travelled so far, percent.
    pub eod_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometryReport {
    pub steps: Vec<StepError>,
    pub tex: Stats,
    pub tey: Stats,
    pub eod: Stats,
}

impl OdometryReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,tex_m,tey_m,eod_pct\n");
        for (i, e) in self.steps.iter().enumerate() {
            s.push_str(&format!("{},{},{},{}\n", i + 1, e.tex_m, e.tey_m, e.eod_pct));
        }
        s
    }

    pub fn table(&self) -> String {
        let row =
            |name: &str, unit: &str, s: &Stats| format!("{name:<4} {:>10.4} {:>10.4} {:>10.4}  {unit}\n", s.mean, s.std, s.max);
        let mut t = format!("{:<4} {:>10} {:>10} {:>10}\n", "", "mean", "std", "max");
        t += &row("TEX", "m", &self.tex);
        t += &row("TEY", "m", &self.tey);
        t += &row("EOD", "%", &self.eod);
        t
    }
}

/// Compares estimated frame-to-frame transforms with ground-truth sensor
/// poses (`truth.len() == estimated.len() + 1`).
///
/// Step errors are taken in the earlier frame of each pair. Drift is the
/// planar distance between the chained estimate and the truth, expressed
/// in the first pose's frame.
pub fn odometry_report(estimated: &[RigidTransform], truth: &[Pose]) -> Result<OdometryReport> {
    if truth.len() != estimated.len() + 1 {
        return Err(Error::invalid(format!(
            "{} estimated steps need {} ground-truth poses, got {}",
            estimated.len(),
            estimated.len() + 1,
            truth.len()
        )));
    }
    let gt: Vec<RigidTransform> = truth.iter().map(RigidTransform::from_pose).collect();
    let origin_inv = gt[0].inverse();
    let mut chained = RigidTransform::identity();
    let mut travelled = 0.0;
    let mut steps = Vec::with_capacity(estimated.len());
    for (k, est) in estimated.iter().enumerate() {
        let step = gt[k].inverse().compose(&gt[k + 1]);
        travelled += step.translation.norm();
        chained = chained.compose(est);
        let true_rel = origin_inv.compose(&gt[k + 1]);
        let drift = chained.translation - true_rel.translation;
        let planar = drift.x.hypot(drift.y);
        steps.push(StepError {
            tex_m: (est.translation.x - step.translation.x).abs(),
            tey_m: (est.translation.y - step.translation.y).abs(),
            eod_pct: if travelled > 0.0 { planar / travelled * 100.0 } else { 0.0 },
        });
    }
    let col = |f: fn(&StepError) -> f64| Stats::of(&steps.iter().map(f).collect::<Vec<_>>());
    Ok(OdometryReport {
        tex: col(|e| e.tex_m),
        tey: col(|e| e.tey_m),
        eod: col(|e| e.eod_pct),
        steps,
    })
}
