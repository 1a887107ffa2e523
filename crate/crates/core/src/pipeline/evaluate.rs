//! Metrics over stored datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::frame_name;
use crate::io::kitti::{decode_bin, parse_poses};
use crate::metrics::{icp_align, odometry_report, pc_rmse_symmetric, AzimuthCrop, IcpParams, OdometryReport, RigidTransform};

use super::dataset::DatasetManifest;

/// Points of one stored LiDAR frame in the sensor frame.
pub fn read_lidar_frame(dir: &Path, index: usize) -> Result<Vec<Vec3>> {
    let bytes = std::fs::read(dir.join("velodyne").join(format!("{}.bin", frame_name(index))))?;
    Ok(decode_bin(&bytes)?
        .into_iter()
        .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
        .collect())
}

fn lidar_indices(dir: &Path) -> Result<Vec<usize>> {
    let m = DatasetManifest::read(dir)?;
    let l = m
        .lidar
        .ok_or_else(|| Error::invalid(format!("{} has no LiDAR frames", dir.display())))?;
    Ok(l.frames.iter().map(|f| f.index).collect())
}

/// Frame-to-frame ICP over the LiDAR sequence, scored against the stored
/// sensor poses. Every `stride`-th point is used. Each alignment starts from
/// the previous estimate.
pub fn dataset_odometry(dir: &Path, params: &IcpParams, stride: usize) -> Result<(Vec<RigidTransform>, OdometryReport)> {
    let idx = lidar_indices(dir)?;
    if idx.len() < 2 {
        return Err(Error::invalid("odometry needs at least two LiDAR frames"));
    }
    let poses = parse_poses(&std::fs::read_to_string(dir.join("poses.txt"))?)?;
    if poses.len() != idx.len() {
        return Err(Error::format("poses.txt does not match the frame list"));
    }
    let stride = stride.max(1);
    let load = |i: usize| -> Result<Vec<Vec3>> { Ok(read_lidar_frame(dir, i)?.into_iter().step_by(stride).collect()) };
    let mut prev = load(idx[0])?;
    let mut guess = RigidTransform::identity();
    let mut steps = Vec::with_capacity(idx.len() - 1);
    for &i in &idx[1..] {
        let cur = load(i)?;
        let r = icp_align(&cur, &prev, &guess, params)?;
        log::debug!(
            "frame {i}: residual {:.4} m after {} iterations",
            r.residual(),
            r.residuals.len() - 1
        );
        guess = r.transform;
        steps.push(r.transform);
        prev = cur;
    }
    let report = odometry_report(&steps, &poses)?;
    Ok((steps, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRmse {
    pub index: usize,
    pub rmse_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub frames: Vec<FrameRmse>,
    pub mean_m: f64,
    pub max_m: f64,
}

/// Symmetric nearest-neighbour RMSE between co-indexed frames of two
/// datasets.
pub fn compare_datasets(a: &Path, b: &Path, crop: Option<AzimuthCrop>) -> Result<RmseSummary> {
    let ia = lidar_indices(a)?;
    let ib = lidar_indices(b)?;
    let common: Vec<usize> = ia.iter().copied().filter(|i| ib.contains(i)).collect();
    if common.is_empty() {
        return Err(Error::invalid("the datasets share no LiDAR frame"));
    }
    let mut frames = Vec::with_capacity(common.len());
    for i in common {
        let rmse_m = pc_rmse_symmetric(&read_lidar_frame(a, i)?, &read_lidar_frame(b, i)?, crop)?;
        frames.push(FrameRmse { index: i, rmse_m });
    }
    let mean_m = frames.iter().map(|f| f.rmse_m).sum::<f64>() / frames.len() as f64;
    let max_m = frames.iter().map(|f| f.rmse_m).fold(0.0, f64::max);
    Ok(RmseSummary { frames, mean_m, max_m })
}
