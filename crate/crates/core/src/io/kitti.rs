//! KITTI-style point cloud, label and pose files.

use crate::error::{Error, Result};
use crate::geom::{FrameTag, Pose};
use crate::sensors::LidarPoint;
use nalgebra::Matrix3x4;

/// Packed little-endian `f32` quadruples `[x, y, z, intensity / 255]`.
pub fn encode_bin(points: &[LidarPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 16);
    for p in points {
        for v in [p.x as f32, p.y as f32, p.z as f32, p.intensity as f32 / 255.0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// One little-endian `u32` per point: class id low, instance id high.
pub fn encode_labels(points: &[LidarPoint]) -> Vec<u8> {
    points.iter().flat_map(|p| p.label().to_le_bytes()).collect()
}

pub fn decode_bin(bytes: &[u8]) -> Result<Vec<[f32; 4]>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::format(format!(
            "point file length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
            [f(0), f(1), f(2), f(3)]
        })
        .collect())
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::format(format!(
            "label file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Splits a label word into (class id, instance id).
pub fn split_label(word: u32) -> (u16, u16) {
    (word as u16, (word >> 16) as u16)
}

fn num(v: f64) -> String {
    // Avoid printing negative zero.
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

/// Twelve numbers: the top three rows of the sensor-to-world transform,
/// row-major.
pub fn format_pose(pose: &Pose) -> String {
    let m = pose.matrix3x4();
    let mut parts = Vec::with_capacity(12);
    for r in 0..3 {
        for c in 0..4 {
            parts.push(num(m[(r, c)]));
        }
    }
    parts.join(" ")
}

pub fn parse_pose(line: &str) -> Result<Pose> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::format(format!("pose value `{t}`: {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != 12 {
        return Err(Error::format(format!("pose line has {} values, expected 12", v.len())));
    }
    Ok(Pose::from_matrix3x4(&Matrix3x4::from_row_slice(&v), FrameTag::Enu))
}

pub fn format_poses(poses: &[Pose]) -> String {
    poses.iter().map(|p| format_pose(p) + "\n").collect()
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(parse_pose).collect()
}
