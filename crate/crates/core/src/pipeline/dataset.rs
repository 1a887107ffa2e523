//! Runs the acquisition timeline and writes the dataset tree and stream.
//!
//! ```text
//! velodyne/NNNNNN.bin   labels/NNNNNN.label   poses.txt   times.txt
//! depth/NNNNNN.png      seg/NNNNNN.png        rgb/NNNNNN.png
//! camera_poses.txt      camera_times.txt      seg_palette.json
//! imu.txt   trajectory.csv   calib.txt   manifest.json (written last)
//! ```

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::io::images::{decode_depth_png, encode_depth_png, encode_rgb_png, encode_seg_png, palette_sidecar, quantize_depth};
use crate::io::kitti::{encode_bin, encode_labels, format_pose};
use crate::io::stream::{MessageType, StreamMessage, StreamServer};
use crate::io::text::{format_times, imu_row, IMU_HEADER};
use crate::io::{frame_name, write_atomic};
use crate::rng::CounterNoise;
use crate::routegen::{point_trajectory, write_trajectory, TrajectorySample};
use crate::scene::TracedScene;
use crate::sensors::{
    cast_pixels, depth_from_hits, lidar_scan, scan_pattern, segmentation_from_hits, sensor_pose, shade_hits, AmbientConfig,
    CameraConfig, DepthImage, Imu, ImuTruth, RgbImage, SegImage,
};
use crate::timeline::{build_timeline, seconds_to_ns, vehicle_pose, AcquisitionEvent};

use super::scenario::{Scenario, SensorKind, Sensors};

pub const DATASET_FORMAT: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Receiver of live frames.
pub trait MessageSink: Sync {
    fn publish(&self, msg: StreamMessage) -> Result<()>;
}

impl MessageSink for StreamServer {
    fn publish(&self, msg: StreamMessage) -> Result<()> {
        StreamServer::publish(self, &msg)
    }
}

impl MessageSink for Mutex<Vec<StreamMessage>> {
    fn publish(&self, msg: StreamMessage) -> Result<()> {
        self.lock().unwrap().push(msg);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// LiDAR and camera frames below this index are neither rendered nor
    /// written. Text files and the IMU are always regenerated in full.
    pub resume_from: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub timestamp_ns: i64,
    /// Trajectory sample the frame was taken at.
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSeries {
    pub period_ns: i64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSeries {
    pub period_ns: i64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: u32,
    pub seed: u64,
    pub sample_period_ns: i64,
    /// Trajectory samples inside the simulated window.
    pub trajectory_samples: usize,
    pub sensors: Sensors,
    pub ambient: AmbientConfig,
    /// Millimetres per depth PNG unit.
    pub depth_unit_mm: Option<u32>,
    pub lidar: Option<FrameSeries>,
    pub camera: Option<FrameSeries>,
    pub imu: Option<ImuSeries>,
}

impl DatasetManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?)
    }
}

/// Trajectory samples and timeline events inside the configured window.
pub fn plan_events(scenario: &Scenario, samples: &[TrajectorySample]) -> Result<(usize, Vec<(SensorKind, AcquisitionEvent)>)> {
    let sample_ns = scenario.config.train.sample_period_ns()?;
    let schedules = scenario.schedules()?;
    let w = &scenario.config.window;
    let mut n = samples.len();
    if let Some(d) = w.duration_s {
        let d_ns = seconds_to_ns(d).unwrap_or((d * 1e9).round() as i64);
        n = n.min((d_ns / sample_ns) as usize + 1);
    }
    let scheds: Vec<_> = schedules.iter().map(|(_, s)| s.clone()).collect();
    let mut events: Vec<(SensorKind, AcquisitionEvent)> = build_timeline(n, sample_ns, &scheds)
        .into_iter()
        .map(|e| (schedules[e.sensor].0, e))
        .collect();
    if let Some(m) = w.max_frames {
        events.retain(|(k, e)| *k == SensorKind::Imu || e.frame < m);
        let last = events
            .iter()
            .filter(|(k, _)| *k != SensorKind::Imu)
            .map(|(_, e)| e.sample)
            .max();
        if let Some(last) = last {
            events.retain(|(_, e)| e.sample <= last);
            n = n.min(last + 1);
        }
    }
    Ok((n, events))
}

/// Depth, segmentation and shaded images from one shared set of pixel rays.
pub fn render_views(
    scene: &TracedScene,
    pose: &Pose,
    camera: &CameraConfig,
    ambient: &AmbientConfig,
) -> (DepthImage, SegImage, RgbImage) {
    let hits = cast_pixels(pose, camera, scene);
    (
        depth_from_hits(&hits, camera),
        segmentation_from_hits(&hits, camera),
        shade_hits(&hits, camera, scene, ambient),
    )
}

fn calib(sensors: &Sensors) -> String {
    let mut s = String::new();
    if let Some(l) = &sensors.lidar {
        s += &format!("lidar: {}\n", format_pose(&l.mount.pose()));
    }
    if let Some(c) = &sensors.camera {
        let f = c.focal_px();
        let (cx, cy) = (0.5 * c.width as f64 - 0.5, 0.5 * c.height as f64 - 0.5);
        s += &format!("camera: {}\n", format_pose(&c.mount.pose()));
        s += &format!("camera_intrinsics: {f} 0 {cx} 0 {f} {cy} 0 0 1\n");
    }
    if let Some(i) = &sensors.imu {
        s += &format!("imu: {}\n", format_pose(&i.mount.pose()));
    }
    s
}

fn u64_ns(t: i64) -> u64 {
    t.max(0) as u64
}

/// Simulates the window, writing into `out` (which must exist) and/or
/// publishing to `sink`. Returns the manifest, which is written last.
pub fn simulate(
    scene: &TracedScene,
    samples: &[TrajectorySample],
    scenario: &Scenario,
    out: Option<&Path>,
    sink: Option<&dyn MessageSink>,
    opts: &SimOptions,
) -> Result<DatasetManifest> {
    let cfg = &scenario.config;
    let sensors = &scenario.sensors;
    let seed = cfg.seed;
    let sample_ns = cfg.train.sample_period_ns()?;
    let (n, events) = plan_events(scenario, samples)?;
    let samples = &samples[..n];
    let period = |kind| {
        scenario
            .schedules()
            .map(|s| s.into_iter().find(|(k, _)| *k == kind).map(|(_, s)| s.period_ns))
    };

    let mkdir = |sub: &str| -> Result<()> {
        if let Some(o) = out {
            std::fs::create_dir_all(o.join(sub))?;
        }
        Ok(())
    };
    let write = |rel: String, bytes: &[u8]| -> Result<()> {
        match out {
            Some(o) => write_atomic(&o.join(rel), bytes),
            None => Ok(()),
        }
    };
    let publish = |kind: MessageType, t: i64, payload: Vec<u8>| -> Result<()> {
        match sink {
            Some(s) => s.publish(StreamMessage::new(kind, u64_ns(t), payload)),
            None => Ok(()),
        }
    };

    if sensors.lidar.is_some() {
        mkdir("velodyne")?;
        mkdir("labels")?;
    }
    if let Some(c) = &sensors.camera {
        for (on, sub) in [(c.depth, "depth"), (c.segmentation, "seg"), (c.shaded, "rgb")] {
            if on {
                mkdir(sub)?;
            }
        }
    }

    let pattern = sensors.lidar.as_ref().map(scan_pattern);
    let lidar_noise = CounterNoise::new(seed, "lidar");
    let mut imu = sensors.imu.as_ref().map(|c| Imu::new(c, seed)).transpose()?;
    let imu_track = sensors
        .imu
        .as_ref()
        .map(|c| point_trajectory(samples, c.mount.translation_m[0], cfg.train.bogie_spacing_m));
    let resume_ts = events
        .iter()
        .filter(|(k, e)| *k != SensorKind::Imu && e.frame >= opts.resume_from)
        .map(|(_, e)| e.timestamp_ns)
        .min()
        .unwrap_or(0);

    let mut lidar_frames = Vec::new();
    let mut lidar_poses = String::new();
    let mut camera_frames = Vec::new();
    let mut camera_poses = String::new();
    let mut imu_text = String::from(IMU_HEADER) + "\n";
    let mut imu_count = 0;

    for (kind, ev) in &events {
        let vehicle = vehicle_pose(&samples[ev.sample]);
        let entry = FrameEntry {
            index: ev.frame,
            timestamp_ns: ev.timestamp_ns,
            sample: ev.sample,
        };
        let live = ev.frame >= opts.resume_from;
        match kind {
            SensorKind::Lidar => {
                let lc = sensors.lidar.as_ref().unwrap();
                let pose = sensor_pose(&vehicle, &lc.mount);
                let pose_line = format_pose(&pose) + "\n";
                lidar_poses.push_str(&pose_line);
                lidar_frames.push(entry);
                if !live {
                    continue;
                }
                let cloud = lidar_scan(
                    &pose,
                    lc,
                    pattern.as_ref().unwrap(),
                    scene,
                    &lidar_noise,
                    ev.frame as u64,
                    ev.timestamp_ns,
                );
                let name = frame_name(ev.frame);
                let bin = encode_bin(&cloud.points);
                let labels = encode_labels(&cloud.points);
                write(format!("velodyne/{name}.bin"), &bin)?;
                write(format!("labels/{name}.label"), &labels)?;
                publish(MessageType::PointCloud, ev.timestamp_ns, bin)?;
                publish(MessageType::Labels, ev.timestamp_ns, labels)?;
                publish(MessageType::Pose, ev.timestamp_ns, pose_line.into_bytes())?;
                log::debug!("lidar frame {} with {} points", ev.frame, cloud.points.len());
            }
            SensorKind::Camera => {
                let cc = sensors.camera.as_ref().unwrap();
                let pose = sensor_pose(&vehicle, &cc.mount);
                camera_poses.push_str(&(format_pose(&pose) + "\n"));
                camera_frames.push(entry);
                if !live {
                    continue;
                }
                let hits = cast_pixels(&pose, cc, scene);
                let name = frame_name(ev.frame);
                if cc.depth {
                    let d = depth_from_hits(&hits, cc);
                    let png = encode_depth_png(d.width, d.height, &quantize_depth(&d, cc.depth_unit()))?;
                    write(format!("depth/{name}.png"), &png)?;
                    publish(MessageType::DepthImage, ev.timestamp_ns, png)?;
                }
                if cc.segmentation {
                    let png = encode_seg_png(&segmentation_from_hits(&hits, cc))?;
                    write(format!("seg/{name}.png"), &png)?;
                    publish(MessageType::SegImage, ev.timestamp_ns, png)?;
                }
                if cc.shaded {
                    let png = encode_rgb_png(&shade_hits(&hits, cc, scene, &cfg.ambient))?;
                    write(format!("rgb/{name}.png"), &png)?;
                    publish(MessageType::RgbImage, ev.timestamp_ns, png)?;
                }
                log::debug!("camera frame {}", ev.frame);
            }
            SensorKind::Imu => {
                let ps = &imu_track.as_ref().unwrap()[ev.sample];
                let truth = ImuTruth {
                    accel_ned: ps.state.acceleration,
                    omega_body: ps.omega,
                    yaw: ps.yaw,
                    pitch: ps.pitch,
                    roll: ps.roll,
                };
                let s = imu.as_mut().unwrap().sample(ev.frame as u64, ev.timestamp_ns, &truth)?;
                let row = imu_row(&s) + "\n";
                imu_text.push_str(&row);
                imu_count += 1;
                if ev.timestamp_ns >= resume_ts {
                    publish(MessageType::Imu, ev.timestamp_ns, row.into_bytes())?;
                }
            }
        }
    }

    let times = |f: &[FrameEntry]| format_times(&f.iter().map(|e| e.timestamp_ns).collect::<Vec<_>>());
    if sensors.lidar.is_some() {
        write("poses.txt".into(), lidar_poses.as_bytes())?;
        write("times.txt".into(), times(&lidar_frames).as_bytes())?;
    }
    if let Some(c) = &sensors.camera {
        write("camera_poses.txt".into(), camera_poses.as_bytes())?;
        write("camera_times.txt".into(), times(&camera_frames).as_bytes())?;
        if c.segmentation {
            write("seg_palette.json".into(), palette_sidecar().as_bytes())?;
        }
    }
    if sensors.imu.is_some() {
        write("imu.txt".into(), imu_text.as_bytes())?;
    }
    write("trajectory.csv".into(), write_trajectory(samples).as_bytes())?;
    write("calib.txt".into(), calib(sensors).as_bytes())?;

    let manifest = DatasetManifest {
        format: DATASET_FORMAT,
        seed,
        sample_period_ns: sample_ns,
        trajectory_samples: n,
        sensors: sensors.clone(),
        ambient: cfg.ambient.clone(),
        depth_unit_mm: sensors.camera.as_ref().filter(|c| c.depth).map(|c| c.depth_unit()),
        lidar: period(SensorKind::Lidar)?.map(|p| FrameSeries {
            period_ns: p,
            frames: lidar_frames,
        }),
        camera: period(SensorKind::Camera)?.map(|p| FrameSeries {
            period_ns: p,
            frames: camera_frames,
        }),
        imu: period(SensorKind::Imu)?.map(|p| ImuSeries {
            period_ns: p,
            samples: imu_count,
        }),
    };
    write(MANIFEST.into(), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok(manifest)
}

/// Re-sends a stored dataset in acquisition order, producing the same
/// messages a live run would have sent.
pub fn replay_dataset(dir: &Path, sink: &dyn MessageSink) -> Result<usize> {
    let m = DatasetManifest::read(dir)?;
    let read = |rel: String| std::fs::read(dir.join(&rel)).map_err(|e| Error::format(format!("{rel}: {e}")));
    let lines = |rel: &str| -> Result<Vec<String>> {
        Ok(std::fs::read_to_string(dir.join(rel))?
            .lines()
            .map(|l| l.to_string() + "\n")
            .collect())
    };
    let mut order: Vec<(i64, SensorKind, usize)> = Vec::new();
    if let Some(l) = &m.lidar {
        order.extend(l.frames.iter().map(|f| (f.timestamp_ns, SensorKind::Lidar, f.index)));
    }
    if let Some(c) = &m.camera {
        order.extend(c.frames.iter().map(|f| (f.timestamp_ns, SensorKind::Camera, f.index)));
    }
    let imu_rows = if m.imu.is_some() {
        lines("imu.txt")?.split_off(1)
    } else {
        Vec::new()
    };
    for (k, row) in imu_rows.iter().enumerate() {
        let t = crate::io::text::parse_ns(row.split(',').next().unwrap_or(""))?;
        order.push((t, SensorKind::Imu, k));
    }
    order.sort();
    let poses = if m.lidar.is_some() { lines("poses.txt")? } else { Vec::new() };
    let cam = m.sensors.camera.clone();
    let mut sent = 0;
    let mut send = |kind, t: i64, payload: Vec<u8>| -> Result<()> {
        sent += 1;
        sink.publish(StreamMessage::new(kind, u64_ns(t), payload))
    };
    for (t, kind, idx) in order {
        let name = frame_name(idx);
        match kind {
            SensorKind::Lidar => {
                send(MessageType::PointCloud, t, read(format!("velodyne/{name}.bin"))?)?;
                send(MessageType::Labels, t, read(format!("labels/{name}.label"))?)?;
                let line = poses
                    .get(idx)
                    .ok_or_else(|| Error::format(format!("poses.txt lacks frame {idx}")))?;
                send(MessageType::Pose, t, line.clone().into_bytes())?;
            }
            SensorKind::Camera => {
                let c = cam
                    .as_ref()
                    .ok_or_else(|| Error::format("manifest lists camera frames without a camera"))?;
                if c.depth {
                    send(MessageType::DepthImage, t, read(format!("depth/{name}.png"))?)?;
                }
                if c.segmentation {
                    send(MessageType::SegImage, t, read(format!("seg/{name}.png"))?)?;
                }
                if c.shaded {
                    send(MessageType::RgbImage, t, read(format!("rgb/{name}.png"))?)?;
                }
            }
            SensorKind::Imu => send(MessageType::Imu, t, imu_rows[idx].clone().into_bytes())?,
        }
    }
    Ok(sent)
}

/// Depth image in metres from a stored PNG.
pub fn read_depth_m(path: &Path, unit_mm: u32) -> Result<(u32, u32, Vec<f64>)> {
    let (w, h, v) = decode_depth_png(&std::fs::read(path)?)?;
    Ok((w, h, v.into_iter().map(|u| u as f64 * unit_mm as f64 / 1000.0).collect()))
}
