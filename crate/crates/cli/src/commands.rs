use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use serde::Serialize;

use railsim_core::geom::Vec3;
use railsim_core::io::config::Strictness;
use railsim_core::io::images::{encode_depth_png, encode_rgb_png, encode_seg_png, quantize_depth};
use railsim_core::io::stream::{StreamMessage, StreamServer};
use railsim_core::io::write_atomic;
use railsim_core::metrics::{AzimuthCrop, IcpParams, OdometryReport};
use railsim_core::pipeline::{
    build_world, compare_datasets, dataset_odometry, render_views, replay_dataset, simulate, MessageSink, RmseSummary, RouteFile,
    Scenario, ScenarioConfig, Sensors, SimOptions, World,
};
use railsim_core::routegen::{
    format_route_points, generate_trajectory, read_trajectory, velocity_profile, write_trajectory, TrajectorySample,
};
use railsim_core::scene::TracedScene;
use railsim_core::sensors::{sensor_pose, CameraConfig};
use railsim_core::timeline::vehicle_pose;
use railsim_core::Error as CoreError;

use crate::output::{combined_digest, digest_tree, prepare, write_json, OutputExists};
use crate::{Command, Common, EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME};

/// Invalid command-line input.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Config { .. } | CoreError::Schedule { .. } | CoreError::Infeasible(_) | CoreError::InvalidInput(_) => {
                    EXIT_CONFIG
                }
                CoreError::Io(_) | CoreError::Format(_) | CoreError::Json(_) => EXIT_IO,
            };
        }
        if cause.is::<UsageError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<OutputExists>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_RUNTIME
}

fn load_scenario(c: &Common) -> Result<Scenario> {
    let strictness = if c.lenient { Strictness::Lenient } else { Strictness::Strict };
    let mut s = match &c.config {
        Some(p) => Scenario::load(p, strictness)?,
        None => Scenario::new(ScenarioConfig::default(), Sensors::default())?,
    };
    for w in &s.warnings {
        log::warn!("{w}");
    }
    if let Some(seed) = c.seed {
        s.config.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a ScenarioConfig,
    sensors: &'a Sensors,
    /// Digest over all listed files.
    digest: String,
    files: std::collections::BTreeMap<String, String>,
}

fn finish_manifest(dir: &Path, command: &'static str, s: &Scenario) -> Result<String> {
    let files = digest_tree(dir)?;
    let digest = combined_digest(&files);
    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            tool: "railsim",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: s.config.seed,
            config: &s.config,
            sensors: &s.sensors,
            digest: digest.clone(),
            files,
        },
    )?;
    Ok(digest)
}

fn trajectory_for(s: &Scenario, world: &World, file: Option<&Path>) -> Result<Vec<TrajectorySample>> {
    match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(read_trajectory(&text)?)
        }
        None => {
            let c = &s.config;
            let profile = velocity_profile(&world.route, &c.train, &c.speed_caps);
            Ok(generate_trajectory(&world.route, &profile, &c.train)?)
        }
    }
}

fn parse_pose(text: &str) -> Result<(Vec3, f64)> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| UsageError(format!("--pose: {e}")))?;
    if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
        return Err(UsageError("--pose expects four numbers: north,east,down,yaw_deg".into()).into());
    }
    Ok((Vec3::new(v[0], v[1], v[2]), v[3].to_radians()))
}

struct Paced<'a> {
    inner: &'a dyn MessageSink,
    start: Instant,
    first_ns: Mutex<Option<u64>>,
}

impl MessageSink for Paced<'_> {
    fn publish(&self, msg: StreamMessage) -> railsim_core::Result<()> {
        let first = *self.first_ns.lock().unwrap().get_or_insert(msg.timestamp_ns);
        let due = Duration::from_nanos(msg.timestamp_ns.saturating_sub(first));
        if let Some(wait) = due.checked_sub(self.start.elapsed()) {
            std::thread::sleep(wait);
        }
        self.inner.publish(msg)
    }
}

fn serve(addr: &str, wait_clients: usize, timeout: Duration) -> Result<StreamServer> {
    let server = StreamServer::bind(addr).with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", server.local_addr());
    if wait_clients > 0 && !server.wait_for_clients(wait_clients, timeout) {
        log::warn!("only {} of {wait_clients} clients connected", server.client_count());
    }
    Ok(server)
}

#[derive(Serialize)]
struct ValidationReport {
    dataset: String,
    odometry: Option<OdometryReport>,
    rmse: Option<RmseSummary>,
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Route { common, out } => {
            let s = load_scenario(&common)?;
            let route = s.build_route()?;
            let c = &s.config;
            let profile = velocity_profile(&route, &c.train, &c.speed_caps);
            let samples = generate_trajectory(&route, &profile, &c.train)?;
            prepare(&out, common.force)?;
            write_atomic(&out.join("route.json"), RouteFile::from_route(&route).to_json()?.as_bytes())?;
            write_atomic(&out.join("route.txt"), format_route_points(&route.points).as_bytes())?;
            write_atomic(&out.join("trajectory.csv"), write_trajectory(&samples).as_bytes())?;
            let digest = finish_manifest(&out, "route", &s)?;
            println!(
                "route: {:.1} m in {} blocks, {} trajectory samples ({:.1} s), digest {digest}",
                route.length(),
                route.blocks.len(),
                samples.len(),
                samples.last().map_or(0.0, |x| x.t)
            );
        }
        Command::World { common, route, out } => {
            let s = load_scenario(&common)?;
            let r = match &route {
                Some(dir) => {
                    RouteFile::read(&dir.join("route.json")).with_context(|| format!("reading route from {}", dir.display()))?
                }
                None => s.build_route()?,
            };
            let world = build_world(&s, r)?;
            prepare(&out, common.force)?;
            let info = world.save(&out)?;
            let digest = finish_manifest(&out, "world", &s)?;
            println!(
                "world: {} tracks, {} of {} sub-maps kept, {} objects, {} triangles, digest {digest}",
                info.tracks,
                info.map.kept.len(),
                info.map.tiles_e * info.map.tiles_n,
                info.objects,
                info.triangles
            );
        }
        Command::Simulate {
            common,
            world,
            trajectory,
            out,
            stream,
            wait_clients,
            resume_from,
            max_frames,
            duration,
        } => {
            let mut s = load_scenario(&common)?;
            if max_frames.is_some() {
                s.config.window.max_frames = max_frames;
            }
            if duration.is_some() {
                s.config.window.duration_s = duration;
            }
            s.validate()?;
            if s.sensors.lidar.is_none() && s.sensors.camera.is_none() && s.sensors.imu.is_none() {
                log::warn!("no sensors configured; only the trajectory is written");
            }
            let w = World::load(&world).with_context(|| format!("loading world {}", world.display()))?;
            if w.seed != s.config.seed {
                log::warn!("world seed {} differs from scenario seed {}", w.seed, s.config.seed);
            }
            let samples = trajectory_for(&s, &w, trajectory.as_deref())?;
            if let Some(o) = &out {
                if resume_from > 0 {
                    if !o.join("manifest.json").is_file() {
                        return Err(UsageError(format!("--resume-from needs an existing dataset in {}", o.display())).into());
                    }
                } else {
                    prepare(o, common.force)?;
                }
                write_json(&o.join("scenario.json"), &(&s.config, &s.sensors))?;
            }
            let scene = TracedScene::new(w.scene);
            let server = match &stream {
                Some(addr) => Some(serve(addr, wait_clients, Duration::from_secs(30))?),
                None => None,
            };
            let t0 = Instant::now();
            let sink = server.as_ref().map(|x| x as &dyn MessageSink);
            let m = simulate(&scene, &samples, &s, out.as_deref(), sink, &SimOptions { resume_from })?;
            if let Some(srv) = server {
                srv.finish();
            }
            println!(
                "simulated {} trajectory samples: {} lidar frames, {} camera frames, {} imu samples in {:.1} s",
                m.trajectory_samples,
                m.lidar.as_ref().map_or(0, |l| l.frames.len()),
                m.camera.as_ref().map_or(0, |c| c.frames.len()),
                m.imu.as_ref().map_or(0, |i| i.samples),
                t0.elapsed().as_secs_f64()
            );
        }
        Command::Validate {
            dataset,
            against,
            crop_front,
            stride,
            out,
            force,
        } => {
            let crop = crop_front.then(AzimuthCrop::front_half);
            let (odometry, rmse) = match &against {
                Some(b) => (None, Some(compare_datasets(&dataset, b, crop)?)),
                None => (Some(dataset_odometry(&dataset, &IcpParams::default(), stride)?.1), None),
            };
            if let Some(r) = &odometry {
                print!("{}", r.table());
            }
            if let Some(r) = &rmse {
                println!(
                    "cloud RMSE over {} frames: mean {:.6} m, max {:.6} m",
                    r.frames.len(),
                    r.mean_m,
                    r.max_m
                );
            }
            if let Some(o) = out {
                prepare(&o, force)?;
                if let Some(r) = &odometry {
                    write_atomic(&o.join("odometry.csv"), r.to_csv().as_bytes())?;
                }
                let name = dataset
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                write_json(
                    &o.join("manifest.json"),
                    &ValidationReport {
                        dataset: name,
                        odometry,
                        rmse,
                    },
                )?;
            }
        }
        Command::Preview {
            common,
            world,
            sample,
            pose,
            out,
        } => {
            let s = load_scenario(&common)?;
            let w = World::load(&world).with_context(|| format!("loading world {}", world.display()))?;
            let camera = s.sensors.camera.clone().unwrap_or_else(CameraConfig::default);
            let vehicle = match (&pose, sample) {
                (Some(p), _) => {
                    let (ned, yaw) = parse_pose(p)?;
                    railsim_core::geom::Pose::vehicle_enu(&ned, yaw, 0.0, 0.0)
                }
                (None, k) => {
                    let samples = trajectory_for(&s, &w, None)?;
                    let k = k.unwrap_or(0);
                    let x = samples
                        .get(k)
                        .ok_or_else(|| UsageError(format!("--sample {k} beyond {} samples", samples.len())))?;
                    vehicle_pose(x)
                }
            };
            let cam_pose = sensor_pose(&vehicle, &camera.mount);
            let scene = TracedScene::new(w.scene);
            let (depth, seg, rgb) = render_views(&scene, &cam_pose, &camera, &s.config.ambient);
            prepare(&out, common.force)?;
            write_atomic(
                &out.join("depth.png"),
                &encode_depth_png(depth.width, depth.height, &quantize_depth(&depth, camera.depth_unit()))?,
            )?;
            write_atomic(&out.join("seg.png"), &encode_seg_png(&seg)?)?;
            write_atomic(&out.join("rgb.png"), &encode_rgb_png(&rgb)?)?;
            finish_manifest(&out, "preview", &s)?;
            println!("preview written to {}", out.display());
        }
        Command::Stream {
            dataset,
            listen,
            wait_clients,
            wait_timeout,
            realtime,
        } => {
            if !(wait_timeout >= 0.0 && wait_timeout.is_finite()) {
                return Err(UsageError("--wait-timeout must be non-negative".into()).into());
            }
            let server = serve(&listen, wait_clients, Duration::from_secs_f64(wait_timeout))?;
            let sent = if realtime {
                let paced = Paced {
                    inner: &server,
                    start: Instant::now(),
                    first_ns: Mutex::new(None),
                };
                replay_dataset(&dataset, &paced)?
            } else {
                replay_dataset(&dataset, &server)?
            };
            server.finish();
            println!("sent {sent} messages");
        }
    }
    Ok(())
}
