//! Acceptance suite. Each test prints one `ACn PASS|FAIL` line to stdout
//! (uncaptured) and fails when its criterion is not met.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use railsim_core::geom::{rotation_from_euler, Pose, Vec3};
use railsim_core::io::images::{decode_depth_png, decode_seg_png, encode_depth_png, encode_seg_png, quantize_depth};
use railsim_core::io::kitti::{decode_bin, decode_labels, encode_bin, encode_labels, format_poses, parse_poses};
use railsim_core::io::stream::{MessageType, StreamDecoder, StreamMessage};
use railsim_core::io::text::{format_imu, parse_imu};
use railsim_core::metrics::{icp_align, odometry_report, pc_rmse, IcpParams, RigidTransform};
use railsim_core::multitrack::{build_railroad, duplicate_main, generate_auxiliaries, AuxParams};
use railsim_core::pipeline::{build_world, Scenario, ScenarioConfig, Sensors};
use railsim_core::raycast::{cast_brute_force, Accelerator, Ray, DEFAULT_T_MIN};
use railsim_core::rng::CounterNoise;
use railsim_core::routegen::{generate_route, generate_trajectory, velocity_profile, BlockType, RouteParams, TrackPart};
use railsim_core::scene::{Material, Scene, SceneObject, SemanticClass, TracedScene};
use railsim_core::sensors::lidar::raw_intensity;
use railsim_core::sensors::{
    backscatter_intensity, lidar_scan, scan_pattern, DepthImage, Imu, ImuConfig, ImuSample, ImuTruth, LidarConfig, LidarPoint,
    SegImage,
};
use railsim_core::terrain::{TerrainModel, TrackIndex, TILE};
use railsim_core::timeline::{build_timeline, schedule};
use railsim_core::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn verdict(id: u32, title: &str, pass: bool, detail: String) {
    let line = format!("\nAC{id:<2} {} {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "AC{id} {title}: {detail}");
}

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A short generated world shared by the geometry criteria.
fn small_scenario(seed: u64) -> Scenario {
    let mut c = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    c.route.n_blocks = 5;
    c.route.straight_length = [100.0, 160.0];
    c.route.curve_length = [80.0, 120.0];
    c.route.p_bridge = 0.3;
    c.route.p_station = 0.3;
    c.terrain.spacing_m = 2.0;
    c.terrain.margin_m = 80.0;
    c.terrain.keep_radius_m = 150.0;
    c.scene.terrain_band_m = 70.0;
    c.scene.placement_band_m = 50.0;
    Scenario::new(c, Sensors::default()).unwrap()
}

// 1 ---------------------------------------------------------------------------

fn run_cli(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_railsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "railsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn ac01_determinism_and_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("scenario.json"),
        r#"{
  "seed": 7,
  "route": {"n_blocks": 4, "straight_length": [300, 360], "curve_length": [180, 240]},
  "sensors": {"lidar": "lidar.json", "camera": "camera.json", "imu": "imu.json"},
  "window": {"max_frames": 100}
}"#,
    )
    .unwrap();
    std::fs::write(d.join("lidar.json"), "{}").unwrap();
    std::fs::write(d.join("camera.json"), r#"{"width": 640, "height": 360}"#).unwrap();
    std::fs::write(d.join("imu.json"), "{}").unwrap();
    let mut seconds = Vec::new();
    for run in ["a", "b"] {
        let t0 = Instant::now();
        let (r, w, o) = (format!("{run}/route"), format!("{run}/world"), format!("{run}/data"));
        run_cli(&["route", "--config", "scenario.json", "--out", &r], d);
        run_cli(&["world", "--config", "scenario.json", "--route", &r, "--out", &w], d);
        let traj = format!("{r}/trajectory.csv");
        run_cli(
            &[
                "simulate",
                "--config",
                "scenario.json",
                "--world",
                &w,
                "--trajectory",
                &traj,
                "--out",
                &o,
            ],
            d,
        );
        seconds.push(t0.elapsed().as_secs_f64());
    }
    let a = read_tree(&d.join("a"));
    let b = read_tree(&d.join("b"));
    let route: serde_json::Value = serde_json::from_slice(&a["route/route.json"]).unwrap();
    let n_pts = route["points"].as_array().unwrap().len();
    let length = (n_pts - 1) as f64 * route["spacing"].as_f64().unwrap();
    let lidar = a.keys().filter(|k| k.starts_with("data/velodyne/")).count();
    let rgb = a.keys().filter(|k| k.starts_with("data/rgb/")).count();
    let worst = seconds.iter().copied().fold(0.0, f64::max);
    let pass = a == b && length >= 1000.0 && lidar == 100 && rgb == 100 && worst <= 300.0;
    verdict(
        1,
        "determinism and runtime",
        pass,
        format!(
            "{} files identical={} route {length:.0} m, {lidar} lidar + {rgb} camera frames, slowest run {worst:.1} s (budget 300 s)",
            a.len(),
            a == b
        ),
    );
}

// 2 ---------------------------------------------------------------------------

#[test]
fn ac02_terrain_blend_regions() {
    let s = small_scenario(21);
    let route = s.build_route().unwrap();
    let world = build_world(&s, route).unwrap();
    let p = &s.config.terrain;
    let model = TerrainModel::new(&world.railroad, p, s.config.seed).unwrap();
    let oracle = TrackIndex::from_railroad(&world.railroad).unwrap();
    let map = &world.map;
    let size = TILE as f64 * map.spacing;
    let mut r = rng(2);
    let (mut near, mut far, mut mid, mut bad, mut worst_mid) = (0, 0, 0, 0, 0.0f64);
    let kept: Vec<_> = map.kept().collect();
    // Half the samples anywhere, half close to a track point.
    let pts = oracle.points().to_vec();
    for k in 0..40_000 {
        let t = kept[r.gen_range(0..kept.len())];
        let (col, row) = if k % 2 == 0 {
            (r.gen_range(0..TILE), r.gen_range(0..TILE))
        } else {
            let tp = pts[r.gen_range(0..pts.len())];
            let a = r.gen_range(0.0..std::f64::consts::TAU);
            let rad = r.gen_range(0.0..p.d_far_m * 1.3);
            let (e0, n0) = (map.origin_e + t.grid.0 as f64 * size, map.origin_n + t.grid.1 as f64 * size);
            let c = ((tp.e + rad * a.cos() - e0) / map.spacing).round();
            let rr = ((tp.n + rad * a.sin() - n0) / map.spacing).round();
            if c < 0.0 || rr < 0.0 || c >= TILE as f64 || rr >= TILE as f64 {
                continue;
            }
            (c as usize, rr as usize)
        };
        let e = map.origin_e + t.grid.0 as f64 * size + col as f64 * map.spacing;
        let n = map.origin_n + t.grid.1 as f64 * size + row as f64 * map.spacing;
        if model.valleys.iter().any(|v| v.weight(e, n) > 0.0) {
            continue;
        }
        let h = t.at(col, row);
        let (d, i) = oracle.nearest_linear(e, n);
        let tp = oracle.points()[i];
        let (dn, df) = if tp.station {
            p.station_band()
        } else {
            (p.d_near_m, p.d_far_m)
        };
        let noise = model.noise.height(e, n);
        if d <= dn {
            near += 1;
            bad += (h != tp.up) as usize;
        } else if d >= df {
            far += 1;
            bad += (h != noise) as usize;
        } else {
            mid += 1;
            let f = (d - dn) / (df - dn);
            let err = (h - (tp.up * (1.0 - f) + noise * f)).abs();
            worst_mid = worst_mid.max(err);
            bad += (err > 1e-9) as usize;
        }
    }
    let pass = bad == 0 && near > 500 && far > 500 && mid > 500;
    verdict(
        2,
        "terrain blend regions",
        pass,
        format!("{near} near exact, {far} far exact, {mid} blended (max err {worst_mid:.2e} <= 1e-9), {bad} mismatches"),
    );
}

// 3 ---------------------------------------------------------------------------

#[test]
fn ac03_raycast_matches_exhaustive_scan() {
    let mut r = rng(3);
    let tris: Vec<[Vec3; 3]> = (0..12_000)
        .map(|_| {
            let c = Vec3::new(r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0), r.gen_range(-10.0..10.0));
            let mut v = || c + Vec3::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
            [v(), v(), v()]
        })
        .collect();
    let accel = Accelerator::build(&tris);
    let (mut hits, mut bad, mut worst) = (0, 0, 0.0f64);
    let n_rays = 2000;
    for _ in 0..n_rays {
        let o = Vec3::new(r.gen_range(-60.0..60.0), r.gen_range(-60.0..60.0), r.gen_range(-12.0..12.0));
        let d = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let ray = Ray::new(o, d, 200.0);
        match (accel.cast(&ray), cast_brute_force(&tris, &ray, DEFAULT_T_MIN)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                hits += 1;
                worst = worst.max((a.t - b.t).abs());
                bad += ((a.t - b.t).abs() > 1e-6 || a.triangle != b.triangle) as usize;
            }
            _ => bad += 1,
        }
    }
    verdict(
        3,
        "ray-cast oracle equivalence",
        bad == 0 && hits > 500,
        format!(
            "{n_rays} rays on {} triangles, {hits} hits, max |dt| {worst:.1e} (<= 1e-6), {bad} mismatches",
            tris.len()
        ),
    );
}

// 4 ---------------------------------------------------------------------------

#[test]
fn ac04_vlp16_scan_pattern() {
    let cfg = LidarConfig::default();
    let pattern = scan_pattern(&cfg);
    let el = cfg.elevations();
    let spacing_ok = el.windows(2).all(|w| ((w[1] - w[0]).to_degrees() - 2.0).abs() < 1e-9);
    let beams = pattern.iter().map(|r| r.beam).max().unwrap() + 1;
    let pass = pattern.len() == 28_800 && cfg.rays_per_scan() == 28_800 && beams == 16 && spacing_ok;
    verdict(
        4,
        "VLP-16 scan pattern",
        pass,
        format!(
            "{} rays per revolution (28800), {beams} beams, 2 deg spacing {spacing_ok}",
            pattern.len()
        ),
    );
}

// 5 ---------------------------------------------------------------------------

fn wall_scene() -> TracedScene {
    let m = Material::new(0.6, 0.0, 90.0, 0.5);
    let big = 1000.0;
    // Wall at x = 10 and floor at z = -2.
    let wall = vec![
        [
            Vec3::new(10.0, -big, -big),
            Vec3::new(10.0, big, -big),
            Vec3::new(10.0, big, big),
        ],
        [
            Vec3::new(10.0, -big, -big),
            Vec3::new(10.0, big, big),
            Vec3::new(10.0, -big, big),
        ],
    ];
    let floor = vec![
        [
            Vec3::new(-big, -big, -2.0),
            Vec3::new(big, -big, -2.0),
            Vec3::new(big, big, -2.0),
        ],
        [
            Vec3::new(-big, -big, -2.0),
            Vec3::new(big, big, -2.0),
            Vec3::new(-big, big, -2.0),
        ],
    ];
    let objs = vec![
        SceneObject::new(0, SemanticClass::Building, m, wall),
        SceneObject::new(1, SemanticClass::Terrain, m, floor),
    ];
    TracedScene::new(Scene::from_objects(objs).unwrap())
}

fn closed_form_range(dir: &Vec3, range: f64) -> Option<f64> {
    let mut t = f64::INFINITY;
    if dir.x > 0.0 {
        t = t.min(10.0 / dir.x);
    }
    if dir.z < 0.0 {
        t = t.min(-2.0 / dir.z);
    }
    (t <= range).then_some(t)
}

#[test]
fn ac05_lidar_geometric_fidelity() {
    let scene = wall_scene();
    let pose = Pose::identity(railsim_core::geom::FrameTag::Enu);
    let cfg = LidarConfig::default();
    let pattern = scan_pattern(&cfg);
    let noise = CounterNoise::new(5, "lidar");
    let cloud = lidar_scan(&pose, &cfg, &pattern, &scene, &noise, 0, 0);
    let dirs: BTreeMap<(u16, u32), Vec3> = pattern.iter().map(|r| ((r.beam, r.azimuth), r.dir)).collect();
    let expected = pattern
        .iter()
        .filter(|r| closed_form_range(&r.dir, cfg.range_m).is_some())
        .count();
    let mut worst = 0.0f64;
    for p in &cloud.points {
        let dir = dirs[&(p.beam, p.azimuth)];
        let t = closed_form_range(&dir, cfg.range_m).unwrap_or(f64::NAN);
        worst = worst.max((p.position() - dir * t).norm());
    }
    // Noise: a block of rays re-scanned 10^4 times.
    let sigma = 0.05;
    let ncfg = LidarConfig {
        horizontal_fov_deg: 1.0,
        range_noise_sigma_m: sigma,
        ..LidarConfig::default()
    };
    let npat = scan_pattern(&ncfg);
    let reps = 10_000;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); npat.len()];
    for f in 0..reps {
        let c = lidar_scan(&pose, &ncfg, &npat, &scene, &noise, f, 0);
        for p in &c.points {
            let i = npat.iter().position(|r| r.beam == p.beam && r.azimuth == p.azimuth).unwrap();
            let t = p.position().norm();
            sums[i].0 += t;
            sums[i].1 += t * t;
            sums[i].2 += 1;
        }
    }
    let mut worst_rel = 0.0f64;
    let mut rays = 0;
    for (s, s2, n) in sums.iter().filter(|x| x.2 == reps as usize) {
        let n = *n as f64;
        let var = (s2 - s * s / n) / (n - 1.0);
        worst_rel = worst_rel.max((var.sqrt() / sigma - 1.0).abs());
        rays += 1;
    }
    let pass = cloud.points.len() == expected && worst <= 1e-4 && rays > 0 && worst_rel <= 0.05;
    verdict(
        5,
        "LiDAR geometric fidelity",
        pass,
        format!(
            "{} returns (expected {expected}), max position error {worst:.1e} m (<= 1e-4); noise sd over {reps} repeats on {rays} rays within {:.2}% of sigma (<= 5%)",
            cloud.points.len(),
            worst_rel * 100.0
        ),
    );
}

// 6 ---------------------------------------------------------------------------

#[test]
fn ac06_intensity_properties() {
    let diffuse = Material::new(0.8, 0.0, 80.0, 0.5);
    let d_ref = LidarConfig::default().intensity_reference_m;
    let mut in_range = true;
    for m in [
        diffuse,
        Material::new(0.2, 0.9, 40.0, 0.1),
        Material::new(1.0, 1.0, 90.0, 0.05),
    ] {
        for i in 1..200 {
            for j in 0..=90 {
                let v = raw_intensity(i as f64, (j as f64).to_radians().cos(), &m, d_ref);
                in_range &= (0.0..=255.0).contains(&v) && v.is_finite();
            }
        }
    }
    let beyond = backscatter_intensity(30.0, 81f64.to_radians().cos(), &diffuse, d_ref) == 0
        && raw_intensity(30.0, 85f64.to_radians().cos(), &diffuse, d_ref) == 0.0;
    let d = 40.0;
    let i0 = raw_intensity(d, 1.0, &diffuse, d_ref);
    let i60 = raw_intensity(d, 60f64.to_radians().cos(), &diffuse, d_ref);
    let i2d = raw_intensity(2.0 * d, 1.0, &diffuse, d_ref);
    let q0 = backscatter_intensity(d, 1.0, &diffuse, d_ref) as f64;
    let q60 = backscatter_intensity(d, 60f64.to_radians().cos(), &diffuse, d_ref) as f64;
    let q2d = backscatter_intensity(2.0 * d, 1.0, &diffuse, d_ref) as f64;
    let cos_ok = (i60 - i0 / 2.0).abs() <= 1.0 && (q60 - q0 / 2.0).abs() <= 1.0;
    let sq_ok = (i2d - i0 / 4.0).abs() <= 1.0 && (q2d - q0 / 4.0).abs() <= 1.0;
    verdict(
        6,
        "intensity properties",
        in_range && beyond && cos_ok && sq_ok && i0 > 4.0,
        format!(
            "range ok {in_range}, zero beyond max incidence {beyond}, I(0)={i0:.3} I(60deg)={i60:.3} I(2d)={i2d:.3}, quantized {q0}/{q60}/{q2d}"
        ),
    );
}

// 7 ---------------------------------------------------------------------------

fn still(yaw: f64, pitch: f64, roll: f64) -> ImuTruth {
    ImuTruth {
        accel_ned: Vec3::zeros(),
        omega_body: Vec3::zeros(),
        yaw,
        pitch,
        roll,
    }
}

#[test]
fn ac07_imu_suite() {
    // Stationary and noiseless: exactly the rotated gravity vector.
    let cfg = ImuConfig::default();
    let mut imu = Imu::new(&cfg, 1).unwrap();
    let mut exact = true;
    for (k, (y, p, r)) in [(0.0, 0.0, 0.0), (0.7, 0.1, -0.05), (-2.0, -0.2, 0.3)]
        .into_iter()
        .enumerate()
    {
        let s = imu.sample(k as u64, 0, &still(y, p, r)).unwrap();
        let c = rotation_from_euler(y, p, r).inverse();
        exact &= s.accel == c * Vec3::new(0.0, 0.0, cfg.gravity_mps2);
    }
    // Quantization multiples.
    let mut q = ImuConfig::default();
    q.accel.quantization = 0.01;
    q.accel.noise_density = 0.003;
    let mut imu = Imu::new(&q, 2).unwrap();
    let mut multiples = true;
    for k in 0..2000 {
        let s = imu.sample(k, 0, &still(0.3, 0.05, 0.0)).unwrap();
        for v in s.accel.iter() {
            multiples &= (v / 0.01).round() * 0.01 == *v;
        }
    }
    // White noise.
    let mut w = ImuConfig::default();
    w.accel.noise_density = 0.002;
    let mut imu = Imu::new(&w, 9).unwrap();
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|k| imu.sample(k, 0, &still(0.0, 0.0, 0.0)).unwrap().accel.x)
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let expected_sd = 0.002 / 0.01f64.sqrt();
    let white_err = (sd / expected_sd - 1.0).abs();
    // Random walk: least-squares slope of variance against time.
    let mut rw = ImuConfig::default();
    rw.accel.random_walk = 0.05;
    // Each axis is an independent walk; gravity is removed from z.
    let (runs, steps) = (3000usize, 400usize);
    let mut sum2 = vec![0.0; steps];
    for seed in 0..runs {
        let mut imu = Imu::new(&rw, seed as u64).unwrap();
        for (k, acc) in sum2.iter_mut().enumerate() {
            let a = imu.sample(k as u64, 0, &still(0.0, 0.0, 0.0)).unwrap().accel;
            let a = a - Vec3::new(0.0, 0.0, rw.gravity_mps2);
            *acc += a.norm_squared();
        }
    }
    let t: Vec<f64> = (0..steps).map(|k| k as f64 * 0.01).collect();
    let var: Vec<f64> = sum2.iter().map(|s| s / (3 * runs) as f64).collect();
    let slope = t.iter().zip(&var).map(|(a, b)| a * b).sum::<f64>() / t.iter().map(|a| a * a).sum::<f64>();
    let rw_err = (slope / 0.0025 - 1.0).abs();
    verdict(
        7,
        "IMU suite",
        exact && multiples && white_err <= 0.05 && rw_err <= 0.10,
        format!(
            "stationary exact {exact}, quantization exact {multiples}, white sd error {:.2}% (<= 5%), random-walk slope error {:.2}% (<= 10%)",
            white_err * 100.0,
            rw_err * 100.0
        ),
    );
}

// 8 ---------------------------------------------------------------------------

#[test]
fn ac08_timing_decoupling() {
    let ts = 10_000_000;
    let lidar = schedule("lidar", 0.1, ts, 0).unwrap();
    let events = build_timeline(1000, ts, std::slice::from_ref(&lidar));
    let every_tenth = events
        .iter()
        .enumerate()
        .all(|(i, e)| e.sample == 10 * i && e.timestamp_ns == (10 * i) as i64 * ts);
    let rejected = match schedule("odd", 0.025, ts, 0) {
        Err(Error::Schedule { sensor, .. }) => sensor == "odd",
        _ => false,
    };
    verdict(
        8,
        "timing decoupling",
        lidar.multiple == 10 && every_tenth && events.len() == 100 && rejected,
        format!(
            "100 ms lidar every {} samples over {} events, 25 ms rejected with named error {rejected}",
            lidar.multiple,
            events.len()
        ),
    );
}

// 9 ---------------------------------------------------------------------------

#[test]
fn ac09_icp_and_metrics() {
    let s = small_scenario(33);
    let route = s.build_route().unwrap();
    let world = build_world(&s, route).unwrap();
    let c = &s.config;
    let prof = velocity_profile(&world.route, &c.train, &c.speed_caps);
    let samples = generate_trajectory(&world.route, &prof, &c.train).unwrap();
    let scene = TracedScene::new(world.scene.clone());
    let cfg = LidarConfig::default();
    let vehicle = railsim_core::timeline::vehicle_pose(&samples[samples.len() / 2]);
    let pose = railsim_core::sensors::sensor_pose(
        &vehicle,
        &railsim_core::sensors::Mount {
            translation_m: [0.0, 0.0, 3.0],
            rpy_deg: [0.0, 0.0, 0.0],
        },
    );
    let cloud = lidar_scan(&pose, &cfg, &scan_pattern(&cfg), &scene, &CounterNoise::new(1, "lidar"), 0, 0);
    let src: Vec<Vec3> = cloud.points.iter().map(LidarPoint::position).step_by(2).collect();

    let id = icp_align(&src, &src, &RigidTransform::identity(), &IcpParams::default()).unwrap();
    let identity_ok = id.residual() == 0.0 && id.transform == RigidTransform::identity();

    let truth = RigidTransform::from_yaw_deg(2.0, Vec3::new(0.5, 0.2, 0.0));
    let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
    let r = icp_align(&src, &dst, &RigidTransform::identity(), &IcpParams::default()).unwrap();
    let dt = (r.transform.translation - truth.translation).norm();
    let da = r.transform.angle_to_deg(&truth);
    let monotone = r.residuals.windows(2).all(|w| w[1] <= w[0]);

    // Sparse cloud, points at least 1 m apart, shifted by 0.1 m.
    let mut g = rng(9);
    let sparse: Vec<Vec3> = (0..500)
        .map(|k| {
            let (i, j) = ((k % 25) as f64, (k / 25) as f64);
            Vec3::new(
                3.0 * i + g.gen_range(-0.5..0.5),
                3.0 * j + g.gen_range(-0.5..0.5),
                g.gen_range(-0.5..0.5),
            )
        })
        .collect();
    let shifted: Vec<Vec3> = sparse.iter().map(|p| p + Vec3::new(0.1, 0.0, 0.0)).collect();
    let rmse = pc_rmse(&sparse, &shifted, None).unwrap();

    let gt: Vec<Pose> = (0..=100)
        .map(|k| {
            Pose::new(
                Vec3::new(k as f64, 0.0, 0.0),
                railsim_core::geom::Rotation::identity(),
                railsim_core::geom::FrameTag::Enu,
            )
        })
        .collect();
    let est = vec![RigidTransform::from_yaw_deg(0.0, Vec3::new(1.1, 0.0, 0.0)); 100];
    let eod = odometry_report(&est, &gt).unwrap().steps.last().unwrap().eod_pct;

    let pass = identity_ok && dt <= 0.01 && da <= 0.1 && monotone && (rmse - 0.1).abs() <= 1e-9 && (eod - 10.0).abs() <= 1e-9;
    verdict(
        9,
        "ICP and metrics",
        pass,
        format!(
            "identity {identity_ok}; known motion on {} scan points recovered to {dt:.2e} m / {da:.2e} deg in {} iterations (<= 0.01 m / 0.1 deg); RMSE {rmse:.12} (0.1 +- 1e-9); final EOD {eod:.9}% (10%)",
            src.len(),
            r.residuals.len() - 1
        ),
    );
}

// 10 --------------------------------------------------------------------------

#[test]
fn ac10_formats_round_trip() {
    let one = LidarPoint {
        x: 1.0,
        y: 2.0,
        z: 3.0,
        intensity: 255,
        class: 0,
        instance: 0,
        beam: 0,
        azimuth: 0,
    };
    let golden: [u8; 16] = [0, 0, 0x80, 0x3f, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40, 0, 0, 0x80, 0x3f];
    let golden_ok = encode_bin(&[one]) == golden;

    let mut g = rng(10);
    let pts: Vec<LidarPoint> = (0..5000)
        .map(|_| LidarPoint {
            x: g.gen_range(-100.0f32..100.0) as f64,
            y: g.gen_range(-100.0f32..100.0) as f64,
            z: g.gen_range(-10.0f32..10.0) as f64,
            intensity: g.gen(),
            class: g.gen_range(0..13),
            instance: g.gen(),
            beam: 0,
            azimuth: 0,
        })
        .collect();
    let bin = decode_bin(&encode_bin(&pts)).unwrap();
    let labels = decode_labels(&encode_labels(&pts)).unwrap();
    let cloud_ok = pts.iter().zip(&bin).zip(&labels).all(|((p, b), l)| {
        (b[0] as f64).to_bits() == p.x.to_bits()
            && (b[1] as f64).to_bits() == p.y.to_bits()
            && (b[2] as f64).to_bits() == p.z.to_bits()
            && b[3] == p.intensity as f32 / 255.0
            && *l == p.class as u32 | (p.instance as u32) << 16
    }) && bin.len() == pts.len()
        && encode_bin(&[]).is_empty();

    let poses: Vec<Pose> = (0..50)
        .map(|k| {
            Pose::new(
                Vec3::new(g.gen_range(-1e3..1e3), g.gen_range(-1e3..1e3), k as f64 * 0.1),
                rotation_from_euler(g.gen_range(-3.0..3.0), g.gen_range(-0.3..0.3), g.gen_range(-0.3..0.3)),
                railsim_core::geom::FrameTag::Enu,
            )
        })
        .collect();
    let back = parse_poses(&format_poses(&poses)).unwrap();
    let poses_ok = back.iter().zip(&poses).all(|(a, b)| a.matrix3x4() == b.matrix3x4());

    let depth = DepthImage {
        width: 64,
        height: 32,
        data: (0..2048).map(|_| g.gen_range(0.0..65.0)).collect(),
    };
    let units = quantize_depth(&depth, 1);
    let depth_ok = decode_depth_png(&encode_depth_png(64, 32, &units).unwrap()).unwrap() == (64, 32, units)
        && quantize_depth(
            &DepthImage {
                width: 1,
                height: 1,
                data: vec![10.0],
            },
            1,
        ) == vec![10000];
    let seg = SegImage {
        width: 50,
        height: 20,
        data: (0..1000).map(|_| g.gen_range(0..13u8)).collect(),
    };
    let seg_ok = decode_seg_png(&encode_seg_png(&seg).unwrap()).unwrap() == seg;

    let imu: Vec<ImuSample> = (0..500)
        .map(|k| ImuSample {
            t_ns: k * 10_000_000,
            accel: Vec3::new(g.gen(), g.gen::<f64>() * 1e-9, -9.8 + g.gen::<f64>()),
            gyro: Vec3::new(g.gen(), g.gen(), g.gen()),
            mag: Vec3::new(g.gen(), g.gen(), g.gen()),
        })
        .collect();
    let imu_ok = parse_imu(&format_imu(&imu)).unwrap() == imu;

    let a = StreamMessage::new(MessageType::PointCloud, 100, encode_bin(&pts[..7]));
    let b = StreamMessage::new(MessageType::Imu, 110, b"0.110000000,1,2,3,4,5,6,7,8,9\n".to_vec());
    let mut buf = a.encode().unwrap();
    buf.extend(b.encode().unwrap());
    let mut splits_ok = 0;
    for split in 0..=buf.len() {
        let mut d = StreamDecoder::default();
        let mut got = Vec::new();
        for part in [&buf[..split], &buf[split..]] {
            d.push(part);
            while let Some(m) = d.next_message().unwrap() {
                got.push(m);
            }
        }
        splits_ok += (got == vec![a.clone(), b.clone()]) as usize;
    }
    let fuzz_ok = splits_ok == buf.len() + 1;

    verdict(
        10,
        "formats round trip",
        golden_ok && cloud_ok && poses_ok && depth_ok && seg_ok && imu_ok && fuzz_ok,
        format!(
            "golden {golden_ok}, bin/label {cloud_ok}, poses {poses_ok}, depth png {depth_ok}, seg png {seg_ok}, imu text {imu_ok}, stream splits {splits_ok}/{}",
            buf.len() + 1
        ),
    );
}

// 11 --------------------------------------------------------------------------

fn polyline_dist(points: &[Vec3], p: &Vec3) -> f64 {
    let q = Vec3::new(p.x, p.y, 0.0);
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (Vec3::new(w[0].x, w[0].y, 0.0), Vec3::new(w[1].x, w[1].y, 0.0));
            let ab = b - a;
            let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (a + ab * t - q).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn ac11_multitrack_geometry() {
    let route = generate_route(
        17,
        &RouteParams {
            n_blocks: 24,
            p_bridge: 0.05,
            p_tunnel: 0.05,
            p_station: 0.05,
            ..RouteParams::default()
        },
    )
    .unwrap();
    let d = 4.0;
    let dup = duplicate_main(&route, d).unwrap();
    let mut dup_worst = 0.0f64;
    let mut dup_n = 0;
    for b in route.blocks.iter().filter(|b| b.kind.is_straight_geometry()) {
        for i in (b.start()..b.end()).step_by(3) {
            dup_worst = dup_worst.max((polyline_dist(&route.points, &dup.points[i]) - d).abs());
            dup_n += 1;
        }
    }
    let params = AuxParams {
        p_spawn: 0.9,
        p_end: 0.3,
        max_parallel: 3,
        inter_track_distance_m: d,
        ..AuxParams::default()
    };
    let rr = build_railroad(&route, &params, 5).unwrap();
    let mut aux_worst = 0.0f64;
    let mut aux_n = 0;
    for aux in rr.auxiliaries() {
        let k = aux.slot.unsigned_abs() as f64;
        for b in aux.blocks.iter().filter(|b| b.part == TrackPart::Parallel) {
            for i in (b.start()..b.end()).step_by(5) {
                aux_worst = aux_worst.max((polyline_dist(&route.points, &aux.points[i]) - k * d).abs());
                aux_n += 1;
            }
        }
    }
    let zero = AuxParams {
        p_spawn: 0.0,
        ..params.clone()
    };
    let base = build_railroad(&route, &zero, 1).unwrap();
    let again = generate_auxiliaries(&route, base.clone(), &zero, 99).unwrap();
    let noop = base == again && again.auxiliaries().count() == 0;
    let straights = route.blocks.iter().filter(|b| b.kind == BlockType::Straight).count();
    verdict(
        11,
        "multitrack geometry",
        dup_worst <= 0.01 && dup_n > 100 && aux_worst <= 0.05 && aux_n > 100 && noop,
        format!(
            "duplicate offset error {dup_worst:.2e} m over {dup_n} points on {straights} straights (<= 0.01), {} auxiliaries slot error {aux_worst:.2e} m over {aux_n} points (<= 0.05), zero spawn no-op {noop}",
            rr.auxiliaries().count()
        ),
    );
}
