use std::path::Path;
use std::sync::Mutex;

use railsim_core::io::stream::{MessageType, StreamMessage};
use railsim_core::io::text::parse_imu;
use railsim_core::pipeline::{
    build_world, plan_events, replay_dataset, simulate, Scenario, ScenarioConfig, SensorKind, Sensors, SimOptions, World,
};
use railsim_core::routegen::{generate_trajectory, velocity_profile};
use railsim_core::scene::TracedScene;
use railsim_core::sensors::{CameraConfig, ImuConfig, LidarConfig};

fn small_scenario() -> Scenario {
    let mut c = ScenarioConfig {
        seed: 42,
        ..ScenarioConfig::default()
    };
    c.route.n_blocks = 3;
    c.route.straight_length = [80.0, 100.0];
    c.route.curve_length = [60.0, 80.0];
    c.terrain.spacing_m = 2.0;
    c.terrain.margin_m = 60.0;
    c.terrain.keep_radius_m = 100.0;
    c.scene.terrain_band_m = 60.0;
    c.scene.placement_band_m = 40.0;
    c.window.max_frames = Some(4);
    let sensors = Sensors {
        lidar: Some(LidarConfig {
            horizontal_resolution_deg: 2.0,
            range_noise_sigma_m: 0.02,
            ..LidarConfig::default()
        }),
        camera: Some(CameraConfig {
            width: 48,
            height: 27,
            ..CameraConfig::default()
        }),
        imu: Some(ImuConfig::default()),
    };
    Scenario::new(c, sensors).unwrap()
}

struct Fixture {
    scenario: Scenario,
    world: World,
    samples: Vec<railsim_core::routegen::TrajectorySample>,
}

fn fixture() -> Fixture {
    let scenario = small_scenario();
    let route = scenario.build_route().unwrap();
    let world = build_world(&scenario, route).unwrap();
    let c = &scenario.config;
    let prof = velocity_profile(&world.route, &c.train, &c.speed_caps);
    let samples = generate_trajectory(&world.route, &prof, &c.train).unwrap();
    Fixture {
        scenario,
        world,
        samples,
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dataset_stream_resume_and_replay_agree() {
    let f = fixture();
    let traced = TracedScene::new(f.world.scene.clone());

    // World container round trip.
    let wdir = tempfile::tempdir().unwrap();
    let info = f.world.save(wdir.path()).unwrap();
    let loaded = World::load(wdir.path()).unwrap();
    assert_eq!(loaded.scene.triangles, f.world.scene.triangles);
    assert_eq!(loaded.railroad, f.world.railroad);
    assert_eq!(loaded.route.points, f.world.route.points);
    assert_eq!(info.map.kept.len(), f.world.map.kept().count());
    assert_eq!(
        std::fs::read_dir(wdir.path().join("terrain")).unwrap().count(),
        info.map.kept.len()
    );

    let full = tempfile::tempdir().unwrap();
    let live = Mutex::new(Vec::<StreamMessage>::new());
    let m = simulate(
        &traced,
        &f.samples,
        &f.scenario,
        Some(full.path()),
        Some(&live),
        &SimOptions::default(),
    )
    .unwrap();

    // Frame counts follow the timeline.
    let (_, events) = plan_events(&f.scenario, &f.samples).unwrap();
    let count = |k| events.iter().filter(|(kind, _)| *kind == k).count();
    assert_eq!(m.lidar.as_ref().unwrap().frames.len(), 4);
    assert_eq!(count(SensorKind::Lidar), 4);
    assert_eq!(m.camera.as_ref().unwrap().frames.len(), count(SensorKind::Camera));
    assert_eq!(m.imu.as_ref().unwrap().samples, count(SensorKind::Imu));
    assert_eq!(std::fs::read_dir(full.path().join("velodyne")).unwrap().count(), 4);
    let imu = parse_imu(&std::fs::read_to_string(full.path().join("imu.txt")).unwrap()).unwrap();
    assert_eq!(imu.len(), count(SensorKind::Imu));
    // Co-timed LiDAR and camera frames share index and timestamp.
    for (a, b) in m
        .lidar
        .as_ref()
        .unwrap()
        .frames
        .iter()
        .zip(&m.camera.as_ref().unwrap().frames)
    {
        assert_eq!((a.index, a.timestamp_ns), (b.index, b.timestamp_ns));
    }

    // Streamed payloads equal the files.
    let live = live.into_inner().unwrap();
    let clouds: Vec<_> = live.iter().filter(|x| x.kind == MessageType::PointCloud).collect();
    assert_eq!(clouds.len(), 4);
    for (i, msg) in clouds.iter().enumerate() {
        let disk = std::fs::read(full.path().join(format!("velodyne/{i:06}.bin"))).unwrap();
        assert_eq!(msg.payload, disk);
        assert_eq!(msg.timestamp_ns as i64, m.lidar.as_ref().unwrap().frames[i].timestamp_ns);
    }
    let depth: Vec<_> = live.iter().filter(|x| x.kind == MessageType::DepthImage).collect();
    assert_eq!(depth[2].payload, std::fs::read(full.path().join("depth/000002.png")).unwrap());

    // Replaying the stored dataset reproduces the live stream.
    let replayed = Mutex::new(Vec::new());
    assert_eq!(replay_dataset(full.path(), &replayed).unwrap(), live.len());
    assert_eq!(replayed.into_inner().unwrap(), live);

    // Same seed, second run: identical tree.
    let again = tempfile::tempdir().unwrap();
    simulate(
        &traced,
        &f.samples,
        &f.scenario,
        Some(again.path()),
        None,
        &SimOptions::default(),
    )
    .unwrap();
    assert_eq!(tree(full.path()), tree(again.path()));

    // Resuming at frame 2 rewrites the remaining frames identically.
    let resumed = tempfile::tempdir().unwrap();
    simulate(
        &traced,
        &f.samples,
        &f.scenario,
        Some(resumed.path()),
        None,
        &SimOptions { resume_from: 2 },
    )
    .unwrap();
    let full_tree = tree(full.path());
    let res_tree = tree(resumed.path());
    for (name, bytes) in &res_tree {
        let orig = full_tree.iter().find(|(n, _)| n == name).unwrap();
        assert_eq!(&orig.1, bytes, "{name}");
    }
    assert!(res_tree.iter().all(|(n, _)| !n.contains("000000") && !n.contains("000001")));
    assert!(res_tree.iter().any(|(n, _)| n.ends_with("velodyne/000003.bin")));
}

#[test]
fn empty_densities_give_track_only_world() {
    let mut s = small_scenario();
    s.config.scene.densities = railsim_core::scene::Densities::zero();
    let route = s.build_route().unwrap();
    let w = build_world(&s, route).unwrap();
    let classes: std::collections::BTreeSet<_> = w.scene.objects.iter().map(|o| o.class).collect();
    use railsim_core::scene::SemanticClass::*;
    for c in [Tree, Rock, Building, Fence] {
        assert!(!classes.contains(&c));
    }
    assert!(classes.contains(&RailTrack) && classes.contains(&Terrain));
}
