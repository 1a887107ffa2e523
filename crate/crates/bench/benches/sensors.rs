use criterion::{criterion_group, criterion_main, Criterion};
use railsim_bench::{mid_pose, small_world};
use railsim_core::rng::CounterNoise;
use railsim_core::scene::TracedScene;
use railsim_core::sensors::{cast_pixels, lidar_scan, scan_pattern, CameraConfig, LidarConfig};

fn lidar(c: &mut Criterion) {
    let (_, world, samples) = small_world(3);
    let scene = TracedScene::new(world.scene.clone());
    let pose = mid_pose(&samples);
    let cfg = LidarConfig::default();
    let pattern = scan_pattern(&cfg);
    let noise = CounterNoise::new(3, "lidar");
    let mut g = c.benchmark_group("sensors");
    g.sample_size(10);
    g.bench_function("vlp16_scan", |b| {
        b.iter(|| lidar_scan(&pose, &cfg, &pattern, &scene, &noise, 0, 0).points.len())
    });
    let cam = CameraConfig {
        width: 320,
        height: 180,
        ..CameraConfig::default()
    };
    g.bench_function("camera_320x180", |b| b.iter(|| cast_pixels(&pose, &cam, &scene).len()));
    g.finish();
}

criterion_group!(benches, lidar);
criterion_main!(benches);
