//! Shared fixtures for the benchmarks.

use railsim_core::geom::{Pose, Vec3};
use railsim_core::pipeline::{build_world, Scenario, ScenarioConfig, Sensors, World};
use railsim_core::rng::CounterNoise;
use railsim_core::routegen::{generate_trajectory, velocity_profile, TrajectorySample};

/// `n` small random triangles scattered through a 100 m box.
pub fn random_triangles(n: usize, seed: u64) -> Vec<[Vec3; 3]> {
    let noise = CounterNoise::new(seed, "bench-tris");
    let u = |i: usize, lane: u64, lo: f64, hi: f64| lo + (hi - lo) * noise.uniform(i as u64, lane, 0);
    (0..n)
        .map(|i| {
            let c = Vec3::new(u(i, 0, -50.0, 50.0), u(i, 1, -50.0, 50.0), u(i, 2, -10.0, 10.0));
            let v = |k: u64| {
                c + Vec3::new(
                    u(i, 3 + 3 * k, -2.0, 2.0),
                    u(i, 4 + 3 * k, -2.0, 2.0),
                    u(i, 5 + 3 * k, -2.0, 2.0),
                )
            };
            [v(0), v(1), v(2)]
        })
        .collect()
}

/// A short generated world with its trajectory.
pub fn small_world(seed: u64) -> (Scenario, World, Vec<TrajectorySample>) {
    let mut c = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    c.route.n_blocks = 4;
    c.route.straight_length = [120.0, 160.0];
    c.route.curve_length = [80.0, 120.0];
    c.terrain.spacing_m = 2.0;
    c.terrain.margin_m = 80.0;
    c.terrain.keep_radius_m = 150.0;
    c.scene.terrain_band_m = 70.0;
    c.scene.placement_band_m = 50.0;
    let scenario = Scenario::new(c, Sensors::default()).expect("valid bench scenario");
    let route = scenario.build_route().expect("route");
    let world = build_world(&scenario, route).expect("world");
    let c = &scenario.config;
    let profile = velocity_profile(&world.route, &c.train, &c.speed_caps);
    let samples = generate_trajectory(&world.route, &profile, &c.train).expect("trajectory");
    (scenario, world, samples)
}

/// Roof-mounted sensor pose halfway along the trajectory.
pub fn mid_pose(samples: &[TrajectorySample]) -> Pose {
    let vehicle = railsim_core::timeline::vehicle_pose(&samples[samples.len() / 2]);
    railsim_core::sensors::sensor_pose(
        &vehicle,
        &railsim_core::sensors::Mount {
            translation_m: [0.0, 0.0, 3.0],
            rpy_deg: [0.0, 0.0, 0.0],
        },
    )
}
