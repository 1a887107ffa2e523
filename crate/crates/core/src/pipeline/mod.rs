//! End-to-end orchestration: scenario loading, world building, simulation,
//! dataset export and evaluation.

mod dataset;
mod evaluate;
mod scenario;
mod world;

pub use dataset::{
    plan_events, read_depth_m, render_views, replay_dataset, simulate, DatasetManifest, FrameEntry, FrameSeries, ImuSeries,
    MessageSink, SimOptions, DATASET_FORMAT, MANIFEST,
};
pub use evaluate::{compare_datasets, dataset_odometry, read_lidar_frame, FrameRmse, RmseSummary};
pub use scenario::{RouteImport, Scenario, ScenarioConfig, SensorFiles, SensorKind, Sensors, SimWindow};
pub use world::{build_world, canonical_route, MapLayout, RouteFile, World, WorldInfo, WORLD_FORMAT};
