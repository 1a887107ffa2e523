//! Scenario configuration: one JSON file plus one file per sensor.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::config::{load_config, parse_config, Strictness};
use crate::multitrack::AuxParams;
use crate::routegen::{generate_route, read_route_points, Route, RouteParams, SpeedCaps, TrainParams};
use crate::scene::SceneParams;
use crate::sensors::{AmbientConfig, CameraConfig, ImuConfig, LidarConfig};
use crate::terrain::TerrainParams;
use crate::timeline::{schedule, SensorSchedule};

use super::world::canonical_route;

/// How an external NED point file is turned into a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteImport {
    pub spacing_m: f64,
    /// Smoothing-spline weight; 0 interpolates.
    pub smoothing: f64,
    /// Stretches with a smaller local radius become curve blocks, m.
    pub curve_radius_threshold_m: f64,
}

impl Default for RouteImport {
    fn default() -> Self {
        RouteImport {
            spacing_m: 1.0,
            smoothing: 0.0,
            curve_radius_threshold_m: 3000.0,
        }
    }
}

/// Sensor configuration files, relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorFiles {
    pub lidar: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub imu: Option<PathBuf>,
}

/// Part of the trajectory to simulate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimWindow {
    /// Simulated time from departure, s. Unset runs to the end of the route.
    pub duration_s: Option<f64>,
    /// Cap on LiDAR and camera frames. The IMU stops with the last kept frame.
    pub max_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub route: RouteParams,
    /// NED point file used instead of a generated route.
    pub route_file: Option<PathBuf>,
    pub route_import: RouteImport,
    pub train: TrainParams,
    pub speed_caps: SpeedCaps,
    pub multitrack: AuxParams,
    pub terrain: TerrainParams,
    pub scene: SceneParams,
    pub sensors: SensorFiles,
    pub ambient: AmbientConfig,
    pub window: SimWindow,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            route: RouteParams::default(),
            route_file: None,
            route_import: RouteImport::default(),
            train: TrainParams::default(),
            speed_caps: SpeedCaps::default(),
            multitrack: AuxParams::default(),
            terrain: TerrainParams::default(),
            scene: SceneParams::default(),
            sensors: SensorFiles::default(),
            ambient: AmbientConfig::default(),
            window: SimWindow::default(),
        }
    }
}

/// Effective sensor configurations. At most one sensor of each type.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sensors {
    pub lidar: Option<LidarConfig>,
    pub camera: Option<CameraConfig>,
    pub imu: Option<ImuConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Lidar,
    Camera,
    Imu,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Lidar => "lidar",
            SensorKind::Camera => "camera",
            SensorKind::Imu => "imu",
        }
    }
}

/// Adds a section prefix to configuration error paths.
pub(crate) fn within<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { path, message } if !path.starts_with(&format!("{section}.")) => Error::Config {
            path: format!("{section}.{path}"),
            message,
        },
        e => e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub sensors: Sensors,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig, sensors: Sensors) -> Result<Self> {
        let s = Scenario {
            config,
            sensors,
            base_dir: PathBuf::from("."),
            warnings: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str, source: &str, base_dir: &Path, strictness: Strictness) -> Result<Self> {
        let (config, mut warnings): (ScenarioConfig, _) = parse_config(text, source, strictness)?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let mut sensors = Sensors::default();
        if let Some(p) = &config.sensors.lidar {
            let (c, w) = load_config(&resolve(p), strictness)?;
            sensors.lidar = Some(c);
            warnings.extend(w);
        }
        if let Some(p) = &config.sensors.camera {
            let (c, w) = load_config(&resolve(p), strictness)?;
            sensors.camera = Some(c);
            warnings.extend(w);
        }
        if let Some(p) = &config.sensors.imu {
            let (c, w) = load_config(&resolve(p), strictness)?;
            sensors.imu = Some(c);
            warnings.extend(w);
        }
        let s = Scenario {
            config,
            sensors,
            base_dir: base_dir.to_path_buf(),
            warnings,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path, strictness: Strictness) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base, strictness)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.route_file.is_none() {
            within("route", c.route.validate())?;
        } else {
            let r = &c.route_import;
            for (name, v) in [
                ("spacing_m", r.spacing_m),
                ("curve_radius_threshold_m", r.curve_radius_threshold_m),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("route_import.{name}"), "must be positive"));
                }
            }
            if !(r.smoothing >= 0.0 && r.smoothing.is_finite()) {
                return Err(Error::config("route_import.smoothing", "must be non-negative"));
            }
        }
        within("train", c.train.validate())?;
        for (name, v) in [
            ("station", c.speed_caps.station),
            ("tunnel", c.speed_caps.tunnel),
            ("bridge", c.speed_caps.bridge),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("speed_caps.{name}"), "must be positive"));
            }
        }
        within("multitrack", c.multitrack.validate())?;
        within("terrain", c.terrain.validate())?;
        within("scene", c.scene.validate())?;
        within("ambient", c.ambient.validate())?;
        if let Some(l) = &self.sensors.lidar {
            l.validate()?;
        }
        if let Some(cam) = &self.sensors.camera {
            cam.validate()?;
        }
        if let Some(i) = &self.sensors.imu {
            i.validate()?;
        }
        if let Some(d) = c.window.duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("window.duration_s", "must be positive"));
            }
        }
        self.schedules()?;
        Ok(())
    }

    /// Acquisition schedules of the configured sensors, in a fixed order.
    pub fn schedules(&self) -> Result<Vec<(SensorKind, SensorSchedule)>> {
        let sample_ns = within("train", self.config.train.sample_period_ns())?;
        let mut out = Vec::new();
        let periods = [
            (SensorKind::Lidar, self.sensors.lidar.as_ref().map(|c| c.period_s)),
            (SensorKind::Camera, self.sensors.camera.as_ref().map(|c| c.period_s)),
            (SensorKind::Imu, self.sensors.imu.as_ref().map(|c| c.period_s)),
        ];
        for (kind, period) in periods {
            if let Some(p) = period {
                out.push((kind, schedule(kind.name(), p, sample_ns, 0)?));
            }
        }
        Ok(out)
    }

    /// The configured route, generated from the seed or imported from file.
    pub fn build_route(&self) -> Result<Route> {
        let c = &self.config;
        let route = match &c.route_file {
            Some(p) => {
                let path = if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
                let pts = read_route_points(&path)?;
                let r = &c.route_import;
                Route::from_points(&pts, r.spacing_m, r.smoothing, r.curve_radius_threshold_m)?
            }
            None => generate_route(c.seed, &c.route)?,
        };
        canonical_route(&route)
    }
}
