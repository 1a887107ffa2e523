//! Inertial measurement unit: accelerometer, gyroscope and magnetometer
//! sharing one error model per axis triad.
//!
//! The accelerometer reads `Q(Mis * C * (a + g) + bias + delta)` where `C`
//! rotates NED vectors into the IMU frame and `g = (0, 0, +g)` in NED. With
//! `specific_force` set the reading is `a - g` instead, the convention of
//! physical accelerometers. The IMU frame is forward-right-down.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{positive, Mount};
use crate::error::{Error, Result};
use crate::geom::{flu_to_frd_rotation, rotation_from_euler, Rotation, Vec3};
use crate::rng::CounterNoise;

/// Error model of one sensor triad. Densities are per-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisNoise {
    /// Constant calibrated bias.
    pub bias: [f64; 3],
    /// White noise density, units per sqrt(Hz).
    pub noise_density: f64,
    /// Steady-state standard deviation of the correlated bias.
    pub bias_instability: f64,
    pub bias_correlation_time_s: f64,
    /// Random walk coefficient, units per sqrt(s).
    pub random_walk: f64,
    /// Output resolution; zero disables quantization.
    pub quantization: f64,
}

impl Default for AxisNoise {
    fn default() -> Self {
        Self {
            bias: [0.0; 3],
            noise_density: 0.0,
            bias_instability: 0.0,
            bias_correlation_time_s: 100.0,
            random_walk: 0.0,
            quantization: 0.0,
        }
    }
}

impl AxisNoise {
    fn validate(&self, field: &str) -> Result<()> {
        if !self.bias.iter().all(|b| b.is_finite()) {
            return Err(Error::config(format!("{field}.bias"), "must be finite"));
        }
        for (name, v) in [
            ("noise_density", self.noise_density),
            ("bias_instability", self.bias_instability),
            ("random_walk", self.random_walk),
            ("quantization", self.quantization),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{field}.{name}"), "must be non-negative"));
            }
        }
        positive(field, "bias_correlation_time_s", self.bias_correlation_time_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuConfig {
    pub period_s: f64,
    /// Axis misalignment, row-major, close to identity.
    pub misalignment: [[f64; 3]; 3],
    pub accel: AxisNoise,
    pub gyro: AxisNoise,
    pub mag: AxisNoise,
    pub gravity_mps2: f64,
    pub specific_force: bool,
    /// Earth magnetic field in NED, microtesla.
    pub magnetic_field_ut: [f64; 3],
    pub mount: Mount,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            period_s: 0.01,
            misalignment: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            accel: AxisNoise::default(),
            gyro: AxisNoise::default(),
            mag: AxisNoise::default(),
            gravity_mps2: 9.80665,
            specific_force: false,
            magnetic_field_ut: [20.0, 0.0, 45.0],
            mount: Mount::default(),
        }
    }
}

impl ImuConfig {
    pub fn validate(&self) -> Result<()> {
        positive("imu", "period_s", self.period_s)?;
        let m = self.misalignment_matrix();
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() < 1e-6 {
            return Err(Error::config("imu.misalignment", "must be an invertible matrix"));
        }
        self.accel.validate("imu.accel")?;
        self.gyro.validate("imu.gyro")?;
        self.mag.validate("imu.mag")?;
        if !(self.gravity_mps2.is_finite() && self.gravity_mps2 >= 0.0) {
            return Err(Error::config("imu.gravity_mps2", "must be non-negative"));
        }
        if !self.magnetic_field_ut.iter().all(|v| v.is_finite()) {
            return Err(Error::config("imu.magnetic_field_ut", "must be finite"));
        }
        self.mount.validate("imu")
    }

    pub fn misalignment_matrix(&self) -> Matrix3<f64> {
        let m = &self.misalignment;
        Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        )
    }

    /// Rotation from the IMU frame to the vehicle forward-right-down frame.
    pub fn mount_frd(&self) -> Rotation {
        let f = flu_to_frd_rotation();
        f * self.mount.pose().orientation * f.inverse()
    }
}

/// True motion at the IMU location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuTruth {
    /// Kinematic acceleration in NED, m/s^2.
    pub accel_ned: Vec3,
    /// Angular rate in the vehicle forward-right-down frame, rad/s.
    pub omega_body: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_ns: i64,
    pub accel: Vec3,
    pub gyro: Vec3,
    pub mag: Vec3,
}

#[derive(Debug, Clone, Copy, Default)]
struct TriadState {
    markov: [f64; 3],
    walk: [f64; 3],
}

/// Stateful IMU emulator. Samples must be requested with consecutive
/// indices starting at zero.
#[derive(Debug, Clone)]
pub struct Imu {
    config: ImuConfig,
    noise: CounterNoise,
    states: [TriadState; 3],
    next: u64,
    mis: Matrix3<f64>,
    mount: Rotation,
}

impl Imu {
    pub fn new(config: &ImuConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            noise: CounterNoise::new(seed, "imu"),
            states: [TriadState::default(); 3],
            next: 0,
            mis: config.misalignment_matrix(),
            mount: config.mount_frd(),
        })
    }

    /// Rotation taking NED vectors into the IMU frame.
    pub fn ned_to_imu(&self, yaw: f64, pitch: f64, roll: f64) -> Rotation {
        (rotation_from_euler(yaw, pitch, roll) * self.mount).inverse()
    }

    fn triad(&mut self, which: usize, k: u64, clean: Vec3) -> Vec3 {
        let p = match which {
            0 => &self.config.accel,
            1 => &self.config.gyro,
            _ => &self.config.mag,
        };
        let dt = self.config.period_s;
        let phi = (-dt / p.bias_correlation_time_s).exp();
        let st = &mut self.states[which];
        let mut out = Vec3::zeros();
        for axis in 0..3 {
            let ch = (which * 9 + axis * 3) as u64;
            let white = if p.noise_density > 0.0 {
                p.noise_density / dt.sqrt() * self.noise.gaussian(k, ch)
            } else {
                0.0
            };
            let delta = st.markov[axis] + white + st.walk[axis];
            let v = clean[axis] + p.bias[axis] + delta;
            out[axis] = if p.quantization > 0.0 {
                (v / p.quantization).round() * p.quantization
            } else {
                v
            };
            if p.bias_instability > 0.0 {
                st.markov[axis] =
                    phi * st.markov[axis] + p.bias_instability * (1.0 - phi * phi).sqrt() * self.noise.gaussian(k, ch + 1);
            }
            if p.random_walk > 0.0 {
                st.walk[axis] += p.random_walk * dt.sqrt() * self.noise.gaussian(k, ch + 2);
            }
        }
        out
    }

    /// Produces sample `k` at time `t_ns`.
    pub fn sample(&mut self, k: u64, t_ns: i64, truth: &ImuTruth) -> Result<ImuSample> {
        if k != self.next {
            return Err(Error::invalid(format!("IMU sample {k} requested, expected {}", self.next)));
        }
        self.next += 1;
        let c = self.ned_to_imu(truth.yaw, truth.pitch, truth.roll);
        let g = Vec3::new(0.0, 0.0, self.config.gravity_mps2);
        let f = if self.config.specific_force {
            truth.accel_ned - g
        } else {
            truth.accel_ned + g
        };
        let accel = self.mis * (c * f);
        let gyro = self.mis * (self.mount.inverse() * truth.omega_body);
        let mag = self.mis * (c * Vec3::from(self.config.magnetic_field_ut));
        Ok(ImuSample {
            t_ns,
            accel: self.triad(0, k, accel),
            gyro: self.triad(1, k, gyro),
            mag: self.triad(2, k, mag),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn stationary_reading_is_rotated_gravity() {
        let cfg = ImuConfig::default();
        let mut imu = Imu::new(&cfg, 1).unwrap();
        let s = imu.sample(0, 0, &still(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.accel, Vec3::new(0.0, 0.0, 9.80665));
        assert_eq!(s.gyro, Vec3::zeros());
        let (y, p, r) = (0.7, 0.1, -0.05);
        let s = imu.sample(1, 10, &still(y, p, r)).unwrap();
        let expect = rotation_from_euler(y, p, r).inverse() * Vec3::new(0.0, 0.0, 9.80665);
        assert_eq!(s.accel, expect);
        let sf = ImuConfig {
            specific_force: true,
            ..ImuConfig::default()
        };
        let s = Imu::new(&sf, 1).unwrap().sample(0, 0, &still(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.accel, Vec3::new(0.0, 0.0, -9.80665));
    }

    #[test]
    fn bias_is_additive_and_quantization_exact() {
        let truth = ImuTruth {
            accel_ned: Vec3::new(0.3, -0.2, 0.01),
            omega_body: Vec3::new(0.01, 0.02, -0.03),
            yaw: 0.4,
            pitch: 0.02,
            roll: 0.01,
        };
        let base = Imu::new(&ImuConfig::default(), 1).unwrap().sample(0, 0, &truth).unwrap();
        let mut cfg = ImuConfig::default();
        cfg.accel.bias = [0.1, 0.0, 0.0];
        let biased = Imu::new(&cfg, 1).unwrap().sample(0, 0, &truth).unwrap();
        assert_eq!(biased.accel - base.accel, Vec3::new(biased.accel.x - base.accel.x, 0.0, 0.0));
        assert!((biased.accel.x - base.accel.x - 0.1).abs() < 1e-15);
        cfg.accel.quantization = 0.01;
        cfg.gyro.quantization = 0.01;
        cfg.accel.noise_density = 0.01;
        let mut imu = Imu::new(&cfg, 4).unwrap();
        for k in 0..500 {
            let s = imu.sample(k, k as i64, &truth).unwrap();
            for v in s.accel.iter().chain(s.gyro.iter()) {
                assert_eq!((v / 0.01).round() * 0.01, *v);
            }
        }
    }

    #[test]
    fn out_of_order_samples_rejected() {
        let mut imu = Imu::new(&ImuConfig::default(), 1).unwrap();
        assert!(imu.sample(3, 0, &still(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ImuConfig {
            misalignment: [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            ..ImuConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = ImuConfig::default();
        cfg.gyro.noise_density = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn white_noise_matches_density() {
        let mut cfg = ImuConfig::default();
        cfg.accel.noise_density = 0.002;
        let mut imu = Imu::new(&cfg, 9).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|k| imu.sample(k, 0, &still(0.0, 0.0, 0.0)).unwrap().accel.x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let expected = 0.002 * (1.0f64 / 0.01).sqrt();
        assert!((sd / expected - 1.0).abs() < 0.05, "{sd} vs {expected}");
    }

    #[test]
    fn bias_instability_is_stationary() {
        let mut cfg = ImuConfig::default();
        cfg.gyro.bias_instability = 0.001;
        cfg.gyro.bias_correlation_time_s = 0.5;
        let mut imu = Imu::new(&cfg, 2).unwrap();
        let xs: Vec<f64> = (0..200_000)
            .map(|k| imu.sample(k, 0, &still(0.0, 0.0, 0.0)).unwrap().gyro.y)
            .skip(1000)
            .collect();
        let sd = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((sd / 0.001 - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn random_walk_variance_grows_linearly() {
        let mut cfg = ImuConfig::default();
        cfg.accel.random_walk = 0.05;
        let (runs, steps) = (800usize, 400usize);
        let mut sum2 = vec![0.0; steps];
        for seed in 0..runs {
            let mut imu = Imu::new(&cfg, seed as u64).unwrap();
            for (k, acc) in sum2.iter_mut().enumerate() {
                let v = imu.sample(k as u64, 0, &still(0.0, 0.0, 0.0)).unwrap().accel.x;
                *acc += v * v;
            }
        }
        // Least-squares slope of variance against time.
        let t: Vec<f64> = (0..steps).map(|k| k as f64 * 0.01).collect();
        let var: Vec<f64> = sum2.iter().map(|s| s / runs as f64).collect();
        let slope = t.iter().zip(&var).map(|(a, b)| a * b).sum::<f64>() / t.iter().map(|a| a * a).sum::<f64>();
        assert!((slope / 0.0025 - 1.0).abs() < 0.1, "slope {slope}");
    }
}
