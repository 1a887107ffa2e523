use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Route, VelocityProfile};
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    /// Arc-length distance between the front and rear bogie, m.
    pub bogie_spacing_m: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_lateral_accel: f64,
    /// Rate of change of the longitudinal acceleration, m/s^3.
    pub max_jerk: f64,
    pub line_speed: f64,
    pub sample_period_s: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            bogie_spacing_m: 17.5,
            max_accel: 0.6,
            max_decel: 0.8,
            max_lateral_accel: 1.0,
            max_jerk: 0.6,
            line_speed: 33.3,
            sample_period_s: 0.01,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bogie_spacing_m", self.bogie_spacing_m),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("max_lateral_accel", self.max_lateral_accel),
            ("max_jerk", self.max_jerk),
            ("line_speed", self.line_speed),
            ("sample_period_s", self.sample_period_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        self.sample_period_ns()?;
        Ok(())
    }

    /// Sampling period as an exact integer number of nanoseconds.
    pub fn sample_period_ns(&self) -> Result<i64> {
        let ns = self.sample_period_s * 1e9;
        let rounded = ns.round();
        if rounded < 1.0 || (ns - rounded).abs() > 1e-3 {
            return Err(Error::config("sample_period_s", "must be a whole number of nanoseconds"));
        }
        Ok(rounded as i64)
    }
}

/// Position, velocity and acceleration of one bogie in NED.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BogieState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    /// Arc length of the front bogie.
    pub s: f64,
    pub speed: f64,
    /// Longitudinal acceleration held until the next sample.
    pub accel: f64,
    pub front: BogieState,
    pub rear: BogieState,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Body angular rate, forward-right-down axes.
    pub omega: Vec3,
}

/// Kinematic state of an arbitrary point on the vehicle axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    pub t: f64,
    pub state: BogieState,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub omega: Vec3,
}

/// Piecewise-constant speed limit as a function of the front bogie's arc
/// length: the minimum over every block the vehicle overlaps.
struct LimitMap {
    starts: Vec<f64>,
    limits: Vec<f64>,
}

impl LimitMap {
    fn new(route: &Route, profile: &VelocityProfile, length: f64) -> Self {
        let spans: Vec<(f64, f64, f64)> = (0..route.blocks.len())
            .map(|b| (route.block_start_s(b), route.block_end_s(b), profile.v_max[b]))
            .collect();
        let mut cuts: Vec<f64> = spans.iter().flat_map(|&(a, e, _)| [a, e + length]).collect();
        cuts.push(f64::NEG_INFINITY);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let eval = |s: f64| {
            spans
                .iter()
                .filter(|&&(a, e, _)| a <= s && e > s - length)
                .map(|&(_, _, v)| v)
                .fold(f64::INFINITY, f64::min)
        };
        let mut starts = Vec::new();
        let mut limits = Vec::new();
        for (i, &c) in cuts.iter().enumerate() {
            let probe = match cuts.get(i + 1) {
                Some(&next) if c.is_finite() => 0.5 * (c + next),
                Some(&next) => next - 1.0,
                None => c + 1.0,
            };
            let mut v = eval(probe);
            if !v.is_finite() {
                v = *profile.v_max.last().unwrap();
            }
            if limits.last() != Some(&v) {
                starts.push(c);
                limits.push(v);
            }
        }
        Self { starts, limits }
    }

    fn segment(&self, s: f64) -> usize {
        self.starts.partition_point(|&x| x <= s).saturating_sub(1)
    }

    fn at(&self, s: f64) -> f64 {
        self.limits[self.segment(s)]
    }
}

/// Longitudinal state of the emergency maneuver: ramp the acceleration from
/// `a0` down to `-decel` at the jerk limit, then hold until standstill.
struct Emergency {
    s0: f64,
    v0: f64,
    a0: f64,
    jerk: f64,
    decel: f64,
    ramp_end: f64,
}

impl Emergency {
    fn new(s0: f64, v0: f64, a0: f64, jerk: f64, decel: f64) -> Self {
        let mut ramp_end = (a0 + decel).max(0.0) / jerk;
        // Standstill during the ramp.
        let disc = a0 * a0 + 2.0 * jerk * v0;
        let t_zero = (a0 + disc.max(0.0).sqrt()) / jerk;
        if t_zero < ramp_end {
            ramp_end = t_zero;
        }
        Self {
            s0,
            v0,
            a0,
            jerk,
            decel,
            ramp_end,
        }
    }

    fn ramp_speed(&self, t: f64) -> f64 {
        self.v0 + self.a0 * t - 0.5 * self.jerk * t * t
    }

    fn ramp_pos(&self, t: f64) -> f64 {
        self.s0 + self.v0 * t + 0.5 * self.a0 * t * t - self.jerk * t * t * t / 6.0
    }

    /// Speed when the front reaches `s` (None if the train stops before).
    fn speed_at(&self, s: f64) -> Option<f64> {
        if s <= self.s0 {
            return Some(self.v0);
        }
        let s_ramp = self.ramp_pos(self.ramp_end);
        if s <= s_ramp {
            let (mut lo, mut hi) = (0.0, self.ramp_end);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.ramp_pos(mid) < s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(self.ramp_speed(hi).max(0.0));
        }
        let v_ramp = self.ramp_speed(self.ramp_end).max(0.0);
        let v2 = v_ramp * v_ramp - 2.0 * self.decel * (s - s_ramp);
        (v2 > 0.0).then(|| v2.sqrt())
    }

    fn stop_pos(&self) -> f64 {
        let v_ramp = self.ramp_speed(self.ramp_end).max(0.0);
        self.ramp_pos(self.ramp_end) + v_ramp * v_ramp / (2.0 * self.decel)
    }

    /// Highest speed along the maneuver and where it occurs.
    fn peak(&self) -> (f64, f64) {
        if self.a0 > 0.0 {
            let t = (self.a0 / self.jerk).min(self.ramp_end);
            (self.ramp_pos(t), self.ramp_speed(t))
        } else {
            (self.s0, self.v0)
        }
    }
}

const GUARD_MARGIN: f64 = 1e-4;

fn maneuver_is_safe(limits: &LimitMap, m: &Emergency) -> bool {
    let first = limits.segment(m.s0);
    if m.v0 > limits.limits[first] {
        return false;
    }
    let (peak_s, peak_v) = m.peak();
    if peak_v > limits.at(peak_s) {
        return false;
    }
    let stop = m.stop_pos();
    for seg in first + 1..limits.starts.len() {
        let entry = limits.starts[seg];
        if entry > stop {
            break;
        }
        match m.speed_at(entry) {
            Some(v) if v > limits.limits[seg] - GUARD_MARGIN => return false,
            Some(_) => {}
            None => break,
        }
    }
    true
}

/// Drives the train along the route from standstill with its front bogie at
/// `s = L` until the front reaches the route end.
///
/// The longitudinal controller is jerk-limited. Each step picks the largest
/// acceleration within the jerk and acceleration bounds for which an
/// emergency brake started on the next step still respects every speed
/// limit ahead.
pub fn generate_trajectory(route: &Route, profile: &VelocityProfile, train: &TrainParams) -> Result<Vec<TrajectorySample>> {
    train.validate()?;
    if profile.v_max.len() != route.blocks.len() {
        return Err(Error::invalid("velocity profile does not match the block list"));
    }
    if profile.v_max.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Infeasible("a block has a non-positive speed limit".into()));
    }
    let length = train.bogie_spacing_m;
    let end = route.length();
    if end <= length {
        return Err(Error::Infeasible(format!(
            "route length {end} m does not exceed the bogie spacing {length} m"
        )));
    }
    let limits = LimitMap::new(route, profile, length);
    let dt = train.sample_period_s;
    let jerk = train.max_jerk;
    let (a_max, d_max) = (train.max_accel, train.max_decel);
    let max_steps = (1e8 as usize).min(((end / 0.05) / dt) as usize + 10);

    let mut samples = Vec::new();
    let (mut s, mut v, mut a_prev) = (length, 0.0f64, 0.0f64);
    for k in 0..max_steps {
        let cap = limits.at(s);
        let target = if v <= cap {
            a_max.min((2.0 * jerk * (cap - v)).sqrt())
        } else {
            -d_max
        };
        let a_lo = (a_prev - jerk * dt).max(-d_max).max(-v / dt);
        let a_hi = (a_prev + jerk * dt).min(a_max);
        let mut a = target.clamp(a_lo.min(a_hi), a_hi);
        let safe = |a: f64| {
            let v1 = v + a * dt;
            let s1 = s + v * dt + 0.5 * a * dt * dt;
            maneuver_is_safe(&limits, &Emergency::new(s1, v1, a, jerk, d_max))
        };
        if !safe(a) {
            if safe(a_lo) {
                let (mut lo, mut hi) = (a_lo, a);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if safe(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                a = lo;
            } else {
                let hard = (-d_max).max(-v / dt);
                let v1 = v + hard * dt;
                let s1 = s + v * dt + 0.5 * hard * dt * dt;
                if v1 > limits.at(s1) + 1e-6 {
                    return Err(Error::Infeasible(format!(
                        "cannot brake to {} m/s before s = {s1:.1} m",
                        limits.at(s1)
                    )));
                }
                a = hard;
            }
        }

        samples.push(sample_at(route, k, dt, s, v, a, length));

        let s_next = s + v * dt + 0.5 * a * dt * dt;
        if s_next > end {
            return Ok(samples);
        }
        s = s_next;
        v = (v + a * dt).max(0.0);
        a_prev = a;
    }
    Err(Error::Infeasible("the train does not reach the end of the route".into()))
}

fn bogie(route: &Route, s: f64, v: f64, a: f64) -> BogieState {
    let d1 = route.eval(s, 1);
    let d2 = route.eval(s, 2);
    BogieState {
        position: route.eval(s, 0),
        velocity: d1 * v,
        acceleration: d2 * (v * v) + d1 * a,
    }
}

/// Yaw, pitch and FRD body rate from the centerline tangent at `s`.
fn attitude(route: &Route, s: f64, v: f64) -> (f64, f64, Vec3) {
    let d1 = route.eval(s, 1);
    let d2 = route.eval(s, 2);
    let (n1, e1, down1) = (d1.x, d1.y, d1.z);
    let (n2, e2, down2) = (d2.x, d2.y, d2.z);
    let h2 = n1 * n1 + e1 * e1;
    let h = h2.sqrt();
    let yaw = e1.atan2(n1);
    let pitch = (-down1).atan2(h);
    let yaw_rate = if h2 > 0.0 { (n1 * e2 - e1 * n2) / h2 * v } else { 0.0 };
    let h_rate = if h > 0.0 { (n1 * n2 + e1 * e2) / h } else { 0.0 };
    let pitch_rate = (-down2 * h + down1 * h_rate) / (h2 + down1 * down1) * v;
    let omega = Vec3::new(-yaw_rate * pitch.sin(), pitch_rate, yaw_rate * pitch.cos());
    (yaw, pitch, omega)
}

fn sample_at(route: &Route, k: usize, dt: f64, s: f64, v: f64, a: f64, length: f64) -> TrajectorySample {
    let (yaw, pitch, omega) = attitude(route, s - 0.5 * length, v);
    TrajectorySample {
        t: k as f64 * dt,
        s,
        speed: v,
        accel: a,
        front: bogie(route, s, v, a),
        rear: bogie(route, s - length, v, a),
        yaw,
        pitch,
        roll: 0.0,
        omega,
    }
}

/// State of a point at `offset` metres along the vehicle axis, measured from
/// the front bogie (0 = front, `-L` = rear). Offsets outside `[-L, 0]`
/// extrapolate linearly.
pub fn point_trajectory(samples: &[TrajectorySample], offset: f64, bogie_spacing: f64) -> Vec<PointState> {
    let w = -offset / bogie_spacing;
    let mix = |f: Vec3, r: Vec3| {
        if w == 0.0 {
            f
        } else if w == 1.0 {
            r
        } else {
            f * (1.0 - w) + r * w
        }
    };
    samples
        .iter()
        .map(|s| PointState {
            t: s.t,
            state: BogieState {
                position: mix(s.front.position, s.rear.position),
                velocity: mix(s.front.velocity, s.rear.velocity),
                acceleration: mix(s.front.acceleration, s.rear.acceleration),
            },
            yaw: s.yaw,
            pitch: s.pitch,
            roll: s.roll,
            omega: s.omega,
        })
        .collect()
}

const BOGIE_COLUMNS: [&str; 9] = ["n", "e", "d", "vn", "ve", "vd", "an", "ae", "ad"];

fn header() -> String {
    let mut cols = vec!["t".to_string(), "s".into(), "speed".into(), "accel".into()];
    for side in ["front", "rear"] {
        cols.extend(BOGIE_COLUMNS.iter().map(|c| format!("{side}_{c}")));
    }
    cols.extend(["yaw", "pitch", "roll", "wx", "wy", "wz"].map(String::from));
    cols.join(",")
}

/// Serializes samples as comma-separated text. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn write_trajectory(samples: &[TrajectorySample]) -> String {
    let mut out = header();
    out.push('\n');
    for s in samples {
        let mut fields = vec![s.t, s.s, s.speed, s.accel];
        for b in [&s.front, &s.rear] {
            fields.extend(b.position.iter());
            fields.extend(b.velocity.iter());
            fields.extend(b.acceleration.iter());
        }
        fields.extend([s.yaw, s.pitch, s.roll]);
        fields.extend(s.omega.iter());
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{f}");
        }
        out.push('\n');
    }
    out
}

pub fn read_trajectory(text: &str) -> Result<Vec<TrajectorySample>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::format("empty trajectory file"))?;
    if head.trim() != header() {
        return Err(Error::format("unexpected trajectory header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(format!("trajectory row {}: {e}", i + 1)))?;
        if v.len() != 28 {
            return Err(Error::format(format!(
                "trajectory row {}: expected 28 columns, got {}",
                i + 1,
                v.len()
            )));
        }
        let b = |o: usize| BogieState {
            position: Vec3::new(v[o], v[o + 1], v[o + 2]),
            velocity: Vec3::new(v[o + 3], v[o + 4], v[o + 5]),
            acceleration: Vec3::new(v[o + 6], v[o + 7], v[o + 8]),
        };
        out.push(TrajectorySample {
            t: v[0],
            s: v[1],
            speed: v[2],
            accel: v[3],
            front: b(4),
            rear: b(13),
            yaw: v[22],
            pitch: v[23],
            roll: v[24],
            omega: Vec3::new(v[25], v[26], v[27]),
        });
    }
    if out.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::format("trajectory timestamps are not increasing"));
    }
    Ok(out)
}
