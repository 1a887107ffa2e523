//! Pseudo-random route generation, per-block speed limits and the sampled
//! bogie trajectory.

mod trajectory;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{fit_smoothing_spline, SmoothingSpline, Vec3};
use crate::rng;

pub use trajectory::{
    generate_trajectory, point_trajectory, read_trajectory, write_trajectory, BogieState, PointState, TrainParams,
    TrajectorySample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockType {
    Straight,
    Curve,
    Station,
    Tunnel,
    Bridge,
}

impl BlockType {
    /// True for blocks laid on straight geometry (plain straights and overlays).
    pub fn is_straight_geometry(self) -> bool {
        !matches!(self, BlockType::Curve)
    }
}

/// Direction a curve block turns when travelled in increasing arc length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Left,
    Right,
}

impl Turn {
    /// +1 for right (clockwise seen from above), -1 for left.
    pub fn sign(self) -> f64 {
        match self {
            Turn::Left => -1.0,
            Turn::Right => 1.0,
        }
    }
}

/// Role of a block inside an auxiliary track; main-line blocks use `Main`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackPart {
    #[default]
    Main,
    Entering,
    Parallel,
    Outgoing,
}

/// A typed run of consecutive track points, `range = (start, end)` half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    #[serde(rename = "type")]
    pub kind: BlockType,
    pub range: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_cap: Option<f64>,
    #[serde(default)]
    pub part: TrackPart,
}

impl Block {
    pub fn new(kind: BlockType, start: usize, end: usize) -> Self {
        Self {
            kind,
            range: (start, end),
            radius: None,
            turn: None,
            speed_cap: None,
            part: TrackPart::Main,
        }
    }

    pub fn start(&self) -> usize {
        self.range.0
    }

    pub fn end(&self) -> usize {
        self.range.1
    }

    pub fn len(&self) -> usize {
        self.range.1 - self.range.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.range.0 && index < self.range.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteParams {
    pub n_blocks: usize,
    /// Straight block length range in metres.
    pub straight_length: [f64; 2],
    pub curve_length: [f64; 2],
    pub min_curve_radius: f64,
    pub max_curve_radius: f64,
    /// Largest heading change of one curve block, degrees.
    pub max_curve_angle_deg: f64,
    pub p_curve: f64,
    pub p_bridge: f64,
    pub p_tunnel: f64,
    pub p_station: f64,
    /// Arc-length spacing of route points in metres.
    pub spacing: f64,
    /// Initial heading, degrees clockwise from north.
    pub heading_deg: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            n_blocks: 8,
            straight_length: [150.0, 400.0],
            curve_length: [100.0, 300.0],
            min_curve_radius: 400.0,
            max_curve_radius: 1200.0,
            max_curve_angle_deg: 60.0,
            p_curve: 0.5,
            p_bridge: 0.1,
            p_tunnel: 0.1,
            p_station: 0.1,
            spacing: 1.0,
            heading_deg: 0.0,
        }
    }
}

impl RouteParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_curve", self.p_curve),
            ("p_bridge", self.p_bridge),
            ("p_tunnel", self.p_tunnel),
            ("p_station", self.p_station),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability {p} outside [0, 1]")));
            }
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::config("spacing", "must be positive"));
        }
        if self.n_blocks == 0 {
            return Err(Error::config("n_blocks", "must be at least 1"));
        }
        if !(self.min_curve_radius > 0.0) {
            return Err(Error::config("min_curve_radius", "must be positive"));
        }
        if self.max_curve_radius < self.min_curve_radius {
            return Err(Error::config("max_curve_radius", "smaller than min_curve_radius"));
        }
        if !(self.max_curve_angle_deg > 0.0 && self.max_curve_angle_deg <= 180.0) {
            return Err(Error::config("max_curve_angle_deg", "must lie in (0, 180]"));
        }
        for (name, [lo, hi]) in [("straight_length", self.straight_length), ("curve_length", self.curve_length)] {
            if lo > hi {
                return Err(Error::config(name, "range minimum exceeds maximum"));
            }
            if lo < self.spacing {
                return Err(Error::config(
                    name,
                    format!("blocks of {lo} m are shorter than the point spacing {} m", self.spacing),
                ));
            }
        }
        Ok(())
    }
}

/// Main track: evenly spaced NED centerline points split into blocks, plus
/// one smoothing spline per axis parameterised by arc length.
#[derive(Debug, Clone)]
pub struct Route {
    pub points: Vec<Vec3>,
    pub blocks: Vec<Block>,
    pub spacing: f64,
    splines: [SmoothingSpline; 3],
}

impl Route {
    /// Builds a route from points already spaced `spacing` apart along the
    /// centerline; the splines interpolate (or smooth, with `lambda > 0`).
    pub fn new(points: Vec<Vec3>, blocks: Vec<Block>, spacing: f64, lambda: f64) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid("a route needs at least 4 points"));
        }
        let covered: usize = blocks.iter().map(Block::len).sum();
        let contiguous = blocks.first().is_some_and(|b| b.start() == 0)
            && blocks.windows(2).all(|w| w[0].end() == w[1].start())
            && blocks.last().is_some_and(|b| b.end() == points.len());
        if !contiguous || covered != points.len() {
            return Err(Error::invalid("route blocks must cover every point contiguously"));
        }
        let arc: Vec<f64> = (0..points.len()).map(|i| i as f64 * spacing).collect();
        let fit = |axis: usize| {
            let samples: Vec<(f64, f64)> = arc.iter().zip(&points).map(|(&s, p)| (s, p[axis])).collect();
            fit_smoothing_spline(&samples, lambda)
        };
        let splines = [fit(0)?, fit(1)?, fit(2)?];
        Ok(Self {
            points,
            blocks,
            spacing,
            splines,
        })
    }

    /// Imports an arbitrary NED polyline: resamples it at `spacing` along its
    /// chord length and splits it into straight and curve blocks wherever the
    /// local radius drops below `curve_radius_threshold`.
    pub fn from_points(raw: &[Vec3], spacing: f64, lambda: f64, curve_radius_threshold: f64) -> Result<Self> {
        if raw.len() < 4 {
            return Err(Error::invalid("a route file needs at least 4 points"));
        }
        let mut arc = vec![0.0];
        for w in raw.windows(2) {
            let d = (w[1] - w[0]).norm();
            if !(d > 0.0) {
                return Err(Error::invalid("route file contains repeated consecutive points"));
            }
            arc.push(arc.last().unwrap() + d);
        }
        let fit = |axis: usize| {
            let samples: Vec<(f64, f64)> = arc.iter().zip(raw).map(|(&s, p)| (s, p[axis])).collect();
            fit_smoothing_spline(&samples, lambda)
        };
        let splines = [fit(0)?, fit(1)?, fit(2)?];
        let total = *arc.last().unwrap();
        let n = (total / spacing).floor() as usize + 1;
        let points: Vec<Vec3> = (0..n)
            .map(|i| {
                let s = i as f64 * spacing;
                Vec3::new(
                    splines[0].eval_clamped(s, 0),
                    splines[1].eval_clamped(s, 0),
                    splines[2].eval_clamped(s, 0),
                )
            })
            .collect();

        // Signed horizontal curvature per resampled point.
        let curvature: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 * spacing;
                let (dn, de) = (splines[0].eval_clamped(s, 1), splines[1].eval_clamped(s, 1));
                let (ddn, dde) = (splines[0].eval_clamped(s, 2), splines[1].eval_clamped(s, 2));
                (dn * dde - de * ddn) / (dn * dn + de * de).powf(1.5)
            })
            .collect();
        let is_curve: Vec<bool> = curvature.iter().map(|k| k.abs() > 1.0 / curve_radius_threshold).collect();
        let min_run = ((20.0 / spacing).ceil() as usize).max(2);
        let mut runs: Vec<(bool, usize, usize)> = Vec::new();
        for (i, &c) in is_curve.iter().enumerate() {
            match runs.last_mut() {
                Some(r) if r.0 == c => r.2 = i + 1,
                _ => runs.push((c, i, i + 1)),
            }
        }
        // Absorb short runs into their predecessor.
        let mut merged: Vec<(bool, usize, usize)> = Vec::new();
        for r in runs {
            match merged.last_mut() {
                Some(last) if r.2 - r.1 < min_run || last.0 == r.0 => last.2 = r.2,
                _ => merged.push(r),
            }
        }
        let blocks = merged
            .into_iter()
            .map(|(c, a, b)| {
                if c {
                    let mean_k = curvature[a..b].iter().sum::<f64>() / (b - a) as f64;
                    let mut block = Block::new(BlockType::Curve, a, b);
                    block.radius = Some(1.0 / mean_k.abs());
                    block.turn = Some(if mean_k > 0.0 { Turn::Right } else { Turn::Left });
                    block
                } else {
                    Block::new(BlockType::Straight, a, b)
                }
            })
            .collect();
        Route::new(points, blocks, spacing, 0.0)
    }

    /// Total arc length covered by the points.
    pub fn length(&self) -> f64 {
        (self.points.len() - 1) as f64 * self.spacing
    }

    pub fn splines(&self) -> &[SmoothingSpline; 3] {
        &self.splines
    }

    /// Position (order 0) or its arc-length derivatives at `s`.
    pub fn eval(&self, s: f64, order: u8) -> Vec3 {
        Vec3::new(
            self.splines[0].eval_clamped(s, order),
            self.splines[1].eval_clamped(s, order),
            self.splines[2].eval_clamped(s, order),
        )
    }

    /// Index of the block containing the point nearest to arc length `s`.
    pub fn block_at(&self, s: f64) -> usize {
        let idx = ((s / self.spacing).round().max(0.0) as usize).min(self.points.len() - 1);
        self.blocks
            .iter()
            .position(|b| b.contains(idx))
            .unwrap_or(self.blocks.len() - 1)
    }

    /// Arc length at which block `b` begins.
    pub fn block_start_s(&self, b: usize) -> f64 {
        self.blocks[b].start() as f64 * self.spacing
    }

    pub fn block_end_s(&self, b: usize) -> f64 {
        if b + 1 == self.blocks.len() {
            self.length()
        } else {
            self.blocks[b].end() as f64 * self.spacing
        }
    }
}

/// Generates a route of alternating straights and circular arcs.
///
/// The first and last blocks are straight and curves are always separated by
/// at least one straight. Bridges, tunnels and stations are drawn, in that
/// order, only for straight blocks.
pub fn generate_route(seed: u64, params: &RouteParams) -> Result<Route> {
    params.validate()?;
    let mut rng = rng::seeded(seed, "route");
    let ds = params.spacing;
    let max_angle = params.max_curve_angle_deg.to_radians();

    let mut points = vec![Vec3::zeros()];
    let mut blocks = Vec::with_capacity(params.n_blocks);
    let mut pos = Vec3::zeros();
    let mut heading = params.heading_deg.to_radians();
    let mut prev_curve = false;

    for b in 0..params.n_blocks {
        let interior = b != 0 && b + 1 != params.n_blocks;
        let curve_draw: f64 = rng.gen();
        let is_curve = interior && !prev_curve && curve_draw < params.p_curve;
        let start = points.len() - 1;
        if is_curve {
            let radius = rng.gen_range(params.min_curve_radius..=params.max_curve_radius);
            let turn = if rng.gen::<bool>() { Turn::Right } else { Turn::Left };
            let mut length = rng.gen_range(params.curve_length[0]..=params.curve_length[1]);
            length = length.min(radius * max_angle);
            let steps = ((length / ds).round() as usize).max(1);
            let tau = turn.sign();
            let (p0, h0) = (pos, heading);
            for k in 1..=steps {
                let sigma = k as f64 * ds;
                let h = h0 + tau * sigma / radius;
                let offset = Vec3::new(h.sin() - h0.sin(), -(h.cos() - h0.cos()), 0.0) * (radius / tau);
                points.push(p0 + offset);
            }
            pos = *points.last().unwrap();
            heading = h0 + tau * steps as f64 * ds / radius;
            let mut block = Block::new(BlockType::Curve, start, start + steps);
            block.radius = Some(radius);
            block.turn = Some(turn);
            blocks.push(block);
        } else {
            let length = rng.gen_range(params.straight_length[0]..=params.straight_length[1]);
            let steps = ((length / ds).round() as usize).max(1);
            let dir = Vec3::new(heading.cos(), heading.sin(), 0.0);
            for k in 1..=steps {
                points.push(pos + dir * (k as f64 * ds));
            }
            pos = *points.last().unwrap();
            let draws: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
            let kind = if draws[0] < params.p_bridge {
                BlockType::Bridge
            } else if draws[1] < params.p_tunnel {
                BlockType::Tunnel
            } else if draws[2] < params.p_station {
                BlockType::Station
            } else {
                BlockType::Straight
            };
            blocks.push(Block::new(kind, start, start + steps));
        }
        prev_curve = is_curve;
    }
    // Ranges are half-open on point indices; the final point joins the last block.
    blocks.last_mut().unwrap().range.1 = points.len();
    Route::new(points, blocks, ds, 0.0)
}

/// Extra speed caps for overlay blocks, m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedCaps {
    pub station: f64,
    pub tunnel: f64,
    pub bridge: f64,
}

impl Default for SpeedCaps {
    fn default() -> Self {
        Self {
            station: 8.0,
            tunnel: 25.0,
            bridge: 22.0,
        }
    }
}

/// Maximum speed allowed on each block, m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub v_max: Vec<f64>,
}

/// Speed limit per block: line speed on straights, `sqrt(a_lat * R)` on
/// curves and the overlay caps on stations, tunnels and bridges.
pub fn velocity_profile(route: &Route, train: &TrainParams, caps: &SpeedCaps) -> VelocityProfile {
    let v_max = route
        .blocks
        .iter()
        .map(|b| {
            let mut v = train.line_speed;
            match b.kind {
                BlockType::Straight => {}
                BlockType::Curve => {
                    if let Some(r) = b.radius {
                        v = v.min((train.max_lateral_accel * r).sqrt());
                    }
                }
                BlockType::Station => v = v.min(caps.station),
                BlockType::Tunnel => v = v.min(caps.tunnel),
                BlockType::Bridge => v = v.min(caps.bridge),
            }
            if let Some(cap) = b.speed_cap {
                v = v.min(cap);
            }
            v
        })
        .collect();
    VelocityProfile { v_max }
}

/// Reads a route file: one `north east down` triple per line, separated by
/// whitespace or commas. Blank lines and `#` comments are ignored.
pub fn read_route_points(path: &Path) -> Result<Vec<Vec3>> {
    let text = std::fs::read_to_string(path)?;
    parse_route_points(&text)
}

pub fn parse_route_points(text: &str) -> Result<Vec<Vec3>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(format!("route line {}: {e}", lineno + 1)))?;
        if values.len() != 3 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(format!(
                "route line {}: expected 3 finite numbers, got {}",
                lineno + 1,
                values.len()
            )));
        }
        points.push(Vec3::new(values[0], values[1], values[2]));
    }
    Ok(points)
}

pub fn format_route_points(points: &[Vec3]) -> String {
    let mut out = String::from("# north east down [m]\n");
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}
