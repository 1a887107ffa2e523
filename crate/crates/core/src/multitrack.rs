//! Duplicated main track and pseudo-random auxiliary tracks.
//!
//! Tracks are arranged in lateral slots around the main line: slot `k`
//! runs at `k * D` to the right of the main centerline (negative `k` on the
//! left). The duplicate occupies slot +1. Auxiliary tracks are nested, so the
//! most recently spawned one is always the outermost on its side and is the
//! only one allowed to end.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{right_normal_ned, Vec3};
use crate::rng;
use crate::routegen::{Block, BlockType, Route, TrackPart, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Main,
    Duplicate,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub kind: TrackKind,
    /// Lateral slot, positive to the right of the main line.
    #[serde(default)]
    pub slot: i32,
    pub blocks: Vec<Block>,
    /// Centerline points in NED.
    pub points: Vec<Vec3>,
}

impl Track {
    /// Arc length of the polyline.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Indices of the points lying in blocks of `kind`.
    pub fn points_in(&self, kind: BlockType) -> impl Iterator<Item = usize> + '_ {
        self.blocks
            .iter()
            .filter(move |b| b.kind == kind)
            .flat_map(|b| b.start()..b.end())
    }

    pub fn block_of(&self, index: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.contains(index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Railroad {
    /// Main track first, then the duplicate (if any) and the auxiliaries.
    pub tracks: Vec<Track>,
    pub inter_track_distance: f64,
}

impl Railroad {
    pub fn from_route(route: &Route, inter_track_distance: f64) -> Self {
        Self {
            tracks: vec![Track {
                kind: TrackKind::Main,
                slot: 0,
                blocks: route.blocks.clone(),
                points: route.points.clone(),
            }],
            inter_track_distance,
        }
    }

    pub fn main(&self) -> &Track {
        &self.tracks[0]
    }

    pub fn others(&self) -> &[Track] {
        &self.tracks[1..]
    }

    pub fn auxiliaries(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.kind == TrackKind::Auxiliary)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rr: Railroad = serde_json::from_str(text)?;
        if rr.tracks.first().map(|t| t.kind) != Some(TrackKind::Main) {
            return Err(Error::format("railroad file must list the main track first"));
        }
        Ok(rr)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuxParams {
    pub max_parallel: usize,
    pub p_spawn: f64,
    pub p_end: f64,
    pub inter_track_distance_m: f64,
    pub dead_end_length_m: f64,
    /// Heading change of the joining curve, degrees.
    pub join_angle_deg: f64,
    pub join_radius_m: f64,
    pub duplicate_main: bool,
}

impl Default for AuxParams {
    fn default() -> Self {
        Self {
            max_parallel: 2,
            p_spawn: 0.3,
            p_end: 0.5,
            inter_track_distance_m: 4.0,
            dead_end_length_m: 20.0,
            join_angle_deg: 4.0,
            join_radius_m: 400.0,
            duplicate_main: true,
        }
    }
}

impl AuxParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_spawn", self.p_spawn), ("p_end", self.p_end)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability {p} outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("inter_track_distance_m", self.inter_track_distance_m),
            ("dead_end_length_m", self.dead_end_length_m),
            ("join_radius_m", self.join_radius_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(self.join_angle_deg > 0.0 && self.join_angle_deg < 90.0) {
            return Err(Error::config("join_angle_deg", "must lie in (0, 90)"));
        }
        Ok(())
    }

    fn join_angle(&self) -> f64 {
        self.join_angle_deg.to_radians()
    }

    /// Along-track extent of a dead end plus joining curve.
    fn straight_event_length(&self) -> f64 {
        let a = self.join_angle();
        self.join_radius_m * a.sin() + self.dead_end_length_m * a.cos()
    }

    /// Lateral distance covered by a dead end plus joining curve.
    pub fn join_offset(&self) -> f64 {
        let a = self.join_angle();
        self.join_radius_m * (1.0 - a.cos()) + self.dead_end_length_m * a.sin()
    }
}

fn horizontal_tangent(route: &Route, index: usize) -> Vec3 {
    let d = route.eval(index as f64 * route.spacing, 1);
    Vec3::new(d.x, d.y, 0.0).normalize()
}

fn min_curve_radius(blocks: &[Block]) -> f64 {
    blocks
        .iter()
        .filter(|b| b.kind == BlockType::Curve)
        .filter_map(|b| b.radius)
        .fold(f64::INFINITY, f64::min)
}

fn offset_point(route: &Route, index: usize, lateral: f64) -> Vec3 {
    let n = right_normal_ned(&horizontal_tangent(route, index));
    route.points[index] + n * lateral
}

/// Radius of a main-line curve block seen from lateral offset `lateral`.
fn offset_radius(block: &Block, lateral: f64) -> Option<f64> {
    let r = block.radius?;
    let turn = block.turn?;
    // A right turn has its center on the right, so right offsets tighten it.
    Some(r - turn.sign() * lateral)
}

/// Track laid `D` to the right of the main line along its whole length.
pub fn duplicate_main(route: &Route, d: f64) -> Result<Track> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::config("inter_track_distance_m", "must be positive"));
    }
    let r_min = min_curve_radius(&route.blocks);
    if d >= r_min {
        return Err(Error::config(
            "inter_track_distance_m",
            format!("{d} m is not below the tightest curve radius {r_min} m"),
        ));
    }
    let points = (0..route.points.len()).map(|i| offset_point(route, i, d)).collect();
    let blocks = route
        .blocks
        .iter()
        .map(|b| {
            let mut copy = b.clone();
            copy.radius = offset_radius(b, d).or(b.radius);
            copy
        })
        .collect();
    Ok(Track {
        kind: TrackKind::Duplicate,
        slot: 1,
        blocks,
        points,
    })
}

/// Builds the railroad: main line, optional duplicate and auxiliary tracks.
pub fn build_railroad(route: &Route, params: &AuxParams, seed: u64) -> Result<Railroad> {
    params.validate()?;
    let mut rr = Railroad::from_route(route, params.inter_track_distance_m);
    if params.duplicate_main {
        rr.tracks.push(duplicate_main(route, params.inter_track_distance_m)?);
    }
    generate_auxiliaries(route, rr, params, seed)
}

#[derive(Debug, Clone, Copy)]
enum Join {
    /// Dead-end straight plus a curve of the configured angle.
    Curved,
    /// Dead-end straight tangent to the parallel alignment.
    Tangent,
}

#[derive(Debug, Clone, Copy)]
struct ActiveAux {
    slot: i32,
    spawn_block: usize,
    start_index: usize,
    join: Join,
}

fn is_barrier(kind: BlockType) -> bool {
    matches!(kind, BlockType::Tunnel | BlockType::Bridge | BlockType::Station)
}

/// Side (+1 right, -1 left) lying on the outside of a curve block.
fn outer_side(block: &Block) -> i32 {
    match block.turn {
        Some(Turn::Right) => -1,
        _ => 1,
    }
}

/// Adds auxiliary tracks alongside the main line of `railroad`.
///
/// At most one spawn or end happens per block. Spawns and ends take place on
/// plain straights (dead end plus joining curve) or on curves when the
/// auxiliary lies on the outer side (dead end only). Auxiliaries never run
/// alongside tunnels, bridges or stations, and enough straights are reserved
/// ahead of each such block to close every open auxiliary.
pub fn generate_auxiliaries(route: &Route, mut railroad: Railroad, params: &AuxParams, seed: u64) -> Result<Railroad> {
    params.validate()?;
    let d = params.inter_track_distance_m;
    let ds = route.spacing;
    let blocks = &route.blocks;
    let straight_len = params.straight_event_length();
    let straight_steps = (straight_len / ds).ceil() as usize + 1;
    let tangent_steps = (params.dead_end_length_m / ds).ceil() as usize + 1;
    let min_parallel = 10;
    let straight_ok: Vec<bool> = blocks
        .iter()
        .map(|b| matches!(b.kind, BlockType::Straight) && b.len() >= straight_steps + min_parallel)
        .collect();
    let curve_ok: Vec<bool> = blocks
        .iter()
        .map(|b| b.kind == BlockType::Curve && b.len() >= tangent_steps + min_parallel)
        .collect();
    // Straights still available in [b, next barrier).
    let mut remaining = vec![0usize; blocks.len() + 1];
    for b in (0..blocks.len()).rev() {
        remaining[b] = if is_barrier(blocks[b].kind) {
            0
        } else {
            remaining[b + 1] + straight_ok[b] as usize
        };
    }
    let r_min = min_curve_radius(blocks);
    let first_right = if railroad.tracks.iter().any(|t| t.kind == TrackKind::Duplicate) {
        2
    } else {
        1
    };

    let mut rng = rng::seeded(seed, "auxiliary");
    let mut stack: Vec<ActiveAux> = Vec::new();
    let mut finished = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        let (u_end, u_spawn, u_side): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        if is_barrier(block.kind) {
            debug_assert!(stack.is_empty());
            continue;
        }
        if let Some(&top) = stack.last() {
            if top.spawn_block < b {
                let on_curve = curve_ok[b] && top.slot.signum() == outer_side(block);
                let forced = straight_ok[b] && stack.len() >= remaining[b];
                if (straight_ok[b] || on_curve) && (forced || u_end < params.p_end) {
                    let (end_index, join) = if straight_ok[b] {
                        (block.end() - 1 - straight_steps, Join::Curved)
                    } else {
                        (block.end() - 1 - tangent_steps, Join::Tangent)
                    };
                    stack.pop();
                    finished.push(build_aux(route, params, top, end_index, join));
                    continue;
                }
            }
        }
        let side = if u_side < 0.5 { 1 } else { -1 };
        let slot = if side > 0 {
            first_right + stack.iter().filter(|a| a.slot > 0).count() as i32
        } else {
            -1 - stack.iter().filter(|a| a.slot < 0).count() as i32
        };
        let fits = (slot.unsigned_abs() as f64 * d) < r_min;
        let room = remaining[b + 1] > stack.len();
        let place = if straight_ok[b] {
            Some((block.start() + straight_steps, Join::Curved))
        } else if curve_ok[b] && side == outer_side(block) {
            Some((block.start() + tangent_steps, Join::Tangent))
        } else {
            None
        };
        if let Some((start_index, join)) = place {
            if stack.len() < params.max_parallel && fits && room && u_spawn < params.p_spawn {
                stack.push(ActiveAux {
                    slot,
                    spawn_block: b,
                    start_index,
                    join,
                });
            }
        }
    }
    debug_assert!(stack.is_empty());
    railroad.tracks.extend(finished.into_iter().collect::<Result<Vec<_>>>()?);
    Ok(railroad)
}

/// Points from `from` stepping `spacing` along a circular arc or straight,
/// excluding the starting point.
fn sample_path(len: f64, spacing: f64, at: impl Fn(f64) -> Vec3) -> Vec<Vec3> {
    let steps = (len / spacing).round().max(1.0) as usize;
    (1..=steps).map(|k| at(len * k as f64 / steps as f64)).collect()
}

/// Join geometry walking away from the anchor `p0` (heading `dir`, outward
/// unit `u`), ordered from the anchor outwards. Returns the points and the
/// number of curve points at the start.
fn join_points(params: &AuxParams, ds: f64, p0: Vec3, dir: Vec3, u: Vec3, join: Join) -> (Vec<Vec3>, usize) {
    match join {
        Join::Tangent => (sample_path(params.dead_end_length_m, ds, |x| p0 + dir * x), 0),
        Join::Curved => {
            let r = params.join_radius_m;
            let alpha = params.join_angle();
            let arc = sample_path(r * alpha, ds, |x| {
                let phi = x / r;
                p0 + dir * (r * phi.sin()) + u * (r * (1.0 - phi.cos()))
            });
            let pc = p0 + dir * (r * alpha.sin()) + u * (r * (1.0 - alpha.cos()));
            let heading = dir * alpha.cos() + u * alpha.sin();
            let n_arc = arc.len();
            let mut pts = arc;
            pts.extend(sample_path(params.dead_end_length_m, ds, |x| pc + heading * x));
            (pts, n_arc)
        }
    }
}

fn nearest_main_height(route: &Route, p: &Vec3, hint: usize) -> f64 {
    let window = 200usize;
    let lo = hint.saturating_sub(window);
    let hi = (hint + window).min(route.points.len() - 1);
    let mut best = (f64::INFINITY, hint);
    for i in lo..=hi {
        let q = route.points[i];
        let d2 = (q.x - p.x).powi(2) + (q.y - p.y).powi(2);
        if d2 < best.0 {
            best = (d2, i);
        }
    }
    route.points[best.1].z
}

fn build_aux(route: &Route, params: &AuxParams, aux: ActiveAux, end_index: usize, end_join: Join) -> Result<Track> {
    let d = params.inter_track_distance_m;
    let ds = route.spacing;
    let lateral = aux.slot as f64 * d;
    let side = aux.slot.signum() as f64;
    let (i0, i1) = (aux.start_index, end_index);
    if i1 <= i0 {
        return Err(Error::invalid("auxiliary track has an empty parallel part"));
    }

    let anchor = |i: usize| {
        let t = horizontal_tangent(route, i);
        let u = right_normal_ned(&t) * side;
        (route.points[i] + u * lateral.abs(), t, u)
    };

    let (p0, t0, u0) = anchor(i0);
    let (mut entering, enter_arc) = join_points(params, ds, p0, -t0, u0, aux.join);
    entering.reverse();
    let (p1, t1, u1) = anchor(i1);
    let (outgoing, out_arc) = join_points(params, ds, p1, t1, u1, end_join);

    let mut points = Vec::with_capacity(entering.len() + (i1 - i0 + 1) + outgoing.len());
    let mut blocks = Vec::new();
    let enter_turn = if side > 0.0 { Turn::Left } else { Turn::Right };
    let out_turn = if side > 0.0 { Turn::Right } else { Turn::Left };

    let n_stub = entering.len() - enter_arc;
    for p in &entering {
        points.push(Vec3::new(p.x, p.y, nearest_main_height(route, p, i0)));
    }
    let mut stub = Block::new(BlockType::Straight, 0, n_stub);
    stub.part = TrackPart::Entering;
    blocks.push(stub);
    if enter_arc > 0 {
        let mut curve = Block::new(BlockType::Curve, n_stub, n_stub + enter_arc);
        curve.radius = Some(params.join_radius_m);
        curve.turn = Some(enter_turn);
        curve.part = TrackPart::Entering;
        blocks.push(curve);
    }

    let par_start = points.len();
    for i in i0..=i1 {
        let p = offset_point(route, i, lateral);
        points.push(p);
    }
    for mb in &route.blocks {
        let (a, b) = (mb.start().max(i0), mb.end().min(i1 + 1));
        if a >= b {
            continue;
        }
        let mut pb = Block::new(mb.kind, par_start + a - i0, par_start + b - i0);
        if mb.kind == BlockType::Curve {
            pb.radius = offset_radius(mb, lateral);
            pb.turn = mb.turn;
        }
        pb.part = TrackPart::Parallel;
        blocks.push(pb);
    }

    let out_start = points.len();
    for p in &outgoing {
        points.push(Vec3::new(p.x, p.y, nearest_main_height(route, p, i1)));
    }
    if out_arc > 0 {
        let mut curve = Block::new(BlockType::Curve, out_start, out_start + out_arc);
        curve.radius = Some(params.join_radius_m);
        curve.turn = Some(out_turn);
        curve.part = TrackPart::Outgoing;
        blocks.push(curve);
    }
    let mut stub = Block::new(BlockType::Straight, out_start + out_arc, points.len());
    stub.part = TrackPart::Outgoing;
    blocks.push(stub);

    Ok(Track {
        kind: TrackKind::Auxiliary,
        slot: aux.slot,
        blocks,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routegen::{generate_route, RouteParams};

    fn straight_north(n: usize) -> Route {
        let points = (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        Route::new(points, vec![Block::new(BlockType::Straight, 0, n)], 1.0, 0.0).unwrap()
    }

    fn left_arc(radius: f64, n: usize) -> Route {
        // Heading north and turning left (towards west): center at (0, -R).
        let points = (0..n)
            .map(|i| {
                let phi = i as f64 / radius;
                Vec3::new(radius * phi.sin(), -radius * (1.0 - phi.cos()), 0.0)
            })
            .collect();
        let mut b = Block::new(BlockType::Curve, 0, n);
        b.radius = Some(radius);
        b.turn = Some(Turn::Left);
        Route::new(points, vec![b], 1.0, 0.0).unwrap()
    }

    /// Algebraic least-squares circle fit (Kasa), returning the radius.
    fn fit_circle(points: &[Vec3]) -> f64 {
        use nalgebra::{DMatrix, DVector};
        let n = points.len();
        let a = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => points[i].x,
            1 => points[i].y,
            _ => 1.0,
        });
        let b = DVector::from_fn(n, |i, _| -(points[i].x.powi(2) + points[i].y.powi(2)));
        let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
        (cx * cx + cy * cy - sol[2]).sqrt()
    }

    fn min_dist_to(points: &[Vec3], p: &Vec3) -> f64 {
        points
            .iter()
            .map(|q| ((q.x - p.x).powi(2) + (q.y - p.y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the polyline through `points`.
    fn polyline_dist(points: &[Vec3], p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for w in points.windows(2) {
            let (a, b) = (Vec3::new(w[0].x, w[0].y, 0.0), Vec3::new(w[1].x, w[1].y, 0.0));
            let q = Vec3::new(p.x, p.y, 0.0);
            let ab = b - a;
            let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            best = best.min((a + ab * t - q).norm());
        }
        best
    }

    #[test]
    fn duplicate_on_straight_is_offset_east() {
        let route = straight_north(200);
        let dup = duplicate_main(&route, 4.0).unwrap();
        for p in &dup.points {
            assert!((p.y - 4.0).abs() < 1e-12);
            assert!((min_dist_to(&route.points, p) - 4.0).abs() < 1e-3);
        }
    }

    #[test]
    fn duplicate_of_left_curve_has_larger_radius() {
        let route = left_arc(300.0, 400);
        let dup = duplicate_main(&route, 4.0).unwrap();
        let r = fit_circle(&dup.points);
        assert!((r - 304.0).abs() < 1e-2, "fitted radius {r}");
        assert_eq!(dup.blocks[0].radius, Some(304.0));
        assert!(duplicate_main(&route, 300.0).is_err());
    }

    #[test]
    fn zero_spawn_probability_is_a_no_op() {
        let route = generate_route(3, &RouteParams::default()).unwrap();
        let params = AuxParams {
            p_spawn: 0.0,
            ..AuxParams::default()
        };
        let base = build_railroad(
            &route,
            &AuxParams {
                p_spawn: 0.0,
                ..params.clone()
            },
            1,
        )
        .unwrap();
        let again = generate_auxiliaries(&route, base.clone(), &params, 99).unwrap();
        assert_eq!(base, again);
        assert_eq!(again.tracks.len(), 2);
    }

    fn busy_params() -> AuxParams {
        AuxParams {
            p_spawn: 0.9,
            p_end: 0.3,
            max_parallel: 3,
            ..AuxParams::default()
        }
    }

    fn busy_route() -> Route {
        generate_route(
            17,
            &RouteParams {
                n_blocks: 24,
                p_bridge: 0.05,
                p_tunnel: 0.05,
                p_station: 0.05,
                ..RouteParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn auxiliaries_are_deterministic_and_well_formed() {
        let route = busy_route();
        let a = build_railroad(&route, &busy_params(), 5).unwrap();
        let b = build_railroad(&route, &busy_params(), 5).unwrap();
        assert_eq!(a, b);
        assert!(a.auxiliaries().count() >= 2, "only {} auxiliaries", a.auxiliaries().count());
        for aux in a.auxiliaries() {
            let first = aux.blocks.first().unwrap();
            let last = aux.blocks.last().unwrap();
            assert_eq!(first.kind, BlockType::Straight);
            assert_eq!(last.kind, BlockType::Straight);
            assert_eq!(first.part, TrackPart::Entering);
            assert_eq!(last.part, TrackPart::Outgoing);
            assert_eq!(first.start(), 0);
            assert_eq!(last.end(), aux.points.len());
            for w in aux.blocks.windows(2) {
                assert_eq!(w[0].end(), w[1].start());
            }
            for b in aux.blocks.iter().filter(|b| b.part == TrackPart::Parallel) {
                assert!(!matches!(b.kind, BlockType::Tunnel | BlockType::Bridge));
            }
        }
    }

    #[test]
    fn parallel_parts_hold_slot_distance() {
        let route = busy_route();
        let rr = build_railroad(&route, &busy_params(), 5).unwrap();
        let d = rr.inter_track_distance;
        let main = &rr.main().points;
        let mut checked = 0;
        for aux in rr.auxiliaries() {
            let k = aux.slot.unsigned_abs() as f64;
            for b in aux.blocks.iter().filter(|b| b.part == TrackPart::Parallel) {
                for i in (b.start()..b.end()).step_by(7) {
                    let dist = polyline_dist(main, &aux.points[i]);
                    assert!((dist - k * d).abs() < 0.05, "slot {} dist {dist}", aux.slot);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
        // Distinct tracks keep at least D apart along parallel sections.
        let dup = &rr.tracks[1];
        for aux in rr.auxiliaries() {
            for b in aux.blocks.iter().filter(|b| b.part == TrackPart::Parallel) {
                for i in (b.start()..b.end()).step_by(13) {
                    let p = &aux.points[i];
                    assert!(polyline_dist(&dup.points, p) > d - 0.05);
                    for other in rr.auxiliaries().filter(|o| !std::ptr::eq(*o, aux)) {
                        assert!(polyline_dist(&other.points, p) > d - 0.05);
                    }
                }
            }
        }
    }

    #[test]
    fn railroad_json_round_trips() {
        let route = busy_route();
        let rr = build_railroad(&route, &busy_params(), 8).unwrap();
        let text = rr.to_json().unwrap();
        assert_eq!(Railroad::from_json(&text).unwrap(), rr);
        let single = Railroad::from_route(&route, 4.0);
        let parsed = Railroad::from_json(&single.to_json().unwrap()).unwrap();
        assert_eq!(parsed.tracks.len(), 1);
        assert_eq!(parsed, single);
    }
}
