//! Procedural track structures and the terrain surface mesh.

use super::mesh::{self, Tri};
use super::{SceneObject, SceneParams, SemanticClass};
use crate::error::Result;
use crate::geom::Vec3;
use crate::multitrack::{Railroad, Track, TrackKind};
use crate::routegen::BlockType;
use crate::terrain::HeightMap;

/// Height of the rail head above the track centerline (formation level).
pub const RAIL_TOP_M: f64 = 0.55;

const BALLAST: [(f64, f64); 4] = [(-2.0, -0.05), (2.0, -0.05), (1.5, 0.30), (-1.5, 0.30)];
const SLEEPER_HALF: [f64; 3] = [0.125, 1.3, 0.075];
const SLEEPER_MID: f64 = 0.325;
const RAIL_WIDTH: f64 = 0.07;
const RAIL_FOOT: f64 = 0.40;
const POLE_HEIGHT: f64 = 7.0;
const WIRE_HEIGHT: f64 = 6.0;
const TUNNEL_CLEAR: f64 = 3.0;
const TUNNEL_HEIGHT: f64 = 7.0;
const TUNNEL_WALL: f64 = 0.6;
const DECK_HALF: f64 = 2.5;
const DECK_DEPTH: f64 = 1.2;
const PIER_INTERVAL: f64 = 25.0;

fn enu(p: &Vec3) -> Vec3 {
    Vec3::new(p.y, p.x, -p.z)
}

fn left_of(t: &Vec3) -> Vec3 {
    Vec3::new(-t.y, t.x, 0.0).normalize()
}

/// Unit horizontal tangent at every point of an ENU polyline.
fn tangents(pts: &[Vec3]) -> Vec<Vec3> {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let d = pts[(i + 1).min(n - 1)] - pts[i.saturating_sub(1)];
            Vec3::new(d.x, d.y, 0.0).normalize()
        })
        .collect()
}

/// Sweep stations over `lo..=hi`, dropping points that lie within 2 cm of
/// the chord between their kept neighbours.
fn stations(pts: &[Vec3], tans: &[Vec3], lo: usize, hi: usize) -> Vec<(Vec3, Vec3)> {
    let mut keep = vec![lo];
    let mut anchor = lo;
    let mut i = lo + 1;
    while i < hi {
        let chord_ok = |end: usize| {
            let (a, b) = (pts[anchor], pts[end]);
            let ab = b - a;
            let len2 = ab.norm_squared();
            (anchor + 1..end).all(|k| {
                let ak = pts[k] - a;
                let t = if len2 > 0.0 { ak.dot(&ab) / len2 } else { 0.0 };
                (ak - ab * t).norm() <= 0.02
            }) && len2 <= 30.0 * 30.0
        };
        if !chord_ok(i + 1) {
            keep.push(i);
            anchor = i;
        }
        i += 1;
    }
    if hi > lo {
        keep.push(hi);
    }
    keep.into_iter().map(|k| (pts[k], left_of(&tans[k]))).collect()
}

/// Position and horizontal tangent at arc lengths `pitch/2 + k*pitch` along
/// a polyline.
pub fn sleeper_stations(pts: &[Vec3], pitch: f64) -> Vec<(Vec3, Vec3)> {
    let mut out = Vec::new();
    let mut next = 0.5 * pitch;
    let mut s0 = 0.0;
    for w in pts.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        while next <= s0 + len && len > 0.0 {
            let f = (next - s0) / len;
            out.push((w[0] + seg * f, seg / len));
            next += pitch;
        }
        s0 += len;
    }
    out
}

fn rect(l0: f64, l1: f64, h0: f64, h1: f64) -> [(f64, f64); 4] {
    [(l0, h0), (l1, h0), (l1, h1), (l0, h1)]
}

/// Lateral span (left, right) covered by shells over the main line: the
/// main track and, when present, the duplicate on its right.
fn main_span(rr: &Railroad) -> (f64, f64) {
    let dup = rr.tracks.iter().any(|t| t.kind == TrackKind::Duplicate);
    let right = if dup { -rr.inter_track_distance } else { 0.0 };
    (0.0, right)
}

fn block_ranges(track: &Track, kind: BlockType) -> impl Iterator<Item = (usize, usize)> + '_ {
    let last = track.points.len() - 1;
    track
        .blocks
        .iter()
        .filter(move |b| b.kind == kind)
        .map(move |b| (b.start(), b.end().min(last)))
        .filter(|(a, b)| b > a)
}

/// Rails, sleepers, ballast, poles, wires, tunnels, bridges and platforms.
/// Coordinates are ENU; `map` (if given) grounds bridge piers.
pub fn build_track_geometry(
    rr: &Railroad,
    params: &SceneParams,
    map: Option<&HeightMap>,
    next_id: &mut u32,
) -> Result<Vec<SceneObject>> {
    let mats = &params.materials;
    let mut out = Vec::new();
    let mut push = |class: SemanticClass, tris: Vec<Tri>, out: &mut Vec<SceneObject>| -> Result<()> {
        if tris.is_empty() {
            return Ok(());
        }
        out.push(SceneObject::new(*next_id, class, mats.material_for(class)?, tris));
        *next_id += 1;
        Ok(())
    };
    let g = params.gauge_m;
    let d = rr.inter_track_distance;

    for track in &rr.tracks {
        if track.points.len() < 2 {
            continue;
        }
        let pts: Vec<Vec3> = track.points.iter().map(enu).collect();
        let tans = tangents(&pts);
        let frames = stations(&pts, &tans, 0, pts.len() - 1);

        let mut bed = mesh::sweep(&frames, &BALLAST, true);
        let up = Vec3::z();
        for (p, t) in sleeper_stations(&pts, params.sleeper_pitch_m) {
            let t = Vec3::new(t.x, t.y, 0.0).normalize();
            bed.extend(mesh::oriented_box(
                p + up * SLEEPER_MID,
                [t, left_of(&t), up],
                Vec3::from(SLEEPER_HALF),
            ));
        }
        push(SemanticClass::Trackbed, bed, &mut out)?;

        let mut rails = Vec::new();
        for side in [-1.0, 1.0] {
            let c = side * 0.5 * g;
            let prof = rect(c - 0.5 * RAIL_WIDTH, c + 0.5 * RAIL_WIDTH, RAIL_FOOT, RAIL_TOP_M);
            rails.extend(mesh::sweep(&frames, &prof, true));
        }
        push(SemanticClass::RailTrack, rails, &mut out)?;

        if matches!(track.kind, TrackKind::Main | TrackKind::Duplicate) {
            // Contact wire above the centerline.
            let wire = mesh::sweep(&frames, &rect(-0.015, 0.015, WIRE_HEIGHT - 0.015, WIRE_HEIGHT + 0.015), true);
            push(SemanticClass::Catenary, wire, &mut out)?;
        }
    }

    let main = rr.main();
    if main.points.len() < 2 {
        return Ok(out);
    }
    let pts: Vec<Vec3> = main.points.iter().map(enu).collect();
    let tans = tangents(&pts);
    let (span_l, span_r) = main_span(rr);
    let up = Vec3::z();

    // Masts left of the main line and right of the duplicate, each with a
    // cantilever reaching over its track.
    let mut masts: Vec<f64> = vec![0.5 * d];
    if span_r < 0.0 {
        masts.push(span_r - 0.5 * d);
    }
    for (p, t) in sleeper_stations(&pts, params.pole_interval_m) {
        let t = Vec3::new(t.x, t.y, 0.0).normalize();
        let left = left_of(&t);
        for &lat in &masts {
            let base = p + left * lat;
            let mut pole = mesh::frustum(base - up * 0.5, 0.12, 0.10, POLE_HEIGHT + 0.5, 8);
            let over = if lat > 0.0 { span_l } else { span_r };
            let arm_mid = p + left * (0.5 * (lat + over)) + up * (WIRE_HEIGHT + 0.3);
            let half = Vec3::new(0.04, 0.5 * (lat - over).abs() + 0.1, 0.04);
            pole.extend(mesh::oriented_box(arm_mid, [t, left, up], half));
            push(SemanticClass::Pole, pole, &mut out)?;
        }
    }

    for (a, b) in block_ranges(main, BlockType::Tunnel) {
        let frames = stations(&pts, &tans, a, b);
        let (l_in, r_in) = (span_l + TUNNEL_CLEAR, span_r - TUNNEL_CLEAR);
        let (l_out, r_out) = (l_in + TUNNEL_WALL, r_in - TUNNEL_WALL);
        let top = TUNNEL_HEIGHT + TUNNEL_WALL;
        let mut shell = mesh::sweep(&frames, &rect(l_in, l_out, -0.5, top), true);
        shell.extend(mesh::sweep(&frames, &rect(r_out, r_in, -0.5, top), true));
        shell.extend(mesh::sweep(&frames, &rect(r_out, l_out, TUNNEL_HEIGHT, top), true));
        push(SemanticClass::Tunnel, shell, &mut out)?;
    }

    for (a, b) in block_ranges(main, BlockType::Bridge) {
        let frames = stations(&pts, &tans, a, b);
        let (l, r) = (span_l + DECK_HALF, span_r - DECK_HALF);
        let mut deck = mesh::sweep(&frames, &rect(r, l, -0.05 - DECK_DEPTH, -0.05), true);
        for edge in [l - 0.2, r] {
            deck.extend(mesh::sweep(&frames, &rect(edge, edge + 0.2, -0.05, 1.0), true));
        }
        let span_pts = &pts[a..=b];
        let stations_along = sleeper_stations(span_pts, PIER_INTERVAL);
        let n = stations_along.len();
        for (k, (p, t)) in stations_along.into_iter().enumerate() {
            if k == 0 || k + 1 == n {
                continue;
            }
            let t = Vec3::new(t.x, t.y, 0.0).normalize();
            let left = left_of(&t);
            let center = p + left * (0.5 * (l + r));
            let deck_bottom = p.z - 0.05 - DECK_DEPTH;
            let ground = map.and_then(|m| m.sample(center.x, center.y)).unwrap_or(deck_bottom - 15.0);
            if ground < deck_bottom - 0.5 {
                let lo = ground - 1.0;
                let mid = Vec3::new(center.x, center.y, 0.5 * (lo + deck_bottom));
                let half = Vec3::new(0.8, 0.4 * (l - r), 0.5 * (deck_bottom - lo));
                deck.extend(mesh::oriented_box(mid, [t, left, up], half));
            }
        }
        push(SemanticClass::Bridge, deck, &mut out)?;
    }

    for (a, b) in block_ranges(main, BlockType::Station) {
        let frames = stations(&pts, &tans, a, b);
        let slab = mesh::sweep(&frames, &rect(1.75, 5.75, -0.05, RAIL_TOP_M + 0.55), true);
        push(SemanticClass::Platform, slab, &mut out)?;
    }
    Ok(out)
}

/// Terrain surface within `terrain_band_m` of any track, triangulated from
/// the height map at `terrain_mesh_step_m`.
pub fn build_terrain_mesh(rr: &Railroad, map: &HeightMap, params: &SceneParams, next_id: &mut u32) -> Result<Vec<SceneObject>> {
    let k = ((params.terrain_mesh_step_m / map.spacing).round() as usize).max(1);
    let step = k as f64 * map.spacing;
    let (nc, nr) = ((map.cols() - 1) / k, (map.rows() - 1) / k);
    if nc == 0 || nr == 0 {
        return Ok(Vec::new());
    }
    // Mark cells near the tracks, sampling the centerlines every few cells.
    let mut mask = vec![false; nc * nr];
    let reach = params.terrain_band_m;
    let r_cells = (reach / step).ceil() as i64 + 1;
    let stride = 2.0 * step;
    for track in &rr.tracks {
        let mut acc = f64::INFINITY;
        for w in track.points.windows(2).map(Some).chain([None]) {
            let p = match w {
                Some(w) => {
                    acc += (w[1] - w[0]).norm();
                    if acc < stride {
                        continue;
                    }
                    w[0]
                }
                None => *track.points.last().unwrap(),
            };
            acc = 0.0;
            let (e, n) = (p.y, p.x);
            let ci = ((e - map.origin_e) / step).floor() as i64;
            let ri = ((n - map.origin_n) / step).floor() as i64;
            for dr in -r_cells..=r_cells {
                for dc in -r_cells..=r_cells {
                    let (c, r) = (ci + dc, ri + dr);
                    if c < 0 || r < 0 || c >= nc as i64 || r >= nr as i64 {
                        continue;
                    }
                    let ce = map.origin_e + (c as f64 + 0.5) * step;
                    let cn = map.origin_n + (r as f64 + 0.5) * step;
                    if (ce - e).hypot(cn - n) <= reach + stride {
                        mask[r as usize * nc + c as usize] = true;
                    }
                }
            }
        }
    }
    let mut tris = Vec::new();
    for r in 0..nr {
        for c in 0..nc {
            if !mask[r * nc + c] {
                continue;
            }
            let v = |dc: usize, dr: usize| -> Option<Vec3> {
                let (col, row) = ((c + dc) * k, (r + dr) * k);
                let h = map.vertex(col, row)?;
                let (e, n) = map.vertex_position(col, row);
                Some(Vec3::new(e, n, h))
            };
            if let (Some(a), Some(b), Some(cc), Some(dd)) = (v(0, 0), v(1, 0), v(1, 1), v(0, 1)) {
                tris.push([a, b, cc]);
                tris.push([a, cc, dd]);
            }
        }
    }
    if tris.is_empty() {
        return Ok(Vec::new());
    }
    let obj = SceneObject::new(
        *next_id,
        SemanticClass::Terrain,
        params.materials.material_for(SemanticClass::Terrain)?,
        tris,
    );
    *next_id += 1;
    Ok(vec![obj])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitrack::Track;
    use crate::raycast::{cast_brute_force, Ray};
    use crate::routegen::Block;

    fn straight_rr(len: usize, kinds: &[(BlockType, usize, usize)]) -> Railroad {
        let points: Vec<Vec3> = (0..len).map(|i| Vec3::new(i as f64, 0.0, -10.0)).collect();
        let blocks = kinds.iter().map(|&(k, a, b)| Block::new(k, a, b)).collect();
        Railroad {
            tracks: vec![Track {
                kind: TrackKind::Main,
                slot: 0,
                blocks,
                points,
            }],
            inter_track_distance: 4.0,
        }
    }

    fn objects_of(objs: &[SceneObject], class: SemanticClass) -> Vec<&SceneObject> {
        objs.iter().filter(|o| o.class == class).collect()
    }

    #[test]
    fn rail_centerlines_are_gauge_apart() {
        let rr = straight_rr(200, &[(BlockType::Straight, 0, 200)]);
        let params = SceneParams {
            gauge_m: 1.5,
            ..SceneParams::default()
        };
        let objs = build_track_geometry(&rr, &params, None, &mut 0).unwrap();
        let rails = objects_of(&objs, SemanticClass::RailTrack);
        assert_eq!(rails.len(), 1);
        // Track runs north, so lateral (left) is -east.
        let xs: Vec<f64> = rails[0].triangles.iter().flatten().map(|v| -v.x).collect();
        let (left, right): (Vec<f64>, Vec<f64>) = xs.iter().partition(|x| **x > 0.0);
        let center = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lo + hi)
        };
        assert!((center(&left) - center(&right) - 1.5).abs() < 1e-6);
        let top = rails[0]
            .triangles
            .iter()
            .flatten()
            .map(|v| v.z)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((top - (10.0 + RAIL_TOP_M)).abs() < 1e-12);
    }

    #[test]
    fn sleeper_count_matches_pitch() {
        let rr = straight_rr(301, &[(BlockType::Straight, 0, 301)]);
        let params = SceneParams::default();
        let objs = build_track_geometry(&rr, &params, None, &mut 0).unwrap();
        let bed = objects_of(&objs, SemanticClass::Trackbed)[0];
        // Each sleeper top face is two triangles at the sleeper top height.
        let top = 10.0 + SLEEPER_MID + SLEEPER_HALF[2];
        let tops = bed
            .triangles
            .iter()
            .filter(|t| t.iter().all(|v| (v.z - top).abs() < 1e-9))
            .count();
        let sleepers = tops / 2;
        let expected = (300.0 / 0.6f64).floor() as i64;
        assert!((sleepers as i64 - expected).abs() <= 1, "{sleepers} vs {expected}");
    }

    #[test]
    fn tunnel_shell_encloses_centerline() {
        let rr = straight_rr(
            400,
            &[
                (BlockType::Straight, 0, 100),
                (BlockType::Tunnel, 100, 300),
                (BlockType::Straight, 300, 400),
            ],
        );
        let objs = build_track_geometry(&rr, &SceneParams::default(), None, &mut 0).unwrap();
        let shells = objects_of(&objs, SemanticClass::Tunnel);
        assert_eq!(shells.len(), 1);
        let tris = &shells[0].triangles;
        for i in 100..300 {
            let p = enu(&rr.main().points[i]);
            assert!(shells.iter().any(|s| s.aabb.contains_point(&p)));
            // Up, left and right from just above the rails all hit the shell.
            for dir in [Vec3::z(), Vec3::x(), -Vec3::x()] {
                let ray = Ray::new(p + Vec3::z() * 2.0, dir, 50.0);
                assert!(cast_brute_force(tris, &ray, 1e-4).is_some(), "leak at {i}");
            }
        }
    }

    #[test]
    fn electrified_tracks_get_poles_and_wires() {
        let rr = straight_rr(
            501,
            &[
                (BlockType::Straight, 0, 200),
                (BlockType::Bridge, 200, 300),
                (BlockType::Station, 300, 501),
            ],
        );
        let objs = build_track_geometry(&rr, &SceneParams::default(), None, &mut 0).unwrap();
        assert_eq!(objects_of(&objs, SemanticClass::Pole).len(), 10);
        assert_eq!(objects_of(&objs, SemanticClass::Catenary).len(), 1);
        assert_eq!(objects_of(&objs, SemanticClass::Bridge).len(), 1);
        assert_eq!(objects_of(&objs, SemanticClass::Platform).len(), 1);
        let ids: Vec<u32> = objs.iter().map(|o| o.instance).collect();
        assert!(ids.windows(2).all(|w| w[1] == w[0] + 1));
        for o in &objs {
            assert!(o.triangles.iter().flatten().all(|v| o.aabb.contains_point(v)));
        }
    }
}
