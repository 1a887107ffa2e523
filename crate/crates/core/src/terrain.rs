//! Height-map landscape around the tracks.
//!
//! Each vertex blends the height of its nearest track point with fractal
//! value noise according to its horizontal distance from the tracks.
//! Bridges carve a valley beneath them and stations widen the flat band.
//! The map is tiled into fixed-size sub-maps and only tiles near the tracks
//! are kept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::multitrack::Railroad;
use crate::rng::splitmix64;
use crate::routegen::BlockType;

/// Vertices per side of one sub-map.
pub const TILE: usize = 1009;

/// Smallest flat band the construction standards allow, m.
pub const MIN_D_NEAR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    pub d_near_m: f64,
    pub d_far_m: f64,
    pub noise_amplitude_m: f64,
    pub noise_octaves: u32,
    /// Wavelength of the coarsest octave, m.
    pub noise_wavelength_m: f64,
    pub noise_persistence: f64,
    pub valley_depth_m: f64,
    /// Half-width of the valley patch across the bridge, m.
    pub valley_width_m: f64,
    pub station_near_multiplier: f64,
    pub spacing_m: f64,
    pub keep_radius_m: f64,
    /// Extra map extent around the track bounding box, m.
    pub margin_m: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            d_near_m: 5.0,
            d_far_m: 60.0,
            noise_amplitude_m: 40.0,
            noise_octaves: 5,
            noise_wavelength_m: 800.0,
            noise_persistence: 0.5,
            valley_depth_m: 12.0,
            valley_width_m: 60.0,
            station_near_multiplier: 3.0,
            spacing_m: 1.0,
            keep_radius_m: 1000.0,
            margin_m: 200.0,
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_near_m >= MIN_D_NEAR) {
            return Err(Error::config(
                "d_near_m",
                format!("{} m is below the {MIN_D_NEAR} m minimum", self.d_near_m),
            ));
        }
        if !(self.d_far_m > self.d_near_m) {
            return Err(Error::config("d_far_m", "must exceed d_near_m"));
        }
        for (name, v) in [
            ("noise_wavelength_m", self.noise_wavelength_m),
            ("spacing_m", self.spacing_m),
            ("valley_width_m", self.valley_width_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("noise_amplitude_m", self.noise_amplitude_m),
            ("valley_depth_m", self.valley_depth_m),
            ("keep_radius_m", self.keep_radius_m),
            ("margin_m", self.margin_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be non-negative"));
            }
        }
        if !(self.station_near_multiplier >= 1.0) {
            return Err(Error::config("station_near_multiplier", "must be at least 1"));
        }
        if self.noise_octaves == 0 || self.noise_octaves > 16 {
            return Err(Error::config("noise_octaves", "must lie in 1..=16"));
        }
        if !(self.noise_persistence > 0.0 && self.noise_persistence <= 1.0) {
            return Err(Error::config("noise_persistence", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Flat-band and blend limits around a station block.
    pub fn station_band(&self) -> (f64, f64) {
        widen_station(self.d_near_m, self.d_far_m, self.station_near_multiplier)
    }
}

/// Station band: `d_near` scaled by the multiplier, `d_far` shifted by the
/// same amount so the ramp keeps its width.
pub fn widen_station(d_near: f64, d_far: f64, multiplier: f64) -> (f64, f64) {
    let near = d_near * multiplier;
    (near, d_far + (near - d_near))
}

/// Blend weight of the noise: 0 up to `d_near`, 1 from `d_far`, linear between.
pub fn blend(d: f64, d_near: f64, d_far: f64) -> f64 {
    if d <= d_near {
        0.0
    } else if d >= d_far {
        1.0
    } else {
        (d - d_near) / (d_far - d_near)
    }
}

/// Weighted blend of track height and noise height.
pub fn compose(track_height: f64, noise: f64, f: f64) -> f64 {
    track_height * (1.0 - f) + noise * f
}

/// Seeded multi-octave value noise with bilinear interpolation.
#[derive(Debug, Clone)]
pub struct ValueNoise {
    seed: u64,
    amplitude: f64,
    octaves: Vec<(f64, f64)>,
}

impl ValueNoise {
    pub fn new(seed: u64, params: &TerrainParams) -> Self {
        let mut octaves = Vec::new();
        let mut weight = 1.0;
        let mut freq = 1.0 / params.noise_wavelength_m;
        for _ in 0..params.noise_octaves {
            octaves.push((freq, weight));
            weight *= params.noise_persistence;
            freq *= 2.0;
        }
        let total: f64 = octaves.iter().map(|o| o.1).sum();
        for o in &mut octaves {
            o.1 /= total;
        }
        Self {
            seed,
            amplitude: params.noise_amplitude_m,
            octaves,
        }
    }

    fn lattice(&self, octave: usize, ix: i64, iy: i64) -> f64 {
        let h = splitmix64(self.seed ^ splitmix64((octave as u64) << 56 ^ splitmix64(ix as u64 ^ splitmix64(iy as u64))));
        (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    /// Noise height at a horizontal world position (east, north), m.
    pub fn height(&self, e: f64, n: f64) -> f64 {
        let mut sum = 0.0;
        for (o, &(freq, weight)) in self.octaves.iter().enumerate() {
            let (x, y) = (e * freq, n * freq);
            let (fx, fy) = (x.floor(), y.floor());
            let (tx, ty) = (x - fx, y - fy);
            let (ix, iy) = (fx as i64, fy as i64);
            let v00 = self.lattice(o, ix, iy);
            let v10 = self.lattice(o, ix + 1, iy);
            let v01 = self.lattice(o, ix, iy + 1);
            let v11 = self.lattice(o, ix + 1, iy + 1);
            let a = v00 + (v10 - v00) * tx;
            let b = v01 + (v11 - v01) * tx;
            sum += weight * (a + (b - a) * ty);
        }
        self.amplitude * sum
    }

    /// Upper bound of |dN/dx| along either axis.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude * self.octaves.iter().map(|&(f, w)| 2.0 * f * w).sum::<f64>()
    }
}

/// A track point seen from the terrain: ENU position plus block flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub e: f64,
    pub n: f64,
    pub up: f64,
    pub station: bool,
    pub bridge: bool,
}

/// Uniform grid over track points answering exact nearest-point queries.
/// Ties resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct TrackIndex {
    points: Vec<TrackPoint>,
    cell: f64,
    min_e: f64,
    min_n: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: `offsets[c]..offsets[c + 1]` into `items`.
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl TrackIndex {
    pub fn new(points: Vec<TrackPoint>, cell: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("no track points"));
        }
        let min_e = points.iter().map(|p| p.e).fold(f64::INFINITY, f64::min);
        let min_n = points.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
        let max_e = points.iter().map(|p| p.e).fold(f64::NEG_INFINITY, f64::max);
        let max_n = points.iter().map(|p| p.n).fold(f64::NEG_INFINITY, f64::max);
        let nx = ((max_e - min_e) / cell).floor() as usize + 1;
        let ny = ((max_n - min_n) / cell).floor() as usize + 1;
        let mut counts = vec![0u32; nx * ny + 1];
        let cell_of = |p: &TrackPoint| {
            let cx = (((p.e - min_e) / cell).floor() as usize).min(nx - 1);
            let cy = (((p.n - min_n) / cell).floor() as usize).min(ny - 1);
            cy * nx + cx
        };
        for p in &points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Ok(Self {
            points,
            cell,
            min_e,
            min_n,
            nx,
            ny,
            offsets: counts,
            items,
        })
    }

    /// All points of every track, in track order.
    pub fn from_railroad(rr: &Railroad) -> Result<Self> {
        let mut points = Vec::new();
        for track in &rr.tracks {
            for (i, p) in track.points.iter().enumerate() {
                let kind = track.block_of(i).map(|b| b.kind);
                points.push(TrackPoint {
                    e: p.y,
                    n: p.x,
                    up: -p.z,
                    station: kind == Some(BlockType::Station),
                    bridge: kind == Some(BlockType::Bridge),
                });
            }
        }
        Self::new(points, 8.0)
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    fn dist2(&self, i: usize, e: f64, n: f64) -> f64 {
        let p = &self.points[i];
        let (de, dn) = (p.e - e, p.n - n);
        de * de + dn * dn
    }

    /// Nearest track point within `radius` (unbounded if infinite), as
    /// `(distance, index)`.
    pub fn nearest_within(&self, e: f64, n: f64, radius: f64) -> Option<(f64, usize)> {
        let gx = ((e - self.min_e) / self.cell).floor();
        let gy = ((n - self.min_n) / self.cell).floor();
        // Rings beyond the grid add nothing once the grid is fully covered.
        let far = [gx, gy, self.nx as f64 - 1.0 - gx, self.ny as f64 - 1.0 - gy]
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max) as i64
            + 1;
        let max_ring = if radius.is_finite() {
            ((radius / self.cell).ceil() as i64 + 1).min(far)
        } else {
            far
        };
        let mut best: Option<(f64, usize)> = None;
        let (gx, gy) = (gx as i64, gy as i64);
        for ring in 0..=max_ring {
            if let Some((d2, _)) = best {
                // Cells of this ring are at least (ring - 1) cells away.
                let gap = (ring - 1).max(0) as f64 * self.cell;
                if gap * gap > d2 {
                    break;
                }
            }
            let mut visit = |cx: i64, cy: i64| {
                if cx < 0 || cy < 0 || cx >= self.nx as i64 || cy >= self.ny as i64 {
                    return;
                }
                let c = cy as usize * self.nx + cx as usize;
                for &i in &self.items[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
                    let i = i as usize;
                    let d2 = self.dist2(i, e, n);
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d2 < bd || (d2 == bd && i < bi),
                    };
                    if better {
                        best = Some((d2, i));
                    }
                }
            };
            if ring == 0 {
                visit(gx, gy);
            } else {
                for k in -ring..=ring {
                    visit(gx + k, gy - ring);
                    visit(gx + k, gy + ring);
                }
                for k in -ring + 1..ring {
                    visit(gx - ring, gy + k);
                    visit(gx + ring, gy + k);
                }
            }
        }
        best.map(|(d2, i)| (d2.sqrt(), i)).filter(|&(d, _)| d <= radius)
    }

    pub fn nearest(&self, e: f64, n: f64) -> (f64, usize) {
        self.nearest_within(e, n, f64::INFINITY).expect("non-empty index")
    }

    /// Exhaustive scan with the same tie-break, for verification.
    pub fn nearest_linear(&self, e: f64, n: f64) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.points.len() {
            let d2 = self.dist2(i, e, n);
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        (best.0.sqrt(), best.1)
    }
}

/// Elliptic raised-cosine bowl beneath one bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Valley {
    pub center_e: f64,
    pub center_n: f64,
    /// Unit vector along the bridge chord (east, north).
    pub axis: (f64, f64),
    pub half_length: f64,
    pub half_width: f64,
    pub depth: f64,
}

impl Valley {
    /// Fraction of the full depth removed at (e, n); zero outside the patch.
    pub fn weight(&self, e: f64, n: f64) -> f64 {
        let (de, dn) = (e - self.center_e, n - self.center_n);
        let u = de * self.axis.0 + dn * self.axis.1;
        let v = -de * self.axis.1 + dn * self.axis.0;
        let rho = ((u / self.half_length).powi(2) + (v / self.half_width).powi(2)).sqrt();
        if rho >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * rho).cos())
        }
    }
}

/// One valley per bridge block of the main track.
pub fn valleys(rr: &Railroad, params: &TerrainParams) -> Vec<Valley> {
    let main = rr.main();
    main.blocks
        .iter()
        .filter(|b| b.kind == BlockType::Bridge && b.len() >= 2)
        .map(|b| {
            let a = main.points[b.start()];
            let z = main.points[b.end() - 1];
            let (ae, an, ze, zn) = (a.y, a.x, z.y, z.x);
            let len = ((ze - ae).powi(2) + (zn - an).powi(2)).sqrt();
            Valley {
                center_e: 0.5 * (ae + ze),
                center_n: 0.5 * (an + zn),
                axis: ((ze - ae) / len, (zn - an) / len),
                half_length: 0.5 * len,
                half_width: params.valley_width_m,
                depth: params.valley_depth_m,
            }
        })
        .collect()
}

/// Everything needed to evaluate the height of any vertex.
#[derive(Debug, Clone)]
pub struct TerrainModel {
    pub params: TerrainParams,
    pub index: TrackIndex,
    pub noise: ValueNoise,
    pub valleys: Vec<Valley>,
}

/// Breakdown of one vertex evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexHeight {
    /// Distance to the nearest track point, or `None` beyond the blend band.
    pub nearest: Option<(f64, usize)>,
    pub noise: f64,
    pub blend: f64,
    /// Blended height before any valley.
    pub composed: f64,
    pub valley: f64,
    pub height: f64,
}

impl TerrainModel {
    pub fn new(rr: &Railroad, params: &TerrainParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            index: TrackIndex::from_railroad(rr)?,
            noise: ValueNoise::new(crate::rng::derive_seed(seed, "terrain"), params),
            valleys: valleys(rr, params),
        })
    }

    /// Outer blend radius over all block kinds.
    fn search_radius(&self) -> f64 {
        self.params.station_band().1.max(self.params.d_far_m)
    }

    pub fn evaluate(&self, e: f64, n: f64) -> VertexHeight {
        let p = &self.params;
        let noise = self.noise.height(e, n);
        let nearest = self.index.nearest_within(e, n, self.search_radius());
        let (blend_w, track_up, near_band, on_bridge) = match nearest {
            Some((d, i)) => {
                let tp = &self.index.points()[i];
                let (near, far) = if tp.station {
                    p.station_band()
                } else {
                    (p.d_near_m, p.d_far_m)
                };
                (blend(d, near, far), tp.up, d <= near, tp.bridge)
            }
            None => (1.0, 0.0, false, false),
        };
        let composed = compose(track_up, noise, blend_w);
        let valley = if near_band && !on_bridge {
            0.0
        } else {
            self.valleys.iter().map(|v| v.weight(e, n) * v.depth).sum()
        };
        VertexHeight {
            nearest,
            noise,
            blend: blend_w,
            composed,
            valley,
            height: composed - valley,
        }
    }

    pub fn height(&self, e: f64, n: f64) -> f64 {
        self.evaluate(e, n).height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubMap {
    /// Tile column (east) and row (north).
    pub grid: (usize, usize),
    pub keep: bool,
    /// Row-major `TILE x TILE` heights (north rows, east columns); empty for
    /// discarded tiles, which are never evaluated.
    pub heights: Vec<f64>,
}

impl SubMap {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.heights[row * TILE + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)))
    }
}

/// The tiled height map.
#[derive(Debug, Clone)]
pub struct HeightMap {
    pub origin_e: f64,
    pub origin_n: f64,
    pub spacing: f64,
    pub tiles_e: usize,
    pub tiles_n: usize,
    pub tiles: Vec<SubMap>,
}

impl HeightMap {
    pub fn cols(&self) -> usize {
        self.tiles_e * TILE
    }

    pub fn rows(&self) -> usize {
        self.tiles_n * TILE
    }

    pub fn vertex_position(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_e + col as f64 * self.spacing,
            self.origin_n + row as f64 * self.spacing,
        )
    }

    fn tile(&self, ti: usize, tj: usize) -> &SubMap {
        &self.tiles[tj * self.tiles_e + ti]
    }

    /// Height of a vertex, or `None` if it lies in a discarded tile or outside.
    pub fn vertex(&self, col: usize, row: usize) -> Option<f64> {
        if col >= self.cols() || row >= self.rows() {
            return None;
        }
        let t = self.tile(col / TILE, row / TILE);
        t.keep.then(|| t.at(col % TILE, row % TILE))
    }

    /// Bilinear height at a world position, `None` off the kept area.
    pub fn sample(&self, e: f64, n: f64) -> Option<f64> {
        let x = (e - self.origin_e) / self.spacing;
        let y = (n - self.origin_n) / self.spacing;
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        let (tx, ty) = (x - c as f64, y - r as f64);
        let h00 = self.vertex(c, r)?;
        let h10 = self.vertex(c + 1, r).unwrap_or(h00);
        let h01 = self.vertex(c, r + 1).unwrap_or(h00);
        let h11 = self.vertex(c + 1, r + 1).unwrap_or(h10);
        let a = h00 + (h10 - h00) * tx;
        let b = h01 + (h11 - h01) * tx;
        Some(a + (b - a) * ty)
    }

    pub fn kept(&self) -> impl Iterator<Item = &SubMap> {
        self.tiles.iter().filter(|t| t.keep)
    }
}

/// Grid layout of the tiled map around the railroad, before evaluation.
pub fn layout(rr: &Railroad, params: &TerrainParams) -> (f64, f64, usize, usize) {
    let pts = rr.tracks.iter().flat_map(|t| t.points.iter());
    let (mut min_e, mut min_n, mut max_e, mut max_n) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        min_e = min_e.min(p.y);
        max_e = max_e.max(p.y);
        min_n = min_n.min(p.x);
        max_n = max_n.max(p.x);
    }
    let s = params.spacing_m;
    let origin_e = ((min_e - params.margin_m) / s).floor() * s;
    let origin_n = ((min_n - params.margin_m) / s).floor() * s;
    let cols = ((max_e + params.margin_m - origin_e) / s).ceil() as usize + 1;
    let rows = ((max_n + params.margin_m - origin_n) / s).ceil() as usize + 1;
    (origin_e, origin_n, cols.div_ceil(TILE).max(1), rows.div_ceil(TILE).max(1))
}

/// Distance from a tile's footprint to the nearest track point.
fn tile_distance(index: &TrackIndex, e0: f64, n0: f64, size: f64) -> f64 {
    index
        .points()
        .iter()
        .map(|p| {
            let de = (e0 - p.e).max(p.e - (e0 + size)).max(0.0);
            let dn = (n0 - p.n).max(p.n - (n0 + size)).max(0.0);
            (de * de + dn * dn).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Tiles the map and evaluates every kept tile.
pub fn partition(model: &TerrainModel, rr: &Railroad) -> HeightMap {
    let params = &model.params;
    let (origin_e, origin_n, tiles_e, tiles_n) = layout(rr, params);
    let s = params.spacing_m;
    let size = TILE as f64 * s;
    let mut tiles = Vec::with_capacity(tiles_e * tiles_n);
    for tj in 0..tiles_n {
        for ti in 0..tiles_e {
            let (e0, n0) = (origin_e + ti as f64 * size, origin_n + tj as f64 * size);
            let keep = tile_distance(&model.index, e0, n0, size) <= params.keep_radius_m;
            let heights = if keep {
                let mut h = vec![0.0; TILE * TILE];
                h.par_chunks_mut(TILE).enumerate().for_each(|(r, row)| {
                    let n = n0 + r as f64 * s;
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = model.height(e0 + c as f64 * s, n);
                    }
                });
                h
            } else {
                Vec::new()
            };
            tiles.push(SubMap {
                grid: (ti, tj),
                keep,
                heights,
            });
        }
    }
    HeightMap {
        origin_e,
        origin_n,
        spacing: s,
        tiles_e,
        tiles_n,
        tiles,
    }
}

/// Horizontal ENU position of a NED track point.
pub fn track_en(p: &Vec3) -> (f64, f64) {
    (p.y, p.x)
}
