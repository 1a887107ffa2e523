//! The generated world and its on-disk container.
//!
//! ```text
//! route.json      route points, blocks and spacing
//! railroad.json   every track with its blocks
//! scene.rscn      labelled triangle scene
//! terrain/        one raw little-endian f64 file per kept sub-map
//! world.json      map layout and summary, written last
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::write_atomic;
use crate::multitrack::{build_railroad, Railroad};
use crate::routegen::{Block, Route};
use crate::scene::{build_scene, Scene};
use crate::terrain::{partition, HeightMap, SubMap, TerrainModel, TILE};

use super::scenario::Scenario;

pub const WORLD_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFile {
    pub spacing: f64,
    pub blocks: Vec<Block>,
    /// NED centerline points.
    pub points: Vec<Vec3>,
}

impl RouteFile {
    pub fn from_route(route: &Route) -> Self {
        RouteFile {
            spacing: route.spacing,
            blocks: route.blocks.clone(),
            points: route.points.clone(),
        }
    }

    pub fn into_route(self) -> Result<Route> {
        Route::new(self.points, self.blocks, self.spacing, 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Route> {
        let f: RouteFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        f.into_route()
    }
}

/// Rebuilds a route from its stored points so that a route loaded from
/// disk and one kept in memory are identical.
pub fn canonical_route(route: &Route) -> Result<Route> {
    RouteFile::from_route(route).into_route()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLayout {
    pub origin_e: f64,
    pub origin_n: f64,
    pub spacing: f64,
    pub tile_size: usize,
    pub tiles_e: usize,
    pub tiles_n: usize,
    /// Grid coordinates of the kept sub-maps.
    pub kept: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldInfo {
    pub format: u32,
    pub seed: u64,
    pub route_length_m: f64,
    pub tracks: usize,
    pub map: MapLayout,
    pub objects: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub route: Route,
    pub railroad: Railroad,
    pub map: HeightMap,
    pub scene: Scene,
}

/// Tracks, terrain and scene for a route.
pub fn build_world(scenario: &Scenario, route: Route) -> Result<World> {
    let c = &scenario.config;
    let railroad = build_railroad(&route, &c.multitrack, c.seed)?;
    log::info!("railroad: {} tracks", railroad.tracks.len());
    let model = TerrainModel::new(&railroad, &c.terrain, c.seed)?;
    let map = partition(&model, &railroad);
    log::info!("terrain: {} of {} sub-maps kept", map.kept().count(), map.tiles.len());
    let scene = build_scene(&railroad, &map, &c.scene, c.seed)?;
    log::info!("scene: {} objects, {} triangles", scene.objects.len(), scene.triangles.len());
    Ok(World {
        seed: c.seed,
        route,
        railroad,
        map,
        scene,
    })
}

fn tile_file(ti: usize, tj: usize) -> String {
    format!("{ti:03}_{tj:03}.f64")
}

impl World {
    pub fn info(&self) -> WorldInfo {
        WorldInfo {
            format: WORLD_FORMAT,
            seed: self.seed,
            route_length_m: self.route.length(),
            tracks: self.railroad.tracks.len(),
            map: MapLayout {
                origin_e: self.map.origin_e,
                origin_n: self.map.origin_n,
                spacing: self.map.spacing,
                tile_size: TILE,
                tiles_e: self.map.tiles_e,
                tiles_n: self.map.tiles_n,
                kept: self.map.kept().map(|t| [t.grid.0, t.grid.1]).collect(),
            },
            objects: self.scene.objects.len(),
            triangles: self.scene.triangles.len(),
        }
    }

    /// Writes the container into an existing directory.
    pub fn save(&self, dir: &Path) -> Result<WorldInfo> {
        write_atomic(
            &dir.join("route.json"),
            RouteFile::from_route(&self.route).to_json()?.as_bytes(),
        )?;
        write_atomic(&dir.join("railroad.json"), self.railroad.to_json()?.as_bytes())?;
        let mut scene = Vec::new();
        self.scene.write_to(&mut scene)?;
        write_atomic(&dir.join("scene.rscn"), &scene)?;
        let tdir = dir.join("terrain");
        std::fs::create_dir_all(&tdir)?;
        for t in self.map.kept() {
            let bytes: Vec<u8> = t.heights.iter().flat_map(|h| h.to_le_bytes()).collect();
            write_atomic(&tdir.join(tile_file(t.grid.0, t.grid.1)), &bytes)?;
        }
        let info = self.info();
        write_atomic(
            &dir.join("world.json"),
            (serde_json::to_string_pretty(&info)? + "\n").as_bytes(),
        )?;
        Ok(info)
    }

    pub fn load(dir: &Path) -> Result<World> {
        let info: WorldInfo = serde_json::from_str(&std::fs::read_to_string(dir.join("world.json"))?)?;
        if info.format != WORLD_FORMAT {
            return Err(Error::format(format!("unsupported world format {}", info.format)));
        }
        if info.map.tile_size != TILE {
            return Err(Error::format(format!(
                "sub-map size {} differs from {TILE}",
                info.map.tile_size
            )));
        }
        let route = RouteFile::read(&dir.join("route.json"))?;
        let railroad = Railroad::read(&dir.join("railroad.json"))?;
        let scene = Scene::read_from(&mut std::io::BufReader::new(std::fs::File::open(dir.join("scene.rscn"))?))?;
        let m = &info.map;
        let mut tiles = Vec::with_capacity(m.tiles_e * m.tiles_n);
        for tj in 0..m.tiles_n {
            for ti in 0..m.tiles_e {
                let keep = m.kept.contains(&[ti, tj]);
                let heights = if keep {
                    let bytes = std::fs::read(dir.join("terrain").join(tile_file(ti, tj)))?;
                    if bytes.len() != TILE * TILE * 8 {
                        return Err(Error::format(format!("sub-map {ti},{tj} has {} bytes", bytes.len())));
                    }
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect()
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
        Ok(World {
            seed: info.seed,
            route,
            railroad,
            map: HeightMap {
                origin_e: m.origin_e,
                origin_n: m.origin_n,
                spacing: m.spacing,
                tiles_e: m.tiles_e,
                tiles_n: m.tiles_n,
                tiles,
            },
            scene,
        })
    }
}
