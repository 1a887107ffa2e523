//! Scattered environment objects: placement by rejection sampling and
//! procedural mesh variants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{self, Tri};
use super::{MaterialTable, SceneObject, SemanticClass};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::multitrack::Railroad;
use crate::rng::{self, CounterNoise};
use crate::terrain::{HeightMap, TrackIndex};

/// Objects per kilometre of main line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Densities {
    pub tree: f64,
    pub rock: f64,
    pub building: f64,
    pub fence: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Self {
            tree: 60.0,
            rock: 30.0,
            building: 4.0,
            fence: 6.0,
        }
    }
}

impl Densities {
    pub fn zero() -> Self {
        Self {
            tree: 0.0,
            rock: 0.0,
            building: 0.0,
            fence: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tree", self.tree),
            ("rock", self.rock),
            ("building", self.building),
            ("fence", self.fence),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("densities.{name}"), "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Larger footprints are placed first so they are not crowded out.
    fn ordered(&self) -> [(SemanticClass, f64); 4] {
        [
            (SemanticClass::Building, self.building),
            (SemanticClass::Fence, self.fence),
            (SemanticClass::Tree, self.tree),
            (SemanticClass::Rock, self.rock),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

const SIZES: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

/// Footprint radius of an unscaled archetype, m.
pub fn footprint_radius(class: SemanticClass, size: SizeClass) -> f64 {
    let k = size as usize;
    match class {
        SemanticClass::Tree => [1.5, 2.5, 3.5][k],
        SemanticClass::Rock => [0.8, 1.5, 2.5][k],
        SemanticClass::Building => [5.0, 7.0, 9.0][k],
        SemanticClass::Fence => [4.0, 6.0, 8.0][k],
        _ => 1.0,
    }
}

/// Minimum gap between a footprint and any track centerline, m. Clears the
/// ballast, masts and platforms.
pub fn min_clearance(class: SemanticClass) -> f64 {
    match class {
        SemanticClass::Building => 10.0,
        SemanticClass::Tree => 7.0,
        _ => 6.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub class: SemanticClass,
    pub size: SizeClass,
    /// ENU base point on the terrain.
    pub position: Vec3,
    pub yaw: f64,
    pub scale: f64,
}

impl Placement {
    pub fn radius(&self) -> f64 {
        footprint_radius(self.class, self.size) * self.scale
    }
}

const ATTEMPTS: usize = 40;

/// Rejection-samples object sites in the band `[clearance + r, band]`
/// around the main line.
pub fn generate_spawn_points(
    rr: &Railroad,
    map: &HeightMap,
    densities: &Densities,
    band: f64,
    seed: u64,
) -> Result<Vec<Placement>> {
    densities.validate()?;
    let main = rr.main();
    let km = main.length() / 1000.0;
    let index = TrackIndex::from_railroad(rr)?;
    let mut rng = rng::seeded(seed, "placement");
    let mut out: Vec<Placement> = Vec::new();
    for (class, density) in densities.ordered() {
        let target = (density * km).round() as usize;
        for _ in 0..target {
            for _ in 0..ATTEMPTS {
                let size = SIZES[rng.gen_range(0..3)];
                let scale = match class {
                    SemanticClass::Tree => rng.gen_range(0.8..1.2),
                    SemanticClass::Rock => rng.gen_range(0.7..1.3),
                    _ => 1.0,
                };
                let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
                let i = rng.gen_range(0..main.points.len());
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let r = footprint_radius(class, size) * scale;
                let lo = min_clearance(class) + r;
                if lo >= band {
                    continue;
                }
                let lateral = rng.gen_range(lo..band);
                let along = rng.gen_range(-5.0..5.0);
                let p = main.points[i];
                let q = main.points[(i + 1).min(main.points.len() - 1)] - main.points[i.saturating_sub(1)];
                let t = Vec3::new(q.y, q.x, 0.0).normalize();
                let left = Vec3::new(-t.y, t.x, 0.0);
                let pos = Vec3::new(p.y, p.x, 0.0) + left * (side * lateral) + t * along;
                let (d, _) = index.nearest(pos.x, pos.y);
                if d < lo {
                    continue;
                }
                if out.iter().any(|o| (o.position.xy() - pos.xy()).norm() < o.radius() + r) {
                    continue;
                }
                let Some(h) = map.sample(pos.x, pos.y) else {
                    continue;
                };
                out.push(Placement {
                    class,
                    size,
                    position: Vec3::new(pos.x, pos.y, h),
                    yaw,
                    scale,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// How far meshes reach below their base point, so they stay grounded on a
/// coarser terrain mesh.
const EMBED: f64 = 0.5;

fn tree(variant: usize, r: f64) -> Vec<Tri> {
    let trunk_h = 0.6 * r + 0.5;
    let mut t = mesh::frustum(Vec3::new(0.0, 0.0, -EMBED), 0.12 * r, 0.08 * r, trunk_h + EMBED, 8);
    match variant {
        0 => t.extend(mesh::frustum(Vec3::new(0.0, 0.0, trunk_h), r, 0.0, 2.5 * r, 10)),
        1 => {
            let (v, f) = mesh::icosphere();
            let c = Vec3::new(0.0, 0.0, trunk_h + 0.9 * r);
            t.extend(f.iter().map(|&[a, b, cc]| [c + v[a] * r, c + v[b] * r, c + v[cc] * r]));
        }
        _ => {
            t.extend(mesh::frustum(Vec3::new(0.0, 0.0, trunk_h), r, 0.0, 1.8 * r, 10));
            t.extend(mesh::frustum(
                Vec3::new(0.0, 0.0, trunk_h + 1.0 * r),
                0.7 * r,
                0.0,
                1.8 * r,
                10,
            ));
        }
    }
    t
}

fn rock(variant: usize, r: f64, noise: &CounterNoise, id: u64) -> Vec<Tri> {
    let (v, f) = mesh::icosphere();
    let squash = [0.6, 0.8, 0.5][variant];
    let v: Vec<Vec3> = v
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let bump = 0.75 + 0.25 * noise.uniform(id, k as u64, variant as u64);
            Vec3::new(p.x * r * bump, p.y * r * bump, (p.z * squash * bump - 0.3 * squash) * r)
        })
        .collect();
    f.iter().map(|&[a, b, c]| [v[a], v[b], v[c]]).collect()
}

fn building(variant: usize, r: f64) -> Vec<Tri> {
    let angle = [0.6f64, 0.75, 0.5][variant];
    let (hl, hw) = (r * angle.cos(), r * angle.sin());
    let wall = [0.45 * r, 0.6 * r, 0.35 * r][variant];
    let mut t = mesh::axis_box(Vec3::new(-hl, -hw, -EMBED), Vec3::new(hl, hw, wall));
    let ridge = wall + [0.5 * hw, 0.7 * hw, 0.4 * hw][variant];
    let (a, b, c, d) = (
        Vec3::new(-hl, -hw, wall),
        Vec3::new(hl, -hw, wall),
        Vec3::new(hl, hw, wall),
        Vec3::new(-hl, hw, wall),
    );
    let (r0, r1) = (Vec3::new(-hl, 0.0, ridge), Vec3::new(hl, 0.0, ridge));
    t.extend([[a, b, r1], [a, r1, r0], [c, d, r0], [c, r0, r1], [b, c, r1], [d, a, r0]]);
    t
}

fn fence(variant: usize, r: f64) -> Vec<Tri> {
    let half = 0.98 * r;
    let (height, gap) = [(1.2, 2.0), (1.5, 2.5), (1.0, 3.0)][variant];
    let mut t = Vec::new();
    let n = ((2.0 * half) / gap).ceil() as usize;
    for k in 0..=n {
        let x = -half + 2.0 * half * k as f64 / n as f64;
        t.extend(mesh::axis_box(
            Vec3::new(x - 0.05, -0.05, -EMBED),
            Vec3::new(x + 0.05, 0.05, height),
        ));
    }
    for z in [0.45 * height, 0.9 * height] {
        t.extend(mesh::axis_box(
            Vec3::new(-half, -0.03, z - 0.04),
            Vec3::new(half, 0.03, z + 0.04),
        ));
    }
    t
}

/// Expands placements into meshes, choosing a variant per placement.
pub fn instantiate_objects(
    placements: &[Placement],
    materials: &MaterialTable,
    seed: u64,
    next_id: &mut u32,
) -> Result<Vec<SceneObject>> {
    let mut rng = rng::seeded(seed, "objects");
    let noise = CounterNoise::new(seed, "rock-shape");
    let mut out = Vec::with_capacity(placements.len());
    for p in placements {
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return Err(Error::invalid(format!("placement scale {} must be positive", p.scale)));
        }
        let variant = rng.gen_range(0..3);
        let r = footprint_radius(p.class, p.size);
        let mut tris = match p.class {
            SemanticClass::Tree => tree(variant, r),
            SemanticClass::Rock => rock(variant, r, &noise, *next_id as u64),
            SemanticClass::Building => building(variant, r),
            SemanticClass::Fence => fence(variant, r),
            other => return Err(Error::invalid(format!("no object archetype for class {}", other.name()))),
        };
        mesh::place(&mut tris, p.position, p.yaw, p.scale);
        out.push(SceneObject::new(*next_id, p.class, materials.material_for(p.class)?, tris));
        *next_id += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitrack::{build_railroad, AuxParams};
    use crate::routegen::{generate_route, RouteParams};
    use crate::terrain::{partition, TerrainModel, TerrainParams};

    fn world() -> (Railroad, HeightMap) {
        let route = generate_route(
            3,
            &RouteParams {
                n_blocks: 4,
                ..RouteParams::default()
            },
        )
        .unwrap();
        let rr = build_railroad(&route, &AuxParams::default(), 3).unwrap();
        let tp = TerrainParams {
            spacing_m: 2.0,
            keep_radius_m: 300.0,
            margin_m: 120.0,
            ..TerrainParams::default()
        };
        let model = TerrainModel::new(&rr, &tp, 3).unwrap();
        let map = partition(&model, &rr);
        (rr, map)
    }

    #[test]
    fn placements_are_disjoint_and_clear() {
        let (rr, map) = world();
        let pl = generate_spawn_points(&rr, &map, &Densities::default(), 80.0, 11).unwrap();
        assert!(pl.len() > 20);
        for (i, a) in pl.iter().enumerate() {
            for b in &pl[i + 1..] {
                let d = (a.position.xy() - b.position.xy()).norm();
                assert!(d >= a.radius() + b.radius());
            }
            // Exhaustive nearest distance to every centerline vertex.
            let near = rr
                .tracks
                .iter()
                .flat_map(|t| t.points.iter())
                .map(|p| (p.y - a.position.x).hypot(p.x - a.position.y))
                .fold(f64::INFINITY, f64::min);
            assert!(near - a.radius() >= min_clearance(a.class));
            let h = map.sample(a.position.x, a.position.y).unwrap();
            assert_eq!(h, a.position.z);
        }
        let again = generate_spawn_points(&rr, &map, &Densities::default(), 80.0, 11).unwrap();
        assert_eq!(pl, again);
    }

    #[test]
    fn zero_density_places_nothing() {
        let (rr, map) = world();
        assert!(generate_spawn_points(&rr, &map, &Densities::zero(), 80.0, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn instances_fit_footprints_and_boxes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let classes = [
            SemanticClass::Tree,
            SemanticClass::Rock,
            SemanticClass::Building,
            SemanticClass::Fence,
        ];
        let pl: Vec<Placement> = (0..100)
            .map(|k| Placement {
                class: classes[k % 4],
                size: SIZES[rng.gen_range(0..3)],
                position: Vec3::new(
                    rng.gen_range(-500.0..500.0),
                    rng.gen_range(-500.0..500.0),
                    rng.gen_range(0.0..50.0),
                ),
                yaw: rng.gen_range(0.0..6.3),
                scale: rng.gen_range(0.5..1.5),
            })
            .collect();
        let mut id = 100;
        let objs = instantiate_objects(&pl, &MaterialTable::default(), 9, &mut id).unwrap();
        assert_eq!(id, 200);
        for (o, p) in objs.iter().zip(&pl) {
            assert_eq!(o.class, p.class);
            let verts: Vec<&Vec3> = o.triangles.iter().flatten().collect();
            for axis in 0..3 {
                let lo = verts.iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
                let hi = verts.iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(lo, o.aabb.min[axis]);
                assert_eq!(hi, o.aabb.max[axis]);
            }
            let reach = verts.iter().map(|v| (v.xy() - p.position.xy()).norm()).fold(0.0, f64::max);
            assert!(reach <= p.radius() + 1e-9, "{:?} reaches {reach} > {}", p.class, p.radius());
        }
        assert!(objs.windows(2).all(|w| w[1].instance > w[0].instance));
        let mut id2 = 100;
        assert_eq!(
            instantiate_objects(&pl, &MaterialTable::default(), 9, &mut id2).unwrap(),
            objs
        );
    }
}
