//! Labeled triangle geometry of the environment: track structures, terrain
//! surface and scattered objects, each with a semantic class, an instance id
//! and a reflectance material.

pub mod mesh;
mod objects;
mod track;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::multitrack::Railroad;
use crate::raycast::{Accelerator, Hit, Ray};
use crate::terrain::HeightMap;

pub use objects::{footprint_radius, generate_spawn_points, instantiate_objects, min_clearance, Densities, Placement, SizeClass};
pub use track::{build_terrain_mesh, build_track_geometry, sleeper_stations, RAIL_TOP_M};

/// Semantic classes with stable integer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticClass {
    Background,
    Terrain,
    Trackbed,
    RailTrack,
    Pole,
    Catenary,
    Tree,
    Rock,
    Building,
    Fence,
    Tunnel,
    Bridge,
    Platform,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 13] = [
        SemanticClass::Background,
        SemanticClass::Terrain,
        SemanticClass::Trackbed,
        SemanticClass::RailTrack,
        SemanticClass::Pole,
        SemanticClass::Catenary,
        SemanticClass::Tree,
        SemanticClass::Rock,
        SemanticClass::Building,
        SemanticClass::Fence,
        SemanticClass::Tunnel,
        SemanticClass::Bridge,
        SemanticClass::Platform,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Background => "background",
            SemanticClass::Terrain => "terrain",
            SemanticClass::Trackbed => "trackbed",
            SemanticClass::RailTrack => "rail_track",
            SemanticClass::Pole => "pole",
            SemanticClass::Catenary => "catenary",
            SemanticClass::Tree => "tree",
            SemanticClass::Rock => "rock",
            SemanticClass::Building => "building",
            SemanticClass::Fence => "fence",
            SemanticClass::Tunnel => "tunnel",
            SemanticClass::Bridge => "bridge",
            SemanticClass::Platform => "platform",
        }
    }

    /// Display color for segmentation palettes and shaded renders.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Background => [135, 180, 235],
            SemanticClass::Terrain => [110, 140, 70],
            SemanticClass::Trackbed => [120, 110, 100],
            SemanticClass::RailTrack => [170, 170, 180],
            SemanticClass::Pole => [90, 90, 95],
            SemanticClass::Catenary => [60, 60, 60],
            SemanticClass::Tree => [40, 110, 40],
            SemanticClass::Rock => [130, 125, 120],
            SemanticClass::Building => [180, 90, 70],
            SemanticClass::Fence => [150, 120, 80],
            SemanticClass::Tunnel => [100, 95, 90],
            SemanticClass::Bridge => [160, 155, 150],
            SemanticClass::Platform => [200, 190, 170],
        }
    }
}

/// Reflectance parameters used by the LiDAR intensity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub diffuse: f64,
    pub reflective: f64,
    pub max_incidence_deg: f64,
    pub roughness: f64,
}

impl Material {
    pub fn new(diffuse: f64, reflective: f64, max_incidence_deg: f64, roughness: f64) -> Self {
        Self {
            diffuse,
            reflective,
            max_incidence_deg,
            roughness,
        }
    }

    pub fn max_incidence(&self) -> f64 {
        self.max_incidence_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.diffuse)
            && (0.0..=1.0).contains(&self.reflective)
            && self.diffuse + self.reflective <= 1.0 + 1e-12
            && self.max_incidence_deg > 0.0
            && self.max_incidence_deg <= 90.0
            && self.roughness > 0.0
            && self.roughness <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("material {self:?} out of range")))
        }
    }
}

/// Per-class materials; entries override the built-in defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialTable(pub BTreeMap<SemanticClass, Material>);

impl MaterialTable {
    /// Built-in entry for a class; Background has none.
    pub fn default_for(class: SemanticClass) -> Result<Material> {
        use SemanticClass::*;
        let (d, s, t, r) = match class {
            Background => return Err(Error::invalid("the background class has no material")),
            Terrain => (0.55, 0.05, 90.0, 0.6),
            Trackbed => (0.45, 0.05, 90.0, 0.6),
            RailTrack => (0.20, 0.60, 30.0, 0.15),
            Pole | Catenary => (0.25, 0.50, 40.0, 0.2),
            Tree => (0.50, 0.05, 85.0, 0.6),
            Rock => (0.50, 0.10, 85.0, 0.5),
            Building => (0.60, 0.15, 75.0, 0.4),
            Fence => (0.30, 0.40, 45.0, 0.3),
            Tunnel | Bridge | Platform => (0.55, 0.10, 85.0, 0.5),
        };
        Ok(Material::new(d, s, t, r))
    }

    pub fn material_for(&self, class: SemanticClass) -> Result<Material> {
        if class == SemanticClass::Background {
            return Err(Error::invalid("the background class has no material"));
        }
        match self.0.get(&class) {
            Some(m) => Ok(*m),
            None => Self::default_for(class),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (class, m) in &self.0 {
            if *class == SemanticClass::Background {
                return Err(Error::config("materials.background", "the background class has no material"));
            }
            m.validate()
                .map_err(|e| Error::config(format!("materials.{}", class.name()), e.to_string()))?;
        }
        Ok(())
    }
}

/// One labeled object: geometry plus class, instance and material.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub instance: u32,
    pub class: SemanticClass,
    pub material: Material,
    pub triangles: Vec<[Vec3; 3]>,
    pub aabb: Aabb,
}

impl SceneObject {
    pub fn new(instance: u32, class: SemanticClass, material: Material, triangles: Vec<[Vec3; 3]>) -> Self {
        let aabb = Aabb::from_points(triangles.iter().flatten());
        Self {
            instance,
            class,
            material,
            triangles,
            aabb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub instance: u32,
    pub class: SemanticClass,
    pub material: Material,
    pub aabb: Aabb,
    pub first_triangle: u32,
    pub triangle_count: u32,
}

/// Flattened triangle soup with an object table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<ObjectInfo>,
    pub triangles: Vec<[Vec3; 3]>,
}

const SCENE_MAGIC: &[u8; 4] = b"RSCN";
const SCENE_VERSION: u32 = 1;

impl Scene {
    pub fn from_objects(objects: Vec<SceneObject>) -> Result<Self> {
        let mut scene = Scene::default();
        let mut seen = std::collections::BTreeSet::new();
        for o in objects {
            if !seen.insert(o.instance) {
                return Err(Error::invalid(format!("duplicate instance id {}", o.instance)));
            }
            if o.triangles.iter().flatten().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::invalid(format!("object {} has non-finite vertices", o.instance)));
            }
            scene.objects.push(ObjectInfo {
                instance: o.instance,
                class: o.class,
                material: o.material,
                aabb: o.aabb,
                first_triangle: scene.triangles.len() as u32,
                triangle_count: o.triangles.len() as u32,
            });
            scene.triangles.extend(o.triangles);
        }
        Ok(scene)
    }

    /// Object index owning triangle `tri`.
    pub fn object_of(&self, tri: u32) -> usize {
        self.objects.partition_point(|o| o.first_triangle <= tri) - 1
    }

    pub fn object_triangles(&self, object: usize) -> &[[Vec3; 3]] {
        let o = &self.objects[object];
        &self.triangles[o.first_triangle as usize..(o.first_triangle + o.triangle_count) as usize]
    }

    /// Binary container, little-endian: magic, version, object count,
    /// triangle count, the object table (instance, class id, four material
    /// `f64`), then per triangle nine `f64` coordinates and the `u32` index of
    /// its object.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.objects.len() * 37 + self.triangles.len() * 76);
        buf.extend_from_slice(SCENE_MAGIC);
        buf.extend_from_slice(&SCENE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.objects.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for o in &self.objects {
            buf.extend_from_slice(&o.instance.to_le_bytes());
            buf.push(o.class.id());
            for v in [
                o.material.diffuse,
                o.material.reflective,
                o.material.max_incidence_deg,
                o.material.roughness,
            ] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (k, o) in self.objects.iter().enumerate() {
            for t in self.object_triangles(k) {
                for v in t {
                    for c in v.iter() {
                        buf.extend_from_slice(&c.to_le_bytes());
                    }
                }
                buf.extend_from_slice(&(k as u32).to_le_bytes());
            }
            debug_assert!(o.triangle_count as usize == self.object_triangles(k).len());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != SCENE_MAGIC {
            return Err(Error::format("not a scene container"));
        }
        let version = cur.u32()?;
        if version != SCENE_VERSION {
            return Err(Error::format(format!("unsupported scene version {version}")));
        }
        let n_obj = cur.u32()? as usize;
        let n_tri = cur.u32()? as usize;
        let mut table = Vec::with_capacity(n_obj);
        for _ in 0..n_obj {
            let instance = cur.u32()?;
            let class = SemanticClass::from_id(cur.take(1)?[0]).ok_or_else(|| Error::format("unknown class id"))?;
            let material = Material::new(cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?);
            table.push((instance, class, material));
        }
        let mut per_object: Vec<Vec<[Vec3; 3]>> = vec![Vec::new(); n_obj];
        for _ in 0..n_tri {
            let mut t = [Vec3::zeros(); 3];
            for v in &mut t {
                *v = Vec3::new(cur.f64()?, cur.f64()?, cur.f64()?);
            }
            let k = cur.u32()? as usize;
            per_object
                .get_mut(k)
                .ok_or_else(|| Error::format(format!("triangle refers to missing object {k}")))?
                .push(t);
        }
        if cur.pos != bytes.len() {
            return Err(Error::format("trailing bytes after scene data"));
        }
        let objects = table
            .into_iter()
            .zip(per_object)
            .map(|((instance, class, material), tris)| SceneObject::new(instance, class, material, tris))
            .collect();
        Self::from_objects(objects)
    }

    /// Wavefront OBJ with one group per object, plus a JSON sidecar
    /// describing each group.
    pub fn to_obj(&self) -> (String, String) {
        let mut obj = String::from("# railsim scene export\n");
        let mut index = 1usize;
        let mut table = Vec::new();
        for (k, o) in self.objects.iter().enumerate() {
            let name = format!("{}_{}", o.class.name(), o.instance);
            let _ = writeln!(obj, "o {name}");
            for t in self.object_triangles(k) {
                for v in t {
                    let _ = writeln!(obj, "v {} {} {}", v.x, v.y, v.z);
                }
                let _ = writeln!(obj, "f {} {} {}", index, index + 1, index + 2);
                index += 3;
            }
            table.push(serde_json::json!({
                "name": name,
                "instance": o.instance,
                "class": o.class,
                "class_id": o.class.id(),
                "material": o.material,
            }));
        }
        let sidecar = serde_json::to_string_pretty(&table).unwrap_or_default();
        (obj, sidecar)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("truncated scene container"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Hit enriched with the labels of the object it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHit {
    pub hit: Hit,
    pub instance: u32,
    pub class: SemanticClass,
    pub material: Material,
}

/// A scene with its ray-casting accelerator.
#[derive(Debug, Clone)]
pub struct TracedScene {
    pub scene: Scene,
    accel: Accelerator,
}

impl TracedScene {
    pub fn new(scene: Scene) -> Self {
        let accel = Accelerator::build(&scene.triangles);
        Self { scene, accel }
    }

    pub fn accelerator(&self) -> &Accelerator {
        &self.accel
    }

    pub fn cast(&self, ray: &Ray) -> Option<SceneHit> {
        self.accel.cast(ray).map(|hit| {
            let o = &self.scene.objects[self.scene.object_of(hit.triangle)];
            SceneHit {
                hit,
                instance: o.instance,
                class: o.class,
                material: o.material,
            }
        })
    }

    pub fn occluded(&self, ray: &Ray) -> bool {
        self.accel.occluded(ray)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub gauge_m: f64,
    pub sleeper_pitch_m: f64,
    pub pole_interval_m: f64,
    /// Terrain mesh vertex step, a multiple of the height-map spacing, m.
    pub terrain_mesh_step_m: f64,
    /// Terrain is meshed up to this distance from the tracks, m.
    pub terrain_band_m: f64,
    /// Objects are scattered up to this distance from the tracks, m.
    pub placement_band_m: f64,
    pub densities: Densities,
    pub materials: MaterialTable,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            gauge_m: 1.435,
            sleeper_pitch_m: 0.6,
            pole_interval_m: 50.0,
            terrain_mesh_step_m: 2.0,
            terrain_band_m: 150.0,
            placement_band_m: 80.0,
            densities: Densities::default(),
            materials: MaterialTable::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gauge_m", self.gauge_m),
            ("sleeper_pitch_m", self.sleeper_pitch_m),
            ("pole_interval_m", self.pole_interval_m),
            ("terrain_mesh_step_m", self.terrain_mesh_step_m),
            ("terrain_band_m", self.terrain_band_m),
            ("placement_band_m", self.placement_band_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.placement_band_m >= self.terrain_band_m {
            return Err(Error::config("placement_band_m", "must be below terrain_band_m"));
        }
        self.densities.validate()?;
        self.materials.validate()
    }
}

/// Builds the complete scene: tracks, terrain surface and scattered objects.
pub fn build_scene(rr: &Railroad, map: &HeightMap, params: &SceneParams, seed: u64) -> Result<Scene> {
    params.validate()?;
    let mut next_id = 0u32;
    let mut objects = build_track_geometry(rr, params, Some(map), &mut next_id)?;
    objects.extend(build_terrain_mesh(rr, map, params, &mut next_id)?);
    let placements = generate_spawn_points(rr, map, &params.densities, params.placement_band_m, seed)?;
    objects.extend(instantiate_objects(&placements, &params.materials, seed, &mut next_id)?);
    if next_id > u16::MAX as u32 + 1 {
        return Err(Error::Infeasible(format!(
            "{next_id} object instances exceed the 16-bit label range"
        )));
    }
    Scene::from_objects(objects)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ids_are_stable() {
        for (i, c) in SemanticClass::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(SemanticClass::from_id(i as u8), Some(*c));
        }
        assert_eq!(SemanticClass::Terrain.id(), 1);
        assert_eq!(SemanticClass::Platform.id(), 12);
        assert_eq!(SemanticClass::from_id(13), None);
    }

    #[test]
    fn material_table_defaults() {
        let table = MaterialTable::default();
        let rail = table.material_for(SemanticClass::RailTrack).unwrap();
        assert!(rail.reflective > rail.diffuse);
        let terrain = table.material_for(SemanticClass::Terrain).unwrap();
        assert_eq!(terrain.max_incidence(), std::f64::consts::FRAC_PI_2);
        for c in SemanticClass::ALL.iter().skip(1) {
            let m = table.material_for(*c).unwrap();
            assert!(m.diffuse + m.reflective <= 1.0);
            m.validate().unwrap();
        }
        assert!(table.material_for(SemanticClass::Background).is_err());
    }

    #[test]
    fn material_overrides_apply() {
        let mut table = MaterialTable::default();
        table.0.insert(SemanticClass::Rock, Material::new(0.3, 0.3, 60.0, 0.4));
        assert_eq!(table.material_for(SemanticClass::Rock).unwrap().diffuse, 0.3);
        let json = serde_json::to_string(&table).unwrap();
        assert!(json.contains("\"rock\""));
        let bad = MaterialTable(BTreeMap::from([(SemanticClass::Rock, Material::new(0.8, 0.3, 60.0, 0.4))]));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn container_round_trip() {
        let m = Material::new(0.5, 0.1, 80.0, 0.5);
        let a = SceneObject::new(3, SemanticClass::Rock, m, mesh::axis_box(Vec3::zeros(), Vec3::repeat(1.0)));
        let b = SceneObject::new(
            9,
            SemanticClass::Tree,
            m,
            mesh::frustum(Vec3::new(5.0, 0.0, 0.0), 1.0, 0.0, 3.0, 6),
        );
        let scene = Scene::from_objects(vec![a, b]).unwrap();
        let mut bytes = Vec::new();
        scene.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"RSCN");
        assert_eq!(bytes.len(), 16 + 2 * 37 + scene.triangles.len() * 76);
        let back = Scene::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, scene);
        assert_eq!(scene.object_of(0), 0);
        assert_eq!(scene.object_of(12), 1);
        let (obj, sidecar) = scene.to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), scene.triangles.len());
        assert!(sidecar.contains("rock_3"));
        bytes[0] = b'X';
        assert!(Scene::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn duplicate_instances_rejected() {
        let m = Material::new(0.5, 0.1, 80.0, 0.5);
        let a = SceneObject::new(1, SemanticClass::Rock, m, mesh::axis_box(Vec3::zeros(), Vec3::repeat(1.0)));
        assert!(Scene::from_objects(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn traced_scene_reports_labels() {
        let m = Material::new(0.5, 0.1, 80.0, 0.5);
        let wall = SceneObject::new(
            7,
            SemanticClass::Building,
            m,
            mesh::axis_box(Vec3::new(10.0, -5.0, -5.0), Vec3::new(11.0, 5.0, 5.0)),
        );
        let traced = TracedScene::new(Scene::from_objects(vec![wall]).unwrap());
        let hit = traced.cast(&Ray::new(Vec3::zeros(), Vec3::x(), 100.0)).unwrap();
        assert_eq!(hit.instance, 7);
        assert_eq!(hit.class, SemanticClass::Building);
        assert!((hit.hit.t - 10.0).abs() < 1e-12);
    }
}
