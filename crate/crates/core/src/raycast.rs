//! Nearest-hit ray casting over a triangle soup.
//!
//! The accelerator is a bounding-volume hierarchy built with a binned
//! surface-area heuristic. Ties between equally distant triangles resolve
//! to the lowest triangle index so the result never depends on traversal
//! order.

use rayon::prelude::*;

use crate::geom::{Aabb, Vec3};

/// Rays ignore intersections closer than this, m.
pub const DEFAULT_T_MIN: f64 = 1e-4;

const BINS: usize = 16;
const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3, t_max: f64) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
            t_max,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Unit face normal facing the ray origin.
    pub normal: Vec3,
    pub triangle: u32,
}

/// Möller–Trumbore intersection. Returns `t` for hits in `[t_min, t_max]`;
/// edges and vertices count as inside.
#[inline]
pub fn intersect_triangle(ray: &Ray, v0: &Vec3, e1: &Vec3, e2: &Vec3, t_min: f64) -> Option<f64> {
    let p = ray.dir.cross(e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= t_min && t <= ray.t_max).then_some(t)
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// First child for interior nodes, first triangle slot for leaves.
    first: u32,
    /// Triangle count; zero marks an interior node.
    count: u32,
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
}

/// Read-only after construction; safe to query from many threads.
#[derive(Debug, Clone)]
pub struct Accelerator {
    nodes: Vec<Node>,
    tris: Vec<Tri>,
    /// Original triangle index of each slot in leaf order.
    order: Vec<u32>,
    pub t_min: f64,
}

impl Accelerator {
    pub fn build(triangles: &[[Vec3; 3]]) -> Self {
        let n = triangles.len();
        let boxes: Vec<Aabb> = triangles.iter().map(|t| Aabb::from_points(t.iter())).collect();
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::centroid).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n.max(1));
        if n > 0 {
            nodes.push(Node {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            });
            // (node, start, end) ranges awaiting a split.
            let mut work = vec![(0usize, 0usize, n)];
            while let Some((node, start, end)) = work.pop() {
                let bounds = order[start..end]
                    .iter()
                    .fold(Aabb::empty(), |b, &i| b.merge(&boxes[i as usize]));
                nodes[node].bounds = pad(bounds);
                let split = if end - start > LEAF_SIZE {
                    sah_split(&mut order[start..end], &boxes, &centroids)
                } else {
                    None
                };
                match split {
                    Some(mid) => {
                        let left = nodes.len();
                        for _ in 0..2 {
                            nodes.push(Node {
                                bounds: Aabb::empty(),
                                first: 0,
                                count: 0,
                            });
                        }
                        nodes[node].first = left as u32;
                        nodes[node].count = 0;
                        work.push((left + 1, start + mid, end));
                        work.push((left, start, start + mid));
                    }
                    None => {
                        nodes[node].first = start as u32;
                        nodes[node].count = (end - start) as u32;
                    }
                }
            }
        }
        let tris = order
            .iter()
            .map(|&i| {
                let [a, b, c] = triangles[i as usize];
                Tri {
                    v0: a,
                    e1: b - a,
                    e2: c - a,
                }
            })
            .collect();
        Self {
            nodes,
            tris,
            order,
            t_min: DEFAULT_T_MIN,
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    /// Checks that every node's box contains its children's boxes and its
    /// triangles' boxes.
    pub fn check_containment(&self, triangles: &[[Vec3; 3]]) -> bool {
        self.nodes.iter().all(|n| {
            if n.count > 0 {
                (n.first..n.first + n.count).all(|slot| {
                    let t = triangles[self.order[slot as usize] as usize];
                    n.bounds.contains(&Aabb::from_points(t.iter()))
                })
            } else {
                let (l, r) = (&self.nodes[n.first as usize], &self.nodes[n.first as usize + 1]);
                n.bounds.contains(&l.bounds) && n.bounds.contains(&r.bounds)
            }
        })
    }

    fn slab(bounds: &Aabb, origin: &Vec3, inv: &Vec3, t_max: f64) -> Option<f64> {
        let mut lo = 0.0f64;
        let mut hi = t_max;
        for a in 0..3 {
            let t1 = (bounds.min[a] - origin[a]) * inv[a];
            let t2 = (bounds.max[a] - origin[a]) * inv[a];
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        (lo <= hi).then_some(lo)
    }

    pub fn cast(&self, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        // Best (t, original index, slot).
        let mut best: Option<(f64, u32, usize)> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if Self::slab(&self.nodes[0].bounds, &ray.origin, &inv, ray.t_max).is_some() {
            stack.push((0, 0.0));
        }
        while let Some((ni, t_enter)) = stack.pop() {
            if let Some((bt, _, _)) = best {
                if t_enter > bt {
                    continue;
                }
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                for slot in node.first as usize..(node.first + node.count) as usize {
                    let tri = &self.tris[slot];
                    if let Some(t) = intersect_triangle(ray, &tri.v0, &tri.e1, &tri.e2, self.t_min) {
                        let idx = self.order[slot];
                        let better = match best {
                            None => true,
                            Some((bt, bi, _)) => t < bt || (t == bt && idx < bi),
                        };
                        if better {
                            best = Some((t, idx, slot));
                        }
                    }
                }
                continue;
            }
            let limit = best.map_or(ray.t_max, |b| b.0);
            let (l, r) = (node.first, node.first + 1);
            let tl = Self::slab(&self.nodes[l as usize].bounds, &ray.origin, &inv, limit);
            let tr = Self::slab(&self.nodes[r as usize].bounds, &ray.origin, &inv, limit);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    // Visit the nearer child first.
                    if a <= b {
                        stack.push((r, b));
                        stack.push((l, a));
                    } else {
                        stack.push((l, a));
                        stack.push((r, b));
                    }
                }
                (Some(a), None) => stack.push((l, a)),
                (None, Some(b)) => stack.push((r, b)),
                (None, None) => {}
            }
        }
        best.map(|(t, idx, slot)| {
            let tri = &self.tris[slot];
            make_hit(ray, t, idx, &tri.e1, &tri.e2)
        })
    }

    /// True if anything lies along the ray within `[t_min, t_max]`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if Self::slab(&node.bounds, &ray.origin, &inv, ray.t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for slot in node.first as usize..(node.first + node.count) as usize {
                    let tri = &self.tris[slot];
                    if intersect_triangle(ray, &tri.v0, &tri.e1, &tri.e2, self.t_min).is_some() {
                        return true;
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(node.first + 1);
            }
        }
        false
    }

    /// Element-wise [`Accelerator::cast`], evaluated in parallel.
    pub fn cast_batch(&self, rays: &[Ray]) -> Vec<Option<Hit>> {
        rays.par_iter().map(|r| self.cast(r)).collect()
    }
}

fn make_hit(ray: &Ray, t: f64, triangle: u32, e1: &Vec3, e2: &Vec3) -> Hit {
    let mut normal = e1.cross(e2).normalize();
    if normal.dot(&ray.dir) > 0.0 {
        normal = -normal;
    }
    Hit {
        t,
        point: ray.at(t),
        normal,
        triangle,
    }
}

/// Exhaustive nearest hit with the same tie-break, for verification.
pub fn cast_brute_force(triangles: &[[Vec3; 3]], ray: &Ray, t_min: f64) -> Option<Hit> {
    let mut best: Option<(f64, usize)> = None;
    for (i, [a, b, c]) in triangles.iter().enumerate() {
        let (e1, e2) = (b - a, c - a);
        if let Some(t) = intersect_triangle(ray, a, &e1, &e2, t_min) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best.map(|(t, i)| {
        let [a, b, c] = triangles[i];
        make_hit(ray, t, i as u32, &(b - a), &(c - a))
    })
}

/// Grows a box by a hair so that flat boxes still intersect rays robustly.
fn pad(b: Aabb) -> Aabb {
    if b.is_empty() {
        return b;
    }
    let scale = b.min.abs().max().max(b.max.abs().max()).max(1.0);
    let eps = Vec3::repeat(1e-9 * scale);
    Aabb {
        min: b.min - eps,
        max: b.max + eps,
    }
}

/// Partitions `items` in place and returns the split position, or `None`
/// when a leaf is cheaper.
fn sah_split(items: &mut [u32], boxes: &[Aabb], centroids: &[Vec3]) -> Option<usize> {
    let cbounds = Aabb::from_points(items.iter().map(|&i| &centroids[i as usize]));
    let extent = cbounds.extent();
    let parent_area = items
        .iter()
        .fold(Aabb::empty(), |b, &i| b.merge(&boxes[i as usize]))
        .surface_area();
    let mut best: Option<(f64, usize, usize)> = None;
    for axis in 0..3 {
        if !(extent[axis] > 0.0) {
            continue;
        }
        let lo = cbounds.min[axis];
        let scale = BINS as f64 / extent[axis];
        let bin_of = |i: u32| (((centroids[i as usize][axis] - lo) * scale) as usize).min(BINS - 1);
        let mut bin_box = [Aabb::empty(); BINS];
        let mut bin_count = [0usize; BINS];
        for &i in items.iter() {
            let b = bin_of(i);
            bin_box[b] = bin_box[b].merge(&boxes[i as usize]);
            bin_count[b] += 1;
        }
        let mut right_area = [0.0; BINS];
        let mut right_count = [0usize; BINS];
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        for b in (1..BINS).rev() {
            acc = acc.merge(&bin_box[b]);
            cnt += bin_count[b];
            right_area[b] = acc.surface_area();
            right_count[b] = cnt;
        }
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        for b in 0..BINS - 1 {
            acc = acc.merge(&bin_box[b]);
            cnt += bin_count[b];
            let (rc, ra) = (right_count[b + 1], right_area[b + 1]);
            if cnt == 0 || rc == 0 {
                continue;
            }
            let cost = cnt as f64 * acc.surface_area() + rc as f64 * ra;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b));
            }
        }
    }
    let leaf_cost = items.len() as f64 * parent_area;
    let (cost, axis, split_bin) = match best {
        Some(b) => b,
        None => {
            // All centroids coincide: split by index if the leaf is large.
            return (items.len() > 4 * LEAF_SIZE).then_some(items.len() / 2);
        }
    };
    if cost >= leaf_cost && items.len() <= 4 * LEAF_SIZE {
        return None;
    }
    let lo = cbounds.min[axis];
    let scale = BINS as f64 / extent[axis];
    let mut mid = 0;
    for k in 0..items.len() {
        let b = (((centroids[items[k] as usize][axis] - lo) * scale) as usize).min(BINS - 1);
        if b <= split_bin {
            items.swap(k, mid);
            mid += 1;
        }
    }
    Some(mid)
}
