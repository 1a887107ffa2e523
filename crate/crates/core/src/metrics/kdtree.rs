//! Static 3-D k-d tree for nearest-neighbour queries.

use crate::geom::Vec3;

/// Implicit balanced tree: the node of range `lo..hi` is the median slot
/// `(lo + hi) / 2` of the permuted index array.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    axis: Vec<u8>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let n = points.len();
        let mut t = KdTree {
            points,
            order: (0..n).collect(),
            axis: vec![0; n],
        };
        t.build(0, n);
        t
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let a = (max - min).imax();
        let m = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(m - lo, |&x, &y| pts[x][a].total_cmp(&pts[y][a]));
        self.axis[m] = a as u8;
        self.build(lo, m);
        self.build(m + 1, hi);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Index and squared distance of the closest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), &mut best);
        Some(best)
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let m = (lo + hi) / 2;
        let i = self.order[m];
        let d2 = (self.points[i] - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            *best = (i, d2);
        }
        let a = self.axis[m] as usize;
        let diff = q[a] - self.points[i][a];
        let (near, far) = if diff < 0.0 {
            ((lo, m), (m + 1, hi))
        } else {
            ((m + 1, hi), (lo, m))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

/// Exhaustive scan, used as a reference.
pub fn nearest_exhaustive(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - q).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}
