//! Low-poly primitive builders. All coordinates are ENU, z up.

use crate::geom::Vec3;

pub type Tri = [Vec3; 3];

fn quad(out: &mut Vec<Tri>, a: Vec3, b: Vec3, c: Vec3, d: Vec3) {
    out.push([a, b, c]);
    out.push([a, c, d]);
}

/// Box centered at `center` with edges along the given unit axes.
pub fn oriented_box(center: Vec3, axes: [Vec3; 3], half: Vec3) -> Vec<Tri> {
    let corner = |sx: f64, sy: f64, sz: f64| center + axes[0] * (sx * half.x) + axes[1] * (sy * half.y) + axes[2] * (sz * half.z);
    let c: Vec<Vec3> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            corner(s(1), s(2), s(4))
        })
        .collect();
    let mut out = Vec::with_capacity(12);
    for [a, b, cc, d] in [
        [0, 1, 3, 2],
        [4, 6, 7, 5],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 2, 6, 4],
        [1, 5, 7, 3],
    ] {
        quad(&mut out, c[a], c[b], c[cc], c[d]);
    }
    out
}

pub fn axis_box(min: Vec3, max: Vec3) -> Vec<Tri> {
    oriented_box((min + max) * 0.5, [Vec3::x(), Vec3::y(), Vec3::z()], (max - min) * 0.5)
}

/// Upright frustum (cylinder when `r0 == r1`, cone when `r1 == 0`) with
/// closed ends.
pub fn frustum(base: Vec3, r0: f64, r1: f64, height: f64, segments: usize) -> Vec<Tri> {
    let ring = |r: f64, z: f64| -> Vec<Vec3> {
        (0..segments)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / segments as f64;
                base + Vec3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect()
    };
    let (lo, hi) = (ring(r0, 0.0), ring(r1, height));
    let (c0, c1) = (base, base + Vec3::new(0.0, 0.0, height));
    let mut out = Vec::new();
    for k in 0..segments {
        let j = (k + 1) % segments;
        out.push([c0, lo[j], lo[k]]);
        if r1 > 0.0 {
            quad(&mut out, lo[k], lo[j], hi[j], hi[k]);
            out.push([c1, hi[k], hi[j]]);
        } else {
            out.push([lo[k], lo[j], c1]);
        }
    }
    out
}

/// Icosphere of one subdivision level, radius 1, centered at the origin.
pub fn icosphere() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    #[rustfmt::skip]
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    #[rustfmt::skip]
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut mids = std::collections::BTreeMap::new();
    let mut mid = |a: usize, b: usize, v: &mut Vec<Vec3>| {
        let key = (a.min(b), a.max(b));
        *mids.entry(key).or_insert_with(|| {
            v.push(((v[a] + v[b]) * 0.5).normalize());
            v.len() - 1
        })
    };
    let mut out = Vec::with_capacity(80);
    for [a, b, c] in faces {
        let ab = mid(a, b, &mut v);
        let bc = mid(b, c, &mut v);
        let ca = mid(c, a, &mut v);
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    (v, out)
}

/// Closed prism swept along a polyline. `profile` lists (lateral, height)
/// pairs of a closed cross-section; `frames` gives the station origin and
/// its horizontal left unit vector.
pub fn sweep(frames: &[(Vec3, Vec3)], profile: &[(f64, f64)], capped: bool) -> Vec<Tri> {
    let up = Vec3::z();
    let section = |(o, left): &(Vec3, Vec3)| -> Vec<Vec3> { profile.iter().map(|&(l, h)| o + left * l + up * h).collect() };
    let rings: Vec<Vec<Vec3>> = frames.iter().map(section).collect();
    let m = profile.len();
    let mut out = Vec::new();
    for w in rings.windows(2) {
        for k in 0..m {
            let j = (k + 1) % m;
            quad(&mut out, w[0][k], w[0][j], w[1][j], w[1][k]);
        }
    }
    if capped && m >= 3 {
        for ring in [rings.first(), rings.last()].into_iter().flatten() {
            for k in 1..m - 1 {
                out.push([ring[0], ring[k], ring[k + 1]]);
            }
        }
    }
    out
}

/// Rotates about z by `yaw`, scales uniformly and translates.
pub fn place(tris: &mut [Tri], position: Vec3, yaw: f64, scale: f64) {
    let (s, c) = yaw.sin_cos();
    for t in tris.iter_mut() {
        for v in t.iter_mut() {
            let p = *v * scale;
            *v = position + Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(tris: &[Tri]) -> f64 {
        tris.iter().map(|[a, b, c]| a.dot(&b.cross(c)) / 6.0).sum()
    }

    #[test]
    fn closed_solids_have_expected_volume() {
        let b = axis_box(Vec3::zeros(), Vec3::new(2.0, 3.0, 4.0));
        assert!((signed_volume(&b).abs() - 24.0).abs() < 1e-9);
        let cyl = frustum(Vec3::zeros(), 1.0, 1.0, 2.0, 64);
        let exact = 2.0 * 64.0 / 2.0 * (std::f64::consts::TAU / 64.0).sin();
        assert!((signed_volume(&cyl).abs() - exact).abs() < 1e-9);
        let (v, f) = icosphere();
        assert_eq!(f.len(), 80);
        assert!(v.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sweep_of_square_is_a_box() {
        let frames = [(Vec3::zeros(), Vec3::y()), (Vec3::new(5.0, 0.0, 0.0), Vec3::y())];
        let prof = [(-1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0)];
        let tris = sweep(&frames, &prof, true);
        assert_eq!(tris.len(), 12);
        assert!((signed_volume(&tris).abs() - 10.0).abs() < 1e-9);
    }
}
