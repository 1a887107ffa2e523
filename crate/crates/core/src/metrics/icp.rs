//! Point-to-point ICP with a closed-form rigid fit per iteration.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::RigidTransform;
use crate::error::{Error, Result};
use crate::geom::{Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS residual improves by less than this (m).
    pub tolerance_m: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            tolerance_m: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMS correspondence distance before the first fit and after each
    /// iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl IcpResult {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&0.0)
    }
}

fn check_spread(points: &[Vec3], name: &str) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("{name}: ICP needs at least 3 points")));
    }
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let cov = points.iter().fold(Matrix3::zeros(), |m, p| {
        let d = p - c;
        m + d * d.transpose()
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::invalid(format!("{name}: points are coincident or collinear")));
    }
    Ok(())
}

/// Least-squares rotation and translation mapping `src[i]` onto `dst[i]`.
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let h = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |m, (s, d)| m + (s - cs) * (d - cd).transpose());
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    // V·diag(1,1,d)·Uᵀ is orthonormal with det +1 by construction.
    let rotation = Rotation::from_matrix_unchecked(r);
    RigidTransform {
        translation: cd - rotation * cs,
        rotation,
    }
}

/// Aligns `source` onto `target`: the result maps source points close to
/// their nearest target points, minimizing the summed squared distances.
pub fn icp_align(source: &[Vec3], target: &[Vec3], initial: &RigidTransform, params: &IcpParams) -> Result<IcpResult> {
    check_spread(source, "source")?;
    check_spread(target, "target")?;
    let tree = KdTree::new(target.to_vec());
    let correspond = |t: &RigidTransform| -> (Vec<Vec3>, f64) {
        let pairs: Vec<(Vec3, f64)> = source
            .par_iter()
            .map(|p| {
                let (i, d2) = tree.nearest(&t.apply(p)).unwrap();
                (target[i], d2)
            })
            .collect();
        let mse = pairs.iter().map(|x| x.1).sum::<f64>() / pairs.len() as f64;
        (pairs.into_iter().map(|x| x.0).collect(), mse.sqrt())
    };
    let mut t = *initial;
    let (mut matched, r0) = correspond(&t);
    let mut residuals = vec![r0];
    let mut converged = r0 == 0.0;
    for _ in 0..params.max_iterations {
        if converged {
            break;
        }
        let next = fit_rigid(source, &matched);
        let (m, r) = correspond(&next);
        let prev = *residuals.last().unwrap();
        if r > prev {
            // Round-off only; keep the better estimate.
            converged = true;
            break;
        }
        t = next;
        matched = m;
        residuals.push(r);
        converged = prev - r < params.tolerance_m;
    }
    Ok(IcpResult {
        transform: t,
        residuals,
        converged,
    })
}
