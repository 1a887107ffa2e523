use crate::error::{Error, Result};

/// Natural cubic smoothing spline.
///
/// Minimises `sum_i (y_i - g(x_i))^2 + lambda * integral g''(x)^2 dx` over
/// all twice-differentiable `g`. The minimiser is a natural cubic spline with
/// knots at the sample abscissae; with `lambda = 0` it interpolates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    /// Fitted values at the knots.
    values: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    second: Vec<f64>,
    /// Per-interval polynomial `a + b t + c t^2 + d t^3`, `t = x - knots[i]`.
    coeffs: Vec<[f64; 4]>,
    lambda: f64,
}

/// Fits a smoothing spline to `(x, y)` samples with strictly increasing `x`.
pub fn fit_smoothing_spline(samples: &[(f64, f64)], lambda: f64) -> Result<SmoothingSpline> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::invalid(format!("smoothing spline needs at least 4 samples, got {n}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("smoothing parameter must be >= 0, got {lambda}")));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("non-finite spline sample"));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = h.iter().position(|&hi| !(hi > 0.0)) {
        return Err(Error::invalid(format!(
            "spline abscissae must be strictly increasing (x[{i}] = {}, x[{}] = {})",
            x[i],
            i + 1,
            x[i + 1]
        )));
    }

    // Interior unknowns gamma_1..gamma_{n-2}; symmetric pentadiagonal system
    // (R + lambda Q^T Q) gamma = Q^T y stored as three bands.
    let m = n - 2;
    let mut diag = vec![0.0; m];
    let mut off1 = vec![0.0; m];
    let mut off2 = vec![0.0; m];
    for j in 0..m {
        diag[j] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            off1[j] = h[j + 1] / 6.0;
        }
    }
    if lambda > 0.0 {
        // Row r of Q holds entries for interior columns r-1, r, r+1 (1-based knot ids).
        for r in 0..n {
            let cols: Vec<(usize, f64)> = [r.wrapping_sub(1), r, r + 1]
                .into_iter()
                .filter(|&c| c >= 1 && c <= n - 2)
                .map(|c| (c - 1, q_entry(&h, r, c)))
                .collect();
            for &(a, qa) in &cols {
                for &(b, qb) in &cols {
                    if b == a {
                        diag[a] += lambda * qa * qb;
                    } else if b == a + 1 {
                        off1[a] += lambda * qa * qb;
                    } else if b == a + 2 {
                        off2[a] += lambda * qa * qb;
                    }
                }
            }
        }
    }
    let rhs: Vec<f64> = (1..=m)
        .map(|j| y[j - 1] / h[j - 1] - (1.0 / h[j - 1] + 1.0 / h[j]) * y[j] + y[j + 1] / h[j])
        .collect();
    let gamma_inner = solve_pentadiagonal_spd(&diag, &off1, &off2, &rhs)?;

    let mut second = vec![0.0; n];
    second[1..=m].copy_from_slice(&gamma_inner);
    let values: Vec<f64> = if lambda > 0.0 {
        (0..n)
            .map(|r| {
                let q_gamma: f64 = [r.wrapping_sub(1), r, r + 1]
                    .into_iter()
                    .filter(|&c| c >= 1 && c <= n - 2)
                    .map(|c| q_entry(&h, r, c) * second[c])
                    .sum();
                y[r] - lambda * q_gamma
            })
            .collect()
    } else {
        y.clone()
    };

    let coeffs = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let (g0, g1) = (values[i], values[i + 1]);
            let (s0, s1) = (second[i], second[i + 1]);
            [
                g0,
                (g1 - g0) / hi - hi * (2.0 * s0 + s1) / 6.0,
                s0 / 2.0,
                (s1 - s0) / (6.0 * hi),
            ]
        })
        .collect();

    Ok(SmoothingSpline {
        knots: x,
        values,
        second,
        coeffs,
        lambda,
    })
}

/// Entry `Q[r][c]` of the second-difference matrix (c is a 1-based interior knot).
fn q_entry(h: &[f64], r: usize, c: usize) -> f64 {
    if r + 1 == c {
        1.0 / h[c - 1]
    } else if r == c {
        -1.0 / h[c - 1] - 1.0 / h[c]
    } else if r == c + 1 {
        1.0 / h[c]
    } else {
        0.0
    }
}

/// Banded Cholesky solve for a symmetric positive definite matrix with two
/// super-diagonals.
fn solve_pentadiagonal_spd(diag: &[f64], off1: &[f64], off2: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    // l0[i] = L[i][i], l1[i] = L[i][i-1], l2[i] = L[i][i-2]
    let mut l0 = vec![0.0; m];
    let mut l1 = vec![0.0; m];
    let mut l2 = vec![0.0; m];
    for i in 0..m {
        if i >= 2 {
            l2[i] = off2[i - 2] / l0[i - 2];
        }
        if i >= 1 {
            let prev = if i >= 2 { l2[i] * l1[i - 1] } else { 0.0 };
            l1[i] = (off1[i - 1] - prev) / l0[i - 1];
        }
        let d = diag[i] - l1[i] * l1[i] - l2[i] * l2[i];
        if !(d > 0.0) {
            return Err(Error::invalid("smoothing spline system is not positive definite"));
        }
        l0[i] = d.sqrt();
    }
    let mut z = vec![0.0; m];
    for i in 0..m {
        let mut acc = rhs[i];
        if i >= 1 {
            acc -= l1[i] * z[i - 1];
        }
        if i >= 2 {
            acc -= l2[i] * z[i - 2];
        }
        z[i] = acc / l0[i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = z[i];
        if i + 1 < m {
            acc -= l1[i + 1] * x[i + 1];
        }
        if i + 2 < m {
            acc -= l2[i + 2] * x[i + 2];
        }
        x[i] = acc / l0[i];
    }
    Ok(x)
}

impl SmoothingSpline {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn fitted_values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Value (`order` 0), slope (1) or curvature (2) at `s`.
    pub fn eval(&self, s: f64, order: u8) -> Result<f64> {
        let tol = 1e-9 * (self.end() - self.start()).max(1.0);
        if !(s >= self.start() - tol && s <= self.end() + tol) {
            return Err(Error::invalid(format!(
                "abscissa {s} outside spline range [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        if order > 2 {
            return Err(Error::invalid(format!("derivative order {order} not supported")));
        }
        Ok(self.eval_clamped(s, order))
    }

    /// Like [`eval`](Self::eval) but clamps `s` into the knot range.
    pub fn eval_clamped(&self, s: f64, order: u8) -> f64 {
        let s = s.clamp(self.start(), self.end());
        let seg = self
            .knots
            .partition_point(|&k| k <= s)
            .saturating_sub(1)
            .min(self.coeffs.len() - 1);
        let [a, b, c, d] = self.coeffs[seg];
        let t = s - self.knots[seg];
        match order {
            0 => a + t * (b + t * (c + t * d)),
            1 => b + t * (2.0 * c + 3.0 * d * t),
            _ => 2.0 * c + 6.0 * d * t,
        }
    }

    /// Integral of the squared second derivative over the knot range.
    pub fn roughness(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.second.windows(2))
            .map(|(k, g)| (k[1] - k[0]) * (g[0] * g[0] + g[0] * g[1] + g[1] * g[1]) / 3.0)
            .sum()
    }

    /// Penalised least-squares objective for the given samples.
    pub fn objective(&self, samples: &[(f64, f64)]) -> f64 {
        let rss: f64 = samples
            .iter()
            .map(|&(x, y)| {
                let r = y - self.eval_clamped(x, 0);
                r * r
            })
            .sum();
        rss + self.lambda * self.roughness()
    }
}
