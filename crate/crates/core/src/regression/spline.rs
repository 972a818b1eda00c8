//! Cubic regression spline basis parameterised by function values at knots.
//!
//! A natural cubic spline through `(x_j, β_j)` has second derivatives
//! `γ = F·β` with `γ_1 = γ_K = 0` and `B·γ_interior = D·β`. The wiggliness
//! penalty `∫ f''² = βᵀ·Dᵀ B⁻¹ D·β` vanishes exactly on linear functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{EvppiError, Result};

#[derive(Debug, Clone)]
pub struct CubicSplineBasis {
    knots: Vec<f64>,
    /// `K × K` map from knot values to knot second derivatives.
    f: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

/// `n` knots at evenly spaced empirical quantiles, duplicates removed.
pub fn quantile_knots(x: &[f64], n: usize) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = sorted.len() - 1;
    let mut knots: Vec<f64> = (0..n)
        .map(|j| {
            let pos = j as f64 * last as f64 / (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let w = pos - lo as f64;
            sorted[lo] * (1.0 - w) + sorted[hi] * w
        })
        .collect();
    knots.dedup();
    knots
}

impl CubicSplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 3 {
            return Err(EvppiError::RankDeficient(format!(
                "spline needs at least 3 distinct knots, got {k}"
            )));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&v| !(v > 0.0)) {
            return Err(EvppiError::InvalidArgument(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let mut d = DMatrix::zeros(k - 2, k);
        let mut b = DMatrix::zeros(k - 2, k - 2);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < k - 2 {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let chol = b.clone().cholesky().ok_or_else(|| {
            EvppiError::Numerical("spline knot-spacing matrix is not positive definite".into())
        })?;
        let binv_d = chol.solve(&d);
        let mut f = DMatrix::zeros(k, k);
        f.view_mut((1, 0), (k - 2, k)).copy_from(&binv_d);
        let penalty = d.transpose() * &binv_d;
        let penalty = 0.5 * (&penalty + penalty.transpose());
        Ok(Self { knots, f, penalty })
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Writes the basis row at `x` into `row` (length `K`). Outside the knot
    /// range the spline continues linearly.
    pub fn eval_into(&self, x: f64, row: &mut [f64]) {
        let k = self.knots.len();
        row.iter_mut().for_each(|v| *v = 0.0);
        let kn = &self.knots;
        if x < kn[0] {
            // f(x) = β_1 + (x − x_1)·f'(x_1), f'(x_1) = (β_2 − β_1)/h − h(2γ_1 + γ_2)/6.
            let h = kn[1] - kn[0];
            let dx = x - kn[0];
            row[0] += 1.0 - dx / h;
            row[1] += dx / h;
            for c in 0..k {
                row[c] -= dx * h * (2.0 * self.f[(0, c)] + self.f[(1, c)]) / 6.0;
            }
            return;
        }
        if x > kn[k - 1] {
            let h = kn[k - 1] - kn[k - 2];
            let dx = x - kn[k - 1];
            row[k - 1] += 1.0 + dx / h;
            row[k - 2] -= dx / h;
            for c in 0..k {
                row[c] += dx * h * (self.f[(k - 2, c)] + 2.0 * self.f[(k - 1, c)]) / 6.0;
            }
            return;
        }
        let j = match kn.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= k => k - 2,
            p => p - 1,
        };
        let h = kn[j + 1] - kn[j];
        let am = (kn[j + 1] - x) / h;
        let ap = (x - kn[j]) / h;
        let cm = ((kn[j + 1] - x).powi(3) / h - h * (kn[j + 1] - x)) / 6.0;
        let cp = ((x - kn[j]).powi(3) / h - h * (x - kn[j])) / 6.0;
        row[j] += am;
        row[j + 1] += ap;
        for c in 0..k {
            row[c] += cm * self.f[(j, c)] + cp * self.f[(j + 1, c)];
        }
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut out = DMatrix::zeros(x.len(), k);
        let mut row = vec![0.0; k];
        for (r, &v) in x.iter().enumerate() {
            self.eval_into(v, &mut row);
            for c in 0..k {
                out[(r, c)] = row[c];
            }
        }
        out
    }
}

/// Null-space basis `Z` (`K × (K−1)`) of the constraint row `c`, from a
/// Householder reflection; `c·Z = 0` and `Z` has orthonormal columns.
pub fn sum_to_zero(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.norm();
    let mut u = c.clone();
    if norm == 0.0 {
        return DMatrix::identity(k, k).columns(1, k - 1).into_owned();
    }
    u[0] += if c[0] >= 0.0 { norm } else { -norm };
    let uu = u.norm_squared();
    let h = DMatrix::identity(k, k) - (&u * u.transpose()) * (2.0 / uu);
    h.columns(1, k - 1).into_owned()
}
