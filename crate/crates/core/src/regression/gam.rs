//! Penalised cubic regression splines with GCV smoothing selection.
//!
//! Each parameter gets a sum-to-zero constrained spline with quantile knots.
//! Pairwise interactions are tensor products of smaller constrained margins
//! with one penalty per margin, so main effects and interactions are
//! smoothed separately. The model is fitted in coefficient space:
//! `XᵀX` and `Xᵀy` are formed once and every GCV evaluation costs one
//! `p × p` Cholesky factorisation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::spline::{quantile_knots, sum_to_zero, CubicSplineBasis};
use super::{standardize, ColumnFit};
use crate::error::{EvppiError, Result};
use crate::psa::{ParamSubset, PsaSample};

/// Above this many parameters the spline design becomes unstable.
pub const MAX_GAM_DIMS: usize = 5;

/// Interaction structure for multi-parameter fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interactions {
    /// Pairwise for up to three parameters, additive for four or five.
    #[default]
    Auto,
    Additive,
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamConfig {
    /// Knots per main-effect spline.
    pub knots: usize,
    /// Knots per margin of an interaction term.
    pub interaction_knots: usize,
    pub interactions: Interactions,
}

impl Default for GamConfig {
    fn default() -> Self {
        Self {
            knots: 10,
            interaction_knots: 5,
            interactions: Interactions::Auto,
        }
    }
}

/// A penalty acting on the coefficient block starting at `offset`.
struct Penalty {
    offset: usize,
    matrix: DMatrix<f64>,
    scale: f64,
}

/// Design matrix and penalties shared by every treatment column.
pub(crate) struct GamDesign {
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    penalties: Vec<Penalty>,
    knots: Vec<usize>,
    pairwise: bool,
}

fn constrained_margin(x: &[f64], n_knots: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let basis = CubicSplineBasis::new(quantile_knots(x, n_knots))?;
    let raw = basis.design(x);
    let colsums = DVector::from_iterator(raw.ncols(), raw.column_iter().map(|c| c.sum()));
    let z = sum_to_zero(&colsums);
    let design = &raw * &z;
    let penalty = z.transpose() * basis.penalty() * &z;
    Ok((design, penalty))
}

impl GamDesign {
    pub fn new(sample: &PsaSample, subset: &ParamSubset, cfg: &GamConfig) -> Result<Self> {
        let d = subset.len();
        if d > MAX_GAM_DIMS {
            return Err(EvppiError::InvalidArgument(format!(
                "GAM supports at most {MAX_GAM_DIMS} parameters, got {d}"
            )));
        }
        if cfg.knots < 3 || cfg.interaction_knots < 3 {
            return Err(EvppiError::InvalidArgument(
                "GAM needs at least 3 knots per spline".into(),
            ));
        }
        let pairwise = match cfg.interactions {
            Interactions::Auto => d <= 3,
            Interactions::Additive => false,
            Interactions::Pairwise => true,
        } && d >= 2;
        let n = sample.n_sims();
        let cols: Vec<Vec<f64>> = subset
            .indices()
            .iter()
            .map(|&p| {
                let z = standardize(sample.param_column(p)?);
                z.ok_or_else(|| {
                    EvppiError::RankDeficient(format!(
                        "parameter `{}` is constant",
                        sample.param_names()[p]
                    ))
                })
            })
            .collect::<Result<_>>()?;

        let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::from_element(n, 1, 1.0)];
        let mut penalties = Vec::new();
        let mut knots = Vec::new();
        let mut offset = 1;
        for c in &cols {
            let (design, penalty) = constrained_margin(c, cfg.knots)?;
            knots.push(design.ncols() + 1);
            penalties.push(Penalty {
                offset,
                matrix: penalty,
                scale: 1.0,
            });
            offset += design.ncols();
            blocks.push(design);
        }
        if pairwise {
            let margins = cols
                .iter()
                .map(|c| constrained_margin(c, cfg.interaction_knots))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..d {
                for j in i + 1..d {
                    let (xi, si) = &margins[i];
                    let (xj, sj) = &margins[j];
                    let (ki, kj) = (xi.ncols(), xj.ncols());
                    let design = DMatrix::from_fn(n, ki * kj, |r, c| xi[(r, c / kj)] * xj[(r, c % kj)]);
                    let ii = DMatrix::<f64>::identity(ki, ki);
                    let ij = DMatrix::<f64>::identity(kj, kj);
                    penalties.push(Penalty {
                        offset,
                        matrix: si.kronecker(&ij),
                        scale: 1.0,
                    });
                    penalties.push(Penalty {
                        offset,
                        matrix: ii.kronecker(sj),
                        scale: 1.0,
                    });
                    offset += ki * kj;
                    blocks.push(design);
                }
            }
        }
        let mut x = DMatrix::zeros(n, offset);
        let mut at = 0;
        for b in &blocks {
            x.view_mut((0, at), (n, b.ncols())).copy_from(b);
            at += b.ncols();
        }
        let xtx = x.tr_mul(&x);
        let xtx_norm = xtx.norm();
        for p in penalties.iter_mut() {
            p.scale = xtx_norm / p.matrix.norm().max(f64::MIN_POSITIVE);
        }
        Ok(Self {
            x,
            xtx,
            penalties,
            knots,
            pairwise,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn penalised(&self, log_lambda: &[f64]) -> DMatrix<f64> {
        let mut m = self.xtx.clone();
        for (p, &ll) in self.penalties.iter().zip(log_lambda) {
            let w = ll.exp() * p.scale;
            let k = p.matrix.nrows();
            let mut block = m.view_mut((p.offset, p.offset), (k, k));
            block += &p.matrix * w;
        }
        m
    }

    /// Fits one response column; `y` must already be centred.
    pub fn fit(&self, y: &[f64]) -> Result<ColumnFit> {
        let n = y.len() as f64;
        let yv = DVector::from_column_slice(y);
        let xty = self.x.tr_mul(&yv);
        let yy = yv.norm_squared();
        let score = |ll: &[f64]| -> f64 {
            match Gcv::evaluate(self, ll, &xty, yy, n) {
                Some(g) => g.score,
                None => f64::INFINITY,
            }
        };

        let n_pen = self.penalties.len();
        let (lo, hi) = (-15.0, 15.0);
        let mut ll = vec![0.0; n_pen];
        // Common smoothing parameter first, then coordinate refinement.
        let common = minimize_1d(|v| score(&vec![v; n_pen]), lo, hi, 1.5);
        ll.iter_mut().for_each(|v| *v = common);
        if n_pen > 1 {
            for _ in 0..2 {
                for j in 0..n_pen {
                    let mut trial = ll.clone();
                    let best = minimize_1d(
                        |v| {
                            trial[j] = v;
                            score(&trial)
                        },
                        lo,
                        hi,
                        3.0,
                    );
                    ll[j] = best;
                }
            }
        }
        let g = Gcv::evaluate(self, &ll, &xty, yy, n).ok_or_else(|| {
            EvppiError::RankDeficient("GAM design is rank deficient".into())
        })?;
        if g.min_pivot_ratio < 1e-13 {
            return Err(EvppiError::RankDeficient(format!(
                "GAM system is numerically singular (pivot ratio {:.1e})",
                g.min_pivot_ratio
            )));
        }
        let fitted = &self.x * &g.beta;
        let lambdas: Vec<f64> = self
            .penalties
            .iter()
            .zip(&ll)
            .map(|(p, l)| l.exp() * p.scale)
            .collect();
        Ok(ColumnFit {
            fitted: fitted.iter().copied().collect(),
            residual_var: g.rss / (n - g.edf).max(1.0),
            hyperparameters: json!({
                "lambda": lambdas,
                "gcv": g.score,
                "edf": g.edf,
                "basis_dim": self.dim(),
                "knots": self.knots,
                "pairwise_interactions": self.pairwise,
            }),
            warnings: Vec::new(),
        })
    }
}

struct Gcv {
    score: f64,
    beta: DVector<f64>,
    rss: f64,
    edf: f64,
    min_pivot_ratio: f64,
}

impl Gcv {
    fn evaluate(
        design: &GamDesign,
        ll: &[f64],
        xty: &DVector<f64>,
        yy: f64,
        n: f64,
    ) -> Option<Self> {
        let m = design.penalised(ll);
        let chol = m.cholesky()?;
        let diag = chol.l_dirty().diagonal();
        let (dmin, dmax) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let beta = chol.solve(xty);
        let influence = chol.solve(&design.xtx);
        let edf = influence.trace();
        let fit_quad = (design.xtx.clone() * &beta).dot(&beta);
        let rss = (yy - 2.0 * beta.dot(xty) + fit_quad).max(0.0);
        let denom = (n - edf).max(1e-8);
        Some(Self {
            score: n * rss / (denom * denom),
            beta,
            rss,
            edf,
            min_pivot_ratio: (dmin / dmax).powi(2),
        })
    }
}

/// Grid search with spacing `step` over `[lo, hi]`, then golden-section
/// refinement in the bracket around the best grid point.
fn minimize_1d(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..25 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (x, v) = if fc < fd { (c, fc) } else { (d, fd) };
    if v < best.1 {
        x
    } else {
        best.0
    }
}
