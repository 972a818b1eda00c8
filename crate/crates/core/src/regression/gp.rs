//! Gaussian-process regression with a squared-exponential kernel.
//!
//! Inputs are standardised and the response centred. Hyperparameters are
//! the per-dimension length scales and the nugget-to-signal ratio `g`; the
//! signal variance is profiled out of the marginal likelihood, which is
//! maximised on a fixed-seed subsample by multi-start Nelder–Mead. The
//! posterior mean at all `S` inputs uses a subset-of-regressors
//! approximation on an inducing set drawn from that subsample, so the cost
//! is `O(S·m²)` rather than `O(S³)`.

use std::collections::HashSet;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{standardize, ColumnFit};
use crate::error::{EvppiError, Result};
use crate::psa::{ParamSubset, PsaSample};
use crate::rng::{domain, stream_rng, DEFAULT_SEED};

/// Smallest nugget-to-signal ratio; also the diagonal jitter on inducing sets.
pub const JITTER: f64 = 1e-8;

const LOG_LENGTH_BOUNDS: (f64, f64) = (-4.6, 4.6);
const LOG_NUGGET_BOUNDS: (f64, f64) = (-18.42, 9.21);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    /// Rows used for hyperparameter search.
    pub subsample: usize,
    pub restarts: usize,
    pub max_iters: u64,
    /// Inducing points per input dimension for the posterior mean.
    pub inducing_per_dim: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            subsample: 500,
            restarts: 5,
            max_iters: 100,
            inducing_per_dim: 150,
            seed: DEFAULT_SEED,
        }
    }
}

/// Kernel hyperparameters in standardised input units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    /// Nugget variance divided by signal variance.
    pub nugget_ratio: f64,
}

/// Standardised inputs with constant dimensions dropped, row-major.
struct Inputs {
    n: usize,
    d: usize,
    x: Vec<f64>,
    /// Standard deviation of each kept dimension, to report length scales
    /// in parameter units.
    scales: Vec<f64>,
}

impl Inputs {
    fn new(sample: &PsaSample, subset: &ParamSubset) -> Result<Self> {
        let n = sample.n_sims();
        let mut cols = Vec::new();
        let mut scales = Vec::new();
        for &p in subset.indices() {
            let raw = sample.param_column(p)?;
            if let Some(z) = standardize(raw) {
                let mean = raw.iter().sum::<f64>() / n as f64;
                let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                cols.push(z);
                scales.push(sd);
            }
        }
        let d = cols.len();
        let mut x = vec![0.0; n * d];
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                x[i * d + j] = v;
            }
        }
        Ok(Self { n, d, x, scales })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Rows scaled by inverse length scales.
    fn scaled(&self, rows: &[usize], ls: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            out.extend(self.row(i).iter().zip(ls).map(|(v, l)| v / l));
        }
        out
    }
}

#[inline]
fn corr(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    (-0.5 * s).exp()
}

/// Profile log marginal likelihood of centred `y` with the signal variance
/// maximised out. Returns `(lml, sigma²)`.
fn profile_lml(z: &[f64], d: usize, y: &DVector<f64>, g: f64) -> Option<(f64, f64)> {
    let n = y.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + g;
        for j in 0..i {
            let v = corr(&z[i * d..(i + 1) * d], &z[j * d..(j + 1) * d]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let chol = k.cholesky()?;
    let alpha = chol.solve(y);
    let sigma2 = y.dot(&alpha) / n as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return None;
    }
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let nf = n as f64;
    let lml = -0.5 * nf * sigma2.ln() - log_det - 0.5 * nf * (1.0 + (2.0 * std::f64::consts::PI).ln());
    Some((lml, sigma2))
}

fn unpack(theta: &[f64], d: usize) -> (Vec<f64>, f64) {
    let ls = theta[..d]
        .iter()
        .map(|v| v.clamp(LOG_LENGTH_BOUNDS.0, LOG_LENGTH_BOUNDS.1).exp())
        .collect();
    let g = theta[d]
        .clamp(LOG_NUGGET_BOUNDS.0, LOG_NUGGET_BOUNDS.1)
        .exp()
        .max(JITTER);
    (ls, g)
}

struct NegLml<'a> {
    inputs: &'a Inputs,
    rows: &'a [usize],
    y: DVector<f64>,
}

impl NegLml<'_> {
    fn eval(&self, theta: &[f64]) -> Option<(f64, f64)> {
        let d = self.inputs.d;
        let (ls, g) = unpack(theta, d);
        let z = self.inputs.scaled(self.rows, &ls);
        profile_lml(&z, d, &self.y, g)
    }
}

impl CostFunction for NegLml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, ArgminError> {
        Ok(self.eval(theta).map_or(1e300, |(lml, _)| -lml))
    }
}

struct Search {
    hyper: GpHyper,
    lml: f64,
    signal_var: f64,
    converged: usize,
    fallback: bool,
}

/// Median absolute pairwise difference per dimension.
fn median_heuristic(inputs: &Inputs, rows: &[usize]) -> Vec<f64> {
    (0..inputs.d)
        .map(|j| {
            let mut diffs = Vec::new();
            for (a, &i) in rows.iter().enumerate() {
                for &k in &rows[..a] {
                    diffs.push((inputs.row(i)[j] - inputs.row(k)[j]).abs());
                }
            }
            diffs.sort_by(f64::total_cmp);
            let m = diffs.get(diffs.len() / 2).copied().unwrap_or(1.0);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect()
}

fn search(inputs: &Inputs, rows: &[usize], y_sub: DVector<f64>, cfg: &GpConfig) -> Result<Search> {
    let d = inputs.d;
    let problem = NegLml { inputs, rows, y: y_sub };
    let starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
        .map(|r| {
            if r == 0 {
                let mut t = vec![0.0; d];
                t.push(0.1f64.ln());
                t
            } else {
                let mut rng = stream_rng(cfg.seed, domain::GP_RESTART, r as u64);
                let mut t: Vec<f64> = (0..d).map(|_| rng.random_range(-2.3..2.3)).collect();
                t.push(rng.random_range(-9.2..0.0));
                t
            }
        })
        .collect();

    let runs: Vec<Option<(Vec<f64>, f64, bool)>> = starts
        .par_iter()
        .map(|start| {
            let mut simplex = vec![start.clone()];
            for i in 0..=d {
                let mut v = start.clone();
                v[i] += 1.0;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex).with_sd_tolerance(1e-4).ok()?;
            let res = Executor::new(
                NegLml {
                    inputs: problem.inputs,
                    rows: problem.rows,
                    y: problem.y.clone(),
                },
                solver,
            )
            .configure(|s| s.max_iters(cfg.max_iters))
            .run()
            .ok()?;
            let state = res.state();
            let best = state.get_best_param()?.clone();
            let cost = state.get_best_cost();
            let converged = matches!(
                state.get_termination_status(),
                TerminationStatus::Terminated(TerminationReason::SolverConverged)
            );
            (cost < 1e299).then_some((best, cost, converged))
        })
        .collect();

    let mut best: Option<(&Vec<f64>, f64)> = None;
    let mut converged = 0;
    for (theta, cost, ok) in runs.iter().flatten() {
        if !ok {
            continue;
        }
        converged += 1;
        if best.is_none_or(|b| *cost < b.1) {
            best = Some((theta, *cost));
        }
    }
    match best {
        Some((theta, _)) => {
            let (lml, signal_var) = problem
                .eval(theta)
                .ok_or_else(|| EvppiError::Numerical("GP optimum is not factorisable".into()))?;
            let (ls, g) = unpack(theta, d);
            Ok(Search {
                hyper: GpHyper {
                    length_scales: ls,
                    nugget_ratio: g,
                },
                lml,
                signal_var,
                converged,
                fallback: false,
            })
        }
        None => {
            let ls = median_heuristic(inputs, rows);
            let g: f64 = 0.1;
            let mut theta: Vec<f64> = ls.iter().map(|v| v.ln()).collect();
            theta.push(g.ln());
            let (lml, signal_var) = problem.eval(&theta).unwrap_or((f64::NAN, f64::NAN));
            Ok(Search {
                hyper: GpHyper {
                    length_scales: ls,
                    nugget_ratio: g,
                },
                lml,
                signal_var,
                converged: 0,
                fallback: true,
            })
        }
    }
}

/// Rows for hyperparameter search: all rows, or a seeded subsample.
fn subsample_rows(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if n <= size {
        return (0..n).collect();
    }
    let mut rng = stream_rng(seed, domain::GP_SUBSAMPLE, 0);
    index::sample(&mut rng, n, size).into_vec()
}

/// First `m` rows of `candidates` with distinct input vectors.
fn distinct_rows(inputs: &Inputs, candidates: &[usize], m: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(m);
    for &i in candidates {
        let key: Vec<u64> = inputs.row(i).iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            out.push(i);
            if out.len() == m {
                break;
            }
        }
    }
    out
}

/// Subset-of-regressors posterior mean at every training input.
fn sor_mean(inputs: &Inputs, inducing: &[usize], hyper: &GpHyper, y: &DVector<f64>) -> Result<Vec<f64>> {
    let d = inputs.d;
    let n = inputs.n;
    let m = inducing.len();
    let all: Vec<usize> = (0..n).collect();
    let zx = inputs.scaled(&all, &hyper.length_scales);
    let zm = inputs.scaled(inducing, &hyper.length_scales);
    let mut rmm = DMatrix::zeros(m, m);
    for i in 0..m {
        rmm[(i, i)] = 1.0 + JITTER;
        for j in 0..i {
            let v = corr(&zm[i * d..(i + 1) * d], &zm[j * d..(j + 1) * d]);
            rmm[(i, j)] = v;
            rmm[(j, i)] = v;
        }
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &zx[s * d..(s + 1) * d];
            (0..m).map(|i| corr(&zm[i * d..(i + 1) * d], xs)).collect()
        })
        .collect();
    let rmx = DMatrix::from_fn(m, n, |i, s| cols[s][i]);
    let l = rmm
        .cholesky()
        .ok_or_else(|| EvppiError::Numerical("GP inducing covariance is not positive definite".into()))?;
    let v = l
        .l_dirty()
        .solve_lower_triangular(&rmx)
        .ok_or_else(|| EvppiError::Numerical("GP triangular solve failed".into()))?;
    let mut a = &v * v.transpose();
    for i in 0..m {
        a[(i, i)] += hyper.nugget_ratio.max(JITTER);
    }
    let a = a
        .cholesky()
        .ok_or_else(|| EvppiError::Numerical("GP projected system is not positive definite".into()))?;
    let b = a.solve(&(&v * y));
    Ok((v.transpose() * b).iter().copied().collect())
}

/// GP fit of one centred response column.
pub(crate) struct GpColumn<'a> {
    inputs: &'a Inputs,
    cfg: GpConfig,
    search_rows: Vec<usize>,
    inducing: Vec<usize>,
}

pub(crate) struct GpData {
    inputs: Inputs,
}

impl GpData {
    pub fn new(sample: &PsaSample, subset: &ParamSubset) -> Result<Self> {
        Ok(Self {
            inputs: Inputs::new(sample, subset)?,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.inputs.d == 0
    }

    pub fn column(&self, cfg: &GpConfig) -> GpColumn<'_> {
        let inputs = &self.inputs;
        let search_rows = subsample_rows(inputs.n, cfg.subsample, cfg.seed);
        let m = (cfg.inducing_per_dim * inputs.d.max(1)).min(search_rows.len());
        let inducing = distinct_rows(inputs, &search_rows, m);
        GpColumn {
            inputs,
            cfg: *cfg,
            search_rows,
            inducing,
        }
    }
}

impl GpColumn<'_> {
    /// Optimises hyperparameters, then evaluates the posterior mean.
    pub fn fit(&self, y: &[f64]) -> Result<(ColumnFit, GpHyper)> {
        let y_sub = DVector::from_iterator(self.search_rows.len(), self.search_rows.iter().map(|&i| y[i]));
        let found = search(self.inputs, &self.search_rows, y_sub, &self.cfg)?;
        let mut fit = self.fit_fixed(y, &found.hyper)?;
        let nugget = found.hyper.nugget_ratio * found.signal_var;
        fit.residual_var = if nugget.is_finite() { nugget } else { fit.residual_var };
        if let Some(obj) = fit.hyperparameters.as_object_mut() {
            obj.insert("signal_var".into(), json!(found.signal_var));
            obj.insert("nugget".into(), json!(nugget));
            obj.insert("log_marginal_likelihood".into(), json!(found.lml));
            obj.insert("restarts_converged".into(), json!(found.converged));
            obj.insert("fallback".into(), json!(found.fallback));
        }
        if found.fallback {
            fit.warnings.push(format!(
                "GP hyperparameter search did not converge in {} restarts; using median-heuristic length scales",
                self.cfg.restarts
            ));
        }
        Ok((fit, found.hyper))
    }

    /// Posterior mean with fixed hyperparameters.
    pub fn fit_fixed(&self, y: &[f64], hyper: &GpHyper) -> Result<ColumnFit> {
        if hyper.length_scales.len() != self.inputs.d {
            return Err(EvppiError::Shape(format!(
                "{} length scales for {} non-constant inputs",
                hyper.length_scales.len(),
                self.inputs.d
            )));
        }
        if hyper.length_scales.iter().any(|&l| !(l > 0.0 && l.is_finite()))
            || !(hyper.nugget_ratio >= 0.0 && hyper.nugget_ratio.is_finite())
        {
            return Err(EvppiError::InvalidArgument(
                "GP length scales must be positive and the nugget non-negative".into(),
            ));
        }
        let yv = DVector::from_column_slice(y);
        let fitted = sor_mean(self.inputs, &self.inducing, hyper, &yv)?;
        let rss: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
        let original: Vec<f64> = hyper
            .length_scales
            .iter()
            .zip(&self.inputs.scales)
            .map(|(l, s)| l * s)
            .collect();
        Ok(ColumnFit {
            fitted,
            residual_var: rss / y.len() as f64,
            hyperparameters: json!({
                "length_scales": hyper.length_scales,
                "length_scales_param_units": original,
                "nugget_ratio": hyper.nugget_ratio.max(JITTER),
                "subsample": self.search_rows.len(),
                "inducing": self.inducing.len(),
            }),
            warnings: Vec::new(),
        })
    }
}
