//! Regression-based EVPPI for one or more parameters.
//!
//! Each treatment's net benefit is regressed on the parameters of interest,
//! `nb_t = g_t(φ) + ε`, and the fitted values stand in for the inner
//! conditional expectation:
//! `EVPPI ≈ (1/S) Σ_s max_t ĝ_t(φ_s) − max_t (1/S) Σ_s ĝ_t(φ_s)`.

pub mod bootstrap;
mod gam;
mod gp;
mod spline;

pub use bootstrap::{bootstrap_se, bootstrap_se_from_resamples, BootstrapConfig, BootstrapResult};
pub use gam::{GamConfig, Interactions, MAX_GAM_DIMS};
pub use gp::{GpConfig, GpHyper, JITTER};
pub use spline::{quantile_knots, sum_to_zero, CubicSplineBasis};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{EvppiError, Result};
use crate::estimate::{EvppiEstimate, Method};
use crate::psa::{current_optimum, mean_row_max, ParamSubset, PsaSample};

/// Fitted values for one treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnFit {
    pub fitted: Vec<f64>,
    pub residual_var: f64,
    pub hyperparameters: Value,
    pub warnings: Vec<String>,
}

/// Fitted conditional expectations `ĝ_t(φ_s)` for every treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub method: Method,
    /// `S × T` fitted values.
    pub fitted: DMatrix<f64>,
    pub residual_var: Vec<f64>,
    pub hyperparameters: Vec<Value>,
    pub warnings: Vec<String>,
    /// GP hyperparameters per treatment (`None` for constant columns), kept
    /// so resampling can reuse them.
    pub gp_hyper: Option<Vec<Option<GpHyper>>>,
}

/// Zero-mean, unit-variance copy of `x`, or `None` for a constant column.
pub(crate) fn standardize(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || x.iter().all(|&v| v == x[0]) {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Splits a response into its mean and centred values. Constant columns
/// return `None` so callers can reproduce them exactly.
fn centre(y: &[f64]) -> Option<(f64, Vec<f64>)> {
    if y.iter().all(|&v| v == y[0]) {
        return None;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Some((mean, y.iter().map(|v| v - mean).collect()))
}

fn constant_fit(y: &[f64]) -> ColumnFit {
    ColumnFit {
        fitted: y.to_vec(),
        residual_var: 0.0,
        hyperparameters: serde_json::json!({ "constant_response": true }),
        warnings: Vec::new(),
    }
}

fn assemble(method: Method, n: usize, cols: Vec<ColumnFit>, gp_hyper: Option<Vec<Option<GpHyper>>>) -> Result<RegressionFit> {
    let t = cols.len();
    let mut fitted = DMatrix::zeros(n, t);
    let mut warnings = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        if c.fitted.iter().any(|v| !v.is_finite()) {
            return Err(EvppiError::Numerical(format!(
                "{method} fit for treatment {j} produced non-finite values"
            )));
        }
        fitted.column_mut(j).copy_from_slice(&c.fitted);
        warnings.extend(c.warnings.iter().map(|w| format!("treatment {j}: {w}")));
    }
    Ok(RegressionFit {
        method,
        fitted,
        residual_var: cols.iter().map(|c| c.residual_var.max(0.0)).collect(),
        hyperparameters: cols.into_iter().map(|c| c.hyperparameters).collect(),
        warnings,
        gp_hyper,
    })
}

/// GAM fit of one treatment's net benefit on the subset.
pub fn gam_fit(sample: &PsaSample, subset: &ParamSubset, t: usize, cfg: &GamConfig) -> Result<ColumnFit> {
    let y = sample.nb_column(t)?;
    let design = gam::GamDesign::new(sample, subset, cfg)?;
    fit_gam_column(&design, y)
}

fn fit_gam_column(design: &gam::GamDesign, y: &[f64]) -> Result<ColumnFit> {
    match centre(y) {
        None => Ok(constant_fit(y)),
        Some((mean, centred)) => {
            let mut fit = design.fit(&centred)?;
            fit.fitted.iter_mut().for_each(|v| *v += mean);
            Ok(fit)
        }
    }
}

/// GAM fits for every treatment, sharing one design matrix.
pub fn fit_gam(sample: &PsaSample, subset: &ParamSubset, cfg: &GamConfig) -> Result<RegressionFit> {
    let design = gam::GamDesign::new(sample, subset, cfg)?;
    let cols = (0..sample.n_treatments())
        .into_par_iter()
        .map(|t| fit_gam_column(&design, sample.nb_column(t)?))
        .collect::<Result<Vec<_>>>()?;
    assemble(Method::Gam, sample.n_sims(), cols, None)
}

fn gp_column(
    data: &gp::GpData,
    y: &[f64],
    cfg: &GpConfig,
    fixed: Option<&GpHyper>,
) -> Result<(ColumnFit, Option<GpHyper>)> {
    let Some((mean, centred)) = centre(y) else {
        return Ok((constant_fit(y), None));
    };
    if data.is_degenerate() {
        let mut fit = constant_fit(&vec![mean; y.len()]);
        fit.warnings
            .push("all parameters of interest are constant; fitted values are the column mean".into());
        return Ok((fit, None));
    }
    let column = data.column(cfg);
    let (mut fit, hyper) = match fixed {
        Some(h) => (column.fit_fixed(&centred, h)?, h.clone()),
        None => column.fit(&centred)?,
    };
    fit.fitted.iter_mut().for_each(|v| *v += mean);
    Ok((fit, Some(hyper)))
}

/// Gaussian-process fit of one treatment's net benefit on the subset.
pub fn gp_fit(sample: &PsaSample, subset: &ParamSubset, t: usize, cfg: &GpConfig) -> Result<ColumnFit> {
    let data = gp::GpData::new(sample, subset)?;
    Ok(gp_column(&data, sample.nb_column(t)?, cfg, None)?.0)
}

/// Gaussian-process fit with given hyperparameters (no search).
pub fn gp_fit_fixed(
    sample: &PsaSample,
    subset: &ParamSubset,
    t: usize,
    hyper: &GpHyper,
    cfg: &GpConfig,
) -> Result<ColumnFit> {
    let data = gp::GpData::new(sample, subset)?;
    Ok(gp_column(&data, sample.nb_column(t)?, cfg, Some(hyper))?.0)
}

/// GP fits for every treatment. With `fixed`, treatment `t` reuses
/// `fixed[t]` when present instead of searching.
pub fn fit_gp(
    sample: &PsaSample,
    subset: &ParamSubset,
    cfg: &GpConfig,
    fixed: Option<&[Option<GpHyper>]>,
) -> Result<RegressionFit> {
    let data = gp::GpData::new(sample, subset)?;
    if let Some(f) = fixed {
        if f.len() != sample.n_treatments() {
            return Err(EvppiError::Shape(format!(
                "{} fixed hyperparameter sets for {} treatments",
                f.len(),
                sample.n_treatments()
            )));
        }
    }
    let results = (0..sample.n_treatments())
        .into_par_iter()
        .map(|t| {
            let h = fixed.and_then(|f| f[t].as_ref());
            gp_column(&data, sample.nb_column(t)?, cfg, h)
        })
        .collect::<Result<Vec<_>>>()?;
    let (cols, hypers): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    assemble(Method::GaussianProcess, sample.n_sims(), cols, Some(hypers))
}

/// Plug-in EVPPI from fitted values. Non-negative exactly, because plain
/// summation is monotone.
pub fn regression_evppi(fit: &RegressionFit) -> Result<EvppiEstimate> {
    if fit.fitted.iter().any(|v| !v.is_finite()) {
        return Err(EvppiError::NonFinite {
            what: "fitted values",
            row: 0,
            col: 0,
        });
    }
    if fit.fitted.nrows() < 2 {
        return Err(EvppiError::TooFewSamples {
            min: 2,
            got: fit.fitted.nrows(),
        });
    }
    let (t_best, current) = current_optimum(&fit.fitted);
    let value = mean_row_max(&fit.fitted) - current;
    let mut est = EvppiEstimate::new(fit.method, value)
        .with_diagnostic("current_optimum", t_best)
        .with_diagnostic("residual_var", fit.residual_var.clone())
        .with_diagnostic("hyperparameters", fit.hyperparameters.clone());
    for w in &fit.warnings {
        est.warn(w.clone());
    }
    Ok(est)
}

pub fn gam_evppi(sample: &PsaSample, subset: &ParamSubset, cfg: &GamConfig) -> Result<EvppiEstimate> {
    regression_evppi(&fit_gam(sample, subset, cfg)?)
}

pub fn gp_evppi(sample: &PsaSample, subset: &ParamSubset, cfg: &GpConfig) -> Result<EvppiEstimate> {
    regression_evppi(&fit_gp(sample, subset, cfg, None)?)
}
