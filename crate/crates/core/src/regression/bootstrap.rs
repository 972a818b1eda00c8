//! Nonparametric bootstrap standard errors for any estimator.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{EvppiError, Result};
use crate::estimate::EvppiEstimate;
use crate::psa::PsaSample;
use crate::rng::{domain, stream_rng, DEFAULT_SEED};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 200,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub std_error: f64,
    /// Estimates of the successful replicates, in replicate order.
    pub estimates: Vec<f64>,
    pub failed: usize,
}

impl BootstrapResult {
    /// Sets the estimate's standard error and records the replicates.
    pub fn attach_to(&self, est: &mut EvppiEstimate) {
        est.std_error = Some(self.std_error);
        est.set_diagnostic("bootstrap_replicates", self.estimates.clone());
        est.set_diagnostic("bootstrap_failed", self.failed);
        if self.failed > 0 {
            est.warn(format!(
                "{} bootstrap replicates failed and were skipped",
                self.failed
            ));
        }
    }
}

/// Sample standard deviation, computed on differences from the first value
/// so that identical inputs give exactly zero.
fn sample_sd(values: &[f64]) -> f64 {
    let first = values[0];
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - first).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - first - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Standard error from `B` seeded resamples of the rows of `sample`.
///
/// Replicate `b` draws its rows from the stream `(seed, b)`, so results do
/// not depend on scheduling. Failed replicates are skipped and counted;
/// more than [`MAX_FAILURE_FRACTION`] failures abort.
pub fn bootstrap_se<F>(sample: &PsaSample, cfg: &BootstrapConfig, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&PsaSample) -> Result<f64> + Sync,
{
    if cfg.replicates < 2 {
        return Err(EvppiError::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {}",
            cfg.replicates
        )));
    }
    let s = sample.n_sims();
    let outcomes: Vec<Result<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, domain::BOOTSTRAP, b as u64);
            let rows: Vec<usize> = (0..s).map(|_| rng.random_range(0..s)).collect();
            estimator(&sample.select_rows(&rows))
        })
        .collect();
    summarise(outcomes)
}

/// Standard error over caller-supplied resamples (row index lists).
pub fn bootstrap_se_from_resamples<F>(
    sample: &PsaSample,
    resamples: &[Vec<usize>],
    estimator: F,
) -> Result<BootstrapResult>
where
    F: Fn(&PsaSample) -> Result<f64> + Sync,
{
    if resamples.len() < 2 {
        return Err(EvppiError::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {}",
            resamples.len()
        )));
    }
    let s = sample.n_sims();
    for rows in resamples {
        if let Some(&bad) = rows.iter().find(|&&r| r >= s) {
            return Err(EvppiError::IndexOutOfRange {
                what: "row",
                index: bad,
                len: s,
            });
        }
    }
    let outcomes: Vec<Result<f64>> = resamples
        .par_iter()
        .map(|rows| estimator(&sample.select_rows(rows)))
        .collect();
    summarise(outcomes)
}

fn summarise(outcomes: Vec<Result<f64>>) -> Result<BootstrapResult> {
    let total = outcomes.len();
    let estimates: Vec<f64> = outcomes
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|v| v.is_finite())
        .collect();
    let failed = total - estimates.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 || estimates.len() < 2 {
        return Err(EvppiError::BootstrapAborted { failed, total });
    }
    Ok(BootstrapResult {
        std_error: sample_sd(&estimates),
        estimates,
        failed,
    })
}
