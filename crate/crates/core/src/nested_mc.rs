//! Two-level Monte Carlo EVPPI against a generative model.
//!
//! The outer loop draws `φ` from its marginal, the inner loop draws `ψ` from
//! `p(ψ | φ)` and averages net benefit. Each outer iteration owns an RNG
//! stream derived from `(seed, outer index)` and results are merged in index
//! order with compensated summation, so estimates are bitwise identical at
//! any thread count.

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{EvppiError, Result};
use crate::estimate::{EvppiEstimate, Method};
use crate::psa::{argmax_first, ParamSubset, WillingnessToPay};
use crate::rng::{domain, stream_rng};

/// A parameter distribution with exact conditional sampling and a net-benefit map.
pub trait GenerativeModel: Sync {
    fn param_names(&self) -> Vec<String>;

    fn treatment_names(&self) -> Vec<String>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    fn n_treatments(&self) -> usize {
        self.treatment_names().len()
    }

    /// Overwrites `theta` with a draw from the joint distribution.
    fn sample_joint(&self, rng: &mut dyn RngCore, theta: &mut [f64]);

    /// Redraws the coordinates outside `subset` from their distribution
    /// conditional on the coordinates inside it, which are left untouched.
    fn sample_conditional(&self, subset: &ParamSubset, theta: &mut [f64], rng: &mut dyn RngCore);

    /// Writes `NB_t(θ)` for every treatment into `out`.
    fn net_benefit(&self, theta: &[f64], wtp: WillingnessToPay, out: &mut [f64]) -> Result<()>;
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// Per-outer-draw result: the max of inner means and the raw inner sums.
struct OuterDraw {
    best: f64,
    sums: Vec<f64>,
}

fn evaluation_error(outer: usize, inner: usize, err: EvppiError) -> EvppiError {
    EvppiError::ModelEvaluation {
        outer,
        inner,
        message: err.to_string(),
    }
}

/// Nested Monte Carlo EVPPI for the parameters in `subset`.
///
/// `n_inner = 1` is accepted: each inner mean is then a single draw and the
/// estimate reduces to a plug-in EVPI that is biased high; a warning says so.
pub fn nested_mc_evppi(
    model: &dyn GenerativeModel,
    subset: &ParamSubset,
    wtp: WillingnessToPay,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<EvppiEstimate> {
    if n_outer < 2 {
        return Err(EvppiError::TooFewSamples {
            min: 2,
            got: n_outer,
        });
    }
    if n_inner < 1 {
        return Err(EvppiError::TooFewSamples {
            min: 1,
            got: n_inner,
        });
    }
    let n_params = model.n_params();
    if let Some(&bad) = subset.indices().iter().find(|&&p| p >= n_params) {
        return Err(EvppiError::IndexOutOfRange {
            what: "parameter",
            index: bad,
            len: n_params,
        });
    }
    let t_count = model.n_treatments();

    let draws: Vec<OuterDraw> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, domain::NESTED_OUTER, i as u64);
            let mut theta = vec![0.0; n_params];
            let mut nb = vec![0.0; t_count];
            let mut sums = vec![CompensatedSum::default(); t_count];
            model.sample_joint(&mut rng, &mut theta);
            for j in 0..n_inner {
                model.sample_conditional(subset, &mut theta, &mut rng);
                model
                    .net_benefit(&theta, wtp, &mut nb)
                    .map_err(|e| evaluation_error(i, j, e))?;
                for (acc, &v) in sums.iter_mut().zip(&nb) {
                    acc.add(v);
                }
            }
            let sums: Vec<f64> = sums.into_iter().map(CompensatedSum::value).collect();
            let means: Vec<f64> = sums.iter().map(|s| s / n_inner as f64).collect();
            let best = argmax_first(&means).1;
            Ok(OuterDraw { best, sums })
        })
        .collect::<Result<_>>()?;

    let mut best_total = CompensatedSum::default();
    let mut grand = vec![CompensatedSum::default(); t_count];
    for d in &draws {
        best_total.add(d.best);
        for (acc, &v) in grand.iter_mut().zip(&d.sums) {
            acc.add(v);
        }
    }
    let n = n_outer as f64;
    let first = best_total.value() / n;
    let grand_means: Vec<f64> = grand
        .into_iter()
        .map(|g| g.value() / (n * n_inner as f64))
        .collect();
    let (current_t, current) = argmax_first(&grand_means);

    let mut dev = CompensatedSum::default();
    for d in &draws {
        dev.add((d.best - first).powi(2));
    }
    let se = (dev.value() / (n - 1.0)).sqrt() / n.sqrt();

    let mut est = EvppiEstimate::new(Method::NestedMonteCarlo, first - current)
        .with_diagnostic("n_outer", n_outer)
        .with_diagnostic("n_inner", n_inner)
        .with_diagnostic("seed", seed)
        .with_diagnostic("current_optimum", current_t)
        .with_diagnostic("mc_std_error", se);
    est.std_error = Some(se);
    if n_inner == 1 {
        est.warn("n_inner = 1: each inner mean is a single draw, so the estimate is biased high");
    }
    Ok(est)
}

/// Rows per RNG stream when drawing joint samples.
const JOINT_CHUNK: usize = 4096;

/// Value of the current decision, `max_t E[NB_t]`, by plain Monte Carlo.
///
/// The standard error is the largest per-treatment MC standard error, which
/// stays meaningful when the winning column is a deterministic reference.
pub fn current_info_mc(
    model: &dyn GenerativeModel,
    wtp: WillingnessToPay,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(EvppiError::TooFewSamples { min: 2, got: n });
    }
    let n_params = model.n_params();
    let t_count = model.n_treatments();
    let chunks = n.div_ceil(JOINT_CHUNK);
    let partial: Vec<Vec<(CompensatedSum, CompensatedSum)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, domain::CURRENT_INFO, c as u64);
            let mut theta = vec![0.0; n_params];
            let mut nb = vec![0.0; t_count];
            let mut acc = vec![(CompensatedSum::default(), CompensatedSum::default()); t_count];
            let start = c * JOINT_CHUNK;
            for row in start..(start + JOINT_CHUNK).min(n) {
                model.sample_joint(&mut rng, &mut theta);
                model
                    .net_benefit(&theta, wtp, &mut nb)
                    .map_err(|e| evaluation_error(row, 0, e))?;
                for (a, &v) in acc.iter_mut().zip(&nb) {
                    a.0.add(v);
                    a.1.add(v * v);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let nf = n as f64;
    let mut means = Vec::with_capacity(t_count);
    let mut max_se: f64 = 0.0;
    for t in 0..t_count {
        let mut sum = CompensatedSum::default();
        let mut sq = CompensatedSum::default();
        for chunk in &partial {
            sum.add(chunk[t].0.value());
            sq.add(chunk[t].1.value());
        }
        let mean = sum.value() / nf;
        let var = ((sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        max_se = max_se.max((var / nf).sqrt());
        means.push(mean);
    }
    Ok((argmax_first(&means).1, max_se))
}
