use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{order_by_param, segmented_value, ParamOrder};
use crate::error::{EvppiError, Result};
use crate::estimate::{EvppiEstimate, Method};
use crate::psa::{argmax_first, PsaSample};
use crate::rng::{domain, stream_rng};

/// Contiguous split of the sorted simulations into `M` bins.
///
/// With `L = floor(S / M)` and `r = S mod M`, the first `M − r` bins hold `L`
/// rows and the last `r` bins hold `L + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BinPartition {
    bins: usize,
    bin_size: usize,
    bounds: Vec<usize>,
}

impl BinPartition {
    pub fn new(n_sims: usize, bins: usize) -> Result<Self> {
        if bins < 1 || bins > n_sims {
            return Err(EvppiError::InvalidArgument(format!(
                "bin count must lie in 1..={n_sims}, got {bins}"
            )));
        }
        let bin_size = n_sims / bins;
        let first_large = bins - n_sims % bins;
        let mut bounds = Vec::with_capacity(bins + 1);
        bounds.push(0);
        for m in 0..bins {
            let len = if m < first_large { bin_size } else { bin_size + 1 };
            bounds.push(bounds[m] + len);
        }
        Ok(Self {
            bins,
            bin_size,
            bounds,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// The base bin size `L`.
    pub fn bin_size(&self) -> usize {
        self.bin_size
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }
}

/// Binned single-parameter EVPPI with `bins` contiguous bins.
pub fn so_evppi(sample: &PsaSample, p: usize, bins: usize) -> Result<EvppiEstimate> {
    let order = order_by_param(sample, p)?;
    let part = BinPartition::new(sample.n_sims(), bins)?;
    let (value, optima) = segmented_value(sample, &order, &part.bounds);

    let mut est = EvppiEstimate::new(Method::StrongOakley, value)
        .with_diagnostic("bins", bins)
        .with_diagnostic("bin_size", part.bin_size())
        .with_diagnostic("bin_optima", optima)
        .with_diagnostic("tie_fraction", order.tie_fraction);
    for w in order.warnings() {
        est.warn(w);
    }
    Ok(est)
}

/// Estimated upward bias of [`so_evppi`] at `bins` bins.
///
/// Within each bin the vector of treatment means is perturbed by zero-mean
/// normal noise whose covariance is the within-bin sample covariance over
/// the bin size. The bias is the expected excess of the perturbed maximum
/// over the unperturbed one, averaged over `n_mc` replicates and
/// size-weighted over bins. Each replicate subtracts the noise on the
/// unperturbed winner, which has mean zero; this keeps every replicate's
/// excess non-negative and makes the bias exactly zero when the treatment
/// columns coincide.
pub fn so_bias(sample: &PsaSample, p: usize, bins: usize, n_mc: usize, seed: u64) -> Result<f64> {
    let order = order_by_param(sample, p)?;
    so_bias_ordered(sample, &order, bins, n_mc, seed)
}

/// Factor `A = L·D·Lᵀ` of a positive semidefinite matrix, returned as the
/// lower-triangular `L·sqrt(D)`. Zero pivots zero their column.
fn psd_factor(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[j][j];
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * d[k];
        }
        d[j] = if dj > 1e-14 * a[j][j].abs() { dj } else { 0.0 };
        l[j][j] = 1.0;
        for i in j + 1..n {
            if d[j] == 0.0 {
                continue;
            }
            let mut v = a[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = v / d[j];
        }
    }
    for row in l.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= d[j].sqrt();
        }
    }
    l
}

fn so_bias_ordered(
    sample: &PsaSample,
    order: &ParamOrder,
    bins: usize,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    let part = BinPartition::new(sample.n_sims(), bins)?;
    if part.bin_size() < 2 {
        return Err(EvppiError::InvalidArgument(format!(
            "bias needs at least 2 simulations per bin, got {} with {bins} bins",
            part.bin_size()
        )));
    }
    if n_mc == 0 {
        return Err(EvppiError::InvalidArgument(
            "bias needs at least one replicate".into(),
        ));
    }
    let nb = sample.nb();
    let t_count = sample.n_treatments();
    let ranges: Vec<_> = part.ranges().collect();

    let per_bin: Vec<f64> = ranges
        .par_iter()
        .enumerate()
        .map(|(m, range)| {
            let rows = &order.perm[range.clone()];
            let n = rows.len() as f64;
            let means: Vec<f64> = (0..t_count)
                .map(|t| rows.iter().map(|&r| nb[(r, t)]).sum::<f64>() / n)
                .collect();
            let mut cov = vec![vec![0.0; t_count]; t_count];
            for i in 0..t_count {
                for j in 0..=i {
                    let c: f64 = rows
                        .iter()
                        .map(|&r| (nb[(r, i)] - means[i]) * (nb[(r, j)] - means[j]))
                        .sum();
                    cov[i][j] = c / (n - 1.0) / n;
                    cov[j][i] = cov[i][j];
                }
            }
            let factor = psd_factor(&cov);
            if factor.iter().flatten().all(|&v| v == 0.0) {
                return 0.0;
            }
            let (winner, base) = argmax_first(&means);
            let mut rng = stream_rng(seed, domain::SO_BIAS, m as u64);
            let mut z = vec![0.0; t_count];
            let mut excess = 0.0;
            for _ in 0..n_mc {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let noise = |t: usize| -> f64 {
                    factor[t][..=t].iter().zip(&z).map(|(l, z)| l * z).sum()
                };
                let anchor = base + noise(winner);
                let mut best = anchor;
                for (t, &mean) in means.iter().enumerate() {
                    best = best.max(mean + noise(t));
                }
                excess += best - anchor;
            }
            n * excess / n_mc as f64
        })
        .collect();

    Ok(per_bin.iter().sum::<f64>() / sample.n_sims() as f64)
}

/// Candidate bin counts, capped at `S / 10` (at least 1).
pub fn bin_grid(n_sims: usize) -> Vec<usize> {
    const GRID: [usize; 18] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 50, 75, 100, 150, 200];
    let cap = (n_sims / 10).max(1);
    GRID.iter().copied().filter(|&m| m <= cap).collect()
}

/// Outcome of the bias-controlled bin-count search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinChoice {
    pub bins: usize,
    pub bias: f64,
    /// `(M, bias)` for every candidate evaluated.
    pub evaluated: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

/// Largest candidate bin count whose estimated bias is below `threshold`.
pub fn so_choose_bins(
    sample: &PsaSample,
    p: usize,
    threshold: f64,
    n_mc: usize,
    seed: u64,
) -> Result<BinChoice> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(EvppiError::InvalidArgument(format!(
            "bias threshold must be positive, got {threshold}"
        )));
    }
    let order = order_by_param(sample, p)?;
    let evaluated = bin_grid(sample.n_sims())
        .into_iter()
        .filter(|&m| sample.n_sims() / m >= 2)
        .map(|m| Ok((m, so_bias_ordered(sample, &order, m, n_mc, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let chosen = evaluated.iter().rev().find(|(_, b)| *b < threshold).copied();
    Ok(match chosen {
        Some((bins, bias)) => BinChoice {
            bins,
            bias,
            evaluated,
            warning: None,
        },
        None => BinChoice {
            bins: 1,
            bias: evaluated.first().map_or(0.0, |e| e.1),
            evaluated,
            warning: Some(format!(
                "no bin count keeps the estimated bias below {threshold}; using a single bin"
            )),
        },
    })
}

/// Settings for the automatic bin-count path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoConfig {
    /// Bias threshold in net-benefit currency units.
    pub threshold: f64,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for SoConfig {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            n_mc: 2000,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

/// [`so_evppi`] with the bin count picked by [`so_choose_bins`].
pub fn so_evppi_auto(sample: &PsaSample, p: usize, cfg: &SoConfig) -> Result<EvppiEstimate> {
    let choice = so_choose_bins(sample, p, cfg.threshold, cfg.n_mc, cfg.seed)?;
    let mut est = so_evppi(sample, p, choice.bins)?;
    est.set_diagnostic("bias", choice.bias);
    est.set_diagnostic("bias_threshold", cfg.threshold);
    est.set_diagnostic(
        "bias_grid",
        serde_json::to_value(&choice.evaluated).unwrap_or_default(),
    );
    if let Some(w) = choice.warning {
        est.warn(w);
    }
    Ok(est)
}
