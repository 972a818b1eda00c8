//! Single-parameter EVPPI estimators that work on the simulations sorted by
//! the parameter of interest.
//!
//! Both estimators replace the inner conditional expectation with averages
//! of net benefit over runs of neighbouring simulations. Binning
//! ([`so_evppi`]) uses `M` equal-count runs; segmentation ([`sad_evppi`])
//! searches for the `D` cut points that maximise the estimate. The
//! cumulative incremental net benefit ([`cumsum_curve`]) helps a human pick
//! `D`.

mod cumsum;
mod sadatsafavi;
mod strong_oakley;

pub use cumsum::{cumsum_curve, CumsumCurve};
pub use sadatsafavi::{sad_evppi, SegmentationVector, MAX_DECISION_CHANGES};
pub use strong_oakley::{
    bin_grid, so_bias, so_choose_bins, so_evppi, so_evppi_auto, BinChoice, BinPartition,
    SoConfig,
};

use crate::error::Result;
use crate::psa::PsaSample;

/// Tie fraction above which diagnostics flag order-dependent partitions.
pub const TIE_WARNING_FRACTION: f64 = 0.01;

/// Simulations sorted by one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamOrder {
    /// `perm[j]` is the original row holding the `j`-th smallest value.
    pub perm: Vec<usize>,
    /// Fraction of sorted rows whose value equals their predecessor's.
    pub tie_fraction: f64,
    pub constant: bool,
}

impl ParamOrder {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.constant {
            out.push("parameter column is constant; sorting is degenerate".to_string());
        } else if self.tie_fraction > TIE_WARNING_FRACTION {
            out.push(format!(
                "{:.1}% of parameter values are tied; partition depends on row order",
                100.0 * self.tie_fraction
            ));
        }
        out
    }
}

/// Stable ascending sort of one parameter column; ties keep row order.
pub fn order_by_param(sample: &PsaSample, p: usize) -> Result<ParamOrder> {
    let phi = sample.param_column(p)?;
    let mut perm: Vec<usize> = (0..phi.len()).collect();
    perm.sort_by(|&a, &b| phi[a].total_cmp(&phi[b]));
    let ties = perm.windows(2).filter(|w| phi[w[0]] == phi[w[1]]).count();
    Ok(ParamOrder {
        tie_fraction: ties as f64 / phi.len() as f64,
        constant: ties + 1 == phi.len(),
        perm,
    })
}

/// Net benefit reordered by a parameter, with per-treatment prefix sums.
pub(crate) struct SortedNb {
    pub phi: Vec<f64>,
    pub n_treatments: usize,
    /// Row-major `(S + 1) × T`; entry `j·T + t` sums the first `j` sorted rows.
    pub prefix: Vec<f64>,
}

impl SortedNb {
    pub fn new(sample: &PsaSample, order: &ParamOrder, p: usize) -> Result<Self> {
        let phi_col = sample.param_column(p)?;
        let nb = sample.nb();
        let t_count = sample.n_treatments();
        let mut prefix = vec![0.0; (order.perm.len() + 1) * t_count];
        for (j, &row) in order.perm.iter().enumerate() {
            for t in 0..t_count {
                prefix[(j + 1) * t_count + t] = prefix[j * t_count + t] + nb[(row, t)];
            }
        }
        Ok(Self {
            phi: order.perm.iter().map(|&r| phi_col[r]).collect(),
            n_treatments: t_count,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    /// Largest per-treatment sum over sorted rows `start..end`, and its treatment.
    #[inline]
    pub fn best_sum(&self, start: usize, end: usize) -> (usize, f64) {
        let t_count = self.n_treatments;
        let hi = &self.prefix[end * t_count..(end + 1) * t_count];
        let lo = &self.prefix[start * t_count..(start + 1) * t_count];
        let mut best = (0, hi[0] - lo[0]);
        for t in 1..t_count {
            let v = hi[t] - lo[t];
            if v > best.1 {
                best = (t, v);
            }
        }
        best
    }
}

/// Plug-in estimate for a fixed split of the sorted simulations.
///
/// `bounds` are sorted-rank boundaries starting at 0 and ending at `S`.
/// Segment sums are taken directly over rows, and the current-information
/// term from the same sums, so the result is exactly zero when all
/// treatments coincide and never negative. Returns the value and the
/// optimal treatment per segment.
pub(crate) fn segmented_value(
    sample: &PsaSample,
    order: &ParamOrder,
    bounds: &[usize],
) -> (f64, Vec<usize>) {
    let nb = sample.nb();
    let t_count = sample.n_treatments();
    let mut totals = vec![0.0; t_count];
    let mut first = 0.0;
    let mut optima = Vec::with_capacity(bounds.len().saturating_sub(1));
    let mut sums = vec![0.0; t_count];
    for w in bounds.windows(2) {
        let rows = &order.perm[w[0]..w[1]];
        for (t, sum) in sums.iter_mut().enumerate() {
            *sum = rows.iter().map(|&r| nb[(r, t)]).sum();
        }
        let (t_best, best) = crate::psa::argmax_first(&sums);
        first += best;
        optima.push(t_best);
        for (total, v) in totals.iter_mut().zip(&sums) {
            *total += v;
        }
    }
    let (_, current) = crate::psa::argmax_first(&totals);
    let s = sample.n_sims() as f64;
    (first / s - current / s, optima)
}
