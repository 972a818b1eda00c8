use rayon::prelude::*;
use serde::Serialize;

use super::{order_by_param, segmented_value, SortedNb};
use crate::error::{EvppiError, Result};
use crate::estimate::{EvppiEstimate, Method};
use crate::psa::PsaSample;

/// Search cost grows as `S^D`; more than a few decision changes per
/// parameter is implausible in practice.
pub const MAX_DECISION_CHANGES: usize = 3;

/// Cut points splitting the sorted simulations into `D + 1` sub-lists.
///
/// Sub-list `m` holds the simulations with `cut[m-1] <= phi < cut[m]`. Cut
/// values are midpoints between neighbouring distinct parameter values, so
/// they lie strictly inside the observed range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationVector {
    pub cut_values: Vec<f64>,
    /// Sorted-rank positions: sub-list `m` spans ranks `cut_ranks[m-1]..cut_ranks[m]`.
    pub cut_ranks: Vec<usize>,
    pub segment_optima: Vec<usize>,
}

impl SegmentationVector {
    pub fn changes(&self) -> usize {
        self.cut_values.len()
    }
}

/// Single-parameter EVPPI maximised over all segmentations with `changes` cuts.
pub fn sad_evppi(sample: &PsaSample, p: usize, changes: usize) -> Result<EvppiEstimate> {
    if changes > MAX_DECISION_CHANGES {
        return Err(EvppiError::InvalidArgument(format!(
            "at most {MAX_DECISION_CHANGES} decision changes are supported, got {changes}"
        )));
    }
    if changes >= sample.n_sims() {
        return Err(EvppiError::InvalidArgument(format!(
            "{changes} decision changes need more than {} simulations",
            sample.n_sims()
        )));
    }
    let order = order_by_param(sample, p)?;
    if changes == 0 {
        let mut est = EvppiEstimate::new(Method::Sadatsafavi, 0.0)
            .with_diagnostic("changes", 0)
            .with_diagnostic("cut_values", Vec::<f64>::new());
        est.warn("parameter declared non-influential (no decision changes)");
        return Ok(est);
    }
    let sorted = SortedNb::new(sample, &order, p)?;
    let seg = best_segmentation(&sorted, changes)?;
    let mut bounds = vec![0];
    bounds.extend(&seg.cut_ranks);
    bounds.push(sample.n_sims());
    let (value, _) = segmented_value(sample, &order, &bounds);

    let mut est = EvppiEstimate::new(Method::Sadatsafavi, value)
        .with_diagnostic("changes", changes)
        .with_diagnostic("cut_values", seg.cut_values.clone())
        .with_diagnostic("cut_ranks", seg.cut_ranks.clone())
        .with_diagnostic("segment_optima", seg.segment_optima.clone())
        .with_diagnostic("tie_fraction", order.tie_fraction);
    for w in order.warnings() {
        est.warn(w);
    }
    Ok(est)
}

/// Exhaustive search over cut positions by dynamic programming on prefix sums.
///
/// `layer[j]` holds the best total over segmentations of ranks `0..j` into
/// `k` pieces. Each layer is an exact maximum over all earlier cuts, so the
/// result equals enumerating every segmentation.
fn best_segmentation(sorted: &SortedNb, changes: usize) -> Result<SegmentationVector> {
    let n = sorted.len();
    let cuts: Vec<usize> = (1..n)
        .filter(|&j| sorted.phi[j - 1] < sorted.phi[j])
        .collect();
    if cuts.len() < changes {
        return Err(EvppiError::InvalidArgument(format!(
            "only {} distinct cut positions available for {changes} decision changes",
            cuts.len()
        )));
    }

    // layer[c] = best value of ranks 0..cuts[c] split into k pieces, with the
    // index of the previous cut in `back`.
    let mut layer: Vec<f64> = cuts.iter().map(|&j| sorted.best_sum(0, j).1).collect();
    let mut backs: Vec<Vec<usize>> = Vec::with_capacity(changes);
    for _ in 1..changes {
        let prev = &layer;
        let next: Vec<(f64, usize)> = (0..cuts.len())
            .into_par_iter()
            .map(|c| {
                let end = cuts[c];
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for (i, &start) in cuts[..c].iter().enumerate() {
                    if prev[i] == f64::NEG_INFINITY {
                        continue;
                    }
                    let v = prev[i] + sorted.best_sum(start, end).1;
                    if v > best.0 {
                        best = (v, i);
                    }
                }
                best
            })
            .collect();
        backs.push(next.iter().map(|b| b.1).collect());
        layer = next.into_iter().map(|b| b.0).collect();
    }

    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, &start) in cuts.iter().enumerate() {
        if layer[i] == f64::NEG_INFINITY {
            continue;
        }
        let v = layer[i] + sorted.best_sum(start, n).1;
        if v > best.0 {
            best = (v, i);
        }
    }

    let mut picked = vec![best.1];
    for back in backs.iter().rev() {
        picked.push(back[*picked.last().unwrap()]);
    }
    picked.reverse();
    let cut_ranks: Vec<usize> = picked.iter().map(|&c| cuts[c]).collect();
    let cut_values = cut_ranks
        .iter()
        .map(|&j| 0.5 * (sorted.phi[j - 1] + sorted.phi[j]))
        .collect();
    let mut bounds = vec![0];
    bounds.extend(&cut_ranks);
    bounds.push(n);
    let segment_optima = bounds
        .windows(2)
        .map(|w| sorted.best_sum(w[0], w[1]).0)
        .collect();
    Ok(SegmentationVector {
        cut_values,
        cut_ranks,
        segment_optima,
    })
}
