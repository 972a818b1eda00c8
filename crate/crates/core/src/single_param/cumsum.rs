use serde::Serialize;

use super::order_by_param;
use crate::error::{EvppiError, Result};
use crate::psa::{incremental_nb, PsaSample};

/// Cumulative incremental net benefit along the sorted parameter.
///
/// At the `j`-th sorted value `phi_j` the curve is
/// `(1/S) · Σ_{s : phi_s < phi_j} (nb_t − nb_t')`. The sum is over strictly
/// smaller values, so the first point is 0 and tied values share a point
/// height. Extrema mark values of the parameter where the better of the two
/// treatments changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumsumCurve {
    pub points: Vec<(f64, f64)>,
}

impl CumsumCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

pub fn cumsum_curve(sample: &PsaSample, p: usize, t: usize, t_ref: usize) -> Result<CumsumCurve> {
    if t == t_ref {
        return Err(EvppiError::InvalidArgument(
            "the curve compares two distinct treatments".into(),
        ));
    }
    let inc = incremental_nb(sample.nb(), t, t_ref)?;
    let order = order_by_param(sample, p)?;
    let phi = sample.param_column(p)?;
    let s = sample.n_sims() as f64;

    let mut points = Vec::with_capacity(inc.len());
    let mut below = 0.0;
    let mut j = 0;
    while j < order.perm.len() {
        let value = phi[order.perm[j]];
        let mut group_sum = 0.0;
        while j < order.perm.len() && phi[order.perm[j]] == value {
            points.push((value, below / s));
            group_sum += inc[order.perm[j]];
            j += 1;
        }
        below += group_sum;
    }
    Ok(CumsumCurve { points })
}
