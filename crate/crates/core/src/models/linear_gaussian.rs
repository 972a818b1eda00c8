use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::ROW_CHUNK;
use crate::error::{EvppiError, Result};
use crate::nested_mc::GenerativeModel;
use crate::psa::{ParamSubset, PsaSample, WillingnessToPay};
use crate::rng::{domain, stream_rng};

/// Two treatments with `NB₀ ≡ 0` and `NB₁ = a + b·φ + c·ψ`, where `φ` and
/// `ψ` are independent normals. Net benefit does not depend on `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearGaussianSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub mu_phi: f64,
    pub sigma_phi: f64,
    pub mu_psi: f64,
    pub sigma_psi: f64,
}

impl Default for LinearGaussianSpec {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            mu_phi: 0.0,
            sigma_phi: 1.0,
            mu_psi: 0.0,
            sigma_psi: 1.0,
        }
    }
}

pub const PHI: usize = 0;
pub const PSI: usize = 1;

/// `E[max(0, X)] − max(0, E X)` for `X ~ N(m, s²)`.
fn normal_excess(m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let r = m / s;
    m * z.cdf(r) + s * z.pdf(r) - m.max(0.0)
}

impl LinearGaussianSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a,
            self.b,
            self.c,
            self.mu_phi,
            self.sigma_phi,
            self.mu_psi,
            self.sigma_psi,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(EvppiError::InvalidArgument(
                "linear-Gaussian spec has non-finite fields".into(),
            ));
        }
        if self.sigma_phi <= 0.0 || self.sigma_psi <= 0.0 {
            return Err(EvppiError::InvalidArgument(
                "linear-Gaussian prior standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn param_names() -> Vec<String> {
        vec!["phi".into(), "psi".into()]
    }

    pub fn treatment_names() -> Vec<String> {
        vec!["reference".into(), "alternative".into()]
    }

    pub fn incremental(&self, phi: f64, psi: f64) -> f64 {
        self.a + self.b * phi + self.c * psi
    }

    /// Value of `φ` at which the conditional mean of incremental net benefit
    /// crosses zero with `ψ` at its mean; `None` when `b = 0`.
    pub fn phi_break_even(&self) -> Option<f64> {
        (self.b != 0.0).then(|| -(self.a + self.c * self.mu_psi) / self.b)
    }

    /// Exact EVPPI for a subset of `{φ, ψ}` (indices [`PHI`], [`PSI`]).
    ///
    /// Learning a subset leaves `X = E[NB₁ | subset]` normal with mean
    /// `m = a + b·μ_φ + c·μ_ψ` and a standard deviation built from the learned
    /// terms only.
    pub fn oracle(&self, subset: &ParamSubset) -> Result<f64> {
        self.validate()?;
        if let Some(&bad) = subset.indices().iter().find(|&&p| p > PSI) {
            return Err(EvppiError::IndexOutOfRange {
                what: "parameter",
                index: bad,
                len: 2,
            });
        }
        let m = self.a + self.b * self.mu_phi + self.c * self.mu_psi;
        let mut var = 0.0;
        if subset.contains(PHI) {
            var += (self.b * self.sigma_phi).powi(2);
        }
        if subset.contains(PSI) {
            var += (self.c * self.sigma_psi).powi(2);
        }
        Ok(normal_excess(m, var.sqrt()))
    }

    /// Exact EVPI (both parameters learned).
    pub fn evpi(&self) -> Result<f64> {
        self.oracle(&ParamSubset::new(vec![PHI, PSI], 2)?)
    }

    pub fn generate_psa(&self, n_sims: usize, seed: u64) -> Result<PsaSample> {
        self.validate()?;
        if n_sims < 2 {
            return Err(EvppiError::TooFewSamples {
                min: 2,
                got: n_sims,
            });
        }
        let chunks = n_sims.div_ceil(ROW_CHUNK);
        let rows: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = stream_rng(seed, domain::SIMULATE, c as u64);
                let len = ROW_CHUNK.min(n_sims - c * ROW_CHUNK);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    out.push((
                        self.mu_phi + self.sigma_phi * z1,
                        self.mu_psi + self.sigma_psi * z2,
                    ));
                }
                out
            })
            .collect();
        let params = DMatrix::from_fn(n_sims, 2, |r, c| if c == 0 { rows[r].0 } else { rows[r].1 });
        let nb = DMatrix::from_fn(n_sims, 2, |r, c| {
            if c == 0 {
                0.0
            } else {
                self.incremental(rows[r].0, rows[r].1)
            }
        });
        PsaSample::from_net_benefit(Self::param_names(), Self::treatment_names(), params, nb)
    }
}

impl GenerativeModel for LinearGaussianSpec {
    fn param_names(&self) -> Vec<String> {
        Self::param_names()
    }

    fn treatment_names(&self) -> Vec<String> {
        Self::treatment_names()
    }

    fn n_params(&self) -> usize {
        2
    }

    fn n_treatments(&self) -> usize {
        2
    }

    fn sample_joint(&self, rng: &mut dyn RngCore, theta: &mut [f64]) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        theta[PHI] = self.mu_phi + self.sigma_phi * z1;
        theta[PSI] = self.mu_psi + self.sigma_psi * z2;
    }

    fn sample_conditional(&self, subset: &ParamSubset, theta: &mut [f64], rng: &mut dyn RngCore) {
        // Independent priors: each conditional is the marginal.
        if !subset.contains(PHI) {
            let z: f64 = StandardNormal.sample(rng);
            theta[PHI] = self.mu_phi + self.sigma_phi * z;
        }
        if !subset.contains(PSI) {
            let z: f64 = StandardNormal.sample(rng);
            theta[PSI] = self.mu_psi + self.sigma_psi * z;
        }
    }

    fn net_benefit(&self, theta: &[f64], _wtp: WillingnessToPay, out: &mut [f64]) -> Result<()> {
        out[0] = 0.0;
        out[1] = self.incremental(theta[PHI], theta[PSI]);
        Ok(())
    }
}
