//! Synthetic models with known EVPPI.
//!
//! [`LinearGaussianSpec`] has a closed-form EVPPI for every subset.
//! [`NonlinearToySpec`] is a small vaccination decision tree whose EVPPI is
//! obtained by high-budget nested Monte Carlo.

mod linear_gaussian;
mod toy;

pub use linear_gaussian::{LinearGaussianSpec, PHI, PSI};
pub use toy::{
    toy_outcomes, BetaPrior, LogNormalPrior, NonlinearToyModel, NonlinearToySpec, BANK_BLOCK,
    MIN_INNER, MIN_OUTER, TOY_PARAM_NAMES,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nested_mc::GenerativeModel;
use crate::psa::{PsaSample, WillingnessToPay};

/// Rows drawn from one RNG stream during PSA generation.
pub(crate) const ROW_CHUNK: usize = 4096;

/// A built-in model, as read from or written to a JSON spec file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    LinearGaussian(LinearGaussianSpec),
    NonlinearToy(NonlinearToySpec),
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| crate::error::EvppiError::Parse(format!("model spec: {e}")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LinearGaussian(_) => "linear_gaussian",
            ModelSpec::NonlinearToy(_) => "nonlinear_toy",
        }
    }

    /// Draws a PSA sample. The linear-Gaussian model has no effect/cost split,
    /// so `wtp` only matters for the toy model.
    pub fn generate_psa(&self, n_sims: usize, seed: u64, wtp: WillingnessToPay) -> Result<PsaSample> {
        match self {
            ModelSpec::LinearGaussian(s) => s.generate_psa(n_sims, seed),
            ModelSpec::NonlinearToy(s) => s.generate_psa(n_sims, seed, wtp),
        }
    }

    pub fn generative(&self) -> Result<Box<dyn GenerativeModel>> {
        Ok(match self {
            ModelSpec::LinearGaussian(s) => {
                s.validate()?;
                Box::new(*s)
            }
            ModelSpec::NonlinearToy(s) => Box::new(s.model()?),
        })
    }

    /// Willingness to pay at which the optimal decision under current
    /// information flips, when net benefit depends on it.
    pub fn decision_flip_wtp(&self) -> Option<f64> {
        match self {
            ModelSpec::LinearGaussian(_) => None,
            ModelSpec::NonlinearToy(s) => Some(s.decision_flip_wtp()),
        }
    }
}
