//! Estimators for the expected value of partial perfect information (EVPPI)
//! computed from probabilistic sensitivity analysis (PSA) samples.
//!
//! Five estimators share one output type, [`EvppiEstimate`]:
//!
//! * [`single_param::so_evppi`] bins the simulations by the parameter of
//!   interest and averages within bins;
//! * [`single_param::sad_evppi`] searches for the segmentation that best
//!   captures a fixed number of decision changes;
//! * [`regression`] fits each treatment's net benefit on the parameters of
//!   interest with a GAM or a Gaussian process and plugs in fitted values;
//! * [`nested_mc`] runs the two-level Monte Carlo reference against a
//!   [`nested_mc::GenerativeModel`].
//!
//! The [`models`] module provides synthetic generators with closed-form or
//! brute-force EVPPI so every estimator can be checked against the truth.

pub mod error;
pub mod estimate;
pub mod models;
pub mod nested_mc;
pub mod psa;
pub mod regression;
pub mod rng;
pub mod single_param;

pub use error::{EvppiError, Result};
pub use estimate::{EvppiEstimate, Method};
pub use psa::{evpi, ParamSubset, PsaSample, WillingnessToPay};
