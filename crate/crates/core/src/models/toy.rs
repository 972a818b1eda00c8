use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Beta, Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ROW_CHUNK;
use crate::error::{EvppiError, Result};
use crate::nested_mc::{CompensatedSum, GenerativeModel};
use crate::psa::{argmax_first, ParamSubset, PsaSample, WillingnessToPay};
use crate::rng::{domain, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Log-normal prior given by its mean and standard deviation on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl LogNormalPrior {
    fn log_params(&self) -> (f64, f64) {
        let s2 = (1.0 + (self.sd / self.mean).powi(2)).ln();
        (self.mean.ln() - 0.5 * s2, s2.sqrt())
    }
}

/// A two-arm vaccination decision tree with eight independent parameters.
///
/// Without vaccination a person is infected with probability `p_inf`, and an
/// infected person develops a complication with probability `p_comp`.
/// Vaccination costs `c_vacc` and scales the infection risk by `1 − rho`.
/// Infections cost `c_treat` and lose `q_inf` QALYs; complications add
/// `c_comp` and `q_comp`. Effects are negative QALY losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearToySpec {
    pub p_inf: BetaPrior,
    pub rho: BetaPrior,
    pub p_comp: BetaPrior,
    pub c_vacc: LogNormalPrior,
    pub c_treat: LogNormalPrior,
    pub c_comp: LogNormalPrior,
    pub q_inf: LogNormalPrior,
    pub q_comp: LogNormalPrior,
}

impl Default for NonlinearToySpec {
    /// Prior means put the break-even willingness to pay at 20000: the
    /// vaccine averts 0.1 × 0.3 infections, saving 0.03 × (50 + 0.05 × 2000)
    /// = 4.5 in treatment cost and gaining 0.03 × (0.01 + 0.05 × 0.1) =
    /// 0.00045 QALYs, so `(13.5 − 4.5) / 0.00045 = 20000`.
    fn default() -> Self {
        Self {
            p_inf: BetaPrior {
                alpha: 10.0,
                beta: 90.0,
            },
            rho: BetaPrior {
                alpha: 15.0,
                beta: 35.0,
            },
            p_comp: BetaPrior {
                alpha: 5.0,
                beta: 95.0,
            },
            c_vacc: LogNormalPrior {
                mean: 13.5,
                sd: 2.0,
            },
            c_treat: LogNormalPrior {
                mean: 50.0,
                sd: 10.0,
            },
            c_comp: LogNormalPrior {
                mean: 2000.0,
                sd: 400.0,
            },
            q_inf: LogNormalPrior {
                mean: 0.01,
                sd: 0.003,
            },
            q_comp: LogNormalPrior {
                mean: 0.1,
                sd: 0.03,
            },
        }
    }
}

pub const TOY_PARAM_NAMES: [&str; 8] = [
    "p_inf", "rho", "p_comp", "c_vacc", "c_treat", "c_comp", "q_inf", "q_comp",
];

#[derive(Debug, Clone, Copy)]
enum Marginal {
    Beta(Beta<f64>),
    LogNormal(LogNormal<f64>),
}

impl Marginal {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            Marginal::Beta(d) => d.sample(rng),
            Marginal::LogNormal(d) => d.sample(rng),
        }
    }
}

/// Per-arm effects and costs for one parameter vector.
pub fn toy_outcomes(theta: &[f64]) -> ([f64; 2], [f64; 2]) {
    let [p_inf, rho, p_comp, c_vacc, c_treat, c_comp, q_inf, q_comp] =
        <[f64; 8]>::try_from(&theta[..8]).expect("eight parameters");
    let loss = q_inf + p_comp * q_comp;
    let cost = c_treat + p_comp * c_comp;
    let p_vacc = p_inf * (1.0 - rho);
    (
        [-p_inf * loss, -p_vacc * loss],
        [p_inf * cost, c_vacc + p_vacc * cost],
    )
}

/// A validated toy model with its marginal distributions built once.
#[derive(Debug, Clone)]
pub struct NonlinearToyModel {
    spec: NonlinearToySpec,
    marginals: [Marginal; 8],
}

impl NonlinearToySpec {
    fn betas(&self) -> [(&'static str, BetaPrior); 3] {
        [("p_inf", self.p_inf), ("rho", self.rho), ("p_comp", self.p_comp)]
    }

    fn lognormals(&self) -> [(&'static str, LogNormalPrior); 5] {
        [
            ("c_vacc", self.c_vacc),
            ("c_treat", self.c_treat),
            ("c_comp", self.c_comp),
            ("q_inf", self.q_inf),
            ("q_comp", self.q_comp),
        ]
    }

    pub fn model(&self) -> Result<NonlinearToyModel> {
        let mut marginals = Vec::with_capacity(8);
        for (name, prior) in self.betas() {
            let d = Beta::new(prior.alpha, prior.beta).map_err(|e| {
                EvppiError::InvalidArgument(format!("toy prior `{name}`: {e}"))
            })?;
            marginals.push(Marginal::Beta(d));
        }
        for (name, prior) in self.lognormals() {
            if !(prior.mean > 0.0 && prior.sd > 0.0 && prior.mean.is_finite() && prior.sd.is_finite())
            {
                return Err(EvppiError::InvalidArgument(format!(
                    "toy prior `{name}` needs positive finite mean and sd"
                )));
            }
            let (mu, sigma) = prior.log_params();
            let d = LogNormal::new(mu, sigma).map_err(|e| {
                EvppiError::InvalidArgument(format!("toy prior `{name}`: {e}"))
            })?;
            marginals.push(Marginal::LogNormal(d));
        }
        Ok(NonlinearToyModel {
            spec: *self,
            marginals: marginals.try_into().expect("eight marginals"),
        })
    }

    /// Prior means of the eight parameters, in [`TOY_PARAM_NAMES`] order.
    pub fn prior_means(&self) -> [f64; 8] {
        [
            self.p_inf.mean(),
            self.rho.mean(),
            self.p_comp.mean(),
            self.c_vacc.mean,
            self.c_treat.mean,
            self.c_comp.mean,
            self.q_inf.mean,
            self.q_comp.mean,
        ]
    }

    /// Willingness to pay at which expected net benefit of the two arms is
    /// equal. Outcomes are multilinear in independent parameters, so their
    /// expectations are the outcomes at the prior means.
    pub fn decision_flip_wtp(&self) -> f64 {
        let (e, c) = toy_outcomes(&self.prior_means());
        (c[1] - c[0]) / (e[1] - e[0])
    }

    pub fn generate_psa(&self, n_sims: usize, seed: u64, wtp: WillingnessToPay) -> Result<PsaSample> {
        self.model()?.generate_psa(n_sims, seed, wtp)
    }
}

impl NonlinearToyModel {
    pub fn spec(&self) -> &NonlinearToySpec {
        &self.spec
    }

    fn draw(&self, p: usize, rng: &mut dyn RngCore) -> f64 {
        self.marginals[p].sample(rng)
    }

    pub fn generate_psa(&self, n_sims: usize, seed: u64, wtp: WillingnessToPay) -> Result<PsaSample> {
        if n_sims < 2 {
            return Err(EvppiError::TooFewSamples {
                min: 2,
                got: n_sims,
            });
        }
        let chunks = n_sims.div_ceil(ROW_CHUNK);
        let rows: Vec<[f64; 8]> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = stream_rng(seed, domain::SIMULATE, c as u64);
                let len = ROW_CHUNK.min(n_sims - c * ROW_CHUNK);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let mut theta = [0.0; 8];
                    self.sample_joint(&mut rng, &mut theta);
                    out.push(theta);
                }
                out
            })
            .collect();
        let outcomes: Vec<_> = rows.iter().map(|t| toy_outcomes(t)).collect();
        let params = DMatrix::from_fn(n_sims, 8, |r, c| rows[r][c]);
        let effects = DMatrix::from_fn(n_sims, 2, |r, c| outcomes[r].0[c]);
        let costs = DMatrix::from_fn(n_sims, 2, |r, c| outcomes[r].1[c]);
        PsaSample::from_outcomes(
            TOY_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            toy_treatment_names(),
            params,
            effects,
            costs,
            wtp,
        )
    }

    /// High-budget nested Monte Carlo EVPPI, returning `(value, MC SE)`.
    ///
    /// Parameters are independent, so the inner draws of the complement do
    /// not depend on `φ`. Each block of [`BANK_BLOCK`] outer draws shares one
    /// bank of `n_inner` complement draws, which cuts sampling cost by that
    /// factor while keeping bank errors independent across blocks.
    pub fn brute_force_evppi(
        &self,
        subset: &[usize],
        wtp: WillingnessToPay,
        n_outer: usize,
        n_inner: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let subset = ParamSubset::new(subset.to_vec(), 8)?;
        if n_outer < MIN_OUTER || n_inner < MIN_INNER {
            return Err(EvppiError::InvalidArgument(format!(
                "brute-force budget must be at least {MIN_OUTER} outer × {MIN_INNER} inner draws, \
                 got {n_outer} × {n_inner}"
            )));
        }
        let complement = subset.complement(8);
        let k = wtp.value();
        let blocks = n_outer.div_ceil(BANK_BLOCK);
        let per_block: Vec<Vec<(f64, [f64; 2])>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, domain::BRUTE_FORCE, b as u64);
                let mut bank = vec![[0.0; 8]; n_inner];
                for theta in bank.iter_mut() {
                    for &p in &complement {
                        theta[p] = self.draw(p, &mut rng);
                    }
                }
                let len = BANK_BLOCK.min(n_outer - b * BANK_BLOCK);
                let mut out = Vec::with_capacity(len);
                let mut theta = [0.0; 8];
                for _ in 0..len {
                    self.sample_joint(&mut rng, &mut theta);
                    let mut sums = [CompensatedSum::default(), CompensatedSum::default()];
                    for inner in &bank {
                        let mut full = *inner;
                        for &p in subset.indices() {
                            full[p] = theta[p];
                        }
                        let (e, c) = toy_outcomes(&full);
                        sums[0].add(k * e[0] - c[0]);
                        sums[1].add(k * e[1] - c[1]);
                    }
                    let means = [
                        sums[0].value() / n_inner as f64,
                        sums[1].value() / n_inner as f64,
                    ];
                    out.push((argmax_first(&means).1, means));
                }
                out
            })
            .collect();

        let mut best = CompensatedSum::default();
        let mut grand = [CompensatedSum::default(), CompensatedSum::default()];
        for (m, means) in per_block.iter().flatten() {
            best.add(*m);
            grand[0].add(means[0]);
            grand[1].add(means[1]);
        }
        let n = n_outer as f64;
        let first = best.value() / n;
        let current = argmax_first(&[grand[0].value() / n, grand[1].value() / n]).1;
        let mut dev = CompensatedSum::default();
        for (m, _) in per_block.iter().flatten() {
            dev.add((m - first).powi(2));
        }
        let se = (dev.value() / (n - 1.0)).sqrt() / n.sqrt();
        Ok((first - current, se))
    }
}

/// Outer draws sharing one bank of inner draws in [`NonlinearToyModel::brute_force_evppi`].
pub const BANK_BLOCK: usize = 64;
pub const MIN_OUTER: usize = 10_000;
pub const MIN_INNER: usize = 1_000;

fn toy_treatment_names() -> Vec<String> {
    vec!["no_vaccine".into(), "vaccine".into()]
}

impl GenerativeModel for NonlinearToyModel {
    fn param_names(&self) -> Vec<String> {
        TOY_PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn treatment_names(&self) -> Vec<String> {
        toy_treatment_names()
    }

    fn n_params(&self) -> usize {
        8
    }

    fn n_treatments(&self) -> usize {
        2
    }

    fn sample_joint(&self, rng: &mut dyn RngCore, theta: &mut [f64]) {
        for (p, v) in theta.iter_mut().enumerate().take(8) {
            *v = self.draw(p, rng);
        }
    }

    fn sample_conditional(&self, subset: &ParamSubset, theta: &mut [f64], rng: &mut dyn RngCore) {
        for (p, v) in theta.iter_mut().enumerate().take(8) {
            if !subset.contains(p) {
                *v = self.draw(p, rng);
            }
        }
    }

    fn net_benefit(&self, theta: &[f64], wtp: WillingnessToPay, out: &mut [f64]) -> Result<()> {
        let (e, c) = toy_outcomes(theta);
        let k = wtp.value();
        out[0] = k * e[0] - c[0];
        out[1] = k * e[1] - c[1];
        if !(out[0].is_finite() && out[1].is_finite()) {
            return Err(EvppiError::Numerical("non-finite toy net benefit".into()));
        }
        Ok(())
    }
}
