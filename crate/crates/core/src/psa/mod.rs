//! Probabilistic sensitivity analysis samples and the quantities computed
//! directly from them: net benefit, EVPI and the current optimal decision.
//!
//! A [`PsaSample`] pairs `S` parameter draws with the `S × T` matrix of
//! net benefit those draws produce. When per-treatment effects and costs are
//! kept alongside, the net benefit can be rebuilt at any willingness to pay
//! without re-running the model.

mod csv;

pub use self::csv::{read_psa_csv, read_psa_file, write_psa_csv, write_psa_file};

use nalgebra::DMatrix;

use crate::error::{EvppiError, Result};

/// Willingness to pay per unit of effect, in currency per QALY.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WillingnessToPay(f64);

impl WillingnessToPay {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k < 0.0 {
            return Err(EvppiError::InvalidArgument(format!(
                "willingness to pay must be finite and non-negative, got {k}"
            )));
        }
        Ok(Self(k))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Effects and costs retained so net benefit can be rebuilt per `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub effects: DMatrix<f64>,
    pub costs: DMatrix<f64>,
    pub wtp: WillingnessToPay,
}

/// Paired parameter and net-benefit draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaSample {
    param_names: Vec<String>,
    treatment_names: Vec<String>,
    params: DMatrix<f64>,
    nb: DMatrix<f64>,
    outcomes: Option<Outcomes>,
}

impl PsaSample {
    pub fn from_net_benefit(
        param_names: Vec<String>,
        treatment_names: Vec<String>,
        params: DMatrix<f64>,
        nb: DMatrix<f64>,
    ) -> Result<Self> {
        let sample = Self {
            param_names,
            treatment_names,
            params,
            nb,
            outcomes: None,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Builds a sample from effects and costs; net benefit is `k·e − c`.
    pub fn from_outcomes(
        param_names: Vec<String>,
        treatment_names: Vec<String>,
        params: DMatrix<f64>,
        effects: DMatrix<f64>,
        costs: DMatrix<f64>,
        wtp: WillingnessToPay,
    ) -> Result<Self> {
        let nb = build_nb(&effects, &costs, wtp)?;
        let sample = Self {
            param_names,
            treatment_names,
            params,
            nb,
            outcomes: Some(Outcomes {
                effects,
                costs,
                wtp,
            }),
        };
        sample.validate()?;
        Ok(sample)
    }

    fn validate(&self) -> Result<()> {
        let s = self.nb.nrows();
        if s < 2 {
            return Err(EvppiError::TooFewSamples { min: 2, got: s });
        }
        if self.nb.ncols() < 2 {
            return Err(EvppiError::Shape(format!(
                "need at least 2 treatments, got {}",
                self.nb.ncols()
            )));
        }
        if self.params.nrows() != s {
            return Err(EvppiError::Shape(format!(
                "parameter matrix has {} rows but net benefit has {s}",
                self.params.nrows()
            )));
        }
        if self.params.ncols() != self.param_names.len() {
            return Err(EvppiError::Shape(format!(
                "{} parameter names for {} parameter columns",
                self.param_names.len(),
                self.params.ncols()
            )));
        }
        if self.nb.ncols() != self.treatment_names.len() {
            return Err(EvppiError::Shape(format!(
                "{} treatment names for {} net-benefit columns",
                self.treatment_names.len(),
                self.nb.ncols()
            )));
        }
        check_finite(&self.params, "parameters")?;
        check_finite(&self.nb, "net benefit")?;
        Ok(())
    }

    pub fn n_sims(&self) -> usize {
        self.nb.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.params.ncols()
    }

    pub fn n_treatments(&self) -> usize {
        self.nb.ncols()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn treatment_names(&self) -> &[String] {
        &self.treatment_names
    }

    pub fn params(&self) -> &DMatrix<f64> {
        &self.params
    }

    pub fn nb(&self) -> &DMatrix<f64> {
        &self.nb
    }

    pub fn outcomes(&self) -> Option<&Outcomes> {
        self.outcomes.as_ref()
    }

    pub fn wtp(&self) -> Option<WillingnessToPay> {
        self.outcomes.as_ref().map(|o| o.wtp)
    }

    pub fn param_column(&self, p: usize) -> Result<&[f64]> {
        if p >= self.n_params() {
            return Err(EvppiError::IndexOutOfRange {
                what: "parameter",
                index: p,
                len: self.n_params(),
            });
        }
        let s = self.n_sims();
        Ok(&self.params.as_slice()[p * s..(p + 1) * s])
    }

    pub fn nb_column(&self, t: usize) -> Result<&[f64]> {
        if t >= self.n_treatments() {
            return Err(EvppiError::IndexOutOfRange {
                what: "treatment",
                index: t,
                len: self.n_treatments(),
            });
        }
        let s = self.n_sims();
        Ok(&self.nb.as_slice()[t * s..(t + 1) * s])
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| EvppiError::UnknownParameter {
                name: name.to_string(),
                available: self.param_names.clone(),
            })
    }

    /// Looks a treatment up by name, falling back to a numeric index.
    pub fn treatment_index(&self, name: &str) -> Result<usize> {
        if let Some(t) = self.treatment_names.iter().position(|n| n == name) {
            return Ok(t);
        }
        match name.parse::<usize>() {
            Ok(t) if t < self.n_treatments() => Ok(t),
            _ => Err(EvppiError::UnknownTreatment {
                name: name.to_string(),
                available: self.treatment_names.clone(),
            }),
        }
    }

    /// Rebuilds net benefit at a new willingness to pay.
    pub fn with_wtp(&self, wtp: WillingnessToPay) -> Result<Self> {
        let outcomes = self.outcomes.as_ref().ok_or_else(|| {
            EvppiError::InvalidArgument(
                "net benefit can only be rebuilt when effects and costs are available".into(),
            )
        })?;
        Self::from_outcomes(
            self.param_names.clone(),
            self.treatment_names.clone(),
            self.params.clone(),
            outcomes.effects.clone(),
            outcomes.costs.clone(),
            wtp,
        )
    }

    /// Gathers rows by index (repeats allowed), as a bootstrap resample does.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            param_names: self.param_names.clone(),
            treatment_names: self.treatment_names.clone(),
            params: self.params.select_rows(rows),
            nb: self.nb.select_rows(rows),
            outcomes: self.outcomes.as_ref().map(|o| Outcomes {
                effects: o.effects.select_rows(rows),
                costs: o.costs.select_rows(rows),
                wtp: o.wtp,
            }),
        }
    }

    /// Appends a parameter column, e.g. an independent noise column.
    pub fn with_appended_param(&self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_sims() {
            return Err(EvppiError::Shape(format!(
                "appended column has {} rows, sample has {}",
                values.len(),
                self.n_sims()
            )));
        }
        let p = self.n_params();
        let mut params = self.params.clone().insert_column(p, 0.0);
        params.column_mut(p).copy_from_slice(values);
        let mut names = self.param_names.clone();
        names.push(name.to_string());
        let sample = Self {
            param_names: names,
            params,
            ..self.clone()
        };
        sample.validate()?;
        Ok(sample)
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(EvppiError::NonFinite { what, row, col });
            }
        }
    }
    Ok(())
}

/// Non-empty set of distinct parameter columns forming the subset of interest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParamSubset {
    indices: Vec<usize>,
}

impl ParamSubset {
    pub fn new(indices: Vec<usize>, n_params: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(EvppiError::InvalidArgument(
                "parameter subset must not be empty".into(),
            ));
        }
        for (i, &p) in indices.iter().enumerate() {
            if p >= n_params {
                return Err(EvppiError::IndexOutOfRange {
                    what: "parameter",
                    index: p,
                    len: n_params,
                });
            }
            if indices[..i].contains(&p) {
                return Err(EvppiError::InvalidArgument(format!(
                    "parameter index {p} repeated in subset"
                )));
            }
        }
        Ok(Self { indices })
    }

    pub fn single(p: usize, n_params: usize) -> Result<Self> {
        Self::new(vec![p], n_params)
    }

    pub fn from_names<S: AsRef<str>>(sample: &PsaSample, names: &[S]) -> Result<Self> {
        let indices = names
            .iter()
            .map(|n| sample.param_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, sample.n_params())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.indices.contains(&p)
    }

    /// The nuisance parameters left uncertain.
    pub fn complement(&self, n_params: usize) -> Vec<usize> {
        (0..n_params).filter(|p| !self.contains(*p)).collect()
    }

    pub fn label(&self, names: &[String]) -> String {
        self.indices
            .iter()
            .map(|&p| names.get(p).map(String::as_str).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Monetary net benefit `k·e − c`, element-wise.
pub fn build_nb(
    effects: &DMatrix<f64>,
    costs: &DMatrix<f64>,
    wtp: WillingnessToPay,
) -> Result<DMatrix<f64>> {
    if effects.shape() != costs.shape() {
        return Err(EvppiError::Shape(format!(
            "effects are {:?} but costs are {:?}",
            effects.shape(),
            costs.shape()
        )));
    }
    check_finite(effects, "effects")?;
    check_finite(costs, "costs")?;
    let k = wtp.value();
    Ok(effects.zip_map(costs, |e, c| k * e - c))
}

/// Column means using plain left-to-right summation.
///
/// Plain summation is monotone in its summands, which is what keeps EVPI and
/// the plug-in regression estimate non-negative in floating point.
pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.nrows() as f64;
    m.column_iter().map(|c| c.iter().sum::<f64>() / s).collect()
}

/// Mean over rows of the row-wise maximum.
pub fn mean_row_max(m: &DMatrix<f64>) -> f64 {
    let s = m.nrows();
    let total: f64 = (0..s)
        .map(|r| m.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / s as f64
}

/// Expected value of perfect information from a net-benefit matrix.
pub fn evpi(nb: &DMatrix<f64>) -> Result<f64> {
    if nb.nrows() < 2 {
        return Err(EvppiError::TooFewSamples {
            min: 2,
            got: nb.nrows(),
        });
    }
    let (_, best) = current_optimum(nb);
    Ok(mean_row_max(nb) - best)
}

/// Element-wise `nb[·, t] − nb[·, t_ref]`.
pub fn incremental_nb(nb: &DMatrix<f64>, t: usize, t_ref: usize) -> Result<Vec<f64>> {
    let n = nb.ncols();
    for idx in [t, t_ref] {
        if idx >= n {
            return Err(EvppiError::IndexOutOfRange {
                what: "treatment",
                index: idx,
                len: n,
            });
        }
    }
    if t == t_ref {
        return Err(EvppiError::InvalidArgument(
            "incremental net benefit needs two distinct treatments".into(),
        ));
    }
    Ok(nb
        .column(t)
        .iter()
        .zip(nb.column(t_ref).iter())
        .map(|(a, b)| a - b)
        .collect())
}

/// Treatment with the highest mean net benefit, ties going to the lowest index.
pub fn current_optimum(nb: &DMatrix<f64>) -> (usize, f64) {
    argmax_first(&column_means(nb))
}

/// Index and value of the maximum; the first index wins ties.
pub(crate) fn argmax_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Library-wide slack for "EVPPI ≥ 0" checks: `1e-9 · max|nb|`.
pub fn numerical_tolerance(nb: &DMatrix<f64>) -> f64 {
    1e-9 * nb.amax()
}
