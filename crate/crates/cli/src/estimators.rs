//! Loading inputs and dispatching to the estimators.

use std::collections::BTreeMap;
use std::path::Path;

use evppi::models::{LinearGaussianSpec, ModelSpec, NonlinearToySpec};
use evppi::nested_mc::nested_mc_evppi;
use evppi::psa::read_psa_file;
use evppi::regression::{
    bootstrap_se, fit_gp, gam_evppi, regression_evppi, BootstrapConfig, GamConfig, GpConfig,
    Interactions,
};
use evppi::single_param::{sad_evppi, so_evppi, so_evppi_auto, SoConfig};
use evppi::{evpi, EvppiEstimate, Method, ParamSubset, PsaSample, WillingnessToPay};
use serde_json::{json, Value};

use crate::args::{EstimatorArgs, InputArgs, InteractionsArg, MethodArg};
use crate::error::{CliError, CliResult};

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::So => Method::StrongOakley,
            MethodArg::Sad => Method::Sadatsafavi,
            MethodArg::Gp => Method::GaussianProcess,
            MethodArg::Gam => Method::Gam,
            MethodArg::Mc => Method::NestedMonteCarlo,
        }
    }
}

/// Reads a model spec from a JSON file or a built-in name.
pub fn parse_model(text: &str) -> CliResult<ModelSpec> {
    match text {
        "linear_gaussian" | "linear-gaussian" => Ok(ModelSpec::LinearGaussian(LinearGaussianSpec::default())),
        "nonlinear_toy" | "nonlinear-toy" => Ok(ModelSpec::NonlinearToy(NonlinearToySpec::default())),
        path => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read model spec `{path}`: {e}")))?;
            Ok(ModelSpec::from_json(&body)?)
        }
    }
}

/// The PSA sample plus whatever produced it.
#[derive(Debug, Clone)]
pub struct Context {
    pub sample: PsaSample,
    pub model: Option<ModelSpec>,
    pub wtp: WillingnessToPay,
    pub seed: u64,
    pub source: Value,
}

pub fn wtp(k: f64) -> CliResult<WillingnessToPay> {
    WillingnessToPay::new(k).map_err(|e| CliError::Usage(e.to_string()))
}

impl Context {
    pub fn load(args: &InputArgs) -> CliResult<Self> {
        let wtp = wtp(args.wtp)?;
        let model = args.model.as_deref().map(parse_model).transpose()?;
        let (sample, source) = match (&args.input, &model) {
            (Some(path), _) => (read_input(path, wtp)?, json!({ "file": path.display().to_string() })),
            (None, Some(spec)) => (
                spec.generate_psa(args.sims, args.seed, wtp)?,
                json!({ "model": spec, "sims": args.sims, "seed": args.seed }),
            ),
            (None, None) => {
                return Err(CliError::Usage("provide a PSA file with --input or a model with --model".into()))
            }
        };
        Ok(Self {
            sample,
            model,
            wtp,
            seed: args.seed,
            source,
        })
    }

    pub fn subset(&self, names: &[String]) -> CliResult<ParamSubset> {
        if names.is_empty() {
            return Err(CliError::Usage("empty parameter subset".into()));
        }
        Ok(ParamSubset::from_names(&self.sample, names)?)
    }

    /// Subsets from `a,b` strings; every single parameter when empty.
    pub fn subsets(&self, specs: &[String]) -> CliResult<Vec<ParamSubset>> {
        if specs.is_empty() {
            let n = self.sample.n_params();
            return (0..n)
                .map(|p| ParamSubset::single(p, n).map_err(CliError::from))
                .collect();
        }
        specs
            .iter()
            .map(|s| {
                let names: Vec<String> = s
                    .split(',')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .map(String::from)
                    .collect();
                self.subset(&names)
            })
            .collect()
    }

    pub fn names(&self, subset: &ParamSubset) -> Vec<String> {
        subset
            .indices()
            .iter()
            .map(|&p| self.sample.param_names()[p].clone())
            .collect()
    }
}

fn read_input(path: &Path, wtp: WillingnessToPay) -> CliResult<PsaSample> {
    read_psa_file(path, wtp).map_err(|e| match e {
        evppi::EvppiError::Io(io) => CliError::Usage(format!("cannot read `{}`: {io}", path.display())),
        other => CliError::Input(other),
    })
}

/// SAD decision-change counts: a default and per-parameter overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Changes {
    default: Option<usize>,
    named: BTreeMap<String, usize>,
}

impl Changes {
    pub fn parse(entries: &[String]) -> CliResult<Self> {
        let mut out = Changes::default();
        let count = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--changes: `{s}` is not a non-negative integer")))
        };
        for e in entries {
            match e.split_once('=') {
                Some((name, d)) => {
                    out.named.insert(name.trim().to_string(), count(d)?);
                }
                None => out.default = Some(count(e)?),
            }
        }
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.named.get(name).copied().or(self.default)
    }

    pub fn is_empty(&self) -> bool {
        self.default.is_none() && self.named.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasThreshold {
    Absolute(f64),
    /// Fraction of the sample EVPI.
    Relative(f64),
}

impl BiasThreshold {
    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = || CliError::Usage(format!("--bias-threshold: `{text}` is not a positive number or percentage"));
        let t = text.trim();
        let (v, rel) = match t.strip_suffix('%') {
            Some(p) => (p.trim().parse::<f64>().map_err(|_| bad())? / 100.0, true),
            None => (t.parse::<f64>().map_err(|_| bad())?, false),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad());
        }
        Ok(if rel {
            BiasThreshold::Relative(v)
        } else {
            BiasThreshold::Absolute(v)
        })
    }

    pub fn resolve(self, sample: &PsaSample) -> CliResult<f64> {
        match self {
            BiasThreshold::Absolute(v) => Ok(v),
            BiasThreshold::Relative(f) => {
                let t = f * evpi(sample.nb())?;
                if t > 0.0 {
                    Ok(t)
                } else {
                    Err(CliError::Usage(
                        "relative --bias-threshold needs a positive EVPI; give an absolute value".into(),
                    ))
                }
            }
        }
    }
}

/// Everything the estimators need besides the data.
#[derive(Debug, Clone)]
pub struct Settings {
    pub changes: Changes,
    pub bins: Option<usize>,
    pub bias_threshold: BiasThreshold,
    pub bias_mc: usize,
    pub gam: GamConfig,
    pub gp: GpConfig,
    pub outer: usize,
    pub inner: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Settings {
    pub fn new(args: &EstimatorArgs, bootstrap: usize, seed: u64) -> CliResult<Self> {
        if bootstrap == 1 {
            return Err(CliError::Usage("--bootstrap needs at least 2 replicates (or 0 to skip)".into()));
        }
        let interactions = match args.interactions {
            InteractionsArg::Auto => Interactions::Auto,
            InteractionsArg::Additive => Interactions::Additive,
            InteractionsArg::Pairwise => Interactions::Pairwise,
        };
        Ok(Self {
            changes: Changes::parse(&args.changes)?,
            bins: args.bins,
            bias_threshold: BiasThreshold::parse(&args.bias_threshold)?,
            bias_mc: args.bias_mc,
            gam: GamConfig {
                interactions,
                ..GamConfig::default()
            },
            gp: GpConfig {
                seed,
                ..GpConfig::default()
            },
            outer: args.outer,
            inner: args.inner,
            bootstrap,
            seed,
        })
    }

    pub fn describe(&self) -> Value {
        json!({
            "seed": self.seed,
            "bootstrap_replicates": self.bootstrap,
            "so_bins": self.bins,
            "so_bias_threshold": match self.bias_threshold {
                BiasThreshold::Absolute(v) => json!(v),
                BiasThreshold::Relative(f) => json!(format!("{}% of EVPI", f * 100.0)),
            },
            "so_bias_mc": self.bias_mc,
            "gam_knots": self.gam.knots,
            "gam_interactions": format!("{:?}", self.gam.interactions).to_lowercase(),
            "gp_subsample": self.gp.subsample,
            "gp_restarts": self.gp.restarts,
            "mc_outer": self.outer,
            "mc_inner": self.inner,
        })
    }
}

/// Checks that a method can run on a subset before any work is done.
pub fn check_applicable(ctx: &Context, method: Method, subset: &ParamSubset, s: &Settings) -> CliResult<()> {
    match method {
        Method::StrongOakley | Method::Sadatsafavi if subset.len() != 1 => Err(CliError::Usage(format!(
            "{method} handles a single parameter; got {}",
            subset.label(ctx.sample.param_names())
        ))),
        Method::Sadatsafavi => {
            let name = &ctx.sample.param_names()[subset.indices()[0]];
            match s.changes.get(name) {
                Some(_) => Ok(()),
                None => Err(CliError::Usage(format!(
                    "SAD needs --changes for `{name}` (number of decision changes over its range)"
                ))),
            }
        }
        Method::NestedMonteCarlo if ctx.model.is_none() => Err(CliError::Usage(
            "nested Monte Carlo needs a model spec (--model)".into(),
        )),
        _ => Ok(()),
    }
}

/// Runs one method on one subset, with a bootstrap SE when requested.
pub fn estimate(ctx: &Context, method: Method, subset: &ParamSubset, s: &Settings) -> CliResult<EvppiEstimate> {
    check_applicable(ctx, method, subset, s)?;
    let sample = &ctx.sample;
    let boot = BootstrapConfig {
        replicates: s.bootstrap,
        seed: s.seed,
    };
    let want_se = s.bootstrap >= 2;
    let mut est = match method {
        Method::StrongOakley => {
            let p = subset.indices()[0];
            let est = match s.bins {
                Some(m) => so_evppi(sample, p, m)?,
                None => {
                    let cfg = SoConfig {
                        threshold: s.bias_threshold.resolve(sample)?,
                        n_mc: s.bias_mc,
                        seed: s.seed,
                    };
                    so_evppi_auto(sample, p, &cfg)?
                }
            };
            if want_se {
                // The bin count stays at the full-sample choice.
                let m = est.diagnostics["bins"].as_u64().unwrap_or(1) as usize;
                let r = bootstrap_se(sample, &boot, |b| Ok(so_evppi(b, p, m)?.value))?;
                with_se(est, &r)
            } else {
                est
            }
        }
        Method::Sadatsafavi => {
            let p = subset.indices()[0];
            let d = s.changes.get(&sample.param_names()[p]).unwrap_or(0);
            let est = sad_evppi(sample, p, d)?;
            if want_se {
                let r = bootstrap_se(sample, &boot, |b| Ok(sad_evppi(b, p, d)?.value))?;
                with_se(est, &r)
            } else {
                est
            }
        }
        Method::Gam => {
            let est = gam_evppi(sample, subset, &s.gam)?;
            if want_se {
                let r = bootstrap_se(sample, &boot, |b| Ok(gam_evppi(b, subset, &s.gam)?.value))?;
                with_se(est, &r)
            } else {
                est
            }
        }
        Method::GaussianProcess => {
            let fit = fit_gp(sample, subset, &s.gp, None)?;
            let est = regression_evppi(&fit)?;
            if want_se {
                // Hyperparameters are frozen at the full-sample optimum.
                let hypers = fit.gp_hyper.clone().unwrap_or_default();
                let r = bootstrap_se(sample, &boot, |b| {
                    Ok(regression_evppi(&fit_gp(b, subset, &s.gp, Some(&hypers))?)?.value)
                })?;
                with_se(est, &r)
            } else {
                est
            }
        }
        Method::NestedMonteCarlo => {
            let spec = ctx.model.as_ref().expect("checked above");
            let model = spec.generative()?;
            let names = ctx.names(subset);
            let model_names = model.param_names();
            let idx = names
                .iter()
                .map(|n| {
                    model_names.iter().position(|m| m == n).ok_or_else(|| {
                        CliError::Usage(format!(
                            "parameter `{n}` is not in the {} model ({})",
                            spec.name(),
                            model_names.join(", ")
                        ))
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            let msub = ParamSubset::new(idx, model_names.len())?;
            let mut est = nested_mc_evppi(model.as_ref(), &msub, ctx.wtp, s.outer, s.inner, s.seed)?;
            est.set_diagnostic("std_error_source", "monte_carlo");
            est
        }
    };
    est.set_diagnostic("subset", ctx.names(subset));
    Ok(est)
}

fn with_se(mut est: EvppiEstimate, r: &evppi::regression::BootstrapResult) -> EvppiEstimate {
    r.attach_to(&mut est);
    est.set_diagnostic("std_error_source", "bootstrap");
    est
}
