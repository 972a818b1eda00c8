use std::fs::File;
use std::io::Write;
use std::path::Path;

use evppi::psa::{column_means, current_optimum, write_psa_file};
use evppi::single_param::cumsum_curve;
use evppi::{evpi, Method, PsaSample};
use serde::Serialize;
use serde_json::json;

use crate::args::{CompareArgs, EvppiArgs, Format, SimulateArgs, SweepArgs, VistoolArgs};
use crate::error::{CliError, CliResult};
use crate::estimators::{check_applicable, estimate, parse_model, wtp, Context, Settings};
use crate::report::{Cell, CompareReport, CompareRow, EvppiReport, SweepResult, SweepSeries};

/// What a command prints, plus warnings destined for stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub warnings: Vec<String>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialise");
    s.push('\n');
    s
}

pub fn evppi(args: &EvppiArgs) -> CliResult<(EvppiReport, Vec<String>)> {
    let ctx = Context::load(&args.input)?;
    let settings = Settings::new(&args.estimator, args.bootstrap, ctx.seed)?;
    let subset = ctx.subset(&args.params)?;
    let est = estimate(&ctx, args.method.into(), &subset, &settings)?;
    let warnings = est.warnings.clone();
    Ok((
        EvppiReport {
            command: "evppi",
            source: ctx.source.clone(),
            n_sims: ctx.sample.n_sims(),
            wtp: ctx.wtp.value(),
            subset: ctx.names(&subset),
            evpi: evpi(ctx.sample.nb())?,
            settings: settings.describe(),
            estimate: est,
        },
        warnings,
    ))
}

pub fn run_evppi(args: &EvppiArgs) -> CliResult<Outcome> {
    let (report, warnings) = evppi(args)?;
    let stdout = match args.output.format {
        Format::Json => to_json(&report),
        Format::Table => report.table(args.output.decimals),
    };
    Ok(Outcome { stdout, warnings })
}

pub fn compare(args: &CompareArgs) -> CliResult<CompareReport> {
    let ctx = Context::load(&args.input)?;
    let settings = Settings::new(&args.estimator, args.bootstrap, ctx.seed)?;
    let subsets = ctx.subsets(&args.subset)?;
    for s in subsets.iter().filter(|s| s.len() == 1) {
        // SAD's change count is a judgement call and is never defaulted.
        check_applicable(&ctx, Method::Sadatsafavi, s, &settings)?;
    }
    let methods = Method::ALL.to_vec();
    let rows = subsets
        .iter()
        .map(|subset| {
            let cells = methods
                .iter()
                .map(|&m| match check_applicable(&ctx, m, subset, &settings) {
                    Err(e) => Cell::NotApplicable {
                        method: m,
                        reason: e.to_string(),
                    },
                    Ok(()) => match estimate(&ctx, m, subset, &settings) {
                        Ok(est) => Cell::Ok { estimate: est },
                        Err(e) => Cell::Failed {
                            method: m,
                            error: e.to_string(),
                        },
                    },
                })
                .collect();
            CompareRow {
                subset: ctx.names(subset),
                cells,
            }
        })
        .collect();
    Ok(CompareReport {
        command: "compare",
        source: ctx.source.clone(),
        n_sims: ctx.sample.n_sims(),
        wtp: ctx.wtp.value(),
        evpi: evpi(ctx.sample.nb())?,
        settings: settings.describe(),
        methods,
        rows,
    })
}

pub fn run_compare(args: &CompareArgs) -> CliResult<Outcome> {
    let report = compare(args)?;
    let mut warnings = Vec::new();
    for row in &report.rows {
        for cell in &row.cells {
            match cell {
                Cell::Ok { estimate } => warnings.extend(
                    estimate
                        .warnings
                        .iter()
                        .map(|w| format!("{} {}: {w}", row.subset.join(","), estimate.method)),
                ),
                Cell::Failed { method, error } => {
                    warnings.push(format!("{} {method}: {error}", row.subset.join(",")))
                }
                Cell::NotApplicable { .. } => {}
            }
        }
    }
    let stdout = match args.output.format {
        Format::Json => to_json(&report),
        Format::Table => report.table(args.output.decimals),
    };
    Ok(Outcome { stdout, warnings })
}

/// Parses `start:stop:step` (inclusive) or a comma list.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Usage(format!("--grid `{text}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(bad("need step > 0 and stop ≥ start"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| a + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<CliResult<_>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("values must be strictly increasing"));
    }
    if grid.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
        return Err(bad("values must be finite and non-negative"));
    }
    Ok(grid)
}

/// k at which two treatments' mean net benefits are equal.
fn flip_point(sample: &PsaSample) -> Option<f64> {
    let o = sample.outcomes()?;
    if o.effects.ncols() != 2 {
        return None;
    }
    let e = column_means(&o.effects);
    let c = column_means(&o.costs);
    let de = e[1] - e[0];
    (de != 0.0).then(|| (c[1] - c[0]) / de).filter(|k| k.is_finite())
}

pub fn sweep(args: &SweepArgs) -> CliResult<SweepResult> {
    let ctx = Context::load(&args.input)?;
    if ctx.sample.outcomes().is_none() {
        return Err(CliError::Usage(
            "sweep rebuilds net benefit as k·effect − cost for every k, so it needs \
             `effect:`/`cost:` columns (or a model that produces them); this input only has net benefit"
                .into(),
        ));
    }
    let grid = parse_grid(&args.grid)?;
    let settings = Settings::new(&args.estimator, args.bootstrap, ctx.seed)?;
    let method: Method = args.method.into();
    let subsets = if args.subset.is_empty() {
        Vec::new()
    } else {
        ctx.subsets(&args.subset)?
    };
    for s in &subsets {
        check_applicable(&ctx, method, s, &settings)?;
    }
    let mut evpis = Vec::with_capacity(grid.len());
    let mut optimal = Vec::with_capacity(grid.len());
    let mut series: Vec<SweepSeries> = subsets
        .iter()
        .map(|s| SweepSeries {
            subset: ctx.names(s),
            method,
            values: Vec::new(),
            std_errors: (settings.bootstrap >= 2 || method == Method::NestedMonteCarlo).then(Vec::new),
        })
        .collect();
    for &k in &grid {
        let k_ctx = Context {
            sample: ctx.sample.with_wtp(wtp(k)?)?,
            wtp: wtp(k)?,
            ..ctx.clone()
        };
        evpis.push(evpi(k_ctx.sample.nb())?);
        let (t, _) = current_optimum(k_ctx.sample.nb());
        optimal.push(k_ctx.sample.treatment_names()[t].clone());
        for (s, out) in subsets.iter().zip(series.iter_mut()) {
            let est = estimate(&k_ctx, method, s, &settings)?;
            out.values.push(est.value);
            if let Some(se) = out.std_errors.as_mut() {
                se.push(est.std_error.unwrap_or(f64::NAN));
            }
        }
    }
    let mut argmax = 0;
    for (i, v) in evpis.iter().enumerate() {
        if *v > evpis[argmax] {
            argmax = i;
        }
    }
    Ok(SweepResult {
        command: "sweep",
        source: ctx.source.clone(),
        n_sims: ctx.sample.n_sims(),
        settings: settings.describe(),
        evpi_argmax_wtp: grid[argmax],
        grid,
        evpi: evpis,
        optimal_treatment: optimal,
        decision_flip_wtp: flip_point(&ctx.sample),
        model_decision_flip_wtp: ctx.model.as_ref().and_then(|m| m.decision_flip_wtp()),
        series,
    })
}

pub fn run_sweep(args: &SweepArgs) -> CliResult<Outcome> {
    let result = sweep(args)?;
    let stdout = match args.output.format {
        Format::Json => to_json(&result),
        Format::Table => result.table(args.output.decimals),
    };
    Ok(Outcome {
        stdout,
        warnings: Vec::new(),
    })
}

fn treatment(sample: &PsaSample, given: Option<&str>, default: usize) -> CliResult<usize> {
    let Some(text) = given else {
        return Ok(default);
    };
    if let Ok(i) = sample.treatment_index(text) {
        return Ok(i);
    }
    match text.parse::<usize>() {
        Ok(i) if i < sample.n_treatments() => Ok(i),
        _ => Ok(sample.treatment_index(text)?),
    }
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.display().to_string(),
        source,
    }
}

pub fn run_vistool(args: &VistoolArgs) -> CliResult<Outcome> {
    let ctx = Context::load(&args.input)?;
    let sample = &ctx.sample;
    if sample.n_treatments() < 2 {
        return Err(CliError::Usage("the visual tool needs at least two treatments".into()));
    }
    let p = sample.param_index(&args.param)?;
    let t = treatment(sample, args.t.as_deref(), 1)?;
    let t_ref = treatment(sample, args.t_ref.as_deref(), 0)?;
    let curve = cumsum_curve(sample, p, t, t_ref)?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let to_cli = |e: csv::Error| CliError::Write {
            path: "curve".into(),
            source: std::io::Error::other(e),
        };
        w.write_record([args.param.as_str(), "c_hat"]).map_err(to_cli)?;
        for (x, c) in &curve.points {
            w.write_record([x.to_string(), c.to_string()]).map_err(to_cli)?;
        }
        w.flush().map_err(write_err(Path::new("curve")))?;
    }
    let Some(out) = &args.out else {
        return Ok(Outcome {
            stdout: String::from_utf8(buf).expect("csv output is utf-8"),
            warnings: Vec::new(),
        });
    };
    File::create(out)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(write_err(out))?;

    let extreme = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (i, (_, c)) in curve.points.iter().enumerate() {
            if better(*c, curve.points[best].1) {
                best = i;
            }
        }
        let (x, c) = curve.points[best];
        json!({ "rank": best, "param_value": x, "c_hat": c })
    };
    let summary = json!({
        "command": "vistool",
        "source": ctx.source,
        "param": args.param,
        "t": sample.treatment_names()[t],
        "t_ref": sample.treatment_names()[t_ref],
        "points": curve.len(),
        "argmax": extreme(|a, b| a > b),
        "argmin": extreme(|a, b| a < b),
        "out": out.display().to_string(),
    });
    Ok(Outcome {
        stdout: to_json(&summary),
        warnings: Vec::new(),
    })
}

/// Path of the provenance file written next to a simulated CSV.
pub fn sidecar_path(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn run_simulate(args: &SimulateArgs) -> CliResult<Outcome> {
    let spec = parse_model(&args.model)?;
    let k = wtp(args.wtp)?;
    let sample = spec.generate_psa(args.sims, args.seed, k)?;
    write_psa_file(&sample, &args.out).map_err(|e| match e {
        evppi::EvppiError::Io(io) => write_err(&args.out)(io),
        other => CliError::from(other),
    })?;
    let provenance = json!({
        "model": spec,
        "sims": args.sims,
        "seed": args.seed,
        "wtp": args.wtp,
        "csv": args.out.display().to_string(),
        "generator": format!("voi {}", env!("CARGO_PKG_VERSION")),
    });
    let side = sidecar_path(&args.out);
    std::fs::write(&side, to_json(&provenance)).map_err(write_err(&side))?;
    Ok(Outcome {
        stdout: to_json(&json!({
            "command": "simulate",
            "csv": args.out.display().to_string(),
            "provenance": side.display().to_string(),
            "rows": sample.n_sims(),
            "params": sample.param_names(),
            "treatments": sample.treatment_names(),
        })),
        warnings: Vec::new(),
    })
}
