use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evppi::models::{LinearGaussianSpec, NonlinearToySpec};
use evppi::psa::{read_psa_file, write_psa_file};
use evppi::{EvppiEstimate, Method, PsaSample, WillingnessToPay};
use evppi_cli::report::{Cell, CompareReport, CompareRow};
use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

const ORACLE: f64 = 0.398_942_280_401_432_7;

fn voi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voi"))
        .args(args)
        .output()
        .expect("voi runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = voi(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lg_file(dir: &TempDir, s: usize, seed: u64) -> PathBuf {
    let path = dir.path().join(format!("lg_{s}_{seed}.csv"));
    let sample = LinearGaussianSpec::default().generate_psa(s, seed).unwrap();
    write_psa_file(&sample, &path).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn sad_with_zero_changes_is_zero_with_warning() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 500, 1);
    let out = voi(&["evppi", "-i", p(&f), "--method", "sad", "--params", "phi", "--changes", "0"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["estimate"]["value"], 0.0);
    let w = v["estimate"]["warnings"][0].as_str().unwrap();
    assert!(w.contains("non-influential"));
    assert!(stderr(&out).contains("non-influential"));
}

#[test]
fn sad_requires_changes_and_single_parameter() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 200, 2);
    let out = voi(&["evppi", "-i", p(&f), "--method", "sad", "--params", "phi"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--changes"));
    let out = voi(&["evppi", "-i", p(&f), "--method", "so", "--params", "phi,psi"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("single parameter"));
    let out = voi(&["compare", "-i", p(&f), "--bootstrap", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn so_without_bins_reports_the_chosen_count() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 2000, 3);
    let v = ok_json(&["evppi", "-i", p(&f), "--method", "so", "--params", "phi"]);
    let d = &v["estimate"]["diagnostics"];
    let bins = d["bins"].as_u64().unwrap();
    assert!(bins >= 1);
    assert!(d["bias"].as_f64().unwrap() < 0.1);
    let grid = d["bias_grid"].as_array().unwrap();
    assert!(grid.iter().any(|e| e[0].as_u64() == Some(bins)));

    let fixed = ok_json(&["evppi", "-i", p(&f), "--method", "so", "--params", "phi", "--bins", "7"]);
    assert_eq!(fixed["estimate"]["diagnostics"]["bins"], 7);
    assert!(fixed["estimate"]["diagnostics"].get("bias").is_none());

    let rel = ok_json(&[
        "evppi", "-i", p(&f), "--method", "so", "--params", "phi", "--bias-threshold", "5%",
    ]);
    let used = rel["estimate"]["diagnostics"]["bias_threshold"].as_f64().unwrap();
    assert!((used - 0.05 * rel["evpi"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn malformed_header_names_the_column() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("bad.csv");
    std::fs::write(&f, "param:phi,benefit:a,nb:b\n0.1,1,2\n0.2,2,1\n").unwrap();
    let out = voi(&["evppi", "-i", p(&f), "--method", "gam", "--params", "phi"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr(&out);
    assert!(e.contains("column 2") && e.contains("benefit:a"), "{e}");
}

#[test]
fn unknown_parameter_lists_available_names() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 100, 4);
    let out = voi(&["evppi", "-i", p(&f), "--method", "gam", "--params", "theta"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("phi, psi"));
    let out = voi(&["vistool", "-i", p(&f), "--param", "theta"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("phi, psi"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(voi(&["evppi", "--bogus"]).status.code(), Some(1));
    assert_eq!(voi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(voi(&["--help"]).status.code(), Some(0));
    assert_eq!(voi(&["evppi", "--method", "gam", "--params", "phi"]).status.code(), Some(1));
    assert_eq!(voi(&["compare", "--model", "linear_gaussian", "--decimals", "3"]).status.code(), Some(1));
}

#[test]
fn estimation_failure_exits_two() {
    // A constant parameter makes the GAM design rank deficient.
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("flat.csv");
    let mut body = String::from("param:x,nb:a,nb:b\n");
    for i in 0..50 {
        body.push_str(&format!("1.5,{},{}\n", i % 7, i % 5));
    }
    std::fs::write(&f, body).unwrap();
    let out = voi(&["evppi", "-i", p(&f), "--method", "gam", "--params", "x"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn compare_agrees_with_closed_form() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 10_000, 5);
    let v = ok_json(&[
        "compare", "-i", p(&f), "--subset", "phi", "--changes", "1", "--bootstrap", "50",
    ]);
    let methods: Vec<&str> = v["methods"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()).collect();
    assert_eq!(methods, ["SO", "SAD", "GP", "GAM", "MC"]);
    let cells = v["rows"][0]["cells"].as_array().unwrap();
    assert_eq!(cells[4]["status"], "not_applicable");
    let est: Vec<(f64, f64)> = cells[..4]
        .iter()
        .map(|c| {
            assert_eq!(c["status"], "ok", "{c}");
            (
                c["estimate"]["value"].as_f64().unwrap(),
                c["estimate"]["std_error"].as_f64().unwrap(),
            )
        })
        .collect();
    for (i, a) in est.iter().enumerate() {
        assert!((a.0 - ORACLE).abs() < 0.03, "{} {}", methods[i], a.0);
        for b in &est[i + 1..] {
            assert!((a.0 - b.0).abs() <= 2.0 * (a.1 + b.1), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn compare_with_model_fills_the_mc_column() {
    let v = ok_json(&[
        "compare", "--model", "linear_gaussian", "--sims", "1000", "--changes", "1", "--bootstrap", "0",
        "--outer", "400", "--inner", "400",
    ]);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    let mc = &v["rows"][0]["cells"][4];
    assert_eq!(mc["status"], "ok");
    assert!(mc["estimate"]["std_error"].as_f64().unwrap() > 0.0);
    assert_eq!(mc["estimate"]["diagnostics"]["std_error_source"], "monte_carlo");
}

#[test]
fn identical_columns_give_an_all_zero_report() {
    let dir = TempDir::new().unwrap();
    let base = LinearGaussianSpec::default().generate_psa(400, 6).unwrap();
    let col: Vec<f64> = base.nb_column(1).unwrap().to_vec();
    let same = PsaSample::from_net_benefit(
        base.param_names().to_vec(),
        base.treatment_names().to_vec(),
        base.params().clone(),
        DMatrix::from_fn(400, 2, |r, _| col[r]),
    )
    .unwrap();
    let f = dir.path().join("same.csv");
    write_psa_file(&same, &f).unwrap();
    let v = ok_json(&["compare", "-i", p(&f), "--changes", "1", "--bootstrap", "10"]);
    assert_eq!(v["evpi"], 0.0);
    for row in v["rows"].as_array().unwrap() {
        for cell in &row["cells"].as_array().unwrap()[..4] {
            assert_eq!(cell["estimate"]["value"], 0.0, "{cell}");
            assert_eq!(cell["estimate"]["std_error"], 0.0, "{cell}");
        }
    }
}

fn plain(method: Method, value: f64) -> Cell {
    Cell::Ok {
        estimate: EvppiEstimate::new(method, value),
    }
}

#[test]
fn table_layout_matches_the_reference_row() {
    let report = CompareReport {
        command: "compare",
        source: Value::Null,
        n_sims: 1000,
        wtp: 20000.0,
        evpi: 3.0,
        settings: Value::Null,
        methods: Method::ALL.to_vec(),
        rows: vec![CompareRow {
            subset: vec!["beta_1".into()],
            cells: vec![
                plain(Method::StrongOakley, 1.1512),
                plain(Method::Sadatsafavi, 1.1689),
                plain(Method::GaussianProcess, 1.1051),
                plain(Method::Gam, 1.1149),
                plain(Method::NestedMonteCarlo, 1.0598),
            ],
        }],
    };
    let table = report.table(2);
    let lines: Vec<&str> = table.lines().collect();
    let cols: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(cols, ["subset", "SO", "SAD", "GP", "GAM", "MC"]);
    let row: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(row, ["beta_1", "1.15", "1.17", "1.11", "1.11", "1.06"]);
    let one: Vec<String> = report.table(1).lines().nth(2).unwrap().split_whitespace().map(String::from).collect();
    assert_eq!(one[1], "1.2");
}

#[test]
fn json_and_table_agree_after_rounding() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 1500, 7);
    let args = ["compare", "-i", p(&f), "--changes", "1", "--bootstrap", "20"];
    let v = ok_json(&args);
    let mut targs = args.to_vec();
    targs.extend(["--format", "table"]);
    let out = voi(&targs);
    let table = String::from_utf8(out.stdout).unwrap();
    for (r, row) in v["rows"].as_array().unwrap().iter().enumerate() {
        let line = table.lines().nth(2 + r).unwrap();
        for cell in row["cells"].as_array().unwrap() {
            if cell["status"] != "ok" {
                continue;
            }
            let val = cell["estimate"]["value"].as_f64().unwrap().max(0.0);
            let se = cell["estimate"]["std_error"].as_f64().unwrap();
            let text = format!("{val:.2} ({se:.2})");
            assert!(line.contains(&text), "{text} not in {line}");
        }
    }
}

#[test]
fn sweep_needs_effects_and_costs() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 100, 8);
    let out = voi(&["sweep", "-i", p(&f), "--grid", "0:10:5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("effect"));
}

#[test]
fn single_point_sweep_matches_evppi() {
    let common = ["--model", "nonlinear_toy", "--sims", "1000", "--seed", "3"];
    let mut sweep_args = vec!["sweep", "--grid", "15000", "--subset", "p_inf", "--method", "gam"];
    sweep_args.extend(common);
    let s = ok_json(&sweep_args);
    let mut ev_args = vec!["evppi", "--params", "p_inf", "--method", "gam", "--wtp", "15000"];
    ev_args.extend(common);
    let e = ok_json(&ev_args);
    assert_eq!(s["grid"], serde_json::json!([15000.0]));
    assert_eq!(s["evpi"][0], e["evpi"]);
    assert_eq!(s["series"][0]["values"][0], e["estimate"]["value"]);
}

#[test]
fn toy_sweep_peaks_at_the_flip() {
    let v = ok_json(&[
        "sweep", "--model", "nonlinear_toy", "--sims", "5000", "--grid", "0:50000:2500",
        "--subset", "p_inf", "--method", "so", "--bootstrap", "20",
    ]);
    let flip = v["decision_flip_wtp"].as_f64().unwrap();
    let peak = v["evpi_argmax_wtp"].as_f64().unwrap();
    assert!((peak - flip).abs() <= 2500.0, "peak {peak}, flip {flip}");
    assert!((v["model_decision_flip_wtp"].as_f64().unwrap() - 20000.0).abs() < 1e-6);
    let evpi = v["evpi"].as_array().unwrap();
    let s = &v["series"][0];
    for (i, e) in evpi.iter().enumerate() {
        let (e, x) = (e.as_f64().unwrap(), s["values"][i].as_f64().unwrap());
        let se = s["std_errors"][i].as_f64().unwrap();
        assert!(x <= e + 2.0 * se, "k index {i}: {x} > {e}");
    }
    let opt = v["optimal_treatment"].as_array().unwrap();
    assert_ne!(opt.first(), opt.last());
}

#[test]
fn vistool_curve_and_summary() {
    let dir = TempDir::new().unwrap();
    let spec = LinearGaussianSpec {
        a: -0.5,
        ..LinearGaussianSpec::default()
    };
    let f = dir.path().join("shifted.csv");
    write_psa_file(&spec.generate_psa(1001, 9).unwrap(), &f).unwrap();
    let out_csv = dir.path().join("curve.csv");
    let v = ok_json(&["vistool", "-i", p(&f), "--param", "phi", "--out", p(&out_csv)]);
    assert_eq!(v["points"], 1001);
    // Alternative minus reference is negative below phi* = 0.5: a minimum.
    let x = v["argmin"]["param_value"].as_f64().unwrap();
    assert!((x - 0.5).abs() < 0.3, "{x}");
    let swapped = ok_json(&[
        "vistool", "-i", p(&f), "--param", "phi", "--t", "reference", "--t-ref", "alternative",
        "--out", p(&dir.path().join("swapped.csv")),
    ]);
    assert_eq!(swapped["argmax"]["rank"], v["argmin"]["rank"]);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(text.starts_with("phi,c_hat\n"));
    assert_eq!(text.lines().count(), 1002);

    let stdout = voi(&["vistool", "-i", p(&f), "--param", "phi", "--t", "alternative", "--t-ref", "0"]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), text);
}

#[test]
fn vistool_flat_for_identical_columns() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("flat.csv");
    let mut body = String::from("param:x,nb:a,nb:b\n");
    for i in 0..20 {
        body.push_str(&format!("{},{},{}\n", i, i * i, i * i));
    }
    std::fs::write(&f, body).unwrap();
    let out = voi(&["vistool", "-i", p(&f), "--param", "x"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(1), Some("0"));
    }
}

#[test]
fn simulate_round_trips_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok_json(&["simulate", "--model", "nonlinear_toy", "--sims", "300", "--seed", seed, "--out", p(&out)]);
        out
    };
    let a = run("a.csv", "11");
    let b = run("b.csv", "11");
    let c = run("c.csv", "12");
    let bytes = |f: &Path| std::fs::read(f).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));

    let k = WillingnessToPay::new(20000.0).unwrap();
    let direct = NonlinearToySpec::default().generate_psa(300, 11, k).unwrap();
    let back = read_psa_file(&a, k).unwrap();
    assert_eq!(back.params(), direct.params());
    assert_eq!(back.nb(), direct.nb());
    assert_eq!(back.outcomes(), direct.outcomes());

    let side: Value = serde_json::from_slice(&bytes(&dir.path().join("a.csv.json"))).unwrap();
    assert_eq!(side["model"]["model"], "nonlinear_toy");
    assert_eq!(side["seed"], 11);
}

#[test]
fn simulate_to_unwritable_path_fails() {
    let out = voi(&["simulate", "--model", "linear_gaussian", "--sims", "10", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/dir/x.csv"));
}

#[test]
fn model_spec_files_are_read() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"model":"linear_gaussian","a":-0.5,"c":2.0}"#).unwrap();
    let v = ok_json(&["evppi", "--model", p(&spec), "--sims", "500", "--method", "mc", "--params", "psi",
        "--outer", "200", "--inner", "200"]);
    assert!(v["estimate"]["value"].as_f64().unwrap() > 0.0);
    std::fs::write(&spec, r#"{"model":"quadratic"}"#).unwrap();
    let out = voi(&["evppi", "--model", p(&spec), "--method", "gam", "--params", "phi"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let f = lg_file(&dir, 1500, 10);
    let run = |threads: &str| {
        let out = voi(&[
            "--threads", threads, "compare", "-i", p(&f), "--changes", "1", "--bootstrap", "20",
        ]);
        assert!(out.status.success());
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(one, run("1"));
}
