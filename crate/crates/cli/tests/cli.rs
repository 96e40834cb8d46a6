use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairdro_core::{
    empirical_unfairness, extremal_distribution, AmbiguityConfig, AuditInstance, Dataset, GroundMetric, ModelWeights,
    Norm, UnfairnessKind,
};
use fairdro_experiments::generators::{generate_boundary_demo, BOUNDARY_MAJOR, BOUNDARY_MINOR};
use fairdro_experiments::metrics::accuracy;
use fairdro_experiments::stratified_sample;
use serde_json::Value;

fn fairdro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdro")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn beta(model: &Value) -> Vec<f64> {
    model["beta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

fn write_csv(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Twelve rows over all four cells with overlapping classes.
const MIXED: &str = "f1,f2,sensitive,label
-1.2,0.3,0,0
-0.4,1.1,0,0
0.8,-0.2,0,1
1.5,0.7,0,1
0.1,-0.9,0,1
-0.3,0.2,0,0
-1.8,-0.5,1,0
0.6,0.4,1,0
1.1,1.3,1,1
-0.2,0.9,1,1
2.0,-0.1,1,1
-0.9,-1.4,1,0
";

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend_from_slice(extra);
    fairdro(&args)
}

#[test]
fn lr_ignores_eta_and_matches_the_unpenalised_fair_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let lr = dir.path().join("lr.json");
    let flr = dir.path().join("flr.json");
    assert_eq!(code(&train(&data, &lr, &["--method", "lr", "--eta", "0.2"])), 0);
    assert_eq!(code(&train(&data, &flr, &["--method", "flr", "--eta", "0"])), 0);
    for (a, b) in beta(&read_json(&lr)).iter().zip(beta(&read_json(&flr))) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn robust_fit_without_radius_or_penalty_is_plain_logistic_regression() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let lr = dir.path().join("lr.json");
    let dr = dir.path().join("dr.json");
    assert_eq!(code(&train(&data, &lr, &["--method", "lr", "--intercept"])), 0);
    assert_eq!(code(&train(&data, &dr, &["--method", "drflr", "--rho", "0", "--eta", "0", "--intercept"])), 0);
    let model = read_json(&dr);
    assert_eq!(model["method"], "drflr");
    assert_eq!(model["config"]["intercept"], true);
    assert_eq!(model["diagnostics"]["converged"], true);
    assert_eq!(beta(&model).len(), 3);
    for (a, b) in beta(&read_json(&lr)).iter().zip(beta(&model)) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
    assert!(dir.path().join("dr.manifest.json").exists());
}

#[test]
fn penalty_above_the_bound_is_an_input_error_naming_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let out = train(&data, &dir.path().join("m.json"), &["--method", "flr", "--eta", "0.9"]);
    assert_eq!(code(&out), 1);
    // Three positives per group out of twelve rows.
    assert!(stderr(&out).contains("0.25"), "{}", stderr(&out));
}

#[test]
fn unconverged_fit_still_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let path = dir.path().join("m.json");
    let out = train(&data, &path, &["--method", "drflr", "--eta", "0.1", "--rho", "0.05", "--max-iters", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(read_json(&path)["diagnostics"]["converged"], false);
}

#[test]
fn malformed_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_csv(dir.path(), "bad.csv", "f1,sensitive,label\n0.5,2,1\n");
    assert_eq!(code(&train(&bad, &dir.path().join("m.json"), &[])), 1);
    assert_eq!(code(&fairdro(&["train", "--data", "missing.csv", "--out", "m.json"])), 1);
    assert_eq!(code(&fairdro(&["train", "--kappa-a", "-1"])), 1);
    assert_eq!(code(&fairdro(&["dance"])), 1);
    assert_eq!(code(&fairdro(&["--help"])), 0);
}

fn audit(data: &Path, model: &Path, extra: &[&str]) -> (i32, Value, String) {
    let mut args = vec!["audit", "--data", s(data), "--model", s(model)];
    args.extend_from_slice(extra);
    let out = fairdro(&args);
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code(&out), json, stderr(&out))
}

#[test]
fn zero_radius_audit_is_the_empirical_unfairness() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let model = write_csv(dir.path(), "m.json", r#"{"beta": [1.0, -0.5]}"#);
    let (c, report, err) = audit(&data, &model, &["--rho", "0", "--tau", "0.5"]);
    assert_eq!(c, 0, "{err}");
    let d = Dataset::from_csv_path(&data).unwrap();
    let w = ModelWeights::new(vec![1.0, -0.5]).unwrap();
    let det = empirical_unfairness(&d, &w, UnfairnessKind::Deterministic { tau: 0.5 }).unwrap();
    assert!((report["lower"].as_f64().unwrap() - det).abs() < 1e-12);
    assert!((report["upper"].as_f64().unwrap() - det).abs() < 1e-12);
    for key in ["rho", "kappa_A", "kappa_Y", "tau", "v10", "v01", "lower", "upper", "rho_hat", "moved"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn infinite_trust_audit_lists_the_extremal_moves() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let model = write_csv(dir.path(), "m.json", r#"{"beta": [1.0, -0.5]}"#);
    let out = dir.path().join("report.json");
    let (c, report, err) =
        audit(&data, &model, &["--rho", "0.05", "--kappa-a", "inf", "--kappa-y", "inf", "--out", s(&out)]);
    assert_eq!(c, 0, "{err}");
    assert_eq!(report, read_json(&out));
    assert_eq!(report["kappa_A"], "inf");

    let d = Dataset::from_csv_path(&data).unwrap();
    let w = ModelWeights::new(vec![1.0, -0.5]).unwrap();
    let amb = AmbiguityConfig::new(0.05, GroundMetric::infinite(Norm::L2)).unwrap();
    let inst = AuditInstance::linear(&d, &w, 0.5, amb).unwrap();
    let (v10, v01) = (report["v10"].as_f64().unwrap(), report["v01"].as_f64().unwrap());
    let (a, a2) = if v10 >= v01 { (1, 0) } else { (0, 1) };
    let q = extremal_distribution(&inst, a, a2).unwrap();
    let moved = report["moved"].as_array().unwrap();
    assert!(!moved.is_empty());
    assert_eq!(moved.len(), q.moved.len());
    for (m, &i) in moved.iter().zip(&q.moved) {
        assert_eq!(m["index"].as_u64().unwrap() as usize, i);
        assert!((m["z"].as_f64().unwrap() - q.z_star[i]).abs() < 1e-12);
    }
    assert!(dir.path().join("report.manifest.json").exists());
}

#[test]
fn fair_classifier_is_at_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    // Half of each group's positives are accepted.
    let data = write_csv(
        dir.path(),
        "fair.csv",
        "f1,sensitive,label\n-1,0,1\n1,0,1\n-1,1,1\n1,1,1\n-2,0,0\n-2,1,0\n",
    );
    let model = write_csv(dir.path(), "m.json", r#"{"beta": [1.0]}"#);
    let (c, report, err) = audit(&data, &model, &["--rho", "0.1", "--rho-hat"]);
    assert_eq!(c, 0, "{err}");
    assert_eq!(report["rho_hat"].as_f64(), Some(0.0));
}

#[test]
fn empty_positive_cell_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", "f1,sensitive,label\n-1,0,1\n1,0,0\n-1,1,0\n1,1,0\n");
    let model = write_csv(dir.path(), "m.json", r#"{"beta": [1.0]}"#);
    let (c, _, err) = audit(&data, &model, &["--rho", "0.1"]);
    assert_eq!(c, 1);
    assert!(err.contains("a=1, y=1"), "{err}");
}

#[test]
fn radius_sweep_reports_nested_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", MIXED);
    let model = write_csv(dir.path(), "m.json", r#"{"beta": [1.0, -0.5]}"#);
    let (c, report, err) = audit(&data, &model, &["--rho", "sweep", "--grid-points", "6", "--rho-hat"]);
    assert_eq!(c, 0, "{err}");
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for w in rows.windows(2) {
        assert!(w[1]["rho"].as_f64() > w[0]["rho"].as_f64());
        assert!(w[1]["upper"].as_f64().unwrap() >= w[0]["upper"].as_f64().unwrap() - 1e-12);
        assert!(w[1]["lower"].as_f64().unwrap() <= w[0]["lower"].as_f64().unwrap() + 1e-12);
        assert_eq!(w[0]["rho_hat"], w[1]["rho_hat"]);
    }
}

#[test]
fn synthetic_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&fairdro(&["synth", "--scenario", "boundary", "--seed", "7", "--out", s(out)])), 0);
    }
    let text = fs::read(a.join("data.csv")).unwrap();
    assert_eq!(text, fs::read(b.join("data.csv")).unwrap());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap().len(), fs::read(b.join("manifest.json")).unwrap().len());
    let d = Dataset::from_csv_path(a.join("data.csv")).unwrap();
    assert_eq!(d.len(), BOUNDARY_MAJOR + BOUNDARY_MINOR);
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["seeds"][0], 7);
    assert_eq!(manifest["files"], serde_json::json!(["data.csv", "manifest.json"]));
}

#[test]
fn single_penalty_frontier_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let res = fairdro(&[
        "frontier", "--scenario", "frontier", "--seed", "4", "--eta-points", "1", "--rho", "0", "--out", s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(fs::read_to_string(out.join("frontier.svg")).unwrap().starts_with("<svg"));
    let files = read_json(&out.join("manifest.json"))["files"].clone();
    assert_eq!(files, serde_json::json!(["frontier.csv", "frontier.svg", "manifest.json"]));
}

#[test]
fn frontier_rejects_a_penalty_above_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let res = fairdro(&["frontier", "--scenario", "frontier", "--eta", "0.9", "--out", s(dir.path())]);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("admissible bound"));
}

fn bench_config(dir: &Path, k2: usize) -> PathBuf {
    // A pool large enough for repeated stratified draws.
    let mut text = String::from("f1,f2,sensitive,label\n");
    for i in 0..80 {
        let x = (i as f64 * 0.37).sin() * 2.0;
        let z = (i as f64 * 0.91).cos();
        text.push_str(&format!("{x},{z},{},{}\n", i % 2, usize::from(x + 0.3 * z > 0.0)));
    }
    write_csv(dir, "pool.csv", &text);
    let cfg = format!(
        "[dataset]\nsource = \"csv\"\npath = \"pool.csv\"\n\n[method]\nmethods = [\"lr\", \"drflr\"]\neta = 0.05\nrho = 0.01\n\n[protocol]\nn_train = 30\nk2 = {k2}\nseed = 9\n"
    );
    write_csv(dir, "bench.toml", &cfg)
}

#[test]
fn single_repetition_bench_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), 1);
    let out = dir.path().join("out");
    let res = fairdro(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let mut rows = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let mut seen = 0;
    for row in rows.records() {
        let row = row.unwrap();
        for (h, v) in headers.iter().zip(row.iter()) {
            if h.ends_with("_std") {
                assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{h}");
            }
        }
        seen += 1;
    }
    assert_eq!(seen, 2);
    for f in ["report.json", "metrics.csv", "frontier.svg", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn bench_reruns_from_its_manifest_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), 3);
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    assert_eq!(code(&fairdro(&["bench", "--config", s(&cfg), "--out", s(&first)])), 0);
    let manifest = first.join("manifest.json");
    let res = fairdro(&["bench", "--config", s(&manifest), "--out", s(&second)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for f in ["report.json", "metrics.csv", "frontier.svg", "manifest.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_bench_dataset_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_csv(dir.path(), "b.toml", "[dataset]\nsource = \"csv\"\npath = \"nowhere.csv\"\n");
    let out = dir.path().join("out");
    let res = fairdro(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 1);
    assert!(out.join("report.json").exists());
}

/// Train on 25 points of a fresh boundary population per seed, then audit
/// the saved models at radius zero on the remaining points.
#[test]
fn saved_boundary_models_reproduce_the_demo() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = 50u64;
    let (mut det, mut acc) = ([0.0; 2], [0.0; 2]);
    for seed in 0..seeds {
        let pool = generate_boundary_demo(seed, BOUNDARY_MAJOR, BOUNDARY_MINOR);
        let (train_set, rest) = stratified_sample(&pool, 25, seed + 1000).unwrap();
        let train_csv = dir.path().join("train.csv");
        let rest_csv = dir.path().join("rest.csv");
        train_set.to_csv_path(&train_csv).unwrap();
        rest.to_csv_path(&rest_csv).unwrap();
        for (k, extra) in [vec!["--method", "lr"], vec!["--method", "drflr", "--eta", "0.1", "--rho", "0.05"]]
            .iter()
            .enumerate()
        {
            let model = dir.path().join(format!("m{k}.json"));
            let mut args = extra.clone();
            args.push("--intercept");
            let res = train(&train_csv, &model, &args);
            assert_eq!(code(&res), 0, "seed {seed}: {}", stderr(&res));
            let (c, report, err) = audit(&rest_csv, &model, &["--rho", "0"]);
            assert_eq!(c, 0, "{err}");
            det[k] += report["upper"].as_f64().unwrap() / seeds as f64;
            let w = ModelWeights::new(beta(&read_json(&model))).unwrap();
            acc[k] += accuracy(&rest.with_intercept(), &w, 0.5).unwrap() / seeds as f64;
        }
    }
    let gap = acc[0] - acc[1];
    assert!((0.75..=0.95).contains(&det[0]), "LR Det-UNF {}", det[0]);
    assert!((0.45..=0.70).contains(&det[1]), "DR-FLR Det-UNF {}", det[1]);
    assert!((0.02..=0.12).contains(&gap), "accuracy gap {gap}");
}
