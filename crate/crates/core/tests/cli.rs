use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sketchknn::metrics::CSV_HEADER;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchknn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run sketchknn")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn sweep_appends_rows_under_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--synthetic", "planted", "--n", "400", "--p", "8", "--q", "3", "--method", "exact,wh", "--m-grid", "32", "--k", "3", "--out-csv", "r.csv"];
    assert!(run(dir.path(), &args).status.success());
    assert!(run(dir.path(), &args).status.success());
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 5);
    assert_eq!(lines.iter().filter(|l| **l == CSV_HEADER).count(), 1);
    assert!(lines[1].starts_with("planted-n400-p8-q3,exact,,3,42,"));
    assert!(lines[2].starts_with("planted-n400-p8-q3,wh,32,3,42,"));
}

#[test]
fn partial_failure_exits_two_and_keeps_good_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["sweep", "--synthetic", "planted", "--n", "300", "--p", "8", "--q", "2", "--method", "gauss", "--m-grid", "16,5000", "--out-csv", "r.csv", "--out-json", "r.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m=Some(5000)"));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 1);
    assert_eq!(report["failures"][0]["m"], 5000);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"synthetic": "planted", "n": 300, "p": 6, "q": 2, "method": ["exact"], "k": 3, "seed": 5}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["sweep", "--config", "c.json", "--k", "7"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("planted-n300-p6-q2,exact,,7,5,"), "{row}");
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"synthetic": "planted", "kk": 3}"#).unwrap();
    let out = run(dir.path(), &["sweep", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kk"));
    let out = run(dir.path(), &["sweep", "--synthetic", "planted", "--method", "svd"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["sweep"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(d, &["gen", "--synthetic", "planted", "--n", "500", "--p", "10", "--q", "3", "--out", "d.txt"]).status.success());
    let trained = json(&run(d, &["train", "--data", "d.txt", "--method", "wh", "--m", "64", "--seeds", "9", "--model", "m.json"]));
    assert_eq!(trained["method"], "wh");
    assert_eq!(trained["seed"], 9);
    let eval = json(&run(d, &["eval", "--data", "d.txt", "--model", "m.json", "--out-csv", "e.csv"]));
    assert_eq!(eval["method"], "wh");
    assert_eq!(eval["m"], 64);
    assert_eq!(eval["seed"], 9);
    let h = eval["metrics"]["hamming_loss"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&h));

    // same model and split as a sweep cell with that seed
    let sweep = run(d, &["sweep", "--data", "d.txt", "--method", "wh", "--m", "64", "--seeds", "9"]);
    let row = String::from_utf8(sweep.stdout).unwrap().lines().nth(1).unwrap().to_string();
    let hamming: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(hamming, h);

    // a different split no longer matches the stored label hash
    let out = run(d, &["eval", "--data", "d.txt", "--model", "m.json", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("label hash"));
}

#[test]
fn train_requires_one_method_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--synthetic", "planted", "--n", "200", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["train", "--synthetic", "planted", "--n", "200", "--method", "gauss", "--model", "m.json"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--m"));
}

#[test]
fn delta_check_reports_schema() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        dir.path(),
        &["delta-check", "--synthetic", "planted", "--n", "256", "--p", "8", "--q", "2", "--method", "wh", "--m-grid", "64,256", "--delta", "0.3"],
    ));
    assert_eq!(v["delta"], 0.3);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for key in ["kind", "m", "seed", "f_star", "g_hat", "delta_emp", "zero_residual"] {
        assert!(reports[0].get(key).is_some(), "missing {key}");
    }
    // all rows of an orthonormal transform
    assert!(reports[1]["delta_emp"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn widths_and_diagnose_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let w = json(&run(dir.path(), &["widths", "--synthetic", "planted", "--n", "300", "--p", "5", "--m", "64", "--c1", "2"]));
    assert_eq!(w["rank"], 5);
    assert_eq!(w["gaussian"]["kind"], "gaussian");
    let recs = w["recommendations"].as_array().unwrap();
    assert!(recs.windows(2).all(|r| r[0]["delta"].as_f64() > r[1]["delta"].as_f64()
        && r[0]["subgaussian_m"].as_u64() <= r[1]["subgaussian_m"].as_u64()));

    let out = run(dir.path(), &["diagnose", "--synthetic", "planted", "--n", "300", "--p", "3", "--method", "exact"]);
    let d = json(&out);
    assert_eq!(d["epsilon"].as_array().unwrap().len(), d["size"].as_array().unwrap().len());
    assert!(d["bounds"].is_null());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--L"));
}

#[test]
fn gen_writes_loadable_data_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "--synthetic", "smooth", "--n", "50", "--q", "3", "--scale", "2", "--out", "s.txt", "--out-json", "s.json"]);
    assert!(out.status.success());
    let ds = sketchknn::data::MultiLabelDataset::load(dir.path().join("s.txt")).unwrap();
    assert_eq!((ds.n(), ds.p(), ds.q()), (50, 2, 3));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(side["bayes_errors"].as_array().unwrap().len(), 3);
    assert!(side["lipschitz"].as_f64().unwrap() > 0.0);
}
