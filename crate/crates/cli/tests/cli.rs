use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case5() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/case5_acdc.m")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridtopo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn result(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

fn objective(v: &serde_json::Value, k: usize) -> f64 {
    v["results"][k]["solve"]["objective"].as_f64().unwrap()
}

#[test]
fn opf_and_ots_without_switching_agree() {
    let dir = tempfile::tempdir().unwrap();
    let case = case5();
    let a = dir.path().join("opf");
    let o = run(&["opf", "--case", case.to_str().unwrap()], &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let opf = objective(&result(&a), 0);
    assert!((opf - 194.139).abs() < 0.01, "{opf}");
    assert!(a.join("metadata.json").exists() && a.join("comparison.csv").exists());

    let b = dir.path().join("ots");
    let o = run(&["ots", "--case", case.to_str().unwrap(), "--switchable", "none"], &b);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((objective(&result(&b), 0) - opf).abs() < 1e-6);
}

#[test]
fn bs_comparison_has_one_row_per_formulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bs");
    let o = run(&["bs", "--case", case5().to_str().unwrap(), "--split", "ac:2", "--formulation", "soc,lpac"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let head = rd.headers().unwrap().clone();
    let col = |n: &str| head.iter().position(|h| h == n).unwrap();
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let (Ok(b), Ok(t), Ok(ben)) = (r[col("opf_objective")].parse::<f64>(), r[col("topo_objective")].parse::<f64>(), r[col("benefit_pct")].parse::<f64>()) else {
            continue;
        };
        assert!((ben - 100.0 * (b - t) / b).abs() < 1e-6, "{r:?}");
    }
    for f in ["soc", "lpac"] {
        assert!(out.join(format!("topology_{f}.json")).exists());
    }
    let rep = Command::new(env!("CARGO_BIN_EXE_gridtopo")).args(["report", "--out"]).arg(&out).output().unwrap();
    assert!(rep.status.success());
    let table = String::from_utf8(rep.stdout).unwrap();
    assert!(table.contains("soc-bs") && table.contains("lpac-bs"), "{table}");
}

#[test]
fn reruns_write_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let case = case5();
    let args = ["ots", "--case", case.to_str().unwrap(), "--switchable", "ac", "--formulation", "lpac"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&args, &a).status.success());
    assert!(run(&args, &b).status.success());
    assert_eq!(std::fs::read(a.join("result.json")).unwrap(), std::fs::read(b.join("result.json")).unwrap());
}

#[test]
fn check_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let case = case5();
    let case = case.to_str().unwrap();

    let all_on = dir.path().join("all_on.json");
    std::fs::write(&all_on, "{}").unwrap();
    let out = dir.path().join("on");
    let o = run(&["check", "--case", case, "--topology", all_on.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("check.json")).unwrap()).unwrap();
    assert!(rep["benefit_pct"].as_f64().unwrap().abs() < 1e-6);

    // Every line and converter open: all load is cut off.
    let dark = dir.path().join("dark.json");
    std::fs::write(
        &dark,
        r#"{"ac_branches": {"1": false, "2": false, "3": false, "4": false, "5": false, "6": false, "7": false},
            "converters": {"1": false, "2": false, "3": false}}"#,
    )
    .unwrap();
    let o = run(&["check", "--case", case, "--topology", dark.to_str().unwrap()], &dir.path().join("dark"));
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["check", "--case", case, "--topology", dir.path().join("missing.json").to_str().unwrap()], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let o = run(&["opf", "--config", cfg.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["opf", "--case", dir.path().join("nope.m").to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bs", "--case", case5().to_str().unwrap(), "--split", "xx:2"], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
}
