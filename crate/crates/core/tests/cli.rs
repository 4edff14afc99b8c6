use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynlogit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_design(dir: &TempDir, name: &str, json: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn simulate(dir: &TempDir, json: &str, name: &str) -> PathBuf {
    let design = write_design(dir, &format!("{name}.json"), json);
    let out = dir.path().join(format!("{name}.csv"));
    let o = run(&["simulate", "--design", p(&design), "--rep", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

const BENCH: &str = r#"{"family":"benchmark","n":1000,"T":3,"gamma":0.5,"seed":42}"#;

#[test]
fn simulate_is_deterministic_and_reports_fraction() {
    let dir = TempDir::new().unwrap();
    let design = write_design(&dir, "d.json", BENCH);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let oa = run(&["simulate", "--design", p(&design), "--rep", "3", "--out", p(&a)]);
    run(&["simulate", "--design", p(&design), "--rep", "3", "--out", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(String::from_utf8_lossy(&oa.stdout).contains("informative fraction: 0.5"));
}

#[test]
fn simulate_rejects_bad_designs() {
    let dir = TempDir::new().unwrap();
    for (name, json) in [
        ("zero", r#"{"family":"benchmark","n":0,"T":3,"gamma":0.5}"#),
        ("family", r#"{"family":"probit","n":10,"T":3,"gamma":0.5}"#),
    ] {
        let design = write_design(&dir, name, json);
        let o = run(&["simulate", "--design", p(&design)]);
        assert_eq!(o.status.code(), Some(1), "{name}");
    }
}

#[test]
fn improved_fit_covers_truth() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, BENCH, "bench");
    let o = run(&["fit", "--data", p(&data), "--estimator", "improved", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let gamma = &v["parameters"][1];
    assert_eq!(gamma["parameter"], "gamma");
    let (lo, hi) = (gamma["lower"].as_f64().unwrap(), gamma["upper"].as_f64().unwrap());
    assert!(lo <= 0.5 && 0.5 <= hi, "[{lo}, {hi}]");
}

#[test]
fn improved_at_zero_prints_basic_output() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, BENCH, "bench");
    for format in ["json", "csv", "table"] {
        let a = run(&["fit", "--data", p(&data), "--estimator", "basic", "--format", format]);
        let b = run(&[
            "fit", "--data", p(&data), "--estimator", "improved", "--fixed-beta-bar", "0", "--format", format,
        ]);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn two_lag_without_presample_row_fails() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, BENCH, "bench");
    let o = run(&["fit", "--data", p(&data), "--estimator", "two-lag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time -1"));

    let with = simulate(
        &dir,
        r#"{"family":"benchmark","n":800,"T":4,"gamma":0.5,"seed":1,"lag2_presample":true}"#,
        "lag2",
    );
    let o = run(&["fit", "--data", p(&with), "--estimator", "two-lag", "--format", "csv"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("gamma2"));
}

#[test]
fn malformed_csv_exits_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,time,y,x1\n1,0,0,0.1\n1,1,2,0.3\n").unwrap();
    let o = run(&["fit", "--data", p(&path), "--estimator", "basic"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unidentified_model_exits_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("flat.csv");
    let mut s = String::from("id,time,y,x1\n");
    for i in 0..40 {
        let v = i as f64 / 10.0;
        let y = [(i % 2), ((i + 1) % 2), (i % 3 == 0) as usize];
        s += &format!("{i},0,0,{v}\n");
        for (t, yt) in y.iter().enumerate() {
            s += &format!("{i},{},{yt},{v}\n", t + 1);
        }
    }
    std::fs::write(&path, s).unwrap();
    let o = run(&["fit", "--data", p(&path), "--estimator", "basic"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replicate_and_compare() {
    let dir = TempDir::new().unwrap();
    let design = write_design(
        &dir,
        "r.json",
        r#"{"family":"benchmark","n":250,"T":3,"gamma":0.5,"seed":5,"replications":200}"#,
    );
    let rows = dir.path().join("rows.csv");
    let o = run(&[
        "replicate", "--design", p(&design), "--estimators", "basic,improved", "--format", "csv", "--output", p(&rows),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&rows).unwrap().lines().count(), 1 + 2 * 2);

    let t6 = write_design(
        &dir,
        "t6.json",
        r#"{"family":"benchmark","n":1000,"T":3,"gamma":0.5,"seed":6,"replications":100}"#,
    );
    let table = dir.path().join("t.csv");
    let o = run(&[
        "replicate", "--design", p(&t6), "--estimators", "hk,improved", "--format", "csv",
        "--output", p(&table),
    ]);
    assert!(o.status.success());
    let o = run(&[
        "compare", "--left", p(&table), "--left-estimator", "hk", "--right", p(&table), "--right-estimator",
        "improved", "--format", "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v[0]["mae_reduction"].as_f64().unwrap() > 0.0);

    let other = write_design(
        &dir,
        "o.json",
        r#"{"family":"benchmark","n":300,"T":3,"gamma":0.5,"seed":5,"replications":5}"#,
    );
    let orows = dir.path().join("orows.csv");
    run(&["replicate", "--design", p(&other), "--estimators", "improved", "--format", "csv", "--output", p(&orows)]);
    let o = run(&[
        "compare", "--left", p(&table), "--left-estimator", "hk", "--right", p(&orows),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
