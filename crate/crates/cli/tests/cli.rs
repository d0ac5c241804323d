// SPDX-License-Identifier: Apache-2.0
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ctmc-sens"));
    c.env_remove("CTMC_SENS_THREADS");
    c
}

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// The two-state chain with both rates equal to one.
fn symmetric_two_state(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(model("isomerization.toml"))
        .unwrap()
        .replace("value = 2.0", "value = 1.0");
    let p = dir.join("sym.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_monotone_nonnegative_rows() {
    let m = model("linear.toml");
    let o = run(&["simulate", path_str(&m), "--t-end", "10", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["t", "S1", "S2", "S3"]);
    let mut prev = 0.0;
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let t: f64 = cells[0].parse().unwrap();
        assert!(t > prev);
        prev = t;
        for c in &cells[1..4] {
            c.parse::<u32>().expect("counts are non-negative integers");
        }
        rows += 1;
    }
    assert_eq!(rows, 100);
    assert_eq!(prev, 10.0);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let m = model("twogene.toml");
    let args = ["simulate", path_str(&m), "--t-end", "50", "--seed", "9", "--checkpoints", "geom:1:8"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["simulate", path_str(&m), "--t-end", "50", "--seed", "10", "--checkpoints", "geom:1:8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn usage_errors_exit_two() {
    let m = model("linear.toml");
    assert_eq!(code(&run(&["simulate", path_str(&m), "--t-end", "0"])), 2);
    assert_eq!(code(&run(&["simulate", path_str(&m), "--t-end", "-1"])), 2);
    assert_eq!(code(&run(&["bench", "nope"])), 2);
    assert_eq!(code(&run(&["bench", "linear", "--scale", "huge"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let o = run(&["estimate", path_str(&m), "--t-end", "10", "--estimators", "clr,bogus"]);
    assert_eq!(code(&o), 2);
    let o = run(&["estimate", path_str(&m), "--t-end", "10", "--param", "c9"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn model_errors_exit_three_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "schema_version = 1\nname = \"x\"\nspecies = [\"A\"]\nbogus_key = 3\n").unwrap();
    let o = run(&["simulate", path_str(&p), "--t-end", "1"]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line"), "{err}");
    assert_eq!(code(&run(&["simulate", "/nonexistent/model.toml", "--t-end", "1"])), 3);
    // oracle centering needs a truncation
    let o = run(&["estimate", path_str(&model("twogene.toml")), "--t-end", "1", "--centering", "oracle"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_sensitivity_on_linear_network() {
    let m = model("linear.toml");
    let o = run(&["oracle", path_str(&m), "--what", "sensitivity", "--param", "c3", "--observable", "x1"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let s = v["sensitivities"][0]["value"].as_f64().unwrap();
    assert!((s - (-4000.0 / 81.0)).abs() < 1e-8, "{s}");
    assert_eq!(v["truncation_states"], 66);
}

#[test]
fn oracle_check_lists_absorbing_state() {
    let o = run(&["oracle", path_str(&model("pure_death.toml")), "--what", "check"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["irreducible"], false);
    assert_eq!(v["absorbing"], serde_json::json!([[0]]));
    // solving on a reducible truncation is a numerical failure
    let o = run(&["oracle", path_str(&model("pure_death.toml")), "--what", "pi"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn oracle_covariance_on_symmetric_two_state_chain() {
    let dir = tempfile::tempdir().unwrap();
    let m = symmetric_two_state(dir.path());
    let out = dir.path().join("cov.csv");
    let o = run(&["oracle", path_str(&m), "--what", "covariance", "--param", "c1", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let get = |q: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{q},")))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("sigma11_rate") - 0.25).abs() < 1e-12);
    assert!((get("sigma12_rate") + 0.25).abs() < 1e-12);
    assert!((get("sigma22_rate") - 0.5).abs() < 1e-12);
}

#[test]
fn oracle_pi_and_poisson_tables() {
    let m = model("isomerization.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("poisson.csv");
    let o = run(&["oracle", path_str(&m), "--what", "poisson", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "A,B,pi,f,f_hat");
    let row = |l: &str| -> Vec<f64> { l.split(',').map(|c| c.parse().unwrap()).collect() };
    // states sorted lexicographically: (0,1) then (1,0)
    let b = row(lines[1]);
    let a = row(lines[2]);
    assert!((a[2] - 2.0 / 3.0).abs() < 1e-12 && (b[2] - 1.0 / 3.0).abs() < 1e-12);
    assert!((a[4] - 1.0 / 9.0).abs() < 1e-10 && (b[4] + 2.0 / 9.0).abs() < 1e-10);
}

fn estimate_bundle(dir: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let m = model("isomerization.toml");
    let out = dir.join("bundle");
    let mut args = vec![
        "estimate",
        path_str(&m),
        "--param",
        "c1",
        "--samples",
        "2000",
        "--t-end",
        "100",
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.into_iter().map(String::from).collect();
    (bin().args(&args).output().unwrap(), out)
}

fn terminal_mean(report: &Value, estimator: &str) -> (f64, f64) {
    let t_end = report["t_end"].as_f64().unwrap();
    let row = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["estimator"] == estimator && r["t"].as_f64() == Some(t_end))
        .unwrap();
    (row["mean"].as_f64().unwrap(), row["std_error"].as_f64().unwrap())
}

#[test]
fn estimate_bundle_contents_and_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = estimate_bundle(dir.path(), &["--centering", "oracle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "estimates.csv", "variance.csv", "oracle.csv", "martingale.csv", "plot_report.py"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let (clr, se) = terminal_mean(&report, "CLR");
    assert!((clr + 2.0 / 9.0).abs() <= 3.0 * se, "CLR {clr} ± {se}");
    let est = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().next().unwrap(), "estimator,parameter,observable,t,mean,var,se,ci_lo,ci_hi");
    let keys: Vec<(String, f64)> = est
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (format!("{},{},{}", c[0], c[1], c[2]), c[3].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    assert_eq!(keys, sorted);
}

#[test]
fn estimator_selection_restricts_report() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = estimate_bundle(dir.path(), &["--estimators", "clr,intclr"]);
    assert_eq!(code(&o), 0);
    let est = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    let mut kinds: Vec<&str> = est.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    kinds.dedup();
    assert_eq!(kinds, ["CLR", "intCLR"]);
}

#[test]
fn explicit_centering_matches_oracle_centering() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (o1, b1) = estimate_bundle(d1.path(), &["--centering", "oracle"]);
    let (o2, b2) = estimate_bundle(d2.path(), &["--centering", "value:0.6667"]);
    assert_eq!(code(&o1), 0);
    assert_eq!(code(&o2), 0);
    let read = |p: &Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap() };
    let (r1, r2) = (read(&b1), read(&b2));
    for e in ["CLR", "intCLR"] {
        let (m1, s1) = terminal_mean(&r1, e);
        let (m2, s2) = terminal_mean(&r2, e);
        // same paths; the centering differs by 3.3e-5, well inside the noise
        assert!((m1 - m2).abs() <= 0.1 * (s1 + s2), "{e}: {m1} vs {m2}");
    }
}

#[test]
fn estimate_bundles_are_byte_identical_across_runs_and_threads() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut bundles = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let m = model("isomerization.toml");
        let out = d.path().join("b");
        let threads = ["1", "1", "4"][i];
        let o = bin()
            .env("CTMC_SENS_THREADS", threads)
            .args(["estimate", path_str(&m), "--samples", "500", "--t-end", "50", "--seed", "11"])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&out).unwrap() {
            let p = entry.unwrap().path();
            files.push((p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap()));
        }
        files.sort();
        bundles.push((files, o.stdout));
    }
    assert_eq!(bundles[0], bundles[1]);
    assert_eq!(bundles[0], bundles[2]);
}

#[test]
fn bad_thread_env_is_a_usage_error() {
    let m = model("isomerization.toml");
    let o = bin()
        .env("CTMC_SENS_THREADS", "zero")
        .args(["simulate", path_str(&m), "--t-end", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
