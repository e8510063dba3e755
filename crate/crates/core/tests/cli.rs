use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ecfm-oed");

fn config(dir: &Path, case: &str, extra: &str) -> PathBuf {
    let path = dir.join("run.json");
    let body = format!(
        r#"{{
            "case": "{case}",
            "spec": {{"k": 1.0, "b": 1.0, "p": 1.0}},
            "mesh": 16,
            "prior": [{{"kind": "uniform", "lo": 0.5, "hi": 1.5}}]{extra}
        }}"#
    );
    fs::write(&path, body).unwrap();
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, rows) = rows(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.into_iter().map(|r| r[i].clone()).collect()
}

#[test]
fn every_command_writes_its_headers() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "parameterized_source", r#", "noise": {"trials": 5}"#);
    let out = dir.path().join("out");
    let expected: [(&[&str], &str, &str); 6] = [
        (&["forward"], "forward.csv", "x,u_true,u_fem"),
        (&["inverse"], "inverse.csv", "method,eps_star,objective_star,iterations"),
        (&["design"], "design_sweep.csv", "beta,fisher_value,ecfm_value"),
        (&["design"], "design_report.csv", "criterion,positions,value,iterations,termination,fallbacks,one_of_many,sweep_argmax"),
        (&["noise-study"], "noise_summary.csv", "design_label,mean,stddev,failures"),
        (&["verify"], "verify.csv", "quantity,case,eps,beta,oracle,fem,abs_error,passed"),
    ];
    for (args, file, header) in expected {
        let output = run(&cfg, &out, args);
        assert!(output.status.success(), "{args:?}: {}", String::from_utf8_lossy(&output.stderr));
        assert_eq!(rows(&out.join(file)).0.join(","), header, "{file}");
    }
    assert_eq!(rows(&out.join("noise.csv")).0.join(","), "design_label,trial,eps_hat");
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"case": "parameterized_source", "unknown": 1}"#).unwrap();
    assert_eq!(run(&bad, &out, &["forward"]).status.code(), Some(2));
    assert_eq!(run(&dir.path().join("missing.json"), &out, &["forward"]).status.code(), Some(2));

    let cfg = config(dir.path(), "parameterized_source", "");
    assert_eq!(run(&cfg, &out, &["design", "--resolution", "1"]).status.code(), Some(2));
    assert_eq!(run(&cfg, &out, &["noise-study", "--sigma", "-1"]).status.code(), Some(2));
    assert_eq!(run(&cfg, &out, &["forward", "--threads", "0"]).status.code(), Some(2));

    let data = dir.path().join("data.csv");
    fs::write(&data, "value\n0.1\n0.2\n").unwrap();
    let output = run(&cfg, &out, &["inverse", "--data", data.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}

#[test]
fn same_seed_gives_identical_files_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "parameterized_source", r#", "seed": 11, "noise": {"trials": 40}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &a, &["noise-study", "--threads", "1"]).status.success());
    assert!(run(&cfg, &b, &["noise-study", "--threads", "4"]).status.success());
    for file in ["noise.csv", "noise_summary.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = dir.path().join("c");
    assert!(run(&cfg, &c, &["noise-study", "--seed", "12"]).status.success());
    assert_ne!(fs::read(a.join("noise.csv")).unwrap(), fs::read(c.join("noise.csv")).unwrap());
}

#[test]
fn noiseless_trials_recover_the_truth() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "parameterized_source", "");
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, &["noise-study", "--sigma", "0", "--trials", "3"]).status.success());
    for v in column(&out.join("noise.csv"), "eps_hat") {
        let v: f64 = v.parse().unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }
}

#[test]
fn single_trial_reports_no_spread() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "parameterized_source", "");
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, &["noise-study", "--trials", "1"]).status.success());
    assert!(column(&out.join("noise_summary.csv"), "stddev").iter().all(|s| s == "NA"));
}

#[test]
fn linear_solution_is_reproduced_and_refinement_helps() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("linear.json");
    fs::write(
        &path,
        r#"{"case": "parameterized_source", "spec": {"k": 1.0, "b": 0.0, "p": 1.0}, "mesh": 8,
            "prior": [{"kind": "uniform", "lo": -0.5, "hi": 0.5}], "eps": [0.0]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert!(run(&path, &out, &["forward"]).status.success());
    let x = column(&out.join("forward.csv"), "x");
    let u = column(&out.join("forward.csv"), "u_fem");
    for (x, u) in x.iter().zip(&u) {
        let (x, u): (f64, f64) = (x.parse().unwrap(), u.parse().unwrap());
        assert!((x - u).abs() < 1e-13, "{x} {u}");
    }

    // nodal error of the consistent model must not grow under refinement
    let mut previous = f64::INFINITY;
    for mesh in [4, 8, 16, 32] {
        let path = dir.path().join(format!("m{mesh}.json"));
        fs::write(
            &path,
            format!(
                r#"{{"case": "parameterized_material", "spec": {{"k": 1.3, "b": 0.7, "p": -0.4}}, "mesh": {mesh},
                    "prior": [{{"kind": "uniform", "lo": 0.5, "hi": 1.5}}]}}"#
            ),
        )
        .unwrap();
        let out = dir.path().join(format!("o{mesh}"));
        assert!(run(&path, &out, &["forward"]).status.success());
        let t = column(&out.join("forward.csv"), "u_true");
        let f = column(&out.join("forward.csv"), "u_fem");
        let err = t.iter().zip(&f).map(|(a, b)| (a.parse::<f64>().unwrap() - b.parse::<f64>().unwrap()).abs()).fold(0.0, f64::max);
        assert!(err <= previous + 1e-12, "mesh {mesh}: {err} > {previous}");
        previous = err;
    }
}

#[test]
fn misspecified_model_keeps_a_residual_force() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "misspecified_source", r#", "design": {"positions": [0.5, 1.0]}, "inverse": {"method": "ecfm", "eps0": [1.0]}"#);
    let out = dir.path().join("out");
    let output = run(&cfg, &out, &["inverse"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let objective: f64 = column(&out.join("inverse.csv"), "objective_star")[0].parse().unwrap();
    assert!(objective > 1e-6, "{objective}");
}

#[test]
fn verify_passes_for_every_case() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "parameterized_bc", "");
    let out = dir.path().join("out");
    let output = run(&cfg, &out, &["verify"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let passed = column(&out.join("verify.csv"), "passed");
    assert!(!passed.is_empty() && passed.iter().all(|p| p == "true"));
}
