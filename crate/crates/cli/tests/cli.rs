use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bsweyl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsweyl"))
        .args(args)
        .env("BSWEYL_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn integrable_equality_with_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["run", "integrable-equality"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("integrable-equality");
    let result = read_json(&run.join("result.json"));
    assert!(result["results"]["deviation_ratio"].as_f64().unwrap() <= 1.0);
    let csv = fs::read_to_string(run.join("weyl_density.csv")).unwrap();
    assert!(csv.starts_with("z_re,z_im,value,stderr"));
    assert_eq!(csv.lines().count(), 1 + 64 * 64);
    let m = read_json(&run.join("manifest.json"));
    assert_eq!(m["command"], "integrable-equality");
    assert_eq!(m["config"]["samples"], 10_000_000);
    assert_eq!(m["seeds"]["seed"], 0);
    assert_eq!(m["passed"], true);
}

#[test]
fn audit_of_separated_oscillator() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["run", "audit", "--symbol", "cho(1,(1+i)/2)"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = stdout_json(&o);
    assert!(r["results"]["bracket_max"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(r["results"]["bracket_small"], "pass");

    let o = bsweyl(dir.path(), &["audit", "--symbol", "cho(1,(1+i)/2)", "--sample-budget", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("audit/audit.json").exists());
}

#[test]
fn malformed_configs_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_syntax = dir.path().join("syntax.json");
    fs::write(&bad_syntax, "{\n  \"h\": 0.05,\n  \"size\": 60,\n}\n").unwrap();
    let o = bsweyl(dir.path(), &["run", "bs-exactness", "--config", bad_syntax.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let bad_fields = dir.path().join("fields.json");
    fs::write(&bad_fields, "{\n  \"h\": \"small\",\n  \"size\": 60,\n  \"bogus\": 1,\n  \"rect\": {\"re\": [0.2, 0.6], \"im\": [0.2, 0.6], \"extra\": 0}\n}\n")
        .unwrap();
    let o = bsweyl(dir.path(), &["run", "bs-exactness", "--config", bad_fields.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 2: field `h`"), "{e}");
    assert!(e.contains("line 4: unknown field `bogus`"), "{e}");
    assert!(e.contains("unknown field `rect.extra`"), "{e}");
    assert!(!dir.path().join("bs-exactness").exists());

    let o = bsweyl(dir.path(), &["run", "no-such-experiment"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bsweyl(dir.path(), &["run", "bs-exactness", "--seeds", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `seeds`"));
}

#[test]
fn artifacts_are_reproducible_across_threads_and_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["density", "--samples", "200000", "--res", "16x16", "--seed", "7", "--window", "-0.3,0.3,-0.3,0.3"];
    let one: Vec<&str> = ["--threads", "1"].iter().chain(&args).copied().collect();
    let two: Vec<&str> = ["--threads", "3"].iter().chain(&args).copied().collect();
    assert_eq!(bsweyl(a.path(), &one).status.code(), Some(0));
    assert_eq!(bsweyl(b.path(), &two).status.code(), Some(0));
    let csv = |d: &Path| fs::read(d.join("density/weyl_density.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));

    // the manifest alone reproduces the run
    let c = tempfile::tempdir().unwrap();
    let manifest = a.path().join("density/manifest.json");
    let o = bsweyl(c.path(), &["run", "--config", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(csv(a.path()), csv(c.path()));
}

#[test]
fn failed_checks_exit_with_status_one_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["deform-density", "--samples", "100000", "--res", "4x4", "--k-sigma", "1e9"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = read_json(&dir.path().join("deform-density/failure_report.json"));
    assert_eq!(r["failed_checks"][0]["name"], "weyl density changes");
    assert_eq!(read_json(&dir.path().join("deform-density/manifest.json"))["passed"], false);
}

#[test]
fn bohr_sommerfeld_lattice_of_linear_torus() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["bs", "--h", "0.1", "--theta", "0,0", "--window", "0.05,0.55,0.05,0.55"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // h k1 + i h k2 with k in 1..=5
    assert_eq!(stdout_json(&o)["results"]["count"], 25);
    let csv = fs::read_to_string(dir.path().join("bs/bs.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        (v[0] - 0.1 * v[2]).abs() < 1e-10 && (v[1] - 0.1 * v[3]).abs() < 1e-10
    }));
}

#[test]
fn spectrum_count_and_variation_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["spectrum", "--symbol", "cho(1,0)", "--h", "0.1", "--size", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("spectrum/spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 64);

    let o = bsweyl(dir.path(), &["count", "--size", "20", "--h", "0.1", "--samples", "100000", "--rect", "0.0,0.5,0.0,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = stdout_json(&o);
    assert_eq!(r["results"]["count"], 25);
    assert!((r["results"]["omega_prediction"].as_f64().unwrap() - 25.0).abs() < 0.5);

    let o = bsweyl(dir.path(), &["variation", "--order", "1", "--quad-order", "16", "--tol", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout_json(&o)["results"]["rhs"].as_f64().unwrap().abs() > 0.0);

    let o = bsweyl(dir.path(), &["variation", "--order", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_subcommand_prints_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsweyl(dir.path(), &["config", "random-weyl-migration"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["seeds"], 5);
    assert_eq!(v["delta"], 1e-4);
    assert_eq!(bsweyl(dir.path(), &["config", "nothing"]).status.code(), Some(2));
}
