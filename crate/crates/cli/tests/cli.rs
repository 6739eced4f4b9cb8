use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use steercert::{validate_report, validate_sweep_csv};
use steercert_core::states::{dress_realization, ideal_realization, SchmidtVector};
use steercert_core::wire::RealizationFile;

fn steercert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steercert")).args(args).output().expect("binary runs")
}

fn steercert_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steercert"))
        .args(args)
        .env("STEERCERT_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn write_realization(dir: &Path, name: &str, tamper: bool) -> String {
    let sv = SchmidtVector::new(vec![0.8, 0.6]).unwrap();
    let mut r = dress_realization(&ideal_realization(&sv), 2, 2, 5).unwrap();
    if tamper {
        let bob = r.bob();
        r = r.with_bob(vec![bob[0].clone(), bob[1].depolarized(0.01)]).unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&RealizationFile::from_realization(&r, &sv)).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn bounds_for_qubit_mes() {
    let o = steercert(&["bounds", "--d", "2", "--alpha", "[0.7071,0.7071]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["beta_q"], 2.0);
    assert!((v["beta_l_exact"].as_f64().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-8);
    assert!((v["beta_l_paper_upper"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-6);
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["seed"], 42);
    assert_eq!(v["tolerance"], 1e-7);
    validate_report("bounds", &stdout(&o)).unwrap();
}

#[test]
fn usage_errors_exit_two() {
    let o = steercert(&["bounds", "--d", "3", "--alpha", "[1,0,0]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("α_1 must be positive"));
    let o = steercert(&["bounds", "--d", "2", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--frobnicate"));
    let o = steercert(&["bounds", "--d", "2", "--alpha", "[0.5,0.5]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--alpha"));
    let o = steercert_threads(&["bounds", "--d", "2"], "zero");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("STEERCERT_THREADS"));
}

#[test]
fn sweep_emits_ordered_csv() {
    let o = steercert(&["sweep", "--d", "2", "--theta-grid", "90", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 91);
    assert!(text.starts_with("index,theta,beta_l,gap,"));
    validate_sweep_csv(2, &text).unwrap();
    // The midpoint θ = π/4 row is the maximally entangled state.
    let mid: Vec<&str> = text.lines().nth(45).unwrap().split(',').collect();
    assert!((mid[1].parse::<f64>().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 0.01);
}

#[test]
fn sweep_is_byte_identical_across_thread_counts() {
    let args = ["sweep", "--d", "3", "--theta-grid", "40"];
    let one = steercert_threads(&args, "1");
    let four = steercert_threads(&args, "4");
    assert_eq!(one.stdout, four.stdout);
    validate_report("sweep", &stdout(&one)).unwrap();
}

#[test]
fn certify_passes_and_tamper_fails() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_realization(dir.path(), "good.json", false);
    let o = steercert(&["certify", "--realization", &good]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["certification"]["verdict"], "certified");
    validate_report("certify", &stdout(&o)).unwrap();

    let bad = write_realization(dir.path(), "bad.json", true);
    let o = steercert(&["certify", "--realization", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    assert_eq!(v["certification"]["verdict"], "failed");
    assert!(!v["certification"]["failing_checks"].as_array().unwrap().is_empty());
    assert!(stderr(&o).contains("failed check"));
}

#[test]
fn missing_file_is_io_error() {
    let o = steercert(&["certify", "--realization", "/nonexistent/realization.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn povm_build_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("povm.json");
    let o = steercert(&[
        "povm", "build", "--kind", "partial", "--d", "4", "--alpha", "[0.5,0.5,0.5,0.5]", "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    validate_report("povm build", &text).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["extremality"]["gram_rank"], 16);

    let o = steercert(&["povm", "check", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    validate_report("povm check", &stdout(&o)).unwrap();

    let broken = dir.path().join("broken.json");
    let mut v: Value = v["povm"].clone();
    v["elements"][0][0][0] = serde_json::json!([0.9, 0.0]);
    std::fs::write(&broken, v.to_string()).unwrap();
    let o = steercert(&["povm", "check", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn randomness_reaches_two_log_d() {
    let o = steercert(&["randomness", "--d", "3", "--povm", "builtin:partial"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["uniform"], true);
    assert!((v["min_entropy_bits"].as_f64().unwrap() - 2.0 * 3f64.log2()).abs() < 1e-9);
    validate_report("randomness", &stdout(&o)).unwrap();

    let o = steercert(&["randomness", "--d", "3", "--alpha", "[0.8,0.48,0.36]", "--povm", "builtin:covariant"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["uniform"], false);
}

#[test]
fn bell3_reports_value_above_threshold() {
    let o = steercert(&["bell3", "--restarts", "4", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert!(v["value"].as_f64().unwrap() >= v["threshold"].as_f64().unwrap() - 1e-6);
    assert_eq!(v["state_schmidt"].as_array().unwrap().len(), 3);
    validate_report("bell3", &stdout(&o)).unwrap();
    assert_eq!(steercert(&["bell3", "--restarts", "4", "--seed", "3"]).stdout, o.stdout);
}

#[test]
fn reports_rerun_byte_identically() {
    for args in [
        vec!["bounds", "--d", "4", "--alpha", "[0.7,0.5,0.4,0.31622776601683794]"],
        vec!["povm", "build", "--kind", "covariant", "--d", "3", "--seed", "9"],
    ] {
        assert_eq!(steercert(&args).stdout, steercert(&args).stdout);
    }
}
