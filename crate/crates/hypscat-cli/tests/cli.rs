use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const A0_JOB: &str = r#"{
  "surface": {"family": "modular", "a": 1.5},
  "mesh": {"h": 0.15, "n_boundary": 48},
  "fem": {"j": 6, "eigenpairs": 120, "anchors": [[0.75, -3.0], [0.75, 3.0]]},
  "scatter": {"s": [[0.5, 2.0], [0.3, 4.0]]},
  "oracle": {"case": "a0", "t": {"start": 0.5, "stop": 5.0, "step": 0.5}, "limit": 1e-3}
}"#;

fn hypscat(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypscat")).args(args).current_dir(dir).output().unwrap()
}

fn write_job(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn scatter_on_a0_is_unitary_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_job(dir.path(), "job.json", A0_JOB);
    let run = hypscat(&["scatter", "job.json", "--out", "out", "--workers", "2"], dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let first = fs::read(dir.path().join("out/scatter.json")).unwrap();
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["provenance"]["task"], "scatter-eval");
    assert_eq!(v["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    let on_line = &v["points"][0];
    assert!(on_line["unitarity_defect"].as_f64().unwrap() < 1e-10);
    assert!(on_line["functional_equation_defect"].as_f64().unwrap() < 1e-10);
    assert!(v["points"][1]["unitarity_defect"].is_null());
    let csv = fs::read_to_string(dir.path().join("out/scatter.csv")).unwrap();
    assert!(csv.starts_with("# hypscat "));

    // second run reads the cache and must agree byte for byte
    let again = hypscat(&["scatter", "job.json", "--out", "out"], dir.path());
    assert!(again.status.success());
    assert_eq!(first, fs::read(dir.path().join("out/scatter.json")).unwrap());
    let cached: Vec<_> = fs::read_dir(dir.path().join("out/cache")).unwrap().collect();
    assert_eq!(cached.len(), 2);
}

#[test]
fn malformed_config_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.json", "{ not json"),
        ("unknown.json", r#"{"surface": {"family": "modular", "a": 1.5}, "colour": 3}"#),
        ("big_j.json", r#"{"surface": {"family": "modular", "a": 1.5}, "mesh": {"h": 0.1, "n_boundary": 32}, "fem": {"j": 12}, "scatter": {"s": [[0.5, 1.0]]}}"#),
        ("no_section.json", r#"{"surface": {"family": "modular", "a": 1.5}, "mesh": {"h": 0.1, "n_boundary": 32}, "fem": {"j": 4}}"#),
        ("bad_surface.json", r#"{"surface": {"family": "artin", "r": 2.0, "a": 1.5}, "mesh": {"h": 0.1, "n_boundary": 32}, "fem": {"j": 4}, "scatter": {"s": [[0.5, 1.0]]}}"#),
    ];
    for (name, text) in cases {
        write_job(dir.path(), name, text);
        let out = format!("out-{name}");
        let run = hypscat(&["scatter", name, "--out", &out], dir.path());
        assert!(!run.status.success(), "{name} was accepted");
        assert!(!dir.path().join(&out).exists(), "{name} left artifacts");
    }
}

#[test]
fn oracle_self_comparison_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    write_job(dir.path(), "job.json", A0_JOB);
    assert!(hypscat(&["scatter", "job.json", "--out", "a"], dir.path()).status.success());
    write_job(
        dir.path(),
        "self.json",
        r#"{"surface": {"family": "modular", "a": 1.5},
            "oracle": {"reference": "a/scatter.json", "computed": "a/scatter.json", "limit": 0.0}}"#,
    );
    let run = hypscat(&["oracle", "compare", "self.json", "--out", "b"], dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("b/oracle.json")).unwrap()).unwrap();
    assert_eq!(v["max_relative_error"].as_f64(), Some(0.0));
    assert_eq!(v["pass"], true);
}

#[test]
fn oracle_against_closed_form_reports_failure_by_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write_job(dir.path(), "job.json", A0_JOB);
    let run = hypscat(&["oracle", "compare", "job.json", "--out", "ok"], dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    // a wrong closed form must fail the comparison
    write_job(dir.path(), "wrong.json", &A0_JOB.replace(r#""case": "a0""#, r#""case": "b-sqrt2""#));
    let run = hypscat(&["oracle", "compare", "wrong.json", "--out", "bad"], dir.path());
    assert_eq!(run.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("bad/oracle.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn run_dispatches_on_task() {
    let dir = tempfile::tempdir().unwrap();
    write_job(dir.path(), "job.json", &A0_JOB.replacen('{', r#"{"task": "surface","#, 1));
    let run = hypscat(&["run", "job.json", "--out", "s", "--no-cache"], dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("s/surface.json")).unwrap()).unwrap();
    assert_eq!(v["cusps"], 1);
    // compact part below y = 1.5 of the even half domain
    let expected = (std::f64::consts::PI / 3.0 - 1.0 / 1.5) / 2.0;
    assert!((v["area"].as_f64().unwrap() - expected).abs() < 1e-12);

    write_job(dir.path(), "bare.json", A0_JOB);
    assert_eq!(hypscat(&["run", "bare.json", "--out", "t"], dir.path()).status.code(), Some(2));
}
