use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn matcone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matcone")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn norm_of_matrix_unit() {
    let out = matcone(&["norm", "--system", "Mn", "--n", "3", "--element", "e12"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["command"], "norm");
    assert_eq!(r["tool"], "matcone-cli");
    assert!(r["version"].is_string());
    assert_eq!(r["config"]["n"], 3);
    let v = r["result"]["value"].as_f64().unwrap();
    assert!((v - 1.0 / 3.0).abs() <= 1e-6, "{v}");
    assert!(r["result"]["lower"].as_f64().unwrap() <= r["result"]["upper"].as_f64().unwrap());
}

#[test]
fn completes_the_all_ones_band() {
    let dir = tempfile::tempdir().unwrap();
    let partial = json!({
        "dim": 3,
        "re": [[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]],
        "mask": [[1, 1, 0], [1, 1, 1], [0, 1, 1]],
    });
    let input = write(dir.path(), "partial.json", &partial);
    let out_dir = dir.path().join("run");
    let out = matcone(&["complete", "--input", &input, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["result"]["min_eig"].as_f64().unwrap().abs() <= 1e-9);
    assert_eq!(r["result"]["matches_specified"], true);
    let cert: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("certificates/completion.json")).unwrap()).unwrap();
    assert!((cert["re"][0][2].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!(out_dir.join("meta.json").exists());
}

#[test]
fn pstar_on_full_matrix_algebra_has_no_candidates() {
    let out = matcone(&["pstar", "--T", "Mn:2", "--n", "3", "--p", "2", "--samples", "50", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["candidates"], json!([]));
    assert_eq!(r["result"]["verdict"], "consistent");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = matcone(&["gap-search", "--mode", "ee", "--n", "2", "--samples", "4", "--seed", "3", "--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (out.stdout, fs::read(d.join("report.json")).unwrap(), d)
    };
    let (stdout_a, file_a, dir_a) = run("a");
    let (stdout_b, file_b, dir_b) = run("b");
    assert_eq!(stdout_a, stdout_b);
    assert_eq!(file_a, file_b);
    assert_eq!(stdout_a, file_a);
    let names = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d.join("certificates")).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names(&dir_a), names(&dir_b));
    for name in names(&dir_a) {
        let rel = Path::new("certificates").join(name);
        assert_eq!(fs::read(dir_a.join(&rel)).unwrap(), fs::read(dir_b.join(&rel)).unwrap());
    }
}

#[test]
fn certificates_are_listed_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "x.json", &json!({ "dim": 2, "re": [[1.0, 0.0], [0.0, -1.0]] }));
    let run = dir.path().join("run");
    let out = matcone(&["membership", "--cone", "d", "--system", "Mn:2", "--input", &input, "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(!r["certificates"].as_array().unwrap().is_empty());
    for name in r["certificates"].as_array().unwrap() {
        assert!(run.join("certificates").join(format!("{}.json", name.as_str().unwrap())).exists());
    }
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let cases: Vec<Vec<String>> = vec![
        vec!["complete".into(), "--input".into(), missing.to_str().unwrap().into()],
        vec!["norm".into(), "--system".into(), "Qn".into(), "--n".into(), "3".into(), "--element".into(), "e12".into()],
        vec!["norm".into(), "--system".into(), "Mn".into(), "--n".into(), "3".into(), "--element".into(), "e19".into()],
        vec!["gap-search".into(), "--mode".into(), "ee".into(), "--n".into(), "5".into()],
        vec!["complete".into(), "--input".into(), write(dir.path(), "bad.json", &json!({ "dim": 2, "re": [[1.0]] }))],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = matcone(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn infeasible_completion_names_the_block() {
    let dir = tempfile::tempdir().unwrap();
    let partial = json!({
        "dim": 3,
        "re": [[1.0, 2.0, 0.0], [2.0, 1.0, 0.5], [0.0, 0.5, 1.0]],
        "mask": [[1, 1, 0], [1, 1, 1], [0, 1, 1]],
    });
    let out = matcone(&["complete", "--input", &write(dir.path(), "p.json", &partial)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0, 1)"));
}
