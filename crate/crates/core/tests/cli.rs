use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twbn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twbn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn twbn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = twbn(dir, args);
    assert!(
        out.status.success(),
        "twbn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Network, data and score cache for a small inverted tree.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "synth", "inverted-tree", "-k", "2", "-n", "9", "-o", "net.txt"]);
    ok(d, &["--seed", "2", "synth", "sample", "--net", "net.txt", "--rows", "1500", "-o", "data.csv"]);
    ok(d, &["score", "--data", "data.csv", "-k", "2", "-o", "scores.txt"]);
    dir
}

#[test]
fn pipeline_learns_and_verifies() {
    let dir = prepared();
    let d = dir.path();
    for method in ["kg", "kastar", "s2", "s2plus"] {
        let file = format!("{method}.dag");
        ok(
            d,
            &[
                "--seed", "3", "-o", &file, "learn", "--scores", "scores.txt", "--data", "data.csv", "-k", "2",
                "--method", method, "--max-iterations", "5",
            ],
        );
        let report = ok(d, &["verify", "--dag", &file, "--data", "data.csv", "-k", "2"]);
        assert!(report.contains("verification: PASS"), "{method}: {report}");
        let report = ok(d, &["verify", "--dag", &file, "--scores", "scores.txt", "-k", "2"]);
        assert!(report.contains("verification: PASS"), "{method}: {report}");
    }
}

#[test]
fn exact_output_verifies_against_data() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["-o", "opt.dag", "exact", "--data", "data.csv", "--max-parents", "2"]);
    let report = ok(d, &["verify", "--dag", "opt.dag", "--data", "data.csv", "-k", "8"]);
    assert!(report.contains("verification: PASS"), "{report}");
}

#[test]
fn tampered_score_fails_verification() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["-o", "g.dag", "learn", "--scores", "scores.txt", "-k", "2", "--max-iterations", "3"]);
    let text = fs::read_to_string(d.join("g.dag")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // second line is the first node record: "<id> <score> <parents...>"
    let mut fields: Vec<String> = lines[1].split_whitespace().map(str::to_string).collect();
    let score: f64 = fields[1].parse().unwrap();
    fields[1] = format!("{:.6}", score + 5.0);
    lines[1] = fields.join(" ");
    fs::write(d.join("bad.dag"), lines.join("\n") + "\n").unwrap();
    let out = twbn(d, &["verify", "--dag", "bad.dag", "--data", "data.csv", "-k", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = prepared();
    let d = dir.path();
    let mut runs = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let file = format!("run{i}.dag");
        ok(
            d,
            &[
                "--seed", "11", "--workers", workers, "-o", &file, "learn", "--scores", "scores.txt", "-k", "2",
                "--method", "kastar", "--max-iterations", "6",
            ],
        );
        runs.push(fs::read(d.join(file)).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn bench_reports_every_method() {
    let dir = prepared();
    let d = dir.path();
    let table = ok(
        d,
        &[
            "-o", "bench.txt", "bench", "--scores", "scores.txt", "--data", "data.csv", "-k", "2", "--iterations",
            "kg=50,kastar=3,s2=100,s2plus=1",
        ],
    );
    for m in ["kg", "kastar", "s2", "s2plus"] {
        assert!(table.lines().any(|l| l.starts_with(m)), "{m} missing from\n{table}");
    }
    assert!(fs::read_to_string(d.join("bench.txt")).unwrap().contains("method=s2plus"));
}

#[test]
fn zero_budget_is_rejected() {
    let dir = prepared();
    let d = dir.path();
    let out = twbn(d, &["learn", "--scores", "scores.txt", "-k", "2", "--time-budget-seconds", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = twbn(d, &["learn", "--scores", "scores.txt", "-k", "2"]);
    assert_eq!(out.status.code(), Some(1), "no budget at all must be rejected");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(twbn(d, &["learn", "--bogus"]).status.code(), Some(1));
    assert_eq!(twbn(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(twbn(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn baselines_need_statistics() {
    let dir = prepared();
    let d = dir.path();
    let out = twbn(d, &["learn", "--scores", "scores.txt", "-k", "2", "--method", "s2", "--max-iterations", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = twbn(dir.path(), &["score", "--data", "nope.csv", "-k", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
