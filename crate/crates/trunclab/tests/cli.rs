use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn trunclab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trunclab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &str = r#"
master_seed = 11
l_list = [4, 8]
trials = 300
containment_trials = 40
verify_window = 2

[sequence]
kind = "lacunary"
support = { powers_of = 2 }
value = 0.9

[certificate]
epsilon = 0.45
evidence = "powers of two"

[slab]
d = 3
k = 2
"#;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["no-such-command"],
        vec!["estimate", "--family", "z2"],
        vec!["estimate", "--family", "torus", "--p", "0.5", "--L", "4"],
        vec!["scales", "--config", "missing.toml"],
    ] {
        let out = trunclab(&args, dir.path());
        assert_eq!(code(&out), 1, "{args:?}");
    }
    assert_eq!(code(&trunclab(&["--help"], dir.path())), 0);
}

#[test]
fn estimate_prints_one_reproducible_row() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "estimate", "--family", "z2", "--p", "0.5", "--L", "8", "--trials", "2000", "--seed", "5",
    ];
    let a = trunclab(&args, dir.path());
    assert_eq!(code(&a), 0);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 1);
    let fields: Vec<&str> = text.trim().split(',').collect();
    assert_eq!(fields.len(), 7);
    assert_eq!(&fields[..3], &["Z^2", "p=0.5;L=8", "crossing"]);
    assert_eq!(&fields[5..], &["2000", "5"]);
    let value: f64 = fields[3].parse().unwrap();
    assert!((value - 0.5).abs() < 0.05, "{value}");
    assert_eq!(stdout(&trunclab(&args, dir.path())), text);

    let out = trunclab(
        &[
            "estimate",
            "--family",
            "long-range",
            "--p",
            "0.3",
            "--L",
            "6",
            "--N",
            "3",
            "--event",
            "theta",
            "--header",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "family,params,event,value,half_width,trials,seed");
    assert!(lines[1].starts_with("long-range,p=0.3;L=6;N=3,theta,"), "{}", lines[1]);
}

#[test]
fn scales_and_honest_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let out = trunclab(&["scales", "--config", "c.toml"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "n_1 = 1\nn_2 = 4\nN = 4\n");
    let out = trunclab(&["scales", "--config", "c.toml", "--d", "4", "--k", "3"], dir.path());
    assert_eq!(stdout(&out), "n_1 = 1\nn_2 = 8\nn_3 = 64\nN = 64\n");

    write(dir.path(), "table.txt", "1 0.9\n2 0.9\n3 0.9\n4 0.9\n5 0.9\n");
    let finite = SMALL.replace(
        "kind = \"lacunary\"\nsupport = { powers_of = 2 }\nvalue = 0.9",
        "kind = \"table\"\nfile = \"table.txt\"",
    );
    write(dir.path(), "f.toml", &finite);
    let out = trunclab(&["scales", "--config", "f.toml", "--d", "4", "--k", "2"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis-not-witnessed"));
}

#[test]
fn verify_embedding_reports() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let out = trunclab(&["verify-embedding", "--config", "c.toml", "--window", "3"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).ends_with("result: PASS\n"));
    let out = trunclab(
        &[
            "verify-embedding",
            "--config",
            "c.toml",
            "--d",
            "5",
            "--k",
            "1",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["scales"], serde_json::json!([1, 4, 16, 64]));
    assert_eq!(v["report"]["max_edge_length"], 64);
}

#[test]
fn pc_writes_a_reproducible_table() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "pc",
        "--family",
        "z2",
        "--family",
        "slab:3:2",
        "--table",
        "cal.csv",
        "--l-schedule",
        "6,12",
        "--trials",
        "300",
        "--seed",
        "4",
    ];
    let out = trunclab(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(dir.path().join("cal.csv")).unwrap();
    assert!(first.starts_with("# trunclab calibration table\n# method: bisection-on-crossing"));
    assert_eq!(first.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert_eq!(stdout(&out), first);

    // Recomputing replaces rows in place with identical values.
    let out = trunclab(&args, dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(dir.path().join("cal.csv")).unwrap(), first);
}

#[test]
fn pipeline_writes_outputs_and_reruns_from_the_copy() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let out = trunclab(&["pipeline", "--config", "c.toml", "--out", "run1"], dir.path());
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).starts_with("PASSED\n"));
    let run1 = dir.path().join("run1");
    for f in [
        "report.json",
        "estimates.csv",
        "calibration.csv",
        "manifest.json",
        "config.toml",
    ] {
        assert!(run1.join(f).is_file(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["master"], 11);
    assert_eq!(manifest["config_text"], SMALL);
    assert!(manifest["seeds"]["theta"]["8"].is_u64());
    assert!(manifest["timings"]["pipeline_ms"].is_u64());
    assert_eq!(manifest["versions"]["trunclab_core"], env!("CARGO_PKG_VERSION"));

    let estimates = fs::read_to_string(run1.join("estimates.csv")).unwrap();
    let lines: Vec<&str> = estimates.lines().collect();
    assert_eq!(lines[0], "l,window,event,value,half_width,successes,trials,seed,note");
    assert_eq!(lines.len(), 5);

    let out = trunclab(
        &["pipeline", "--config", "run1/config.toml", "--out", "run2"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let run2 = dir.path().join("run2");
    for f in ["report.json", "estimates.csv"] {
        assert_eq!(fs::read(run1.join(f)).unwrap(), fs::read(run2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn pipeline_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "table.txt", "1 0.9\n2 0.9\n3 0.9\n");
    let finite = SMALL.replace(
        "kind = \"lacunary\"\nsupport = { powers_of = 2 }\nvalue = 0.9",
        "kind = \"table\"\nfile = \"table.txt\"",
    );
    write(dir.path(), "f.toml", &finite);
    let out = trunclab(&["pipeline", "--config", "f.toml", "--out", "o"], dir.path());
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["status"]["status"], "failed");
    assert_eq!(report["status"]["stage"], "scale_selection");
    assert_eq!(report["status"]["kind"], "hypothesis-not-witnessed");

    write(
        dir.path(),
        "bad.toml",
        &SMALL.replace("l_list = [4, 8]", "l_list = [8, 4]"),
    );
    let out = trunclab(&["pipeline", "--config", "bad.toml", "--out", "o2"], dir.path());
    assert_eq!(code(&out), 1);
}
