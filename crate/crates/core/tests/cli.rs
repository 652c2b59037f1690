use std::path::Path;
use std::process::{Command, Output};

fn roc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roc"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROC_SEED")
        .output()
        .unwrap()
}

fn quick(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["check", "--grid-points", "12", "--segments", "50", "--samples", "128"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String], dir: &Path) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    roc(&refs, dir)
}

#[test]
fn exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&quick(&["--zoo", "distortion", "--out", "k.json"]), dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("CriterionPassed"));

    let bad = run(&quick(&["--zoo", "logk", "--out", "logk.json"]), dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(dir.path().join("logk.witness.json").exists());

    let unsure = roc(
        &[
            "check", "--ghat", "l1 + l2 + l3", "--n", "3", "--grid-points", "6", "--segments", "50", "--samples",
            "128", "--out", "lin.json",
        ],
        dir.path(),
    );
    assert_eq!(unsure.status.code(), Some(2));
}

#[test]
fn errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(roc(&["check", "--bogus"], dir.path()).status.code(), Some(3));
    assert_eq!(roc(&["check"], dir.path()).status.code(), Some(3));
    let parse = roc(&["check", "--ghat", "l1 +", "--n", "2"], dir.path());
    assert_eq!(parse.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("error"));
    assert_eq!(roc(&["check", "--zoo", "nope"], dir.path()).status.code(), Some(3));
    assert_eq!(roc(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(roc(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn reports_are_byte_identical_and_seed_env_wins() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(&quick(&["--zoo", "k2", "--seed", "5", "--out", "a.json"]), p);
    run(&quick(&["--zoo", "k2", "--seed", "5", "--out", "b.json"]), p);
    let a = std::fs::read(p.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.json")).unwrap());

    let args = quick(&["--zoo", "k2", "--seed", "5", "--out", "c.json"]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = Command::new(env!("CARGO_BIN_EXE_roc"))
        .args(&refs)
        .current_dir(p)
        .env("ROC_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("c.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["oracle"]["seed"], 9);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("run.toml"),
        "[energy]\nzoo = \"logk\"\n\n[grid]\npoints = 10\n\n[oracle]\nsegments = 40\nsamples = 128\n",
    )
    .unwrap();
    let logk = roc(&["check", "--config", "run.toml", "--out", "r.json"], p);
    assert_eq!(logk.status.code(), Some(1));
    // flags take precedence over the file
    let k = roc(&["check", "--config", "run.toml", "--zoo", "distortion", "--out", "r2.json"], p);
    assert_eq!(k.status.code(), Some(0));
    std::fs::write(p.join("bad.toml"), "[energy]\nzoo = \"k2\"\nunknown = 1\n").unwrap();
    assert_eq!(roc(&["check", "--config", "bad.toml"], p).status.code(), Some(3));
}

#[test]
fn replay_from_report_and_bare_witness() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(&quick(&["--zoo", "logk", "--out", "logk.json"]), p);
    let r = roc(&["replay", "logk.json"], p);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("reproduced"));

    assert_eq!(roc(&["replay", "logk.witness.json"], p).status.code(), Some(3));
    let warned = roc(&["replay", "logk.witness.json", "--zoo", "logk", "--tol-abs", "1e-9"], p);
    assert_eq!(warned.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&warned.stderr).contains("tolerance mismatch"));

    let text = std::fs::read_to_string(p.join("logk.witness.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["segment"]["eta"] = serde_json::json!("oops");
    std::fs::write(p.join("corrupt.json"), v.to_string()).unwrap();
    let c = roc(&["replay", "corrupt.json", "--zoo", "logk"], p);
    assert_eq!(c.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&c.stderr).contains("segment.eta"));
}

#[test]
fn scan_writes_full_precision_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = roc(
        &[
            "scan", "--zoo", "logk", "--matrix", "0.5,0;0,2", "--xi", "3,0", "--eta", "1,0", "--samples", "64",
            "--format", "csv", "--out", "s.csv",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(p.join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,sigma1,sigma2,W");
    assert_eq!(lines.len(), 66);
    let row: Vec<f64> = lines[34].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 0.515625);
    assert_eq!(row[1], 0.5 + 3.0 * 0.515625);
    assert_eq!(row[2], 2.0);

    let convex = roc(
        &["scan", "--zoo", "distortion", "--matrix", "1,0.2;0,1.5", "--xi", "1,1", "--eta", "0,1"],
        p,
    );
    assert_eq!(convex.status.code(), Some(0));
}

#[test]
fn verify_lemmas_runs_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = roc(&["verify-lemmas", "--trials", "200", "--out", "l.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = String::from_utf8_lossy(&out.stdout);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    assert_eq!(roc(&["verify-lemmas", "--trials", "0"], dir.path()).status.code(), Some(3));
}
