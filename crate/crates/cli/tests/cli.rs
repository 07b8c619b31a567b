use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi-pomdp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

const SMALL: [&str; 8] = ["--lambda", "0.1", "--battery", "1", "--delta-max", "16", "--m", "8"];

#[test]
fn solve_reports_c_star_depth_and_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[&["solve"][..], &SMALL].concat(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path().join("solve.json"))).unwrap();
    assert!(json["c_star"].as_f64().unwrap() > 0.0);
    assert_eq!(json["m"], 8);
    assert!(json["iterations"].as_u64().unwrap() > 0);
    assert_eq!(json["config"]["params"]["lambda"], 0.1);
    for name in ["policy.csv", "values.csv", "beliefs.csv"] {
        let text = String::from_utf8(read(dir.path().join(name))).unwrap();
        assert!(text.starts_with("# aoi-pomdp "), "{name} lacks the provenance line");
    }
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let args = [&["simulate"][..], &SMALL, &["--slots", "4000", "--episodes", "3", "--seed", "9", "--trace-slots", "50"]].concat();
        assert!(run(&args, d.path()).status.success());
        assert!(run(&[&["solve"][..], &SMALL].concat(), d.path()).status.success());
    }
    for name in ["simulate.json", "trace.csv", "solve.json", "policy.csv", "values.csv", "beliefs.csv"] {
        assert_eq!(read(dirs[0].path().join(name)), read(dirs[1].path().join(name)), "{name} differs");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"lambda": 0.1, "batery": 3}"#).unwrap();
    let out = run(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batery"));
}

#[test]
fn zero_harvest_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--lambda", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
    assert!(!dir.path().join("solve.json").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"lambda": 0.5, "battery": 1, "delta_max": 16, "m": 8}"#).unwrap();
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--lambda", "0.1"], dir.path());
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path().join("solve.json"))).unwrap();
    assert_eq!(json["config"]["params"]["lambda"], 0.1);
    assert_eq!(json["config"]["params"]["delta_max"], 16);
}

#[test]
fn policy_dump_never_commands_without_request() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["policy-dump", "--m", "auto"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(read(dir.path().join("policy_grid.csv"))).unwrap();
    let mut rows = text.lines().skip(2).map(|l| l.split(',').collect::<Vec<_>>());
    let idle: Vec<_> = rows.by_ref().filter(|r| r[0] == "0").collect();
    assert_eq!(idle.len(), 64);
    assert!(idle.iter().all(|r| r[2..].iter().all(|&a| a == "0")));
    let thresholds: serde_json::Value = serde_json::from_slice(&read(dir.path().join("thresholds.json"))).unwrap();
    assert_eq!(thresholds["monotone_in_age"], true);
}

#[test]
fn sweep_writes_one_row_per_point_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        &["sweep"][..],
        &SMALL,
        &["--param", "p", "--values", "0.3,0.6", "--policy", "pomdp,greedy", "--slots", "2000", "--episodes", "2"],
    ]
    .concat();
    let out = run(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(read(dir.path().join("sweep.csv"))).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[1], "parameter,value,policy,mean,stderr,command_rate");
    assert_eq!(lines.len(), 2 + 4);
    assert!(lines[2].starts_with("p,0.3,pomdp,"));
}

#[test]
fn sweep_rejects_unknown_axis_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sweep", "--param", "theta", "--values", "0.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

#[test]
fn multi_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "multi", "--sensors", "4", "--budget", "2", "--battery", "1", "--delta-max", "8", "--m", "6",
        "--policy", "relax-truncate,greedy-n", "--slots", "3000", "--episodes", "2",
    ];
    let out = run(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(read(dir.path().join("multi.csv"))).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[0], "4");
        assert!(r[7].parse::<usize>().unwrap() <= 2);
    }
}
