use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
object_width = 24
object_height = 24
window = 12
probe_radius = 3.5
scan_step = 4
warmup = 4
refinement = 6
realizations = 3
schemes = [1, 2, 15]
photons = 1e4
"#;

fn cli(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptychonoise")).args(args).output().unwrap()
}

fn run(args: &[&str], dir: &Path) -> Output {
    let args: Vec<std::ffi::OsString> = args
        .iter()
        .map(|a| if let Some(rest) = a.strip_prefix('@') { dir.join(rest).into_os_string() } else { a.into() })
        .collect();
    let refs: Vec<&std::ffi::OsStr> = args.iter().map(|a| a.as_os_str()).collect();
    cli(&refs)
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

#[test]
fn bench_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = run(&["bench", "--config", "@c.toml", "--out", "@res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let msg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(msg["written"].as_array().unwrap().len(), 3);

    let summary = std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "id,rule,functional,mu,median,mean,std,min,max,n,failures,config_hash");
    let ids: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["1", "2", "15"]);

    let out = run(&["compare", "--record", "@res/record.json", "--baseline", "1", "--candidate", "15"], dir.path());
    assert!(out.status.success());
    let cmp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cmp["pairs"], 3);
    let p = cmp["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn simulate_then_reconstruct_matches_bench_cell() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    assert!(run(&["simulate", "--config", "@c.toml", "--realization", "2", "--out", "@sim.json"], dir.path()).status.success());
    let out = run(&["reconstruct", "--dataset", "@sim.json", "--scheme", "15", "--out", "@rec.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rec.json")).unwrap()).unwrap();
    assert_eq!(rec["sweeps"], 10);

    assert!(run(&["bench", "--config", "@c.toml", "--out", "@res"], dir.path()).status.success());
    let curves = std::fs::read_to_string(dir.path().join("res/curves.csv")).unwrap();
    let last = curves.lines().find(|l| l.starts_with("15,2,10,")).unwrap();
    let bench_error: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(rec["final_error"].as_f64().unwrap(), bench_error);
}

#[test]
fn failures_print_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "photons = 1e4\nwarmup_sweeps = 3\n").unwrap();
    let e = error_line(&run(&["bench", "--config", "@bad.toml", "--out", "@res"], dir.path()));
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("warmup_sweeps"));

    let e = error_line(&run(&["simulate", "--config", "@missing.toml", "--out", "@x.json"], dir.path()));
    assert_eq!(e["error"]["kind"], "io");

    std::fs::write(dir.path().join("ok.toml"), CONFIG).unwrap();
    let e = error_line(&run(&["bench", "--config", "@ok.toml"], dir.path()));
    assert_eq!(e["error"]["kind"], "config");

    std::fs::write(dir.path().join("junk.json"), "[1, 2]").unwrap();
    let e = error_line(&run(&["reconstruct", "--dataset", "@junk.json", "--scheme", "1", "--out", "@r.json"], dir.path()));
    assert_eq!(e["error"]["kind"], "format");
    assert!(!dir.path().join("r.json").exists());

    let out = run(&["reconstruct", "--dataset", "@junk.json", "--scheme", "frog", "--out", "@r.json"], dir.path());
    assert!(!out.status.success());
}
