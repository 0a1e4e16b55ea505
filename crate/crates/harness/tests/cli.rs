use std::path::{Path, PathBuf};
use std::process::Command;

fn besfs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_besfs"))
}

fn script(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts").join(name)
}

fn exit_code(args: &[&str]) -> i32 {
    besfs().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn run_exit_codes_follow_mode() {
    let bfs = script("vote_log.bfs");
    let toml = script("vote_log.toml");
    let (bfs, toml) = (bfs.to_str().unwrap(), toml.to_str().unwrap());
    assert_eq!(exit_code(&["run", bfs]), 0);
    assert_eq!(exit_code(&["run", bfs, "--mode", "unprotected", "--adv-config", toml]), 1);
    assert_eq!(exit_code(&["run", bfs, "--mode", "adv", "--adv-config", toml]), 2);
    assert_eq!(exit_code(&["run", bfs, "--mode", "adv"]), 1);
    assert_eq!(exit_code(&["run", "/nonexistent.bfs"]), 1);
}

#[test]
fn run_on_posix_backend_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let store = format!("posix:{}", dir.path().join("store").display());
    let out = besfs()
        .args(["run", script("compat_workload.bfs").to_str().unwrap(), "--backend", &store, "-o", report.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["summary"]["passed"], true);
    assert!(dir.path().join("store/pages").is_dir());
}

#[test]
fn adversarial_reports_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let path = dir.path().join(out);
        besfs()
            .args([
                "run",
                script("mmap_prev_size.bfs").to_str().unwrap(),
                "--mode",
                "adv",
                "--adv-config",
                script("mmap_prev_size.toml").to_str().unwrap(),
                "--seed",
                "77",
                "-o",
                path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("a.json");
    assert!(a.contains("NonZeroMmap"));
    assert_eq!(a, run("b.json"));
}

#[test]
fn gen_is_deterministic_and_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed: &str, out: &str| {
        let path = dir.path().join(out);
        let st = besfs().args(["gen", "--seed", seed, "--len", "30", "-o", path.to_str().unwrap()]).status().unwrap();
        assert!(st.success());
        std::fs::read_to_string(path).unwrap()
    };
    let a = gen("9", "a.bfs");
    assert_eq!(a, gen("9", "b.bfs"));
    assert_ne!(a, gen("10", "c.bfs"));
    assert_eq!(besfs_harness::script::Script::parse(&a).unwrap().lines.len(), 30);
    assert_eq!(exit_code(&["run", dir.path().join("a.bfs").to_str().unwrap()]), 0);
}

#[test]
fn campaign_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 3\nscripts = 20\n[generator]\nlength = 20\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["campaign", "--config", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]), 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(json["scripts"], 20);
    assert_eq!(json["missed"], 0);
}
