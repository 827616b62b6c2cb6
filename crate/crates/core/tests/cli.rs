use std::fs;
use std::path::Path;
use std::process::Command;

fn nlstree(dir: &Path, args: &[&str], config: &str) -> (i32, String, String) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nlstree"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .env_remove("NLSTREE_OUT_DIR")
        .env_remove("NLSTREE_CACHE_DIR")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: &str = "[series]\nmax_degree = 2\ngrid_points = 3\n[datum]\nradius = 1\n";

#[test]
fn enumerate_writes_trees() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = nlstree(d.path(), &["enumerate", "--out", "o", "--cache", "c"], "[trees]\nmax_k = 2\n");
    assert_eq!(code, 0, "{err}");
    let trees = fs::read_to_string(d.path().join("o/trees_k2.txt")).unwrap();
    assert_eq!(trees.lines().count(), 12);
    assert!(d.path().join("c/trees_k2.txt").exists());
    let counts = fs::read_to_string(d.path().join("o/tree_counts.csv")).unwrap();
    assert_eq!(counts.lines().nth(3).unwrap(), "2,3,3,12,true");
    let manifest = fs::read_to_string(d.path().join("o/manifest.toml")).unwrap();
    assert!(manifest.contains("subcommand = \"enumerate\""));
    assert!(manifest.contains("[config.trees]"));
}

#[test]
fn solve_zero_datum() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = nlstree(d.path(), &["solve"], "[datum]\nkind = \"zero\"\n[series]\nmax_degree = 3\n");
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(d.path().join("out/solution.csv")).unwrap();
    assert_eq!(csv, "t,n,re,im,degree_tail_estimate\n");
}

#[test]
fn compare_single_mode() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[datum]\nkind = \"single\"\namplitude = [0.3, 0.1]\n[series]\nmax_degree = 8\n[oracle]\ncutoff = 2\n";
    let (code, _, err) = nlstree(d.path(), &["compare"], cfg);
    assert_eq!(code, 0, "{err}");
    let summary = fs::read_to_string(d.path().join("out/compare_summary.csv")).unwrap();
    let max: f64 = summary.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(max <= 1e-8, "{max}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = nlstree(d.path(), &["solve"], "[run]\nomega = 3\n");
    assert_eq!(code, 1);
    assert!(err.contains("kind = \"validation\""));
    let (code, _, _) = nlstree(d.path(), &["solve"], "[series]\nmax_degree = 4\nterm_cap = 10\n");
    assert_eq!(code, 2);
    let (code, _, _) = nlstree(d.path(), &["enumerate"], "[trees]\nmax_k = 7\n");
    assert_eq!(code, 2);
    let (code, out, err) = nlstree(d.path(), &["diagnose"], "[diagnose]\nslope_min = 5.0\n[trees]\nmax_k = 1\n[series]\nmax_degree = 2\n");
    assert_eq!(code, 3, "{out}{err}");
    assert!(out.contains("FAIL smoothing_gap_loglog_slope"));
    let (code, _, _) = nlstree(d.path(), &["diagnose"], "[trees]\nmax_k = 1\n[series]\nmax_degree = 2\n");
    assert_eq!(code, 0);
}

#[test]
fn env_overrides_and_reruns() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("config.toml");
    fs::write(&cfg, SMALL).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_nlstree"))
            .args(["solve", "--config"])
            .arg(&cfg)
            .current_dir(d.path())
            .env("NLSTREE_OUT_DIR", d.path().join("env_out"))
            .env("NLSTREE_CACHE_DIR", d.path().join("env_cache"))
            .status()
            .unwrap();
        assert!(status.success());
        runs.push(fs::read(d.path().join("env_out/solution.csv")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    assert!(!d.path().join("out").exists());
    let manifest = fs::read_to_string(d.path().join("env_out/manifest.toml")).unwrap();
    assert!(manifest.contains("env_out"));
}
