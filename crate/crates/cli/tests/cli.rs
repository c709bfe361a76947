//! End-to-end runs of the `affdrive` binary on tiny budgets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "seed": 3,
  "sac": {"hidden": [16, 16], "batch_size": 32, "learning_starts": 100, "buffer_capacity": 5000},
  "env": {"max_steps": 150},
  "eval": {"routes": 2, "repetitions": 2}
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_affdrive"));
    c.env_remove("AFFDRIVE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: PathBuf,
    ckpt: PathBuf,
}

fn trained() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let cfg = root.join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = root.join("train");
    ok(&["train", "--config", s(&cfg), "--steps", "400", "--checkpoint-every", "200", "--out", s(&out)]);
    Fixture { _dir: dir, ckpt: out.join("checkpoint.bin"), root, cfg }
}

#[test]
fn train_writes_checkpoints_curve_and_manifest() {
    let f = trained();
    let out = f.root.join("train");
    assert!(f.ckpt.is_file());
    assert!(out.join("checkpoints/step_000000200.bin").is_file());
    assert!(out.join("checkpoints/step_000000400.bin").is_file());
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(curve.starts_with("step,episode,episode_return"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["sac"]["hidden"], serde_json::json!([16, 16]));
}

#[test]
fn eval_and_rollout_are_reproducible() {
    let f = trained();
    let (a, b) = (f.root.join("eval_a"), f.root.join("eval_b"));
    ok(&["eval", "--config", s(&f.cfg), "--checkpoint", s(&f.ckpt), "--out", s(&a)]);
    ok(&["eval", "--config", s(&f.cfg), "--checkpoint", s(&f.ckpt), "--out", s(&b), "--jobs", "2"]);
    let csv = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 4 + 1);
    assert_eq!(std::fs::read_dir(a.join("traces")).unwrap().count(), 4);
    for name in ["route00_rep0.jsonl", "route01_rep1.jsonl"] {
        assert_eq!(std::fs::read(a.join("traces").join(name)).unwrap(), std::fs::read(b.join("traces").join(name)).unwrap());
    }

    let (r1, r2) = (f.root.join("ro1"), f.root.join("ro2"));
    for r in [&r1, &r2] {
        ok(&["rollout", "--config", s(&f.cfg), "--checkpoint", s(&f.ckpt), "--seed", "11", "--out", s(r)]);
    }
    assert_eq!(std::fs::read(r1.join("trace.jsonl")).unwrap(), std::fs::read(r2.join("trace.jsonl")).unwrap());
}

#[test]
fn eval_reads_route_file_and_reps() {
    let f = trained();
    let routes = f.root.join("routes.json");
    std::fs::write(&routes, r#"[{"start": 0, "goal": 5}]"#).unwrap();
    let out = f.root.join("eval");
    ok(&["eval", "--config", s(&f.cfg), "--checkpoint", s(&f.ckpt), "--routes", s(&routes), "--reps", "3", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
}

#[test]
fn export_dumps_frames_with_sidecars() {
    let f = trained();
    let out = f.root.join("export");
    ok(&["export", "--config", s(&f.cfg), "--checkpoint", s(&f.ckpt), "--every", "5", "--max-frames", "3", "--out", s(&out)]);
    let frames = out.join("frames");
    for step in [0, 5, 10] {
        let blob = frames.join(format!("frame_{step:06}.bin"));
        assert_eq!(std::fs::metadata(&blob).unwrap().len(), 24 + 4 * 3 * 256 * 256);
        let side: serde_json::Value =
            serde_json::from_slice(&std::fs::read(blob.with_extension("json")).unwrap()).unwrap();
        assert_eq!(side["step"], step);
        assert_eq!(side["shape"], serde_json::json!([3, 256, 256]));
    }
}

#[test]
fn ablate_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("ablate");
    let o = run(&[
        "ablate", "--config", s(&cfg), "--preset", "sparse-rule", "--seeds", "1,2", "--steps", "200", "--reps", "1",
        "--check", "--out", s(&out),
    ]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 4, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("seed,preset,route_completion,episode_return"));
    assert_eq!(rows.len(), 1 + 4 + 2);
    assert!(rows.iter().any(|r| r.starts_with("mean,sparse-rule,")));
    assert!(out.join("full_seed2/checkpoint.bin").is_file());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let target = dir.path().join("from_env");
    let o = bin()
        .args(["train", "--config", s(&cfg), "--steps", "50", "--checkpoint-every", "0"])
        .env("AFFDRIVE_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("checkpoint.bin").is_file());
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"reward": {"w_lane": 1.0}}"#).unwrap();
    let o = run(&["train", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("w_lane"));

    std::fs::write(&bad, r#"{"sac": {"tau": 2.0}}"#).unwrap();
    let o = run(&["train", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sac.tau"));

    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["ablate", "--preset", "nope"]).status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_3_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.bin");
    let o = run(&["eval", "--checkpoint", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)));
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("train", &["--config", "--seed", "--out", "--steps", "--checkpoint-every", "--preset"]),
        ("eval", &["--config", "--seed", "--out", "--checkpoint", "--routes", "--reps", "--jobs"]),
        ("rollout", &["--config", "--seed", "--out", "--checkpoint", "--start", "--goal", "--stochastic"]),
        ("ablate", &["--config", "--seed", "--out", "--preset", "--seeds", "--steps", "--reps", "--jobs", "--check"]),
        ("export", &["--config", "--seed", "--out", "--checkpoint", "--every", "--max-frames"]),
    ];
    for (cmd, flags) in expected {
        let help = String::from_utf8(ok(&[cmd, "--help"]).stdout).unwrap();
        for f in *flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
        assert!(help.contains("AFFDRIVE_OUT"));
    }
}
