use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 9] = [
    "data.n_tasks=8",
    "train.grounding.epochs=1",
    "train.denoiser.epochs=1",
    "train.denoiser.hidden=[16,16]",
    "train.feasibility.epochs=1",
    "train.inverse.epochs=1",
    "eval.n_tasks=3",
    "eval.seeds=[0,1]",
    "eval.sweep=[0,0.5,0.75,1,1.25,1.5,1.75,2]",
];

fn hip(root: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hip"));
    cmd.arg("--out").arg(root).env("RUST_LOG", "error");
    for s in TINY {
        cmd.args(["--set", s]);
    }
    cmd.args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn invalid_configuration_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&hip(tmp.path(), &["--set", "eval.no_such_key=1", "gen-data"])), 1);
    assert_eq!(code(&hip(tmp.path(), &["--set", "guidance.omega=-1", "gen-data"])), 1);
    assert_eq!(code(&hip(tmp.path(), &["--mode", "sideways", "eval"])), 1);
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[env]\npick_radius = 0.5\n").unwrap();
    let o = hip(tmp.path(), &["--config", cfg.to_str().unwrap(), "gen-data"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("radii"));
}

#[test]
fn missing_inputs_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hip(tmp.path(), &["train"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing dataset"));
    let o = hip(tmp.path(), &["eval"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing checkpoint"));
}

#[test]
fn full_run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    for step in [&["gen-data"][..], &["train"], &["--mode", "all", "eval"], &["sweep"]] {
        let o = hip(root, step);
        assert_eq!(code(&o), 0, "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let eval = fs::read_to_string(root.join("reports/eval.csv")).unwrap();
    assert!(eval.starts_with('#'));
    let rows: Vec<&str> = eval.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "mode,seed,n_tasks,completion_rate,stderr");
    // five modes, two seeds plus an aggregate row each
    assert_eq!(rows.len(), 1 + 5 * 3);
    assert_eq!(rows.iter().filter(|r| r.contains(",all,")).count(), 5);

    let sweep = fs::read_to_string(root.join("reports/sweep.csv")).unwrap();
    let rows: Vec<&str> = sweep.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 8);

    let ck = root.join("checkpoints/denoiser.ckpt");
    let o = Command::new(env!("CARGO_BIN_EXE_hip")).arg("inspect").arg(&ck).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("role: denoiser"), "{text}");
    assert!(root.join("checkpoints/grounding_loss.csv").exists());
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("x.ckpt");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hip")).arg("inspect").arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
}
