//! End-to-end pipeline runs through the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> PathBuf {
    let mut path = PathBuf::from(env!("CARGO_BIN_EXE_ctrlgs"));
    if !path.exists() {
        path = PathBuf::from("target/debug/ctrlgs");
    }
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("failed to spawn ctrlgs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_error_class(args: &[&str], class: &str) {
    let out = run(args);
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or("");
    assert!(
        line.contains(&format!("error[{class}]")),
        "expected error[{class}] from {args:?}, got: {stderr}"
    );
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_runs_without_manual_edits() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let flow = dir.path().join("flow.txt");
    let windows = dir.path().join("windows.txt");
    let rundir = dir.path().join("run");
    let renders = dir.path().join("renders");
    let eval_csv = dir.path().join("eval.csv");

    run_ok(&[
        "gen",
        "--preset",
        "two-burst",
        "--out",
        &path_str(&scene),
        "--seed",
        "3",
        "--frames",
        "16",
        "--resolution",
        "32",
        "--gaussians",
        "40",
    ]);
    assert!(scene.join("manifest.json").is_file());
    assert!(scene.join("tracks.txt").is_file());

    let manifest = scene.join("manifest.json");
    run_ok(&[
        "flow",
        "--manifest",
        &path_str(&manifest),
        "--out",
        &path_str(&flow),
        "--csv",
        &path_str(&dir.path().join("flow.csv")),
    ]);
    assert!(flow.is_file());

    run_ok(&[
        "segment",
        "--flow",
        &path_str(&flow),
        "--method",
        "threshold",
        "--windows",
        "3",
        "--out",
        &path_str(&windows),
    ]);
    assert!(windows.is_file());

    let out = run_ok(&[
        "train",
        "--manifest",
        &path_str(&manifest),
        "--windows",
        &path_str(&windows),
        "--out",
        &path_str(&rundir),
        "--iterations",
        "60",
        "--set",
        "warmup_iterations=20",
        "--set",
        "init_count=40",
        "--set",
        "eval_interval=30",
    ]);
    assert!(out.contains("trained 60 iterations"), "{out}");
    let ckpt = rundir.join("model.ckpt");
    assert!(ckpt.is_file());
    assert!(rundir.join("metrics.csv").is_file());
    assert!(rundir.join("config.toml").is_file());

    run_ok(&[
        "render",
        "--checkpoint",
        &path_str(&ckpt),
        "--manifest",
        &path_str(&manifest),
        "--out",
        &path_str(&renders),
        "--times",
        "0.0,0.5,1.0",
    ]);
    assert!(renders.join("render_t0.500000.pfm").is_file());

    let out = run_ok(&[
        "eval",
        "--checkpoint",
        &path_str(&ckpt),
        "--manifest",
        &path_str(&manifest),
        "--split",
        "val",
        "--out",
        &path_str(&eval_csv),
    ]);
    assert!(out.contains("aggregate"), "{out}");
    let csv = std::fs::read_to_string(&eval_csv).unwrap();
    assert!(csv.starts_with("frame,t,psnr,ssim,ms_ssim"));
}

#[test]
fn flow_output_reingests_without_loss() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run_ok(&[
        "gen", "--preset", "two-burst", "--out", &path_str(&scene),
        "--seed", "9", "--frames", "10", "--resolution", "24", "--gaussians", "20",
    ]);
    let flow = dir.path().join("flow.txt");
    run_ok(&[
        "flow", "--manifest", &path_str(&scene.join("manifest.json")),
        "--out", &path_str(&flow),
    ]);
    // Re-ingesting through segment must succeed for all methods.
    for method in ["equal", "nhighest", "threshold"] {
        run_ok(&[
            "segment", "--flow", &path_str(&flow), "--method", method,
            "--windows", "3", "--out", &path_str(&dir.path().join(format!("w_{method}.txt"))),
        ]);
    }
    // The file round-trips exactly.
    let text = std::fs::read_to_string(&flow).unwrap();
    let reparsed: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.parse().unwrap())
        .collect();
    let rewritten: String = std::iter::once("frame_pair_flow_v1".to_string())
        .chain(reparsed.iter().map(|m| format!("{m}")))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    assert_eq!(text, rewritten);
}

#[test]
fn static_scene_produces_zero_flow() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run_ok(&[
        "gen", "--preset", "static", "--out", &path_str(&scene),
        "--seed", "4", "--frames", "6", "--resolution", "24", "--gaussians", "15",
    ]);
    // Static preset still orbits the camera; freeze motion by reusing the
    // same frame through --frames-dir with copies of frame 0.
    let frames_dir = dir.path().join("frames");
    std::fs::create_dir_all(&frames_dir).unwrap();
    for i in 0..4 {
        std::fs::copy(
            scene.join("images/frame_0000.pfm"),
            frames_dir.join(format!("copy_{i}.pfm")),
        )
        .unwrap();
    }
    let flow = dir.path().join("flow.txt");
    run_ok(&["flow", "--frames-dir", &path_str(&frames_dir), "--out", &path_str(&flow)]);
    let text = std::fs::read_to_string(&flow).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.trim().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn usage_errors_have_machine_parseable_classes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run_ok(&[
        "gen", "--preset", "two-burst", "--out", &path_str(&scene),
        "--seed", "5", "--frames", "8", "--resolution", "24", "--gaussians", "10",
    ]);
    let manifest = scene.join("manifest.json");
    let flow = dir.path().join("flow.txt");
    run_ok(&["flow", "--manifest", &path_str(&manifest), "--out", &path_str(&flow)]);

    // N = 0 windows.
    expect_error_class(
        &["segment", "--flow", &path_str(&flow), "--method", "equal", "--windows", "0",
          "--out", &path_str(&dir.path().join("w.txt"))],
        "invalid-parameter",
    );
    // Dynamic method without flow.
    expect_error_class(
        &["segment", "--method", "threshold", "--windows", "3",
          "--out", &path_str(&dir.path().join("w.txt"))],
        "usage",
    );
    // Segment-head training without windows.
    expect_error_class(
        &["train", "--manifest", &path_str(&manifest), "--out",
          &path_str(&dir.path().join("run")), "--iterations", "5"],
        "usage",
    );
    // Unknown config key.
    expect_error_class(
        &["train", "--manifest", &path_str(&manifest), "--out",
          &path_str(&dir.path().join("run")), "--set", "bogus_key=1"],
        "config",
    );
    // Unreadable manifest.
    expect_error_class(
        &["flow", "--manifest", &path_str(&dir.path().join("missing.json")),
          "--out", &path_str(&dir.path().join("f.txt"))],
        "ingestion",
    );
    // Render at out-of-range timestamp.
    let rundir = dir.path().join("run_ok");
    run_ok(&[
        "train", "--manifest", &path_str(&manifest), "--out",
        &path_str(&rundir), "--iterations", "4", "--no-segment-heads",
        "--set", "init_count=10", "--set", "warmup_iterations=2",
    ]);
    expect_error_class(
        &["render", "--checkpoint", &path_str(&rundir.join("model.ckpt")),
          "--manifest", &path_str(&manifest), "--out",
          &path_str(&dir.path().join("r")), "--times", "1.5"],
        "usage",
    );
    // Eval with an empty split (manifest has no explicit val tags when
    // loaded without auto-split... the generated manifest has tags, so ask
    // for a split the checkpoint dataset lacks by evaluating train-only
    // manifest copies).
    expect_error_class(
        &["eval", "--checkpoint", &path_str(&rundir.join("model.ckpt")),
          "--manifest", &path_str(&manifest), "--split", "bogus"],
        "usage",
    );
}

#[test]
fn render_from_zero_init_checkpoint_is_time_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run_ok(&[
        "gen", "--preset", "two-burst", "--out", &path_str(&scene),
        "--seed", "6", "--frames", "8", "--resolution", "24", "--gaussians", "12",
    ]);
    let manifest = scene.join("manifest.json");
    let windows = dir.path().join("w.txt");
    run_ok(&["segment", "--method", "equal", "--windows", "4", "--out", &path_str(&windows)]);
    // Zero learning rates: decoder output layers stay zero-initialized, so
    // the deformation is the identity at every timestamp.
    let rundir = dir.path().join("run");
    run_ok(&[
        "train", "--manifest", &path_str(&manifest), "--windows", &path_str(&windows),
        "--out", &path_str(&rundir), "--iterations", "3",
        "--set", "init_count=12", "--set", "lr_means=0.0", "--set", "lr_grids=0.0",
        "--set", "lr_networks=0.0", "--set", "lr_opacity=0.0", "--set", "lr_scales=0.0",
        "--set", "lr_rotations=0.0", "--set", "lr_sh=0.0", "--set", "warmup_iterations=0",
    ]);
    let renders = dir.path().join("renders");
    run_ok(&[
        "render", "--checkpoint", &path_str(&rundir.join("model.ckpt")),
        "--manifest", &path_str(&manifest), "--out", &path_str(&renders),
        "--times", "0.1,0.9",
    ]);
    let a = std::fs::read(renders.join("render_t0.100000.pfm")).unwrap();
    let b = std::fs::read(renders.join("render_t0.900000.pfm")).unwrap();
    assert_eq!(a, b, "identity deformation must render identically at all t");
}
