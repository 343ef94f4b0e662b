use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SIDE: usize = 28;

/// Deterministic bar-and-blob glyphs; bytes only, 28×28.
fn glyph(seed: usize) -> Vec<u8> {
    let mut img = vec![0u8; SIDE * SIDE];
    let r0 = 6 + seed % 7;
    let c0 = 5 + (seed * 3) % 9;
    let len = 8 + seed % 6;
    for k in 0..len {
        let (r, c) = (r0 + k, c0 + (k * (seed % 3)) / 4);
        for dc in 0..3 {
            img[r * SIDE + c + dc] = 255;
        }
    }
    for dr in 0..4 {
        for dc in 0..4 {
            img[(r0 + dr) * SIDE + c0 + 6 + dc] = 180;
        }
    }
    img
}

fn idx(count: usize, offset: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0000_0803u32, count as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..count {
        out.extend(glyph(i + offset));
    }
    out
}

fn fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mnist = dir.path().join("data").join("mnist");
    std::fs::create_dir_all(&mnist).unwrap();
    std::fs::write(mnist.join("train-images-idx3-ubyte"), idx(24, 0)).unwrap();
    std::fs::write(mnist.join("t10k-images-idx3-ubyte"), idx(6, 100)).unwrap();
    dir
}

fn phaseret(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseret"))
        .args(args)
        .arg("--data-root")
        .arg(dir.join("data"))
        .env_remove("PHASERET_DATA_ROOT")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn solve_writes_config_report_and_grid() {
    let dir = fixture();
    let out = dir.path().join("solve");
    let o = out.to_str().unwrap();
    ok(phaseret(dir.path(), &["solve", "--method", "raar", "--iters", "30", "--restarts", "2", "--out", o]));
    let run = json(out.join("run.json"));
    assert_eq!(run["method"], "raar");
    assert_eq!(run["solver"]["iterations"], 30);
    let report = json(out.join("report.json"));
    assert_eq!(report[0]["count"], 6);
    assert_eq!(report[0]["method"], "raar");
    let mse = report[0]["mean_mse"].as_f64().unwrap();
    assert!(mse.is_finite() && mse >= 0.0);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join("grids").join("raar.png").is_file());
}

#[test]
fn single_thread_runs_are_identical() {
    let dir = fixture();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let args = ["solve", "--method", "hio", "--iters", "25", "--threads", "1", "--seed", "7"];
        ok(phaseret(dir.path(), &[&args[..], &["--out", out.to_str().unwrap()]].concat()));
        std::fs::read(out.join("report.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = fixture();
    let cfg = dir.path().join("settings.conf");
    std::fs::write(&cfg, "# solver settings\nmethod = er\niters = 12\nsubset = 2\n").unwrap();
    let out = dir.path().join("cfg");
    ok(phaseret(
        dir.path(),
        &["solve", "--config", cfg.to_str().unwrap(), "--iters", "5", "--out", out.to_str().unwrap()],
    ));
    let run = json(out.join("run.json"));
    assert_eq!(run["method"], "er");
    assert_eq!(run["solver"]["iterations"], 5);
    assert_eq!(json(out.join("report.json"))[0]["count"], 2);

    let again = dir.path().join("again");
    ok(phaseret(
        dir.path(),
        &["solve", "--config", out.join("run.json").to_str().unwrap(), "--out", again.to_str().unwrap()],
    ));
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(again.join("report.json")).unwrap()
    );
}

#[test]
fn train_then_eval_a_checkpoint() {
    let dir = fixture();
    let out = dir.path().join("train");
    ok(phaseret(
        dir.path(),
        &["train", "--method", "mlp", "--epochs", "2", "--batch-size", "8", "--out", out.to_str().unwrap()],
    ));
    let ckpt = out.join("checkpoints").join("last");
    assert!(ckpt.join("manifest.json").is_file());
    let history = json(out.join("checkpoints").join("history.json"));
    assert_eq!(history.as_array().unwrap().len(), 2);

    let eval = dir.path().join("eval");
    let stdout = ok(phaseret(
        dir.path(),
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--out", eval.to_str().unwrap()],
    ))
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("mlp"));
    assert_eq!(json(eval.join("report.json"))[0]["count"], 6);
    assert!(eval.join("grids").join("stage1.png").is_file());
}

#[test]
fn demo_swap_summarizes_every_image() {
    let dir = fixture();
    let out = dir.path().join("swap");
    ok(phaseret(dir.path(), &["demo-swap", "--out", out.to_str().unwrap()]));
    let summary = json(out.join("swap.json"));
    assert_eq!(summary["count"], 6);
    assert_eq!(summary["per_image"].as_array().unwrap().len(), 6);
    assert!(out.join("grids").join("swap.png").is_file());
}

fn single_line_error(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).trim().to_string();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"), "{err}");
    err
}

#[test]
fn invalid_settings_fail_with_one_line() {
    let dir = fixture();
    let out = dir.path().join("bad");
    let o = out.to_str().unwrap();
    let err = single_line_error(&phaseret(dir.path(), &["solve", "--method", "cpr", "--out", o]));
    assert!(err.contains("cpr"), "{err}");
    single_line_error(&phaseret(dir.path(), &["solve", "--iters", "0", "--out", o]));
    single_line_error(&phaseret(dir.path(), &["train", "--lr=-1", "--out", o]));
    single_line_error(&phaseret(dir.path(), &["eval", "--out", o]));
    assert!(!out.join("run.json").exists());
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let err = single_line_error(&phaseret(dir.path(), &["solve", "--out", out.to_str().unwrap()]));
    assert!(err.contains("fetch_data.sh"), "{err}");
}
