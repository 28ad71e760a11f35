use std::path::Path;
use std::process::{Command, Output};

fn fusemod(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusemod"))
        .args(args)
        .current_dir(dir)
        .env_remove("FUSEMOD_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fusemod(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> Vec<&'a str> {
    text.split_whitespace().filter_map(|t| t.strip_prefix(key).and_then(|t| t.strip_prefix('='))).collect()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn annotate_synthetic_drive() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "drive", "--out", "raw"]);
    let text = ok(d, &["annotate", "raw", "--out", "ann"]);
    assert_eq!(field(&text, "moving"), ["5"]);
    assert_eq!(field(&text, "static"), ["5"]);
    assert!(d.join("ann/manifest.txt").is_file());
    assert_eq!(std::fs::read_dir(d.join("ann/2011_09_26_drive_0001_sync/mask")).unwrap().count(), 5);
}

#[test]
fn threshold_flag_beats_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "drive", "--out", "raw"]);
    std::fs::write(d.join("run.toml"), "[annotation]\nthreshold = 10.0\n").unwrap();
    let from_file = ok(d, &["--config", "run.toml", "annotate", "raw", "--out", "a"]);
    assert_eq!(field(&from_file, "moving"), ["0"]);
    let from_flag = ok(d, &["--config", "run.toml", "annotate", "raw", "--out", "b", "--threshold", "2.5"]);
    assert_eq!(field(&from_flag, "moving"), ["5"]);
}

#[test]
fn missing_calibration_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "drive", "--out", "raw"]);
    std::fs::remove_file(d.join("raw/2011_09_26_drive_0001_sync/calib_cam_to_cam.txt")).unwrap();
    let out = fusemod(d, &["annotate", "raw", "--out", "ann"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calib_cam_to_cam.txt"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[model]\nlearning_rate = 0.1\n").unwrap();
    let out = fusemod(d, &["--config", "bad.toml", "bench"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
    assert_eq!(fusemod(d, &["bench", "--plans", "rgb + sonar"]).status.code(), Some(2));
    assert_eq!(fusemod(d, &["--config", "missing.toml", "bench"]).status.code(), Some(2));
    assert_eq!(fusemod(d, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.toml"), "seed = 4\n").unwrap();
    let synth = |out: &str, seed: Option<&str>, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fusemod"));
        cmd.current_dir(d).env_remove("FUSEMOD_SEED").args(["--config", "run.toml", "synth", "--scenes", "2", "--out", out]);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        if let Some(e) = env {
            cmd.env("FUSEMOD_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        tree(&d.join(out))
    };
    let file = synth("file", None, None);
    let env = synth("env", None, Some("7"));
    let flag = synth("flag", Some("4"), Some("7"));
    let explicit7 = synth("seven", Some("7"), None);
    assert_ne!(file, env);
    assert_eq!(file, flag);
    assert_eq!(env, explicit7);
}

#[test]
fn train_infer_eval_round_trip_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--scenes", "5", "--out", "ds"]);
    let args = |out: &'static str| {
        ["train", "--manifest", "ds/manifest.txt", "--out", out, "--plan", "rgb + rgbflow + lidarflow", "--epochs", "2"]
            .into_iter()
            .chain(["--checkpoint-every", "1", "--lr", "0.01"])
            .collect::<Vec<_>>()
    };
    let first = ok(d, &args("r1"));
    assert_eq!(field(&first, "encoders"), ["3"]);
    ok(d, &args("r2"));
    assert_eq!(tree(&d.join("r1")), tree(&d.join("r2")));
    assert_eq!(tree(&d.join("r1/checkpoints")).len(), 2);

    ok(d, &["infer", "--checkpoint", "r1/model.ckpt", "--manifest", "ds/manifest.txt", "--out", "pred"]);
    let via_pred = ok(d, &["eval", "--pred", "pred", "--manifest", "ds/manifest.txt"]);
    let via_ckpt = ok(d, &["eval", "--checkpoint", "r1/model.ckpt", "--manifest", "ds/manifest.txt"]);
    assert_eq!(field(&via_pred, "miou"), field(&via_ckpt, "miou"));
}

#[test]
fn eval_identical_dirs_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "drive", "--out", "raw"]);
    ok(d, &["annotate", "raw", "--out", "ann"]);
    let m = "ann/2011_09_26_drive_0001_sync/mask";
    let text = ok(d, &["eval", "--pred", m, "--truth", m]);
    assert_eq!(field(&text, "miou"), ["100.00"]);
    assert_eq!(field(&text, "moving_iou"), ["100.00"]);
}

#[test]
fn help_lists_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 6] = [
        ("annotate", &["seed", "workers", "paths.out_dir", "annotation.threshold", "annotation.velocity_mode"]),
        ("synth", &["synth.kind", "synth.low_light", "annotation.split_seed"]),
        ("train", &["model.plan", "model.lr", "model.crop", "paths.manifest"]),
        ("infer", &["eval.split", "model.crop"]),
        ("eval", &["eval.split", "paths.manifest"]),
        ("bench", &["eval.bench_plans", "eval.iterations", "model.encoder"]),
    ];
    for (cmd, keys) in cases {
        let text = ok(tmp.path(), &[cmd, "--help"]);
        for k in keys {
            assert!(text.contains(k), "{cmd} --help lacks {k}");
        }
    }
}
