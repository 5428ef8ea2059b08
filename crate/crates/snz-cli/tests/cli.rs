//! End-to-end tests of the `snz` binary: the full subcommand chain on a
//! small synthetic corpus, plus the documented error exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn snz(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snz"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = snz(
        &["synth", "--seed", "3", "--count", "3", "--duration", "600", "--out-dir", "raw"],
        root,
    );
    assert_ok(&out, "synth");
    assert!(root.join("raw/synth-00000003-clean.snz").exists());
    assert!(root.join("raw/synth-00000003-degraded.snz").exists());
    assert!(root.join("raw/synth-00000003-truth.snz").exists());

    let out = snz(
        &[
            "extract",
            "raw/synth-00000003-clean.snz",
            "raw/synth-00000004-clean.snz",
            "raw/synth-00000005-clean.snz",
            "--out-dir",
            "comp",
        ],
        root,
    );
    assert_ok(&out, "extract");

    let out = snz(
        &[
            "augment",
            "comp/synth-00000003-clean-components.snz",
            "--output",
            "aug.snz",
            "--seed",
            "9",
        ],
        root,
    );
    assert_ok(&out, "augment");

    let out = snz(
        &[
            "train",
            "--train-dir",
            "comp",
            "--checkpoint",
            "model.snz",
            "--log",
            "train.csv",
            "--preset",
            "tiny",
            "--epochs",
            "2",
            "--steps-per-epoch",
            "4",
            "--batch-size",
            "2",
            "--crop-epochs",
            "8",
            "--lr",
            "0.001",
            "--seed",
            "1",
        ],
        root,
    );
    assert_ok(&out, "train");
    let log = std::fs::read_to_string(root.join("train.csv")).unwrap();
    assert!(log.starts_with("step,loss,val_acc,val_kappa,val_mf1,val_wf1"));
    assert_eq!(log.lines().count(), 3);

    let out = snz(
        &[
            "infer",
            "--checkpoint",
            "model.snz",
            "comp/synth-00000003-clean-components.snz",
            "--output",
            "hypnogram.csv",
        ],
        root,
    );
    assert_ok(&out, "infer");
    let hyp = std::fs::read_to_string(root.join("hypnogram.csv")).unwrap();
    assert!(hyp.starts_with("epoch,stage_code,stage"));
    assert_eq!(hyp.lines().count(), 21); // header + 20 epochs

    let out = snz(
        &["eval", "--checkpoint", "model.snz", "comp", "--metrics", "metrics.csv"],
        root,
    );
    assert_ok(&out, "eval");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ACC") && stdout.contains("kappa"), "{stdout}");
    let metrics = std::fs::read_to_string(root.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("acc,kappa,mf1,wf1,epochs"));

    let out = snz(&["inspect", "comp/synth-00000003-clean-components.snz"], root);
    assert_ok(&out, "inspect");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("component set: OK"), "{stdout}");
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for sub in ["a", "b"] {
        let out = snz(
            &["synth", "--seed", "7", "--count", "1", "--duration", "300", "--out-dir", sub],
            root,
        );
        assert_ok(&out, "synth");
    }
    for name in ["synth-00000007-clean.snz", "synth-00000007-degraded.snz", "synth-00000007-truth.snz"]
    {
        let a = std::fs::read(root.join("a").join(name)).unwrap();
        let b = std::fs::read(root.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn error_exit_codes_are_documented_values() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // 3: malformed bundle (wrong magic)
    std::fs::write(root.join("bad.snz"), b"XXXX\x02\x00\x00\x00ab").unwrap();
    let out = snz(&["inspect", "bad.snz"], root);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // 4: missing input
    let out = snz(&["eval", "--checkpoint", "nope.snz", "missing-dir"], root);
    assert_eq!(out.status.code(), Some(4));

    // 5: config violation
    let out = snz(&["synth", "--duration", "5", "--out-dir", "."], root);
    assert_eq!(out.status.code(), Some(5));

    // 2: clap usage error
    let out = snz(&["no-such-command"], root);
    assert_eq!(out.status.code(), Some(2));

    // 4: extracting a bundle that lacks the required channel
    let out = snz(
        &["synth", "--seed", "1", "--count", "1", "--duration", "300", "--out-dir", "."],
        root,
    );
    assert_ok(&out, "synth");
    let out = snz(
        &["extract", "synth-00000001-clean.snz", "--source", "bed-sensor", "--out-dir", "."],
        root,
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_is_honored_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("bad.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    let out = snz(
        &["synth", "--config", "bad.toml", "--out-dir", ".", "--duration", "300"],
        root,
    );
    assert_eq!(out.status.code(), Some(5), "unknown config keys must be rejected");

    std::fs::write(root.join("ok.toml"), "[synth]\nduration_s = 300.0\n").unwrap();
    let out = snz(&["synth", "--config", "ok.toml", "--seed", "2", "--out-dir", "cfg"], root);
    assert_ok(&out, "synth with config");
    assert!(root.join("cfg/synth-00000002-clean.snz").exists());
}
