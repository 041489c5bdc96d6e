//! Command-line surface: exit codes, manifests, and run-level determinism.

use std::path::Path;
use std::process::Command;

fn frailt(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_frailt"))
        .args(args)
        .current_dir(dir)
        .env_remove("EVAL_API_KEY")
        .output()
        .expect("binary runs")
}

const FAST_TRAIN: &[&str] = &[
    "--dim", "32",
    "--steps", "6",
    "--set", "model.n_heads=4",
    "--set", "model.context_length=64",
    "--set", "train.batch_size=2",
    "--set", "train.warmup_steps=2",
    "--set", "train.eval_interval=3",
];

#[test]
fn identical_train_invocations_produce_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["train", "--arch", "1x2", "--seed", "7", "--out", out];
        args.extend_from_slice(FAST_TRAIN);
        let output = frailt(dir.path(), &args);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    let a = std::fs::read(dir.path().join("a/model.frlt")).unwrap();
    let b = std::fs::read(dir.path().join("b/model.frlt")).unwrap();
    assert_eq!(a, b, "same seed and config must give identical checkpoints");
}

#[test]
fn config_violations_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let output = frailt(
        dir.path(),
        &["train", "--set", "train.total_steps=\"many\"", "--out", "x"],
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("train.total_steps"), "{stderr}");

    let output = frailt(dir.path(), &["train", "--arch", "2x0", "--out", "x"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn compare_flag_asserts_budget_parity() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train", "--arch", "2x4", "--seed", "1", "--compare", "8", "--steps", "1",
        "--set", "train.warmup_steps=0",
        "--dim", "32",
        "--set", "model.n_heads=4",
        "--set", "model.context_length=32",
        "--set", "train.batch_size=1",
        "--out", "parity",
    ];
    args.dedup();
    let output = frailt(dir.path(), &args);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let output = frailt(
        dir.path(),
        &["train", "--arch", "2x4", "--compare", "4", "--out", "x"],
    );
    assert_eq!(output.status.code(), Some(2), "8 != 4 must be refused");
}

#[test]
fn bad_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.frlt"), b"not a checkpoint").unwrap();
    std::fs::write(dir.path().join("p.txt"), "A prompt.\n").unwrap();
    let output = frailt(
        dir.path(),
        &[
            "generate", "--checkpoint", "junk.frlt", "--prompts", "p.txt",
            "--out", "c.jsonl",
        ],
    );
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn insufficient_fit_points_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("points.csv"),
        "model,val_loss,grammar,creativity,consistency,plot,overall\na,2.0,5,5,5,5,5\n",
    )
    .unwrap();
    let output = frailt(
        dir.path(),
        &["fit", "--points", "points.csv", "--threshold", "1.0", "--out-dir", "f"],
    );
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn infinite_threshold_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("points.csv"),
        "model,val_loss,grammar,creativity,consistency,plot,overall\n\
         a,0.5,8,8,8,8,8\nb,1.5,5,5,5,5,5\nc,3.0,2,2,2,2,2\n",
    )
    .unwrap();
    let output = frailt(
        dir.path(),
        &["fit", "--points", "points.csv", "--threshold", "inf", "--out-dir", "f"],
    );
    assert!(output.status.success());
    let fit_csv = std::fs::read_to_string(dir.path().join("f/fit.csv")).unwrap();
    let overall = fit_csv.lines().nth(1).unwrap();
    assert!(overall.ends_with(",3"), "all 3 points kept: {overall}");
}

#[test]
fn manifest_is_written_before_artifacts_and_lists_them() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--arch", "1", "--seed", "9", "--out", "m"];
    args.extend_from_slice(FAST_TRAIN);
    let output = frailt(dir.path(), &args);
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 9);
    assert!(manifest["corpus_digest"].as_str().unwrap().starts_with("0x"));
    let artifacts: Vec<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for artifact in &artifacts {
        assert!(
            dir.path().join(artifact).exists(),
            "declared artifact {artifact} missing"
        );
    }
    assert!(artifacts.iter().any(|a| a.ends_with("model.frlt")));
    assert!(artifacts.iter().any(|a| a.ends_with("losses.csv")));
    // resolved config echoes the overrides
    assert_eq!(manifest["resolved_config"]["model"]["embedding_dim"], 32);
}

#[test]
fn reference_csv_has_40_rows() {
    let dir = tempfile::tempdir().unwrap();
    let output = frailt(dir.path(), &["reference", "--csv"]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.lines().count(), 41, "header + 40 rows");
    assert!(stdout.contains("frailt,1^8,1024,8,0.596"));
    assert!(stdout.contains("standard,8,64,8,1.067"));
}
