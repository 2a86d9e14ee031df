use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn handoff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handoff"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/street.toml")
        .canonicalize()
        .unwrap()
}

fn generate(dir: &Path, episodes: usize, seed: u64) {
    let out = handoff(
        dir,
        &[
            "generate",
            "--config",
            config().to_str().unwrap(),
            "--episodes",
            &episodes.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            "data",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_writes_requested_episode_count() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 6, 7);
    let text = std::fs::read_to_string(dir.path().join("data/dataset.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("MCB=128 N=2 SEED=7 SCENARIO="));
    assert_eq!(lines.len(), 7);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("data/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "generate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["parameters"]["episodes"], "6");
}

#[test]
fn missing_or_bad_inputs_exit_with_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let code = |args: &[&str]| handoff(p, args).status.code().unwrap();

    assert_eq!(code(&["generate", "--out", "x"]), 4);
    assert_eq!(
        code(&["generate", "--config", "nope.toml", "--out", "x"]),
        2
    );
    std::fs::write(p.join("bad.toml"), "[street]\nlength = \"far\"\n").unwrap();
    assert_eq!(code(&["generate", "--config", "bad.toml", "--out", "x"]), 2);

    std::fs::write(
        p.join("bad.txt"),
        "MCB=4 N=2 SEED=0 SCENARIO=ab\nbeams=9;labels=0\n",
    )
    .unwrap();
    assert_eq!(code(&["train", "--dataset", "bad.txt", "--out", "m"]), 3);

    generate(p, 4, 1);
    assert_eq!(
        code(&[
            "train",
            "--dataset",
            "data/dataset.txt",
            "--epochs",
            "0",
            "--out",
            "m"
        ]),
        4
    );
    assert_eq!(
        code(&[
            "curve",
            "--config",
            config().to_str().unwrap(),
            "--sizes",
            "100,100000",
            "--seeds",
            "1",
            "--episodes",
            "3",
            "--test-size",
            "50",
            "--epochs",
            "1",
            "--out",
            "c",
        ]),
        4
    );
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p, 5, 3);
    let out = handoff(
        p,
        &[
            "train",
            "--dataset",
            "data/dataset.txt",
            "--epochs",
            "2",
            "--hidden",
            "8",
            "--embed",
            "4",
            "--seed",
            "5",
            "--out",
            "model",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = std::fs::read_to_string(p.join("model/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert_eq!(
        metrics.lines().next().unwrap(),
        "epoch,loss,train_acc,test_acc"
    );

    let out = handoff(
        p,
        &[
            "eval",
            "--checkpoint",
            "model/model.ckpt",
            "--dataset",
            "data/dataset.txt",
        ],
    );
    assert!(out.status.success());
    let printed = String::from_utf8(out.stdout).unwrap();
    let value: f64 = printed.trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&value));
    assert_eq!(printed.trim().split('.').nth(1).unwrap().len(), 4);

    // a codebook of a different size cannot be scored by this checkpoint
    std::fs::write(
        p.join("small.txt"),
        "MCB=64 N=2 SEED=0 SCENARIO=ab\nbeams=1,2;labels=0,1\n",
    )
    .unwrap();
    let out = handoff(
        p,
        &[
            "eval",
            "--checkpoint",
            "model/model.ckpt",
            "--dataset",
            "small.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn perfectly_fit_checkpoint_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("tiny.txt"),
        "MCB=4 N=2 SEED=0 SCENARIO=ab\n\
         beams=0,1,2,3;labels=0,0,1,1\n\
         beams=3,2,1,0;labels=1,1,0,0\n\
         beams=0,0,3,3;labels=0,0,1,1\n",
    )
    .unwrap();
    let out = handoff(
        p,
        &[
            "train",
            "--dataset",
            "tiny.txt",
            "--epochs",
            "300",
            "--hidden",
            "8",
            "--embed",
            "4",
            "--lr",
            "0.01",
            "--train-fraction",
            "0.5",
            "--out",
            "m",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = handoff(
        p,
        &[
            "eval",
            "--checkpoint",
            "m/model.ckpt",
            "--dataset",
            "tiny.txt",
        ],
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "1.0000");
}

#[test]
fn curve_outputs_rows_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = handoff(
        p,
        &[
            "curve",
            "--config",
            config().to_str().unwrap(),
            "--sizes",
            "200,400,600",
            "--seeds",
            "1,2",
            "--episodes",
            "8",
            "--test-size",
            "300",
            "--epochs",
            "1",
            "--hidden",
            "8",
            "--embed",
            "4",
            "--out",
            "c",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(p.join("c/curve.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "train_size,success_prob,seed");
    assert_eq!(rows.len(), 1 + 3 * 2);
    let mean = std::fs::read_to_string(p.join("c/curve_mean.csv")).unwrap();
    assert_eq!(mean.lines().next().unwrap(), "train_size,success_prob");
    assert_eq!(mean.lines().count(), 4);

    let svg = std::fs::read_to_string(p.join("c/curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.trim_end().ends_with("</svg>"));
    for row in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert!(svg.contains(&format!("data-x=\"{}\"", fields[0])), "{row}");
    }
}
