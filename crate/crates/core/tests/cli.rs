use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use infocluster::cli::RunManifest;
use infocluster::dataset::{load_corpus, Stage, MANIFEST_FILE};

fn infocluster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infocluster"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = infocluster(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, n_images: usize) -> String {
    let path = dir.join("config.json");
    let json = format!(
        r#"{{
  "work_dir": "{}",
  "latent": {{"k_dis": 4, "n_con": 2, "n_noise": 8}},
  "train": {{"width": 4, "batch": 5}},
  "synth": {{"n_images": {n_images}, "factors": [{{"name": "color_system", "cardinality": 4}}], "seed": 3}},
  "classifier": {{"epochs": 1, "widths": [4, 4, 4]}},
  "montage_per_cluster": 3
}}"#,
        dir.join("work").display()
    );
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn preprocess_mask_over_ten_images() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 10);
    ok(&["synth", "--config", &cfg]);
    ok(&["preprocess", "--config", &cfg, "--mode", "mask"]);
    let out = dir.path().join("work/preprocessed/mask");
    let pngs = fs::read_dir(out.join("images")).unwrap().count();
    assert_eq!(pngs, 10);
    let records = load_corpus::<f32>(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(records.len(), 10);
    assert!(records.iter().all(|r| r.stage == Stage::Masked));
    // The input corpus is left alone.
    let originals = load_corpus::<f32>(&dir.path().join("work/corpus").join(MANIFEST_FILE)).unwrap();
    assert!(originals.iter().all(|r| r.stage == Stage::Original));
}

#[test]
fn train_with_zero_epochs_emits_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 10);
    ok(&["synth", "--config", &cfg]);
    ok(&["preprocess", "--config", &cfg]);
    ok(&["train", "--config", &cfg, "--epochs", "0"]);
    let ckpt = dir.path().join("work/train/mask/checkpoint.ickp");
    let loaded = infocluster::Checkpoint::load(&ckpt).unwrap();
    assert_eq!(loaded.epoch, 0);
    assert_eq!(loaded.latent.k_dis, 4);
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = infocluster(&["train", "--no-such-flag"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("ERROR ConfigError:"), "{err}");
    assert!(err.contains("Usage:"), "{err}");
    assert_eq!(err.lines().next().unwrap().matches("ERROR").count(), 1);
}

#[test]
fn unknown_command_fails_with_code() {
    let out = infocluster(&["cluster"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("ERROR UnknownCommand:"), "{}", stderr(&out));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 10);
    let out = infocluster(&["train", "--config", &cfg, "--k-dis", "1"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("ERROR ConfigError:") && err.contains("k_dis"), "{err}");

    let out = infocluster(&["preprocess", "--config", &cfg]);
    assert!(stderr(&out).starts_with("ERROR IoError:"), "{}", stderr(&out));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 40);
    let work = dir.path().join("work");
    for cmd in ["synth", "preprocess", "kmeans"] {
        ok(&[cmd, "--config", &cfg]);
    }
    ok(&["train", "--config", &cfg, "--epochs", "1", "--seed", "2"]);
    ok(&["classify", "--config", &cfg, "--seed", "2"]);
    ok(&["classify", "--config", &cfg, "--seed", "2", "--classify-originals"]);
    ok(&["sample-grid", "--config", &cfg]);
    ok(&["evaluate", "--config", &cfg]);
    let table = ok(&["report", "--config", &cfg]);

    for rel in [
        "assignments/infogan-mask.csv",
        "assignments/infogan-mask-originals.csv",
        "assignments/kmeans-mask.csv",
        "montage/infogan-mask.png",
        "montage/kmeans-mask.png",
        "samples/grid_mask.png",
        "reports/kmeans-mask_s0.json",
        "reports/comparison.csv",
        "reports/comparison.txt",
    ] {
        assert!(work.join(rel).exists(), "{rel} missing");
    }
    let txt = fs::read_to_string(work.join("reports/comparison.txt")).unwrap();
    assert_eq!(txt.lines().count(), 2 + 3);
    assert!(table.starts_with(&txt));

    let header = fs::read_to_string(work.join("assignments/kmeans-mask.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "image_id,category,post_0,post_1,post_2,post_3"
    );
    let csv = fs::read_to_string(work.join("reports/comparison.csv")).unwrap();
    let kmeans_row = csv.lines().find(|l| l.starts_with("kmeans-mask,")).unwrap();
    // Synthetic truth is present, so purity and NMI are filled in.
    assert!(!kmeans_row.split(',').nth(3).unwrap().contains('–'));

    let run: RunManifest =
        serde_json::from_str(&fs::read_to_string(work.join("runs/train.json")).unwrap()).unwrap();
    assert_eq!(run.command, "train");
    assert_eq!(run.seed, 2);
    assert_eq!(run.config.train.epochs, 1);
    assert_eq!(run.config_hash, run.config.hash());
    assert!(run.outputs.iter().all(|p| p.exists()));
}

#[test]
fn kmeans_and_exports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 24);
    let work = dir.path().join("work");
    ok(&["synth", "--config", &cfg]);
    ok(&["preprocess", "--config", &cfg]);
    ok(&["kmeans", "--config", &cfg]);
    let csv = fs::read(work.join("assignments/kmeans-mask.csv")).unwrap();
    let png = fs::read(work.join("montage/kmeans-mask.png")).unwrap();
    ok(&["kmeans", "--config", &cfg]);
    assert_eq!(fs::read(work.join("assignments/kmeans-mask.csv")).unwrap(), csv);
    assert_eq!(fs::read(work.join("montage/kmeans-mask.png")).unwrap(), png);
}
