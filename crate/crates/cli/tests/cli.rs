use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use embryo_core::config::ExperimentConfig;
use embryo_core::io::{read_report, report_json};
use embryo_core::pipeline::run_experiment;

const TINY: &str = "\
n_unlabeled = 12
n_graded = 24
n_kid = 30
frames_per_video = 4
frame_size = 16
ae_epochs = 1
ae_max_frames = 40
hidden_dim = 8
grade_epochs = 2
finetune_epochs = 2
folds = 3
bootstrap_repetitions = 20
";

fn embryo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embryo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_all_writes_every_artifact_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let out = dir.path().join("run");
    let result = embryo(&["run-all", "--config", path(&config), "--seed", "3", "--out", path(&out)]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    for f in [
        "dataset/manifest.jsonl",
        "models/autoencoder.ckpt",
        "models/grader.ckpt",
        "models/binary.ckpt",
        "report/report.json",
        "report/roc_model.csv",
        "report/roc_panel.csv",
        "report/figure.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let written = fs::read_to_string(out.join("report/report.json")).unwrap();
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let direct = run_experiment(&out.join("dataset"), &cfg, 3).unwrap();
    assert_eq!(written, report_json(&direct).unwrap());

    let svg = fs::read_to_string(out.join("report/figure.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 6);
    assert_eq!(svg.matches("class=\"roc\"").count(), 2);
    let report = read_report(&out.join("report/report.json")).unwrap();
    let csv = fs::read_to_string(out.join("report/roc_model.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.model.roc.len());
}

#[test]
fn stages_chain_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let (data, models, reports) = (
        dir.path().join("data"),
        dir.path().join("models"),
        dir.path().join("reports"),
    );
    let c = path(&config);
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", c, "--out", path(&data)],
        vec!["pretrain", "--config", c, "--data", path(&data), "--out", path(&models)],
    ];
    for args in &steps {
        let r = embryo(args);
        assert!(r.status.success(), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let ae = models.join("autoencoder.ckpt");
    let grader = models.join("grader.ckpt");
    let r = embryo(&[
        "train-grader",
        "--config",
        c,
        "--data",
        path(&data),
        "--autoencoder",
        path(&ae),
        "--out",
        path(&models),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = embryo(&[
        "finetune",
        "--config",
        c,
        "--data",
        path(&data),
        "--autoencoder",
        path(&ae),
        "--grader",
        path(&grader),
        "--out",
        path(&models),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = embryo(&[
        "evaluate",
        "--config",
        c,
        "--data",
        path(&data),
        "--autoencoder",
        path(&ae),
        "--out",
        path(&reports),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = embryo(&[
        "report",
        "--report",
        path(&reports.join("report.json")),
        "--out",
        path(&reports),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(reports.join("figure.svg").is_file());
}

#[test]
fn failures_exit_nonzero_with_the_stage_named() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing-here");
    let r = embryo(&["pretrain", "--data", path(&missing), "--out", path(dir.path())]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("stage `pretrain` failed"), "{stderr}");
    assert!(stderr.contains("manifest.jsonl"), "{stderr}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    let r = embryo(&["synth", "--config", path(&bad), "--out", path(dir.path())]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("stage `config` failed"), "{stderr}");
}

#[test]
fn wrong_checkpoint_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let data = dir.path().join("data");
    let c = path(&config);
    assert!(embryo(&["synth", "--config", c, "--out", path(&data)]).status.success());
    assert!(embryo(&[
        "pretrain",
        "--config",
        c,
        "--data",
        path(&data),
        "--out",
        path(dir.path())
    ])
    .status
    .success());
    let ae = dir.path().join("autoencoder.ckpt");
    let r = embryo(&[
        "finetune",
        "--config",
        c,
        "--data",
        path(&data),
        "--autoencoder",
        path(&ae),
        "--grader",
        path(&ae),
        "--out",
        path(dir.path()),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("expected grade"));
}

#[test]
fn shipped_desk_config_matches_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}
