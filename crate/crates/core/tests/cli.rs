use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sfl::neuralnet::load_model;
use sfl::pipeline::read_dataset;

const SMALL: &str = r#"{"seed": 5, "synth": {"subjects": 3, "samples_per_subject": 300},
    "embedding": {"bio": {"method": "pca", "n_components": 2},
                  "landmarks": {"method": "pca", "n_components": 2}},
    "network": {"topology": "early-fusion", "post_fusion_conv": false},
    "train": {"epochs": 1}}"#;

fn sfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfl"))
        .args(args)
        .env_remove("SFL_JOBS")
        .output()
        .expect("spawn sfl")
}

fn ok(args: &[&str]) -> String {
    let out = sfl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = sfl(args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error["), "{err}");
    err
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_names_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"seed": 1, "synth": {}, "train": {"epoch": 3}}"#);
    let err = fails(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(err.contains("/train/epoch"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_inputs_fail_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["features", "--config", "/nonexistent/sfl.json"]);
    assert!(err.contains("/nonexistent/sfl.json"), "{err}");
    fails(&["features"]);
    fails(&["features", "--seed", "1", "--jobs", "0", "--out", s(dir.path())]);

    let cfg = config(dir.path(), r#"{"seed": 1, "dataset": {"manifest": "missing/manifest.json"}}"#);
    let err = fails(&["features", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(err.contains("manifest.json"), "{err}");
}

#[test]
fn bad_usage_is_rejected_by_the_parser() {
    let out = sfl(&["frobnicate"]);
    assert!(!out.status.success());
    let out = sfl(&["--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for sub in ["synth", "features", "reduce", "train", "eval-loso", "bench", "plot"] {
        assert!(help.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn manifest_round_trip_matches_direct_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let direct = dir.path().join("direct");
    let stdout = ok(&["synth", "--config", s(&cfg), "--out", s(&direct)]);
    let manifest = direct.join("recordings/manifest.json");
    assert!(stdout.contains("manifest.json"), "{stdout}");
    assert!(manifest.exists());
    ok(&["features", "--config", s(&cfg), "--out", s(&direct)]);

    let via = dir.path().join("via");
    let cfg2 = dir.path().join("from_manifest.json");
    std::fs::write(
        &cfg2,
        format!(r#"{{"seed": 5, "dataset": {{"manifest": "{}"}}}}"#, manifest.display()),
    )
    .unwrap();
    ok(&["features", "--config", s(&cfg2), "--out", s(&via)]);

    let a = read_dataset(&direct.join("features")).unwrap();
    let b = read_dataset(&via.join("features")).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.subject_ids, b.subject_ids);
    assert_eq!(a.bio.values.shape(), (a.len(), 175));
    assert_eq!(a.landmarks.values.shape(), (a.len(), 1904));
    let drift = a.bio.values.as_slice().iter().zip(b.bio.values.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-6, "bio features drift {drift}");
}

#[test]
fn reduce_and_plot_write_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(&["reduce", "--modality", "bio", "--config", s(&cfg), "--out", s(&out)]);
    for f in ["embedding_bio.csv", "embedding_bio.json", "embedding_bio.svg", "config.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("embedding_landmarks.csv").exists());

    ok(&["features", "--config", s(&cfg), "--out", s(&out)]);
    let svg = out.join("scatter.svg");
    ok(&[
        "plot",
        "--embedding",
        s(&out.join("embedding_bio.csv")),
        "--labels",
        s(&out.join("features/labels.csv")),
        "--output",
        s(&svg),
    ]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert_eq!(text.matches("legend-entry").count(), 3);
    assert_eq!(text, std::fs::read_to_string(out.join("embedding_bio.svg")).unwrap());

    let err = fails(&[
        "plot",
        "--embedding",
        s(&out.join("embedding_bio.csv")),
        "--labels",
        s(&out.join("config.json")),
    ]);
    assert!(err.contains("label"), "{err}");
}

#[test]
fn train_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let model = load_model(&out.join("model.sfl")).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("train_history.json")).unwrap()).unwrap();
    assert_eq!(summary["params"].as_u64(), Some(model.n_params() as u64));
    assert_eq!(summary["history"].as_array().map(Vec::len), Some(1));
    let acc = summary["train_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn eval_loso_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let mut metrics = Vec::new();
    for (k, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let stdout = ok(&["eval-loso", "--config", s(&cfg), "--out", s(&out), "--jobs", jobs, "--format", "text"]);
        assert!(stdout.contains("early-fusion"), "{stdout}");
        assert!(out.join("report.txt").exists());
        metrics.push(std::fs::read(out.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);

    fn timings(v: &serde_json::Value, out: &mut Vec<f64>) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, x) in m {
                    if k.ends_with("seconds") {
                        out.push(x.as_f64().unwrap());
                    } else {
                        timings(x, out);
                    }
                }
            }
            serde_json::Value::Array(a) => a.iter().for_each(|x| timings(x, out)),
            _ => {}
        }
    }
    let mut secs = Vec::new();
    timings(&serde_json::from_slice(&metrics[0]).unwrap(), &mut secs);
    assert!(!secs.is_empty() && secs.iter().all(|&t| t == 0.0), "{secs:?}");
}

#[test]
fn effective_config_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(&["synth", "--config", s(&cfg), "--out", s(&out), "--seed", "9"]);
    let emitted = std::fs::read_to_string(out.join("config.json")).unwrap();
    let parsed = sfl::cli::parse_config(&emitted).unwrap();
    assert_eq!(parsed.seed, 9);
    assert_eq!(parsed.to_json().unwrap(), emitted);
}
