//! End-to-end tests driving the installed binary the way a user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// The binary under test, with ambient environment overrides stripped so
/// tests control every input.
fn weakaed() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_weakaed"));
    for (key, _) in std::env::vars() {
        if key.starts_with("WEAKAED_") {
            cmd.env_remove(&key);
        }
    }
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("failed to spawn binary");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_fail(cmd: &mut Command) -> String {
    let out = cmd.output().expect("failed to spawn binary");
    assert!(
        !out.status.success(),
        "command unexpectedly succeeded\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthesizes a corpus and returns its manifest path.
fn make_corpus(dir: &Path, clips: usize, seed: u64) -> PathBuf {
    run_ok(weakaed()
        .args(["synth", "--out"])
        .arg(dir)
        .args(["--clips", &clips.to_string(), "--seed", &seed.to_string()]));
    dir.join("manifest.json")
}

/// Fits a small background model and returns its path.
fn make_ubm(dir: &Path, manifest: &Path, components: usize, seed: u64) -> PathBuf {
    let out = dir.join("ubm.bin");
    run_ok(weakaed()
        .args(["train-ubm", "--manifest"])
        .arg(manifest)
        .arg("--out")
        .arg(&out)
        .args([
            "--components",
            &components.to_string(),
            "--seed",
            &seed.to_string(),
        ]));
    out
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 24, 11);
    let ubm = make_ubm(dir.path(), &manifest, 8, 11);

    let model = dir.path().join("tone.bin");
    run_ok(weakaed()
        .args(["train", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args(["--event", "tone", "--c", "2.0", "--seed", "11", "--out"])
        .arg(&model));

    let scores_path = dir.path().join("scores.json");
    run_ok(weakaed()
        .args(["predict", "--manifest"])
        .arg(&manifest)
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&scores_path));
    let scores: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&scores_path).unwrap()).unwrap();
    assert_eq!(scores["event"], "tone");
    assert_eq!(scores["scores"].as_array().unwrap().len(), 24);

    let intervals_path = dir.path().join("intervals.json");
    run_ok(weakaed()
        .args(["localize", "--manifest"])
        .arg(&manifest)
        .arg("--model")
        .arg(&model)
        .args(["--threshold", "0.0", "--out"])
        .arg(&intervals_path));
    let intervals: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&intervals_path).unwrap()).unwrap();
    assert_eq!(intervals["recordings"].as_array().unwrap().len(), 24);

    let report_path = dir.path().join("report.json");
    let roc_dir = dir.path().join("roc");
    run_ok(weakaed()
        .args(["evaluate", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args(["--c", "2.0", "--seed", "11", "--out"])
        .arg(&report_path)
        .arg("--roc-out")
        .arg(&roc_dir));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let events = report["events"].as_array().unwrap();
    assert_eq!(events.len(), 3);
    // The report's mean is the arithmetic mean of the per-event AUCs.
    let mean: f64 = events
        .iter()
        .map(|e| e["bag_auc"].as_f64().unwrap())
        .sum::<f64>()
        / events.len() as f64;
    assert!((report["mean_bag_auc"].as_f64().unwrap() - mean).abs() <= 1e-12);
    assert!(roc_dir.join("tone_bag_roc.csv").exists());
    assert!(roc_dir.join("tone_instance_roc.csv").exists());
    let csv = std::fs::read_to_string(roc_dir.join("tone_bag_roc.csv")).unwrap();
    assert!(csv.starts_with("threshold,fpr,tpr\ninf,0,0\n"), "{csv}");
}

#[test]
fn corpus_rendering_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    make_corpus(&a, 6, 3);
    make_corpus(&b, 6, 3);
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let bytes_a = std::fs::read(a.join(&name)).unwrap();
        let bytes_b = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name:?} differs between identical runs");
    }

    let c = dir.path().join("c");
    make_corpus(&c, 6, 4);
    assert_ne!(
        std::fs::read(a.join("clip_000.wav")).unwrap(),
        std::fs::read(c.join("clip_000.wav")).unwrap(),
        "different seeds must give different audio"
    );
}

#[test]
fn models_are_byte_reproducible_under_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 16, 5);

    let ubm_a = make_ubm(dir.path(), &manifest, 4, 5);
    let bytes_a = std::fs::read(&ubm_a).unwrap();
    run_ok(weakaed()
        .args(["train-ubm", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(&ubm_a)
        .args(["--components", "4", "--seed", "5", "--force"]));
    assert_eq!(bytes_a, std::fs::read(&ubm_a).unwrap());

    let model = dir.path().join("burst.bin");
    let train = |cmd: &mut Command| {
        cmd.args(["train", "--manifest"])
            .arg(&manifest)
            .arg("--ubm")
            .arg(&ubm_a)
            .args(["--event", "burst", "--c", "0.5", "--seed", "5", "--out"])
            .arg(&model);
    };
    let mut first = weakaed();
    train(&mut first);
    run_ok(&mut first);
    let model_a = std::fs::read(&model).unwrap();
    let mut second = weakaed();
    train(&mut second);
    run_ok(second.arg("--force"));
    assert_eq!(model_a, std::fs::read(&model).unwrap());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 6, 1);

    let stderr = run_fail(weakaed().args(["synth", "--out"]).arg(&corpus).args([
        "--clips",
        "6",
        "--seed",
        "1",
    ]));
    assert!(stderr.contains("refusing to overwrite"), "{stderr}");
    assert!(stderr.contains("--force"), "{stderr}");

    // With --force the same command succeeds and the corpus is replaced.
    run_ok(weakaed()
        .args(["synth", "--out"])
        .arg(&corpus)
        .args(["--clips", "6", "--seed", "1", "--force"]));
    assert!(manifest.exists());
}

#[test]
fn missing_manifest_error_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = run_fail(
        weakaed()
            .args(["train-ubm", "--manifest", "no/such/manifest.json", "--out"])
            .arg(dir.path().join("ubm.bin")),
    );
    assert!(stderr.contains("no/such/manifest.json"), "{stderr}");
}

#[test]
fn unknown_event_error_lists_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 8, 2);
    let ubm = make_ubm(dir.path(), &manifest, 4, 2);

    let stderr = run_fail(
        weakaed()
            .args(["train", "--manifest"])
            .arg(&manifest)
            .arg("--ubm")
            .arg(&ubm)
            .args(["--event", "doorbell", "--out"])
            .arg(dir.path().join("x.bin")),
    );
    assert!(stderr.contains("doorbell"), "{stderr}");
    for event in ["tone", "burst", "chirp"] {
        assert!(stderr.contains(event), "vocabulary missing from: {stderr}");
    }
}

#[test]
fn cached_features_with_the_wrong_mode_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 8, 6);
    let ubm = make_ubm(dir.path(), &manifest, 4, 6);

    let cache = dir.path().join("features.bin");
    run_ok(weakaed()
        .args(["extract-features", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args(["--mode", "f", "--out"])
        .arg(&cache));

    let stderr = run_fail(
        weakaed()
            .args(["train", "--manifest"])
            .arg(&manifest)
            .arg("--ubm")
            .arg(&ubm)
            .args(["--event", "tone", "--mode", "fm", "--features"])
            .arg(&cache)
            .arg("--out")
            .arg(dir.path().join("x.bin")),
    );
    assert!(
        stderr.contains("mode \"f\"") && stderr.contains("\"fm\""),
        "{stderr}"
    );
}

#[test]
fn training_needs_no_strong_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 24, 9);

    // Strip every strong annotation, keeping only the weak tags.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    for rec in doc["recordings"].as_array_mut().unwrap() {
        rec.as_object_mut().unwrap().remove("strong");
    }
    std::fs::write(&manifest, serde_json::to_string_pretty(&doc).unwrap()).unwrap();

    let ubm = make_ubm(dir.path(), &manifest, 4, 9);
    run_ok(weakaed()
        .args(["train", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args(["--event", "tone", "--c", "2.0", "--seed", "9", "--out"])
        .arg(dir.path().join("tone.bin")));

    // Evaluation still works; it just cannot report instance-level AUC.
    let report_path = dir.path().join("report.json");
    run_ok(weakaed()
        .args(["evaluate", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args(["--c", "2.0", "--seed", "9", "--events", "tone", "--out"])
        .arg(&report_path));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["mean_bag_auc"].as_f64().unwrap() > 0.0);
    assert!(report["mean_instance_auc"].is_null());
}

#[test]
fn flags_beat_environment_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("settings.toml");
    std::fs::write(&config, "seed = 1\n").unwrap();

    // Flag wins over both environment and file: output matches a plain
    // --seed 5 run exactly.
    let a = dir.path().join("a");
    run_ok(weakaed()
        .args(["synth", "--out"])
        .arg(&a)
        .args(["--clips", "4", "--seed", "5"]));
    let b = dir.path().join("b");
    run_ok(weakaed()
        .env("WEAKAED_SEED", "9")
        .arg("--config")
        .arg(&config)
        .args(["synth", "--out"])
        .arg(&b)
        .args(["--clips", "4", "--seed", "5"]));
    assert_eq!(
        std::fs::read(a.join("clip_000.wav")).unwrap(),
        std::fs::read(b.join("clip_000.wav")).unwrap()
    );

    // Environment wins over the file.
    let c = dir.path().join("c");
    run_ok(weakaed()
        .env("WEAKAED_SEED", "5")
        .arg("--config")
        .arg(&config)
        .args(["synth", "--out"])
        .arg(&c)
        .args(["--clips", "4"]));
    assert_eq!(
        std::fs::read(a.join("clip_000.wav")).unwrap(),
        std::fs::read(c.join("clip_000.wav")).unwrap()
    );

    // The file wins over the built-in default.
    let d = dir.path().join("d");
    run_ok(weakaed()
        .arg("--config")
        .arg(&config)
        .args(["synth", "--out"])
        .arg(&d)
        .args(["--clips", "4"]));
    let e = dir.path().join("e");
    run_ok(weakaed()
        .args(["synth", "--out"])
        .arg(&e)
        .args(["--clips", "4", "--seed", "1"]));
    assert_eq!(
        std::fs::read(d.join("clip_000.wav")).unwrap(),
        std::fs::read(e.join("clip_000.wav")).unwrap()
    );
}

#[test]
fn unknown_config_keys_are_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("settings.toml");
    std::fs::write(&config, "sede = 1\n").unwrap();
    let stderr = run_fail(
        weakaed()
            .arg("--config")
            .arg(&config)
            .args(["synth", "--out"])
            .arg(dir.path().join("x"))
            .args(["--clips", "4"]),
    );
    assert!(stderr.contains("sede"), "{stderr}");
}

#[test]
fn network_topology_flag_is_recorded_in_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = make_corpus(&corpus, 16, 13);
    let ubm = make_ubm(dir.path(), &manifest, 4, 13);

    let model_path = dir.path().join("net.bin");
    run_ok(weakaed()
        .args(["train", "--manifest"])
        .arg(&manifest)
        .arg("--ubm")
        .arg(&ubm)
        .args([
            "--event", "tone", "--learner", "bpmil", "--hidden", "50", "--seed", "13", "--out",
        ])
        .arg(&model_path));

    let model = weakaed::model::load_detector(&model_path).unwrap();
    match &model.detector.scorer {
        weakaed::detector::Scorer::Net(net) => assert_eq!(net.hidden_units(), 50),
        other => panic!("expected a network scorer, got {other:?}"),
    }
    match &model.learner {
        weakaed::detector::LearnerSpec::BpMil { hidden, .. } => assert_eq!(*hidden, 50),
        other => panic!("expected a network learner spec, got {other:?}"),
    }
}

#[test]
fn logged_cost_selection_matches_an_independent_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest_path = make_corpus(&corpus, 20, 17);
    let ubm_path = make_ubm(dir.path(), &manifest_path, 4, 17);

    let out = run_ok(weakaed()
        .args(["train", "--manifest"])
        .arg(&manifest_path)
        .arg("--ubm")
        .arg(&ubm_path)
        .args(["--event", "burst", "--c", "auto", "--seed", "17", "--out"])
        .arg(dir.path().join("burst.bin")));
    let stderr = stderr_of(&out);
    let logged: f64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("selected C = "))
        .unwrap_or_else(|| panic!("no cost selection logged in: {stderr}"))
        .parse()
        .unwrap();

    // Recompute the selection in-process from the same inputs and seed.
    let manifest = weakaed::bags::Manifest::from_path(&manifest_path).unwrap();
    let ubm = weakaed::model::load_ubm(&ubm_path).unwrap();
    let cfg = weakaed::bags::FeatureConfig {
        mfcc: ubm.mfcc.clone(),
        ..weakaed::bags::FeatureConfig::default()
    };
    let extraction = weakaed::bags::extract_corpus(&manifest, &corpus, &ubm.gmm, &cfg).unwrap();
    let bags = weakaed::bags::bags_for_event(&extraction.corpus, &manifest, "burst").unwrap();
    let selection = weakaed::misvm::select_c(
        &bags,
        &weakaed::detector::DEFAULT_C_GRID,
        &weakaed::misvm::CSelectConfig {
            folds: 4,
            max_rounds: 50,
            seed: 17,
            solver: weakaed::misvm::SolverConfig::default(),
        },
    )
    .unwrap();
    assert_eq!(logged, selection.c);
}
