use std::path::Path;
use std::process::{Command, Output};

fn earlyrisk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earlyrisk")).args(args).current_dir(cwd).output().expect("spawn earlyrisk")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = earlyrisk(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["simulate", "--users", "10", "--days", "20", "--seed", "7", "--with-splits", "--out", out];
    ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    for f in ["interactions.csv", "hidden_labels.csv", "manifest.json", "splits/noise-shift.csv", "splits/profile-generalization.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let first = String::from_utf8(read(dir.path().join("a/interactions.csv"))).unwrap();
    assert!(first.starts_with("# digest: "));
    assert_eq!(first.lines().count(), 2 + 10 * 20 * 5);
}

#[test]
fn different_seeds_give_different_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--users", "5", "--days", "10", "--seed", "1", "--out", "a"], dir.path());
    ok(&["simulate", "--users", "5", "--days", "10", "--seed", "2", "--out", "b"], dir.path());
    assert_ne!(read(dir.path().join("a/interactions.csv")), read(dir.path().join("b/interactions.csv")));
}

#[test]
fn export_schema_writes_ddl() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["export-schema", "--out", "schema.sql"], dir.path());
    let ddl = String::from_utf8(read(dir.path().join("schema.sql"))).unwrap();
    assert!(ddl.starts_with("CREATE TABLE video_info ("));
    for t in ["video_interaction_events", "derived_feature_store"] {
        assert!(ddl.contains(&format!("CREATE TABLE {t} (")), "{t}");
    }
}

#[test]
fn invalid_input_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = earlyrisk(&["simulate", "--users", "0", "--out", "x"], dir.path());
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    std::fs::write(dir.path().join("bad.toml"), "[cohort\n").unwrap();
    let out = earlyrisk(&["simulate", "--config", "bad.toml", "--out", "x"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));

    let out = earlyrisk(&["simulate", "--mode", "sideways"], dir.path());
    assert!(!out.status.success());

    let out = earlyrisk(&["features", "--input", "missing.csv", "--out", "f.csv"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("f.csv").exists());

    std::fs::write(dir.path().join("broken.csv"), "user_id,day\n1,2\n").unwrap();
    let out = earlyrisk(&["features", "--input", "broken.csv", "--out", "f.csv"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn profile_split_requires_simulate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--users", "6", "--days", "10", "--out", "run"], dir.path());
    let out = earlyrisk(
        &["split", "--input", "run/interactions.csv", "--kind", "profile-generalization", "--out", "s.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
    ok(&["split", "--input", "run/interactions.csv", "--kind", "noise-shift", "--out", "s.csv"], dir.path());
    assert!(dir.path().join("s.csv").exists());
}

#[test]
fn full_pipeline_produces_report_and_card() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--users", "30", "--days", "100", "--seed", "11", "--with-splits", "--out", "run"], d);
    ok(&["gen-deployment", "--sessions-per-profile", "10", "--out", "run"], d);
    ok(&["perturb", "--input", "run/interactions.csv", "--sigma", "0.1", "--out", "run/noisy.csv"], d);
    ok(&["features", "--input", "run/noisy.csv", "--window", "3", "--out", "run/features.csv"], d);
    ok(
        &[
            "train-probe", "--features", "run/features.csv", "--labels", "run/hidden_labels.csv",
            "--split", "run/splits/noise-shift.csv", "--mask", "coherence-only", "--out", "run/model.json",
        ],
        d,
    );
    ok(&["detect", "--features", "run/features.csv", "--labels", "run/hidden_labels.csv", "--out", "run/det.csv"], d);
    ok(
        &["classify", "--questions", "run/deployment_questions.csv", "--expected", "run/expected_labels.csv", "--out", "run/cls.csv"],
        d,
    );
    let text = ok(&["evaluate", "--run", "run", "--detections", "run/det.csv"], d);
    assert!(text.contains("not clinical diagnoses"));
    assert!(text.contains("Ablation"));
    assert!(text.contains("ERDE_5"));

    let json: serde_json::Value = serde_json::from_slice(&read(d.join("run/metrics.json"))).unwrap();
    assert!(json["digest"].is_string());
    assert_eq!(json["ablation"].as_array().unwrap().len(), 4);
    assert_eq!(json["challenge"].as_array().unwrap().len(), 4);
    assert_eq!(json["deployment"]["sessions"].as_u64(), Some(90));

    ok(&["report", "--run", "run"], d);
    let card = String::from_utf8(read(d.join("run/DATASET_CARD.md"))).unwrap();
    assert!(card.contains("15,000 interaction records"));
    assert!(card.contains("not clinical diagnoses"));
    assert!(card.contains("profile-generalization"));
    assert!(card.contains("90 sessions"));

    let subset = ok(&["evaluate", "--run", "run", "--metrics", "coherence,deployment", "--out", "run/sub.json"], d);
    assert!(subset.contains("clean vs noisy"));
    assert!(!subset.contains("Ablation"));
    let bad = earlyrisk(&["evaluate", "--run", "run", "--metrics", "vibes"], d);
    assert!(!bad.status.success());
}

#[test]
fn labels_are_not_readable_by_feature_stage() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--users", "4", "--days", "5", "--out", "run"], dir.path());
    let out = earlyrisk(&["features", "--input", "run/hidden_labels.csv", "--out", "f.csv"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hidden"), "{err}");
}
