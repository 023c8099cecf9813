use earlyrisk::config::RunConfig;
use earlyrisk::deployment::{default_profiles, generate_deployment, ExpectedLabel, QuestionRecord};
use earlyrisk::experiments::{evaluate, EvaluationInputs, Metric, MetricsReport};
use earlyrisk::features::{build_features, FeatureRow};
use earlyrisk::io::{read_json, read_split, read_table, to_csv, write_json, write_split, write_table, Stage, Table};
use earlyrisk::simulate::{simulate_cohort, HiddenLabelRecord, TemplateGenerator, VideoInteractionRecord};
use earlyrisk::splits::{build_split, SplitKind};

fn small_config() -> RunConfig {
    let mut cfg = RunConfig { seed: Some(42), ..Default::default() };
    cfg.cohort.n_users = 24;
    cfg.cohort.horizon_days = 100;
    cfg.deployment.sessions_per_profile = 8;
    cfg.resolved()
}

#[test]
fn written_tables_reload_stably() {
    let cfg = small_config();
    let cohort = simulate_cohort(&cfg.cohort, &cfg.priors(), &TemplateGenerator).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("interactions.csv");
    write_table(&path, &cfg.digest(), &cohort.interactions).unwrap();

    let back: Table<VideoInteractionRecord> = read_table(&path, Stage::Features).unwrap();
    assert_eq!(back.digest.as_deref(), Some(cfg.digest().as_str()));
    assert_eq!(back.rows.len(), cohort.interactions.len());
    assert_eq!(to_csv(&cfg.digest(), &back.rows).unwrap(), std::fs::read(&path).unwrap());

    let f_mem = build_features(&back.rows, 3).unwrap();
    let fpath = dir.path().join("features.csv");
    write_table(&fpath, "f", &f_mem).unwrap();
    let f_back: Table<FeatureRow> = read_table(&fpath, Stage::Detect).unwrap();
    assert_eq!(f_back.rows.len(), f_mem.len());
    for (a, b) in f_mem.iter().zip(&f_back.rows) {
        assert_eq!((a.user_id, a.day), (b.user_id, b.day));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn evaluation_from_files_matches_in_memory() {
    let cfg = small_config();
    let cohort = simulate_cohort(&cfg.cohort, &cfg.priors(), &TemplateGenerator).unwrap();
    let dep = generate_deployment(&cfg.deployment, &default_profiles()).unwrap();
    let split = build_split(SplitKind::DelayedEvidence, &cohort.profiles, cfg.cohort.horizon_days, &cfg.splits, cfg.split_seed)
        .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_table(&d.join("i.csv"), "x", &cohort.interactions).unwrap();
    write_table(&d.join("l.csv"), "x", &cohort.labels).unwrap();
    write_table(&d.join("q.csv"), "x", &dep.questions).unwrap();
    write_table(&d.join("e.csv"), "x", &dep.expected).unwrap();
    write_split(&d.join("s.csv"), "x", &split).unwrap();

    let inter: Table<VideoInteractionRecord> = read_table(&d.join("i.csv"), Stage::Evaluate).unwrap();
    let labels: Table<HiddenLabelRecord> = read_table(&d.join("l.csv"), Stage::Evaluate).unwrap();
    let q: Table<QuestionRecord> = read_table(&d.join("q.csv"), Stage::Evaluate).unwrap();
    let e: Table<ExpectedLabel> = read_table(&d.join("e.csv"), Stage::Evaluate).unwrap();
    let s = read_split(&d.join("s.csv"), Stage::Evaluate).unwrap();
    assert_eq!(s, split);
    assert_eq!(labels.rows, cohort.labels);
    assert_eq!(e.rows, dep.expected);

    let splits = [s];
    let inputs = EvaluationInputs {
        clean: &inter.rows,
        labels: &labels.rows,
        weights: &cfg.cohort.weights,
        challenge_splits: &splits,
        deployment: Some((&q.rows, &e.rows)),
    };
    let report = evaluate(&inputs, &cfg.evaluation, &Metric::ALL).unwrap();
    assert_eq!(report.n_users, 24);
    assert_eq!(report.ablation.len(), 4);
    assert_eq!(report.challenge.len(), 1);
    let deployment = report.deployment.as_ref().unwrap();
    assert_eq!(deployment.sessions, 72);

    let direct = EvaluationInputs {
        clean: &cohort.interactions,
        labels: &cohort.labels,
        weights: &cfg.cohort.weights,
        challenge_splits: &splits,
        deployment: Some((&dep.questions, &dep.expected)),
    };
    let mem = evaluate(&direct, &cfg.evaluation, &Metric::ALL).unwrap();
    assert_eq!(mem.deployment.unwrap().classification, deployment.classification);
    for (a, b) in mem.coherence.iter().zip(&report.coherence) {
        assert!((a.clean - b.clean).abs() < 1e-6);
    }

    let jpath = d.join("metrics.json");
    write_json(&jpath, "abc", &report).unwrap();
    let (digest, _): (String, serde_json::Value) = read_json(&jpath).unwrap();
    assert_eq!(digest, "abc");
    let (_, back): (String, MetricsReport) = read_json(&jpath).unwrap();
    assert_eq!(back.ablation, report.ablation);
    assert!(back.render_text().contains("not clinical diagnoses"));
}
