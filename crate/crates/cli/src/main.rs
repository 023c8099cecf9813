//! Command-line driver: each subcommand is one pipeline stage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use earlyrisk::card::render_card;
use earlyrisk::config::{CohortSummary, DeploymentSummary, RunConfig, RunManifest, SplitSummary};
use earlyrisk::deployment::{default_profiles, flip_answers, generate_deployment, ExpectedLabel, QuestionRecord};
use earlyrisk::detect::{daily_series, detect_all, onset_days, DetectionOutcome};
use earlyrisk::digest::config_digest;
use earlyrisk::experiments::{detection_report, evaluate, EvaluationInputs, Metric, MetricsReport};
use earlyrisk::features::{build_features, FeatureMask, FeatureRow};
use earlyrisk::io::{read_json, read_split, read_table, write_json, write_split, write_table, Stage, Table};
use earlyrisk::learner::evaluate_rule_classifier;
use earlyrisk::perturb::{perturb, NoiseConfig};
use earlyrisk::probe::{label_rows, train_probe};
use earlyrisk::schema::SCHEMA_DDL;
use earlyrisk::simulate::{simulate_cohort, GenerationMode, HiddenLabelRecord, TemplateGenerator, VideoInteractionRecord};
use earlyrisk::splits::{build_split, default_split, delayed_evidence_split, noise_shift_split, sparse_observation_split, SplitKind, SplitSpec};

const INTERACTIONS: &str = "interactions.csv";
const HIDDEN_LABELS: &str = "hidden_labels.csv";
const QUESTIONS: &str = "deployment_questions.csv";
const EXPECTED: &str = "expected_labels.csv";
const CHALLENGE: [SplitKind; 4] = [
    SplitKind::NoiseShift,
    SplitKind::SparseObservation,
    SplitKind::DelayedEvidence,
    SplitKind::ProfileGeneralization,
];

#[derive(Parser)]
#[command(name = "earlyrisk", version, about = "Synthetic cohort simulation and early-risk detection evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        Ok(match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort: interactions, hidden labels, and optionally the four challenge splits.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        users: Option<u32>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        videos_per_day: Option<u32>,
        /// `full` or `no-label`.
        #[arg(long)]
        mode: Option<GenerationMode>,
        #[arg(long)]
        per_sample_sd: Option<f64>,
        /// Also write the noise-shift, sparse, delayed and profile splits.
        #[arg(long)]
        with_splits: bool,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Add confounds and day-level noise, then flip binary fields.
    Perturb {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        flip_p_max: Option<f64>,
        #[arg(long)]
        confound_sd: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a user-level split from an interaction file.
    Split {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "default")]
        kind: SplitKind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train_frac: Option<f64>,
        #[arg(long)]
        dropout_p: Option<f64>,
        #[arg(long)]
        min_window_days: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate interactions into per-day trailing-window features.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        window: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the multinomial logistic probe on the training side of a split.
    TrainProbe {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        mask: FeatureMask,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fixed-threshold coherence detection against hidden onsets.
    Detect {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = earlyrisk::detect::DEFAULT_THETA)]
        theta: f64,
        /// Restrict to the split's test users and its evaluation window.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate deployment-level sessions and expected statuses.
    GenDeployment {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        sessions_per_profile: Option<u32>,
        #[arg(long)]
        questions_per_session: Option<u32>,
        #[arg(long)]
        overlap_noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum per-answer flip probability.
        #[arg(long, default_value_t = 0.0)]
        flip_p_max: f64,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Apply the priority rules to each session.
    Classify {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        expected: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the metrics report for a run directory.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "run")]
        run: PathBuf,
        /// Comma-separated sections or `all`.
        #[arg(long, default_value = "all")]
        metrics: String,
        /// Report on an existing detections file instead of re-running detection.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the relational schema DDL.
    ExportSchema {
        #[arg(long, default_value = "schema.sql")]
        out: PathBuf,
    },
    /// Write the dataset card and the text form of the metrics report.
    Report {
        #[arg(long, default_value = "run")]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, users, days, seed, videos_per_day, mode, per_sample_sd, with_splits, out } => {
            let mut cfg = config.load()?;
            set(&mut cfg.cohort.n_users, users);
            set(&mut cfg.cohort.horizon_days, days);
            set(&mut cfg.cohort.videos_per_day, videos_per_day);
            set(&mut cfg.cohort.mode, mode);
            set(&mut cfg.per_sample_sd, per_sample_sd);
            if let Some(s) = seed {
                cfg.seed = Some(s);
            }
            cfg.validate()?;
            simulate(&cfg.resolved(), with_splits, &out)
        }
        Command::Perturb { config, input, sigma, flip_p_max, confound_sd, seed, out } => {
            let cfg = config.load()?.resolved();
            let mut noise = cfg.noise;
            set(&mut noise.sigma, sigma);
            set(&mut noise.flip_p_max, flip_p_max);
            set(&mut noise.confound_sd, confound_sd);
            set(&mut noise.seed, seed);
            noise.validate()?;
            let mut t: Table<VideoInteractionRecord> = read_table(&input, Stage::Perturb)?;
            perturb(&mut t.rows, &noise, &cfg.cohort.weights)?;
            let digest = config_digest(&(upstream(&t.digest), "perturb", &noise));
            write_table(&out, &digest, &t.rows)?;
            println!("wrote {} perturbed records to {}", t.rows.len(), out.display());
            Ok(())
        }
        Command::Split { config, input, kind, seed, train_frac, dropout_p, min_window_days, out } => {
            let cfg = config.load()?.resolved();
            let mut params = cfg.splits.clone();
            set(&mut params.train_frac, train_frac);
            set(&mut params.dropout_p, dropout_p);
            set(&mut params.min_window_days, min_window_days);
            let seed = seed.unwrap_or(cfg.split_seed);
            let t: Table<VideoInteractionRecord> = read_table(&input, Stage::Split)?;
            let ids: Vec<u32> = t.rows.iter().map(|r| r.user_id).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let horizon = t.rows.iter().map(|r| r.day + 1).max().unwrap_or(0);
            let spec = match kind {
                SplitKind::Default => default_split(&ids, params.train_frac, seed)?,
                SplitKind::NoiseShift => noise_shift_split(&ids, &params, seed)?,
                SplitKind::SparseObservation => sparse_observation_split(&ids, horizon, &params, seed)?,
                SplitKind::DelayedEvidence => delayed_evidence_split(&ids, horizon, &params, seed)?,
                SplitKind::ProfileGeneralization => {
                    bail!("profile-generalization splits need latent profiles; create them with `simulate --with-splits`")
                }
            };
            let digest = config_digest(&(upstream(&t.digest), "split", kind, &params, seed));
            write_split(&out, &digest, &spec)?;
            println!("wrote {kind} split ({} train / {} test users) to {}", spec.train_user_ids.len(), spec.test_user_ids.len(), out.display());
            Ok(())
        }
        Command::Features { input, window, out } => {
            let t: Table<VideoInteractionRecord> = read_table(&input, Stage::Features)?;
            let rows = build_features(&t.rows, window)?;
            let digest = config_digest(&(upstream(&t.digest), "features", window));
            write_table(&out, &digest, &rows)?;
            println!("wrote {} feature rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::TrainProbe { config, features, labels, split, mask, out } => {
            let cfg = config.load()?.resolved();
            let f: Table<FeatureRow> = read_table(&features, Stage::TrainProbe)?;
            let l: Table<HiddenLabelRecord> = read_table(&labels, Stage::TrainProbe)?;
            let states = earlyrisk::experiments::state_map(&l.rows);
            let mut rows = label_rows(&f.rows, &states, mask);
            if let Some(p) = &split {
                let spec = read_split(p, Stage::TrainProbe)?;
                rows.retain(|r| spec.is_train(r.user_id));
            }
            let model = train_probe(&rows, mask, &cfg.evaluation.probe)?;
            let digest = config_digest(&(upstream(&f.digest), "train-probe", mask, &cfg.evaluation.probe));
            write_json(&out, &digest, &model)?;
            println!(
                "trained {} probe on {} rows: {} epochs, validation loss {:.4}; wrote {}",
                mask.name(),
                rows.len(),
                model.epochs_run,
                model.best_validation_loss,
                out.display()
            );
            Ok(())
        }
        Command::Detect { features, labels, theta, split, out } => {
            let f: Table<FeatureRow> = read_table(&features, Stage::Detect)?;
            let l: Table<HiddenLabelRecord> = read_table(&labels, Stage::Detect)?;
            let mut series = daily_series(&f.rows);
            let mut min_day = 0;
            if let Some(p) = &split {
                let spec = read_split(p, Stage::Detect)?;
                series.retain(|u, _| spec.is_test(*u));
                for (u, s) in series.iter_mut() {
                    s.retain(|d| spec.is_retained(*u, d.day));
                }
                series.retain(|_, s| !s.is_empty());
                min_day = spec.min_window_days.unwrap_or(0);
            }
            let outcomes = detect_all(&series, &onset_days(&l.rows), theta, min_day)?;
            let digest = config_digest(&(upstream(&f.digest), "detect", theta, min_day));
            write_table(&out, &digest, &outcomes)?;
            let s = earlyrisk::metrics::ttd_summary(&outcomes);
            println!(
                "{} users, {} with onset, {:.3} detected within 10 days; wrote {}",
                outcomes.len(),
                s.n_onset,
                s.fraction_within_10,
                out.display()
            );
            Ok(())
        }
        Command::GenDeployment { config, sessions_per_profile, questions_per_session, overlap_noise, seed, flip_p_max, out } => {
            let cfg = config.load()?.resolved();
            let mut d = cfg.deployment.clone();
            set(&mut d.sessions_per_profile, sessions_per_profile);
            set(&mut d.questions_per_session, questions_per_session);
            set(&mut d.overlap_noise, overlap_noise);
            set(&mut d.seed, seed);
            let noise = NoiseConfig { flip_p_max, ..cfg.noise };
            noise.validate()?;
            let mut dep = generate_deployment(&d, &default_profiles())?;
            let flipped = flip_answers(&mut dep.questions, &noise);
            let digest = config_digest(&("gen-deployment", &d, flip_p_max, noise.seed));
            write_table(&out.join(QUESTIONS), &digest, &dep.questions)?;
            write_table(&out.join(EXPECTED), &digest, &dep.expected)?;
            let mut manifest = RunManifest::load_or_default(&out)?;
            manifest.deployment = Some(DeploymentSummary {
                digest,
                sessions: d.total_sessions(),
                questions: dep.questions.len(),
                sessions_per_profile: d.sessions_per_profile,
                overlap_noise: d.overlap_noise,
                flipped_answers: flipped,
            });
            manifest.save(&out)?;
            println!("wrote {} sessions ({} questions) to {}", d.total_sessions(), dep.questions.len(), out.display());
            Ok(())
        }
        Command::Classify { questions, expected, out } => {
            let q: Table<QuestionRecord> = read_table(&questions, Stage::Classify)?;
            let e: Table<ExpectedLabel> = read_table(&expected, Stage::Classify)?;
            let (rows, report) = evaluate_rule_classifier(&q.rows, &e.rows)?;
            let digest = config_digest(&(upstream(&q.digest), "classify"));
            write_table(&out, &digest, &rows)?;
            println!(
                "{} sessions: macro F1 {:.3}, precision {:.3}, recall {:.3}, kappa {:.3}; wrote {}",
                rows.len(),
                report.macro_f1,
                report.macro_precision,
                report.macro_recall,
                report.kappa,
                out.display()
            );
            Ok(())
        }
        Command::Evaluate { config, run, metrics, detections, out } => {
            let cfg = config.load()?.resolved();
            let metrics = Metric::parse_list(&metrics)?;
            let report = evaluate_run(&cfg, &run, &metrics, detections.as_deref())?;
            let out = out.unwrap_or_else(|| run.join("metrics.json"));
            write_json(&out, &report.config_digest, &report)?;
            let text = out.with_extension("txt");
            earlyrisk::io::write_atomic(&text, report.render_text().as_bytes())?;
            print!("{}", report.render_text());
            println!("wrote {} and {}", out.display(), text.display());
            Ok(())
        }
        Command::ExportSchema { out } => {
            earlyrisk::io::write_atomic(&out, SCHEMA_DDL.as_bytes())?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Report { run } => {
            let manifest = RunManifest::load_or_default(&run)?;
            if manifest.cohort.is_none() && manifest.deployment.is_none() {
                bail!("{} has no manifest; run `simulate` or `gen-deployment` first", run.display());
            }
            let card = run.join("DATASET_CARD.md");
            earlyrisk::io::write_atomic(&card, render_card(&manifest).as_bytes())?;
            println!("wrote {}", card.display());
            let metrics = run.join("metrics.json");
            if metrics.exists() {
                let (_, report): (String, MetricsReport) = read_json(&metrics)?;
                let text = run.join("metrics.txt");
                earlyrisk::io::write_atomic(&text, report.render_text().as_bytes())?;
                println!("wrote {}", text.display());
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn upstream(d: &Option<String>) -> &str {
    d.as_deref().unwrap_or("")
}

fn simulate(cfg: &RunConfig, with_splits: bool, out: &Path) -> Result<()> {
    let cohort = simulate_cohort(&cfg.cohort, &cfg.priors(), &TemplateGenerator)?;
    let digest = cfg.digest();
    write_table(&out.join(INTERACTIONS), &digest, &cohort.interactions)?;
    write_table(&out.join(HIDDEN_LABELS), &digest, &cohort.labels)?;
    let mut splits = Vec::new();
    if with_splits {
        for kind in CHALLENGE {
            let spec = build_split(kind, &cohort.profiles, cfg.cohort.horizon_days, &cfg.splits, cfg.split_seed)
                .with_context(|| format!("building the {kind} split"))?;
            let file = format!("splits/{}.csv", kind.name());
            write_split(&out.join(&file), &digest, &spec)?;
            splits.push(SplitSummary {
                kind,
                file,
                n_train_users: spec.train_user_ids.len(),
                n_test_users: spec.test_user_ids.len(),
                n_dropped_sessions: spec.dropped.len(),
            });
        }
    }
    let mut manifest = RunManifest::load_or_default(out)?;
    manifest.cohort = Some(CohortSummary {
        digest: digest.clone(),
        n_users: cfg.cohort.n_users,
        horizon_days: cfg.cohort.horizon_days,
        videos_per_day: cfg.cohort.videos_per_day,
        mode: match cfg.cohort.mode {
            GenerationMode::Full => "full".into(),
            GenerationMode::NoLabel => "no-label".into(),
        },
        per_sample_sd: cfg.per_sample_sd,
        transitions: cfg.cohort.transitions,
        interaction_records: cohort.interactions.len(),
        hidden_label_rows: cohort.labels.len(),
        splits,
    });
    manifest.save(out)?;
    earlyrisk::io::write_atomic(&out.join("config.toml"), cfg.to_toml_string().unwrap_or_default().as_bytes())?;
    println!(
        "wrote {} interaction records and {} hidden-label rows to {} (digest {digest})",
        cohort.interactions.len(),
        cohort.labels.len(),
        out.display()
    );
    Ok(())
}

fn evaluate_run(cfg: &RunConfig, run: &Path, metrics: &[Metric], detections: Option<&Path>) -> Result<MetricsReport> {
    let inter: Table<VideoInteractionRecord> = read_table(&run.join(INTERACTIONS), Stage::Evaluate)?;
    let labels: Table<HiddenLabelRecord> = read_table(&run.join(HIDDEN_LABELS), Stage::Evaluate)?;
    let mut splits: Vec<SplitSpec> = Vec::new();
    for kind in CHALLENGE {
        let p = run.join("splits").join(format!("{}.csv", kind.name()));
        if p.exists() {
            splits.push(read_split(&p, Stage::Evaluate)?);
        }
    }
    let dep = if run.join(QUESTIONS).exists() && run.join(EXPECTED).exists() {
        let q: Table<QuestionRecord> = read_table(&run.join(QUESTIONS), Stage::Evaluate)?;
        let e: Table<ExpectedLabel> = read_table(&run.join(EXPECTED), Stage::Evaluate)?;
        Some((q.rows, e.rows))
    } else {
        None
    };
    let inputs = EvaluationInputs {
        clean: &inter.rows,
        labels: &labels.rows,
        weights: &cfg.cohort.weights,
        challenge_splits: &splits,
        deployment: dep.as_ref().map(|(q, e)| (q.as_slice(), e.as_slice())),
    };
    let mut report = evaluate(&inputs, &cfg.evaluation, metrics)?;
    if let Some(p) = detections {
        let d: Table<DetectionOutcome> = read_table(p, Stage::Evaluate)?;
        let theta = d.rows.first().map_or(cfg.evaluation.theta, |o| o.threshold);
        report.detection = Some(detection_report(&d.rows, theta, &cfg.evaluation.erde_o)?);
    }
    report.config_digest = config_digest(&(upstream(&inter.digest), "evaluate", &cfg.evaluation, metrics));
    Ok(report)
}

