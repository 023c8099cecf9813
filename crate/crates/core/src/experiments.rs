//! Evaluation experiments: coherence under noise, separability, probe
//! ablations, threshold detection and the deployment rule classifier.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::deployment::{ExpectedLabel, QuestionRecord};
use crate::detect::{daily_series, detect_all, onset_days, DetectionOutcome, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::features::{build_features, FeatureMask, FeatureRow};
use crate::learner::evaluate_rule_classifier;
use crate::metrics::{
    classification_report, cohens_d, detection_cases, erde_from_cases, fixed_fpr_thresholds, ls_slope, t_test,
    ClassificationReport, ErdeCase, ErdeParams, OperatingPoint, TtdSummary,
};
use crate::model::{CoherenceWeights, RiskState};
use crate::perturb::{perturb, NoiseConfig};
use crate::probe::{label_rows, majority_vote, predict, predict_rows, risk_score, train_probe, LabeledRow, ProbeConfig, ProbeModel};
use crate::simulate::{HiddenLabelRecord, VideoInteractionRecord};
use crate::splits::{default_split, SplitKind, SplitSpec};

/// Report sections that can be computed independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Coherence,
    Separability,
    Ablation,
    Detection,
    Deployment,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Coherence,
        Metric::Separability,
        Metric::Ablation,
        Metric::Detection,
        Metric::Deployment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Coherence => "coherence",
            Metric::Separability => "separability",
            Metric::Ablation => "ablation",
            Metric::Detection => "detection",
            Metric::Deployment => "deployment",
        }
    }

    /// Parse a comma-separated list; `all` selects every section.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Metric::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("no metrics selected".into()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Noise for the noisy coherence column, the coherence-only ablation and detection.
    pub noise: NoiseConfig,
    /// Noise level for the separability table.
    pub separability_sigma: f64,
    pub feature_window: u32,
    pub probe: ProbeConfig,
    pub train_frac: f64,
    pub split_seed: u64,
    pub theta: f64,
    pub erde_o: Vec<f64>,
    pub target_fprs: Vec<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            separability_sigma: 0.05,
            feature_window: 1,
            probe: ProbeConfig::default(),
            train_frac: 0.7,
            split_seed: 7,
            theta: DEFAULT_THETA,
            erde_o: vec![5.0, 50.0],
            target_fprs: vec![0.01, 0.05, 0.10],
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.noise.with_sigma(self.separability_sigma).validate()?;
        self.probe.validate()?;
        if self.feature_window < 1 {
            return Err(Error::InvalidConfig("feature_window must be >= 1".into()));
        }
        if !(0.0 < self.train_frac && self.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!("train_frac must be in (0, 1), got {}", self.train_frac)));
        }
        if !(0.0 < self.theta && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!("theta must be in (0, 1), got {}", self.theta)));
        }
        if let Some(o) = self.erde_o.iter().find(|o| !(**o > 0.0)) {
            return Err(Error::InvalidConfig(format!("ERDE pivot must be > 0, got {o}")));
        }
        if let Some(t) = self.target_fprs.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidConfig(format!("target FPR must be in [0, 1], got {t}")));
        }
        Ok(())
    }
}

/// `(user, day) -> state` lookup.
pub fn state_map(labels: &[HiddenLabelRecord]) -> BTreeMap<(u32, u32), RiskState> {
    labels.iter().map(|l| ((l.user_id, l.day), l.state)).collect()
}

/// A perturbed copy of `records`.
pub fn noisy_copy(records: &[VideoInteractionRecord], noise: &NoiseConfig, w: &CoherenceWeights) -> Result<Vec<VideoInteractionRecord>> {
    let mut out = records.to_vec();
    perturb(&mut out, noise, w)?;
    Ok(out)
}

/// Mean record coherence and record count per evaluated state.
pub fn state_means(
    records: &[VideoInteractionRecord],
    states: &BTreeMap<(u32, u32), RiskState>,
) -> BTreeMap<RiskState, (f64, usize)> {
    let mut acc: BTreeMap<RiskState, (f64, usize)> = BTreeMap::new();
    for r in records {
        if let Some(&s) = states.get(&(r.user_id, r.day)) {
            if s.is_evaluated() {
                let e = acc.entry(s).or_default();
                e.0 += r.coherence;
                e.1 += 1;
            }
        }
    }
    acc.into_iter().map(|(s, (sum, n))| (s, (sum / n as f64, n))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCoherence {
    pub state: RiskState,
    pub n_records: usize,
    pub clean: f64,
    pub noisy: f64,
    /// `100 * (clean - noisy) / clean`.
    pub drop_pct: f64,
}

pub fn coherence_table(
    clean: &[VideoInteractionRecord],
    noisy: &[VideoInteractionRecord],
    states: &BTreeMap<(u32, u32), RiskState>,
) -> Result<Vec<StateCoherence>> {
    if clean.len() != noisy.len() {
        return Err(Error::DimensionMismatch { expected: clean.len(), got: noisy.len() });
    }
    let c = state_means(clean, states);
    let n = state_means(noisy, states);
    Ok(c.into_iter()
        .map(|(state, (clean, n_records))| {
            let noisy = n[&state].0;
            StateCoherence { state, n_records, clean, noisy, drop_pct: 100.0 * (clean - noisy) / clean }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityRow {
    pub feature: String,
    pub earlier: RiskState,
    pub later: RiskState,
    /// Cohen's d of `earlier - later`.
    pub d: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub n_earlier: usize,
    pub n_later: usize,
}

fn group_by_state<F>(rows: &[FeatureRow], states: &BTreeMap<(u32, u32), RiskState>, f: F) -> BTreeMap<RiskState, Vec<f64>>
where
    F: Fn(&FeatureRow) -> f64,
{
    let mut out: BTreeMap<RiskState, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(&s) = states.get(&(r.user_id, r.day)) {
            if s.is_evaluated() {
                out.entry(s).or_default().push(f(r));
            }
        }
    }
    out
}

/// Per user and state: least-squares slope of daily drift from the user's
/// first row through the last day spent in that state.
pub fn cumulative_drift_slopes(
    rows: &[FeatureRow],
    states: &BTreeMap<(u32, u32), RiskState>,
) -> BTreeMap<RiskState, Vec<f64>> {
    let mut out: BTreeMap<RiskState, Vec<f64>> = BTreeMap::new();
    for user in rows.chunk_by(|a, b| a.user_id == b.user_id) {
        let mut last: BTreeMap<RiskState, usize> = BTreeMap::new();
        for (i, r) in user.iter().enumerate() {
            if let Some(&s) = states.get(&(r.user_id, r.day)) {
                if s.is_evaluated() {
                    last.insert(s, i);
                }
            }
        }
        for (s, i) in last {
            let x: Vec<f64> = user[..=i].iter().map(|r| f64::from(r.day)).collect();
            let y: Vec<f64> = user[..=i].iter().map(FeatureRow::drift).collect();
            if let Some(slope) = ls_slope(&x, &y) {
                out.entry(s).or_default().push(slope);
            }
        }
    }
    out
}

fn separability_rows(feature: &str, groups: &BTreeMap<RiskState, Vec<f64>>) -> Result<Vec<SeparabilityRow>> {
    let ev = RiskState::EVALUATED;
    let mut out = Vec::new();
    for pair in ev.windows(2) {
        let (Some(a), Some(b)) = (groups.get(&pair[0]), groups.get(&pair[1])) else {
            continue;
        };
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        let tt = t_test(a, b)?;
        out.push(SeparabilityRow {
            feature: feature.into(),
            earlier: pair[0],
            later: pair[1],
            d: cohens_d(a, b)?,
            t: tt.t,
            df: tt.df,
            p_value: tt.p_value,
            n_earlier: a.len(),
            n_later: b.len(),
        });
    }
    Ok(out)
}

/// Adjacent-state separability of daily coherence, daily entropy and
/// cumulative drift slope. `rows` must be daily features sorted by `(user, day)`.
pub fn separability(rows: &[FeatureRow], states: &BTreeMap<(u32, u32), RiskState>) -> Result<Vec<SeparabilityRow>> {
    let mut out = separability_rows("coherence", &group_by_state(rows, states, FeatureRow::coherence))?;
    out.extend(separability_rows("entropy", &group_by_state(rows, states, FeatureRow::entropy))?);
    out.extend(separability_rows("drift_slope", &cumulative_drift_slopes(rows, states))?);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub mask: FeatureMask,
    pub sigma: f64,
    pub split: SplitKind,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1: [f64; 3],
    /// Per-user majority-vote accuracy.
    pub user_accuracy: f64,
    pub epochs_run: usize,
}

/// A trained probe with its scored test rows.
#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub row: AblationRow,
    pub model: ProbeModel,
    pub report: ClassificationReport,
    pub test_rows: Vec<LabeledRow>,
    pub probs: Vec<[f64; 3]>,
}

fn class_names() -> Vec<&'static str> {
    RiskState::EVALUATED.iter().map(|s| s.name()).collect()
}

/// Train on the split's train users and score its scored test rows.
/// `train` and `test` may come from differently perturbed data.
#[allow(clippy::too_many_arguments)]
pub fn run_probe(
    setting: &str,
    train: &[FeatureRow],
    test: &[FeatureRow],
    states: &BTreeMap<(u32, u32), RiskState>,
    split: &SplitSpec,
    mask: FeatureMask,
    sigma: f64,
    cfg: &ProbeConfig,
) -> Result<ProbeRun> {
    let train_rows: Vec<LabeledRow> =
        label_rows(train, states, mask).into_iter().filter(|r| split.is_train(r.user_id)).collect();
    let test_rows: Vec<LabeledRow> =
        label_rows(test, states, mask).into_iter().filter(|r| split.is_scored(r.user_id, r.day)).collect();
    if test_rows.is_empty() {
        return Err(Error::InvalidInput(format!("split `{}` leaves no scored test rows", split.kind)));
    }
    let model = train_probe(&train_rows, mask, cfg)?;
    let probs = predict_rows(&model, &test_rows)?;
    let pred: Vec<usize> = probs.iter().map(predict).collect();
    let truth: Vec<usize> = test_rows.iter().map(|r| r.y).collect();
    let report = classification_report(&truth, &pred, &class_names())?;
    let votes = majority_vote(&test_rows, &pred);
    let user_accuracy = votes.iter().filter(|(t, p)| t == p).count() as f64 / votes.len() as f64;
    let row = AblationRow {
        setting: setting.into(),
        mask,
        sigma,
        split: split.kind,
        n_train_rows: train_rows.len(),
        n_test_rows: test_rows.len(),
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        f1: [report.per_class[0].f1, report.per_class[1].f1, report.per_class[2].f1],
        user_accuracy,
        epochs_run: model.epochs_run,
    };
    Ok(ProbeRun { row, model, report, test_rows, probs })
}

/// Operating points on probe risk scores: Healthy rows are negatives.
pub fn probe_operating_points(run: &ProbeRun, targets: &[f64]) -> Result<Vec<OperatingPoint>> {
    let (mut neg, mut pos) = (Vec::new(), Vec::new());
    for (r, p) in run.test_rows.iter().zip(&run.probs) {
        if r.y == 0 { neg.push(risk_score(p)) } else { pos.push(risk_score(p)) }
    }
    fixed_fpr_thresholds(&neg, &pos, targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErdeValue {
    pub o: f64,
    pub c_fp: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub theta: f64,
    pub n_users: usize,
    pub ttd: TtdSummary,
    pub erde: Vec<ErdeValue>,
}

/// TTD summary and ERDE at each pivot, with `c_fp` set to the share of
/// users that have an onset.
pub fn detection_report(outcomes: &[DetectionOutcome], theta: f64, pivots: &[f64]) -> Result<DetectionReport> {
    let cases: Vec<ErdeCase> = detection_cases(outcomes);
    let n_pos = outcomes.iter().filter(|o| o.onset_day.is_some()).count();
    let erde = pivots
        .iter()
        .map(|&o| {
            let p = ErdeParams::with_prevalence(o, n_pos, outcomes.len());
            Ok(ErdeValue { o, c_fp: p.c_fp, value: erde_from_cases(&cases, &p)? })
        })
        .collect::<Result<_>>()?;
    Ok(DetectionReport { theta, n_users: outcomes.len(), ttd: crate::metrics::ttd_summary(outcomes), erde })
}

/// Threshold detection on daily mean coherence.
pub fn run_detection(
    daily: &[FeatureRow],
    labels: &[HiddenLabelRecord],
    theta: f64,
    min_day: u32,
) -> Result<Vec<DetectionOutcome>> {
    detect_all(&daily_series(daily), &onset_days(labels), theta, min_day)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub sessions: usize,
    pub questions: usize,
    pub classification: ClassificationReport,
}

pub fn deployment_report(questions: &[QuestionRecord], expected: &[ExpectedLabel]) -> Result<DeploymentReport> {
    let (sessions, classification) = evaluate_rule_classifier(questions, expected)?;
    Ok(DeploymentReport { sessions: sessions.len(), questions: questions.len(), classification })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_digest: String,
    pub n_users: usize,
    pub n_records: usize,
    pub coherence: Vec<StateCoherence>,
    pub separability: Vec<SeparabilityRow>,
    pub ablation: Vec<AblationRow>,
    pub challenge: Vec<AblationRow>,
    pub operating_points: Vec<OperatingPoint>,
    pub detection: Option<DetectionReport>,
    pub deployment: Option<DeploymentReport>,
}

/// Inputs to [`evaluate`]; optional parts enable their report sections.
pub struct EvaluationInputs<'a> {
    pub clean: &'a [VideoInteractionRecord],
    pub labels: &'a [HiddenLabelRecord],
    pub weights: &'a CoherenceWeights,
    pub challenge_splits: &'a [SplitSpec],
    pub deployment: Option<(&'a [QuestionRecord], &'a [ExpectedLabel])>,
}

fn daily(records: &[VideoInteractionRecord]) -> Result<Vec<FeatureRow>> {
    build_features(records, 1)
}

/// Compute the selected report sections from a clean cohort.
pub fn evaluate(inputs: &EvaluationInputs<'_>, cfg: &EvaluationConfig, metrics: &[Metric]) -> Result<MetricsReport> {
    cfg.validate()?;
    let states = state_map(inputs.labels);
    let users: Vec<u32> = inputs.labels.iter().map(|l| l.user_id).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut report = MetricsReport { n_users: users.len(), n_records: inputs.clean.len(), ..Default::default() };
    let w = inputs.weights;
    let wants = |m: Metric| metrics.contains(&m);
    let needs_noisy = wants(Metric::Coherence) || wants(Metric::Ablation) || wants(Metric::Detection);
    let noisy = if needs_noisy { noisy_copy(inputs.clean, &cfg.noise, w)? } else { Vec::new() };

    if wants(Metric::Coherence) {
        report.coherence = coherence_table(inputs.clean, &noisy, &states)?;
    }
    if wants(Metric::Separability) {
        let sep = noisy_copy(inputs.clean, &cfg.noise.with_sigma(cfg.separability_sigma), w)?;
        report.separability = separability(&daily(&sep)?, &states)?;
    }
    if wants(Metric::Ablation) {
        let split = default_split(&users, cfg.train_frac, cfg.split_seed)?;
        let clean_f = build_features(inputs.clean, cfg.feature_window)?;
        let noisy_f = build_features(&noisy, cfg.feature_window)?;
        let sigma = cfg.noise.sigma;
        let settings = [
            ("Full Model", FeatureMask::Full, &noisy_f, sigma),
            ("Coherence Only", FeatureMask::CoherenceOnly, &noisy_f, sigma),
            ("Behavior Only", FeatureMask::BehaviorOnly, &noisy_f, sigma),
            ("No Noise Injection", FeatureMask::Full, &clean_f, 0.0),
        ];
        for (name, mask, f, s) in settings {
            let run = run_probe(name, f, f, &states, &split, mask, s, &cfg.probe)?;
            if mask == FeatureMask::CoherenceOnly {
                report.operating_points = probe_operating_points(&run, &cfg.target_fprs)?;
            }
            report.ablation.push(run.row);
        }
        for spec in inputs.challenge_splits {
            report.challenge.push(challenge_row(inputs.clean, &noisy_f, &states, spec, cfg, w)?);
        }
    }
    if wants(Metric::Detection) {
        let outcomes = run_detection(&daily(&noisy)?, inputs.labels, cfg.theta, 0)?;
        report.detection = Some(detection_report(&outcomes, cfg.theta, &cfg.erde_o)?);
    }
    if wants(Metric::Deployment) {
        if let Some((q, e)) = inputs.deployment {
            report.deployment = Some(deployment_report(q, e)?);
        }
    }
    Ok(report)
}

/// Coherence-only probe on one challenge split.
fn challenge_row(
    clean: &[VideoInteractionRecord],
    noisy_f: &[FeatureRow],
    states: &BTreeMap<(u32, u32), RiskState>,
    spec: &SplitSpec,
    cfg: &EvaluationConfig,
    w: &CoherenceWeights,
) -> Result<AblationRow> {
    let mask = FeatureMask::CoherenceOnly;
    let name = spec.kind.name();
    let run = match (spec.train_sigma, spec.test_sigma) {
        (Some(a), Some(b)) => {
            let train = build_features(&noisy_copy(clean, &cfg.noise.with_sigma(a), w)?, cfg.feature_window)?;
            let test = build_features(&noisy_copy(clean, &cfg.noise.with_sigma(b), w)?, cfg.feature_window)?;
            run_probe(name, &train, &test, states, spec, mask, b, &cfg.probe)?
        }
        _ => run_probe(name, noisy_f, noisy_f, states, spec, mask, cfg.noise.sigma, &cfg.probe)?,
    };
    Ok(run.row)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "censored".into(), |x| format!("{x:.1}"))
}

impl MetricsReport {
    /// Plain-text tables in the layout of the published results.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config digest: {}", self.config_digest);
        let _ = writeln!(s, "users: {}  interaction records: {}", self.n_users, self.n_records);
        let _ = writeln!(s, "Labels denote simulated risk states, not clinical diagnoses.");
        if !self.coherence.is_empty() {
            let _ = writeln!(s, "\nBehavioral coherence, clean vs noisy");
            let _ = writeln!(s, "{:<10} {:>10} {:>8} {:>8} {:>9}", "state", "records", "clean", "noisy", "drop (%)");
            for r in &self.coherence {
                let _ = writeln!(
                    s,
                    "{:<10} {:>10} {:>8.3} {:>8.3} {:>9.1}",
                    r.state.name(),
                    r.n_records,
                    r.clean,
                    r.noisy,
                    r.drop_pct
                );
            }
        }
        if !self.separability.is_empty() {
            let _ = writeln!(s, "\nSimulated state separability");
            let _ = writeln!(s, "{:<12} {:<20} {:>8} {:>10} {:>11}", "feature", "comparison", "|d|", "t", "p");
            for r in &self.separability {
                let cmp = format!("{} vs {}", r.earlier.name(), r.later.name());
                let _ = writeln!(s, "{:<12} {:<20} {:>8.2} {:>10.2} {:>11.3e}", r.feature, cmp, r.d.abs(), r.t, r.p_value);
            }
        }
        let probe_table = |s: &mut String, title: &str, rows: &[AblationRow]| {
            let _ = writeln!(s, "\n{title}");
            let _ = writeln!(
                s,
                "{:<22} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "setting", "sigma", "accuracy", "F1 MCI", "F1 EAD", "macro F1", "user acc"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<22} {:>6.2} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                    r.setting, r.sigma, r.accuracy, r.f1[1], r.f1[2], r.macro_f1, r.user_accuracy
                );
            }
        };
        if !self.ablation.is_empty() {
            probe_table(&mut s, "Ablation study (70/30 user split)", &self.ablation);
        }
        if !self.challenge.is_empty() {
            probe_table(&mut s, "Challenge splits (coherence-only probe)", &self.challenge);
        }
        if let Some(d) = &self.deployment {
            let c = &d.classification;
            let _ = writeln!(s, "\nDeployment classifier ({} sessions, {} questions)", d.sessions, d.questions);
            let _ = writeln!(s, "macro F1         {:.3}", c.macro_f1);
            let _ = writeln!(s, "macro precision  {:.3}", c.macro_precision);
            let _ = writeln!(s, "macro recall     {:.3}", c.macro_recall);
            let _ = writeln!(s, "Cohen's kappa    {:.3}", c.kappa);
            let _ = writeln!(s, "{:<24} {:>8} {:>10} {:>8} {:>8}", "status", "support", "precision", "recall", "F1");
            for m in &c.per_class {
                let flag = if m.zero_predicted { " (none predicted)" } else { "" };
                let _ = writeln!(
                    s,
                    "{:<24} {:>8} {:>10.3} {:>8.3} {:>8.3}{flag}",
                    m.class, m.support, m.precision, m.recall, m.f1
                );
            }
        }
        if let Some(d) = &self.detection {
            let t = &d.ttd;
            let _ = writeln!(s, "\nTime to detection (theta = {:.2}, {} users)", d.theta, d.n_users);
            let _ = writeln!(s, "users with onset    {}", t.n_onset);
            let _ = writeln!(s, "detected            {}", t.detected);
            let _ = writeln!(s, "censored            {}", t.censored);
            let _ = writeln!(s, "median TTD (days)   {}", opt(t.median));
            let _ = writeln!(s, "detected <= 10 days {:.3}", t.fraction_within_10);
            for e in &d.erde {
                let _ = writeln!(s, "ERDE_{:<14} {:.4} (c_fp = {:.3})", e.o, e.value, e.c_fp);
            }
        }
        if !self.operating_points.is_empty() {
            let _ = writeln!(s, "\nFixed-FPR operating points (coherence-only probe risk)");
            let _ = writeln!(s, "{:>10} {:>11} {:>12} {:>8}", "target", "threshold", "achieved", "TPR");
            for p in &self.operating_points {
                let _ = writeln!(s, "{:>10.2} {:>11.4} {:>12.4} {:>8.3}", p.target_fpr, p.threshold, p.achieved_fpr, p.tpr);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::Priors;
    use crate::simulate::{simulate_cohort, CohortConfig, TemplateGenerator};

    fn cohort(n: u32, days: u32) -> crate::simulate::Cohort {
        let cfg = CohortConfig { n_users: n, horizon_days: days, ..Default::default() };
        simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator).unwrap()
    }

    #[test]
    fn metric_list_parsing() {
        assert_eq!(Metric::parse_list("all").unwrap(), Metric::ALL.to_vec());
        assert_eq!(Metric::parse_list("detection,coherence").unwrap(), vec![Metric::Coherence, Metric::Detection]);
        assert!(Metric::parse_list("bogus").is_err());
        assert!(Metric::parse_list("").is_err());
    }

    #[test]
    fn zero_noise_has_zero_drop() {
        let c = cohort(4, 40);
        let states = state_map(&c.labels);
        let rows = coherence_table(&c.interactions, &c.interactions, &states).unwrap();
        assert!(rows.iter().all(|r| r.drop_pct == 0.0));
        assert_eq!(rows.iter().map(|r| r.n_records).sum::<usize>(), c.interactions.len());
    }

    #[test]
    fn state_means_match_direct_average() {
        let c = cohort(3, 30);
        let states = state_map(&c.labels);
        let means = state_means(&c.interactions, &states);
        let healthy: Vec<f64> = c
            .interactions
            .iter()
            .filter(|r| states[&(r.user_id, r.day)] == RiskState::Healthy)
            .map(|r| r.coherence)
            .collect();
        let (m, n) = means[&RiskState::Healthy];
        assert_eq!(n, healthy.len());
        assert!((m - healthy.iter().sum::<f64>() / n as f64).abs() < 1e-12);
    }

    #[test]
    fn linear_drift_gives_its_slope() {
        let mut rows = Vec::new();
        let mut states = BTreeMap::new();
        for day in 0..20u32 {
            let mut values = [0.0; 14];
            values[0] = 0.9 - 0.01 * f64::from(day);
            values[1] = 1.0 - values[0];
            rows.push(FeatureRow { user_id: 0, day, values });
            states.insert((0, day), if day < 10 { RiskState::Healthy } else { RiskState::Mci });
        }
        let slopes = cumulative_drift_slopes(&rows, &states);
        assert!((slopes[&RiskState::Healthy][0] - 0.01).abs() < 1e-12);
        assert!((slopes[&RiskState::Mci][0] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn report_renders_every_section() {
        let c = cohort(12, 120);
        let inputs = EvaluationInputs {
            clean: &c.interactions,
            labels: &c.labels,
            weights: &CoherenceWeights::default(),
            challenge_splits: &[],
            deployment: None,
        };
        let cfg = EvaluationConfig { probe: ProbeConfig { max_epochs: 5, ..Default::default() }, ..Default::default() };
        let report = evaluate(&inputs, &cfg, &Metric::ALL).unwrap();
        assert_eq!(report.ablation.len(), 4);
        assert_eq!(report.operating_points.len(), 3);
        let text = report.render_text();
        for needle in ["clean vs noisy", "separability", "Ablation", "Time to detection", "Fixed-FPR"] {
            assert!(text.contains(needle), "missing {needle}");
        }
    }
}
