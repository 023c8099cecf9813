//! Time-aware and classification metrics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::detect::DetectionOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErdeParams {
    /// Delay (in observed sessions) at which the latency cost reaches 1/2.
    pub o: f64,
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_tp: f64,
}

impl ErdeParams {
    pub fn new(o: f64) -> Self {
        Self { o, c_fp: 1.0, c_fn: 1.0, c_tp: 1.0 }
    }

    /// False-positive cost set to the positive-class prevalence.
    pub fn with_prevalence(o: f64, n_positive: usize, n_total: usize) -> Self {
        let prevalence = if n_total == 0 { 0.0 } else { n_positive as f64 / n_total as f64 };
        Self { c_fp: prevalence, ..Self::new(o) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.o > 0.0) {
            return Err(Error::InvalidInput(format!("ERDE delay pivot must be > 0, got {}", self.o)));
        }
        if [self.c_fp, self.c_fn, self.c_tp].iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidInput("ERDE costs must be >= 0".into()));
        }
        Ok(())
    }
}

/// Outcome of one user's decision against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErdeCase {
    TruePositive { delay: u32 },
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

/// `decision` is `Some(k)` for a positive decision after `k` sessions.
pub fn erde_case(decision: Option<u32>, truth: bool) -> ErdeCase {
    match (decision, truth) {
        (Some(k), true) => ErdeCase::TruePositive { delay: k },
        (Some(_), false) => ErdeCase::FalsePositive,
        (None, true) => ErdeCase::FalseNegative,
        (None, false) => ErdeCase::TrueNegative,
    }
}

/// Latency cost factor `1 - 1 / (1 + e^(k - o))`.
pub fn latency_cost(k: u32, o: f64) -> f64 {
    1.0 - 1.0 / (1.0 + (f64::from(k) - o).exp())
}

pub fn erde_cost(case: ErdeCase, p: &ErdeParams) -> f64 {
    match case {
        ErdeCase::TruePositive { delay } => p.c_tp * latency_cost(delay, p.o),
        ErdeCase::FalsePositive => p.c_fp,
        ErdeCase::FalseNegative => p.c_fn,
        ErdeCase::TrueNegative => 0.0,
    }
}

pub fn erde_from_cases(cases: &[ErdeCase], p: &ErdeParams) -> Result<f64> {
    p.validate()?;
    if cases.is_empty() {
        return Err(Error::InvalidInput("ERDE needs at least one user".into()));
    }
    Ok(cases.iter().map(|c| erde_cost(*c, p)).sum::<f64>() / cases.len() as f64)
}

/// Mean ERDE over users.
pub fn erde(decisions: &[Option<u32>], truth: &[bool], p: &ErdeParams) -> Result<f64> {
    if decisions.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: decisions.len() });
    }
    let cases: Vec<_> = decisions.iter().zip(truth).map(|(d, t)| erde_case(*d, *t)).collect();
    erde_from_cases(&cases, p)
}

/// Cases for detector outcomes. An alarm before onset is a false positive.
pub fn detection_cases(outcomes: &[DetectionOutcome]) -> Vec<ErdeCase> {
    outcomes
        .iter()
        .map(|o| match (o.onset_day, o.first_alarm_day) {
            (None, Some(_)) => ErdeCase::FalsePositive,
            (None, None) => ErdeCase::TrueNegative,
            (Some(onset), Some(alarm)) if alarm < onset => ErdeCase::FalsePositive,
            (Some(_), _) => match o.delay_sessions {
                Some(k) => ErdeCase::TruePositive { delay: k },
                None => ErdeCase::FalseNegative,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtdSummary {
    /// Users with an onset inside the horizon.
    pub n_onset: usize,
    pub detected: usize,
    pub censored: usize,
    pub median: Option<f64>,
    pub fraction_detected: f64,
    pub fraction_within_10: f64,
    /// `cumulative[k]`: fraction of onset users detected within `k` days.
    pub cumulative: Vec<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

pub fn ttd_summary(outcomes: &[DetectionOutcome]) -> TtdSummary {
    let with_onset: Vec<_> = outcomes.iter().filter(|o| o.onset_day.is_some()).collect();
    let ttds: Vec<u32> = with_onset.iter().filter_map(|o| o.ttd()).collect();
    let n = with_onset.len();
    let frac = |k: u32| if n == 0 { 0.0 } else { ttds.iter().filter(|&&t| t <= k).count() as f64 / n as f64 };
    let max = ttds.iter().copied().max().unwrap_or(0);
    let mut as_f: Vec<f64> = ttds.iter().map(|&t| f64::from(t)).collect();
    TtdSummary {
        n_onset: n,
        detected: ttds.len(),
        censored: n - ttds.len(),
        median: median(&mut as_f),
        fraction_detected: if n == 0 { 0.0 } else { ttds.len() as f64 / n as f64 },
        fraction_within_10: frac(10),
        cumulative: (0..=max).map(frac).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_fpr: f64,
    pub threshold: f64,
    pub achieved_fpr: f64,
    pub tpr: f64,
}

fn rate_at(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64
}

/// For each target, the smallest threshold (over observed scores and +inf)
/// whose negative flag rate `P(neg >= t)` does not exceed the target.
pub fn fixed_fpr_thresholds(neg: &[f64], pos: &[f64], targets: &[f64]) -> Result<Vec<OperatingPoint>> {
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::InvalidInput("fixed-FPR thresholds need negative and positive scores".into()));
    }
    if neg.iter().chain(pos).any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores must not be NaN".into()));
    }
    let mut desc = neg.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let mut all: Vec<f64> = neg.iter().chain(pos).copied().collect();
    all.sort_by(f64::total_cmp);
    let n = desc.len();
    targets
        .iter()
        .map(|&target| {
            let ok = |m: usize| m as f64 / n as f64 <= target;
            let mut m = ((target * n as f64).floor().max(0.0) as usize).min(n);
            while m < n && ok(m + 1) {
                m += 1;
            }
            while m > 0 && !ok(m) {
                m -= 1;
            }
            let threshold = if m == n {
                all[0]
            } else {
                let floor = desc[m];
                let i = all.partition_point(|&s| s <= floor);
                all.get(i).copied().unwrap_or(f64::INFINITY)
            };
            Ok(OperatingPoint {
                target_fpr: target,
                threshold,
                achieved_fpr: rate_at(neg, threshold),
                tpr: rate_at(pos, threshold),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Precision was set to 0 because nothing was predicted as this class.
    pub zero_predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<String>,
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub n: u64,
}

impl ClassificationReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn classification_report<S: AsRef<str>>(truth: &[usize], pred: &[usize], classes: &[S]) -> Result<ClassificationReport> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("classification report needs at least one label".into()));
    }
    let k = classes.len();
    if let Some(bad) = truth.iter().chain(pred).find(|&&c| c >= k) {
        return Err(Error::InvalidInput(format!("class index {bad} outside {k} classes")));
    }
    let mut confusion = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let n = truth.len() as u64;
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics {
                class: classes[c].as_ref().to_string(),
                support,
                predicted,
                precision,
                recall,
                f1,
                zero_predicted: predicted == 0,
            }
        })
        .collect();
    let diag: u64 = (0..k).map(|c| confusion[c][c]).sum();
    let p_o = ratio(diag, n);
    let p_e: f64 = per_class.iter().map(|c| ratio(c.support, n) * ratio(c.predicted, n)).sum();
    let kappa = if (1.0 - p_e).abs() < 1e-15 { if p_o == 1.0 { 1.0 } else { 0.0 } } else { (p_o - p_e) / (1.0 - p_e) };
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(ClassificationReport {
        classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
        confusion,
        accuracy: p_o,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        kappa,
        n,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn pooled_sd(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate("each sample needs at least 2 values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if !(sp > 0.0) {
        return Err(Error::Degenerate("pooled standard deviation is zero".into()));
    }
    Ok((ma, mb, sp))
}

/// Cohen's d with the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb, sp) = pooled_sd(a, b)?;
    Ok((ma - mb) / sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided pooled-variance two-sample t-test.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    let (ma, mb, sp) = pooled_sd(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let t = (ma - mb) / (sp * (1.0 / na + 1.0 / nb).sqrt());
    let df = na + nb - 2.0;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(TTest { t, df, p_value: (2.0 * dist.sf(t.abs())).min(1.0) })
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}
