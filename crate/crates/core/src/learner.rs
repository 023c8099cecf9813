//! Session aggregation and the nine-rule priority classifier.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::{DelayCondition, ExpectedLabel, QuestionRecord};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, median, ClassificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerStatus {
    #[serde(rename = "Low-Engagement")]
    LowEngagement,
    #[serde(rename = "Fast but Inaccurate")]
    FastButInaccurate,
    #[serde(rename = "Delayed Recall Weakness")]
    DelayedRecallWeakness,
    #[serde(rename = "High Cognitive Load")]
    HighCognitiveLoad,
    #[serde(rename = "Attention-Fluctuating")]
    AttentionFluctuating,
    #[serde(rename = "Strong Retention")]
    StrongRetention,
    #[serde(rename = "Stable Learner")]
    StableLearner,
    #[serde(rename = "Slow but Accurate")]
    SlowButAccurate,
    #[serde(rename = "Needs Review")]
    NeedsReview,
}

impl LearnerStatus {
    /// Priority order.
    pub const ALL: [LearnerStatus; 9] = [
        LearnerStatus::LowEngagement,
        LearnerStatus::FastButInaccurate,
        LearnerStatus::DelayedRecallWeakness,
        LearnerStatus::HighCognitiveLoad,
        LearnerStatus::AttentionFluctuating,
        LearnerStatus::StrongRetention,
        LearnerStatus::StableLearner,
        LearnerStatus::SlowButAccurate,
        LearnerStatus::NeedsReview,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerStatus::LowEngagement => "Low-Engagement",
            LearnerStatus::FastButInaccurate => "Fast but Inaccurate",
            LearnerStatus::DelayedRecallWeakness => "Delayed Recall Weakness",
            LearnerStatus::HighCognitiveLoad => "High Cognitive Load",
            LearnerStatus::AttentionFluctuating => "Attention-Fluctuating",
            LearnerStatus::StrongRetention => "Strong Retention",
            LearnerStatus::StableLearner => "Stable Learner",
            LearnerStatus::SlowButAccurate => "Slow but Accurate",
            LearnerStatus::NeedsReview => "Needs Review",
        }
    }

    /// 1-based priority.
    pub fn priority(self) -> usize {
        self as usize + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for LearnerStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LearnerStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerStatus::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown learner status `{s}`")))
    }
}

/// Accuracy-like fields are `None` when no question in scope was answered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionAggregates {
    pub completion: f64,
    pub missed_rate: f64,
    pub avg_skip: f64,
    pub median_rt: Option<f64>,
    pub acc: Option<f64>,
    pub imm_acc: Option<f64>,
    pub del_acc: Option<f64>,
    pub drop: Option<f64>,
    /// Population variance of the early/middle/late third accuracies.
    pub acc_var: f64,
    /// Sample sd of answered response times, seconds.
    pub rt_var: f64,
}

/// Third sizes for `n` records, remainder assigned to the earlier thirds.
pub fn third_sizes(n: usize) -> [usize; 3] {
    let b = n / 3;
    let r = n % 3;
    [b + usize::from(r > 0), b + usize::from(r > 1), b]
}

fn accuracy<'a>(records: impl IntoIterator<Item = &'a QuestionRecord>) -> Option<f64> {
    let (mut right, mut answered) = (0usize, 0usize);
    for r in records {
        if let Some(c) = r.answer_correct {
            answered += 1;
            right += usize::from(c);
        }
    }
    (answered > 0).then(|| right as f64 / answered as f64)
}

fn population_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Session aggregates in presentation order.
pub fn aggregate(records: &[QuestionRecord]) -> Result<SessionAggregates> {
    if records.len() < 3 {
        return Err(Error::InvalidInput(format!("session needs at least 3 records, got {}", records.len())));
    }
    let n = records.len() as f64;
    let missed = records.iter().filter(|r| r.missed_question || r.answer_correct.is_none()).count();
    let by = |c: DelayCondition| accuracy(records.iter().filter(move |r| r.delay_condition == c));
    let imm_acc = by(DelayCondition::Immediate);
    let del_acc = by(DelayCondition::Delayed);
    let sizes = third_sizes(records.len());
    let mut third_acc = Vec::with_capacity(3);
    let mut start = 0;
    for s in sizes {
        if let Some(a) = accuracy(&records[start..start + s]) {
            third_acc.push(a);
        }
        start += s;
    }
    let mut rts: Vec<f64> =
        records.iter().filter(|r| r.answer_correct.is_some()).map(|r| r.response_time_seconds).collect();
    let rt_var = sample_sd(&rts);
    Ok(SessionAggregates {
        completion: records[0].video_completion_rate,
        missed_rate: missed as f64 / n,
        avg_skip: records.iter().map(|r| f64::from(r.skip_count)).sum::<f64>() / n,
        median_rt: median(&mut rts),
        acc: accuracy(records),
        imm_acc,
        del_acc,
        drop: imm_acc.zip(del_acc).map(|(i, d)| i - d),
        acc_var: population_variance(&third_acc),
        rt_var,
    })
}

fn ge(x: Option<f64>, t: f64) -> bool {
    x.is_some_and(|v| v >= t)
}

fn lt(x: Option<f64>, t: f64) -> bool {
    x.is_some_and(|v| v < t)
}

fn le(x: Option<f64>, t: f64) -> bool {
    x.is_some_and(|v| v <= t)
}

/// Each rule's condition, in priority order.
pub fn rule_holds(status: LearnerStatus, a: &SessionAggregates) -> bool {
    use LearnerStatus::*;
    match status {
        LowEngagement => a.completion < 0.60 || a.missed_rate >= 0.40 || a.avg_skip >= 3.0,
        FastButInaccurate => le(a.median_rt, 6.0) && lt(a.acc, 0.60),
        DelayedRecallWeakness => ge(a.imm_acc, 0.75) && lt(a.del_acc, 0.60) && ge(a.drop, 0.25),
        HighCognitiveLoad => lt(a.acc, 0.60) && ge(a.median_rt, 20.0) && a.completion >= 0.70,
        AttentionFluctuating => a.acc_var >= 0.25 || a.rt_var >= 10.0,
        StrongRetention => ge(a.acc, 0.80) && ge(a.del_acc, 0.75) && le(a.drop, 0.15),
        StableLearner => ge(a.acc, 0.65) && ge(a.del_acc, 0.60),
        SlowButAccurate => ge(a.median_rt, 20.0) && ge(a.acc, 0.70),
        NeedsReview => !ge(a.acc, 0.65) || !ge(a.del_acc, 0.60),
    }
}

/// First matching status and its 1-based rule index.
pub fn classify(a: &SessionAggregates) -> (LearnerStatus, usize) {
    for s in LearnerStatus::ALL {
        if s == LearnerStatus::NeedsReview || rule_holds(s, a) {
            return (s, s.priority());
        }
    }
    unreachable!("the final rule always matches")
}

/// A hand-built aggregate that classifies as `status`.
pub fn witness(status: LearnerStatus) -> SessionAggregates {
    let benign = SessionAggregates {
        completion: 0.9,
        missed_rate: 0.0,
        avg_skip: 0.5,
        median_rt: Some(12.0),
        acc: Some(0.7),
        imm_acc: Some(0.72),
        del_acc: Some(0.67),
        drop: Some(0.05),
        acc_var: 0.01,
        rt_var: 3.0,
    };
    use LearnerStatus::*;
    match status {
        LowEngagement => SessionAggregates { completion: 0.5, ..benign },
        FastButInaccurate => SessionAggregates { median_rt: Some(5.0), acc: Some(0.5), ..benign },
        DelayedRecallWeakness => {
            SessionAggregates { acc: Some(0.72), imm_acc: Some(0.9), del_acc: Some(0.4), drop: Some(0.5), ..benign }
        }
        HighCognitiveLoad => SessionAggregates { acc: Some(0.5), median_rt: Some(25.0), ..benign },
        AttentionFluctuating => SessionAggregates { rt_var: 12.0, ..benign },
        StrongRetention => {
            SessionAggregates { acc: Some(0.9), imm_acc: Some(0.9), del_acc: Some(0.85), drop: Some(0.05), ..benign }
        }
        StableLearner => benign,
        SlowButAccurate => SessionAggregates {
            acc: Some(0.75),
            imm_acc: Some(0.8),
            del_acc: Some(0.58),
            drop: Some(0.22),
            median_rt: Some(25.0),
            ..benign
        },
        NeedsReview => SessionAggregates { acc: Some(0.6), imm_acc: Some(0.6), del_acc: Some(0.6), drop: Some(0.0), ..benign },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionClassification {
    pub session_id: u32,
    pub predicted_status: LearnerStatus,
    pub expected_status: LearnerStatus,
    pub rule_index: usize,
}

/// Aggregate and classify every session, keyed by `session_id` in
/// ascending order.
pub fn classify_sessions(questions: &[QuestionRecord]) -> Result<Vec<(u32, SessionAggregates, LearnerStatus, usize)>> {
    let mut sessions: BTreeMap<u32, Vec<QuestionRecord>> = BTreeMap::new();
    for q in questions {
        sessions.entry(q.session_id).or_default().push(q.clone());
    }
    sessions
        .into_iter()
        .map(|(sid, recs)| {
            let agg = aggregate(&recs)?;
            let (status, rule) = classify(&agg);
            Ok((sid, agg, status, rule))
        })
        .collect()
}

/// Classify every session and score the result against expected labels.
pub fn evaluate_rule_classifier(
    questions: &[QuestionRecord],
    expected: &[ExpectedLabel],
) -> Result<(Vec<SessionClassification>, ClassificationReport)> {
    let labels: BTreeMap<u32, LearnerStatus> = expected.iter().map(|e| (e.session_id, e.expected_status)).collect();
    let mut out = Vec::new();
    for (sid, _, status, rule) in classify_sessions(questions)? {
        let expected_status =
            *labels.get(&sid).ok_or_else(|| Error::InvalidInput(format!("session {sid} has no expected label")))?;
        out.push(SessionClassification { session_id: sid, predicted_status: status, expected_status, rule_index: rule });
    }
    let truth: Vec<usize> = out.iter().map(|c| c.expected_status.index()).collect();
    let pred: Vec<usize> = out.iter().map(|c| c.predicted_status.index()).collect();
    let names: Vec<&str> = LearnerStatus::ALL.iter().map(|s| s.name()).collect();
    let report = classification_report(&truth, &pred, &names)?;
    Ok((out, report))
}
