//! Fixed-threshold coherence detector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::model::RiskState;
use crate::simulate::HiddenLabelRecord;

pub const DEFAULT_THETA: f64 = 0.65;

/// One day of a user's session-mean coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyScore {
    pub day: u32,
    pub coherence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub user_id: u32,
    /// First MCI day; `None` when the user never leaves Healthy.
    pub onset_day: Option<u32>,
    /// `None` means censored.
    pub detection_day: Option<u32>,
    pub threshold: f64,
    /// First alarm on any day, including before onset.
    pub first_alarm_day: Option<u32>,
    /// Observed sessions from onset up to (excluding) the detection day.
    pub delay_sessions: Option<u32>,
}

impl DetectionOutcome {
    pub fn ttd(&self) -> Option<u32> {
        Some(self.detection_day? - self.onset_day?)
    }
}

fn first_below(series: &[DailyScore], theta: f64, from_day: u32) -> Option<u32> {
    series.iter().find(|s| s.day >= from_day && s.coherence < theta).map(|s| s.day)
}

/// First day at or after `max(onset, min_day)` whose coherence falls below
/// `theta`. `series` must be sorted by day.
pub fn threshold_detect(
    user_id: u32,
    series: &[DailyScore],
    theta: f64,
    onset_day: Option<u32>,
    min_day: u32,
) -> Result<DetectionOutcome> {
    if series.is_empty() {
        return Err(Error::InvalidInput(format!("user {user_id}: empty coherence series")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must be in (0, 1), got {theta}")));
    }
    let detection_day = onset_day.and_then(|o| first_below(series, theta, o.max(min_day)));
    let delay_sessions = match (onset_day, detection_day) {
        (Some(o), Some(d)) => Some(series.iter().filter(|s| s.day >= o && s.day < d).count() as u32),
        _ => None,
    };
    Ok(DetectionOutcome {
        user_id,
        onset_day,
        detection_day,
        threshold: theta,
        first_alarm_day: first_below(series, theta, min_day),
        delay_sessions,
    })
}

/// Per-user daily series from feature rows, sorted by user then day.
pub fn daily_series(features: &[FeatureRow]) -> BTreeMap<u32, Vec<DailyScore>> {
    let mut out: BTreeMap<u32, Vec<DailyScore>> = BTreeMap::new();
    for f in features {
        out.entry(f.user_id).or_default().push(DailyScore { day: f.day, coherence: f.coherence() });
    }
    for s in out.values_mut() {
        s.sort_by_key(|d| d.day);
    }
    out
}

/// First MCI-or-later day per user from hidden labels.
pub fn onset_days(labels: &[HiddenLabelRecord]) -> BTreeMap<u32, Option<u32>> {
    let mut out: BTreeMap<u32, Option<u32>> = BTreeMap::new();
    for l in labels {
        let e = out.entry(l.user_id).or_insert(None);
        if l.state >= RiskState::Mci && e.is_none_or(|d| l.day < d) {
            *e = Some(l.day);
        }
    }
    out
}

/// Run the detector for every user that has a series.
pub fn detect_all(
    series: &BTreeMap<u32, Vec<DailyScore>>,
    onsets: &BTreeMap<u32, Option<u32>>,
    theta: f64,
    min_day: u32,
) -> Result<Vec<DetectionOutcome>> {
    series
        .iter()
        .map(|(&u, s)| threshold_detect(u, s, theta, onsets.get(&u).copied().flatten(), min_day))
        .collect()
}
