//! Per-(user, day) feature rows aggregated over a trailing window of days.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::behavioral_entropy;
use crate::simulate::VideoInteractionRecord;

pub const FEATURE_NAMES: [&str; 14] = [
    "coherence",
    "drift",
    "accuracy",
    "latency_s",
    "skip_rate",
    "consistency",
    "entropy",
    "watch_norm",
    "skip_s",
    "pause_count",
    "replay_count",
    "reaction_s",
    "like_rate",
    "share_rate",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// The first six features derive from the coherence components.
const N_COHERENCE: usize = 6;

/// Seconds skipped per counted seek event.
pub const SEEK_UNIT_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMask {
    Full,
    CoherenceOnly,
    BehaviorOnly,
}

impl FeatureMask {
    pub const ALL: [FeatureMask; 3] = [FeatureMask::Full, FeatureMask::CoherenceOnly, FeatureMask::BehaviorOnly];

    pub fn indices(self) -> Vec<usize> {
        match self {
            FeatureMask::Full => (0..N_FEATURES).collect(),
            FeatureMask::CoherenceOnly => (0..N_COHERENCE).collect(),
            FeatureMask::BehaviorOnly => (N_COHERENCE..N_FEATURES).collect(),
        }
    }

    pub fn names(self) -> Vec<&'static str> {
        self.indices().into_iter().map(|i| FEATURE_NAMES[i]).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMask::Full => "full",
            FeatureMask::CoherenceOnly => "coherence-only",
            FeatureMask::BehaviorOnly => "behavior-only",
        }
    }
}

impl std::str::FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMask::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature mask `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub user_id: u32,
    pub day: u32,
    pub values: [f64; N_FEATURES],
}

impl FeatureRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn coherence(&self) -> f64 {
        self.values[0]
    }

    pub fn drift(&self) -> f64 {
        self.values[1]
    }

    pub fn entropy(&self) -> f64 {
        self.values[6]
    }

    pub fn masked(&self, mask: FeatureMask) -> Vec<f64> {
        mask.indices().into_iter().map(|i| self.values[i]).collect()
    }
}

/// Event-type counts for a set of records: view, pause, replay, seek, like, share.
pub fn event_counts<'a, I>(records: I) -> [u64; 6]
where
    I: IntoIterator<Item = &'a VideoInteractionRecord>,
{
    let mut c = [0u64; 6];
    for r in records {
        c[0] += 1;
        c[1] += u64::from(r.behavior.pause_count);
        c[2] += u64::from(r.behavior.replay_count);
        c[3] += (r.behavior.skip_s / SEEK_UNIT_S).floor().max(0.0) as u64;
        c[4] += u64::from(r.liked);
        c[5] += u64::from(r.shared);
    }
    c
}

fn aggregate(user_id: u32, day: u32, records: &[&VideoInteractionRecord]) -> Result<FeatureRow> {
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&VideoInteractionRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n;
    let coherence = mean(&|r| r.coherence);
    let video_len = mean(&|r| r.video_length_s);
    let values = [
        coherence,
        1.0 - coherence,
        mean(&|r| r.components.accuracy),
        mean(&|r| r.components.latency_s),
        mean(&|r| r.components.skip_rate),
        mean(&|r| r.components.consistency),
        behavioral_entropy(&event_counts(records.iter().copied()))?,
        mean(&|r| r.behavior.watch_s) / video_len,
        mean(&|r| r.behavior.skip_s),
        mean(&|r| f64::from(r.behavior.pause_count)),
        mean(&|r| f64::from(r.behavior.replay_count)),
        mean(&|r| r.behavior.reaction_s),
        mean(&|r| f64::from(u8::from(r.liked))),
        mean(&|r| f64::from(u8::from(r.shared))),
    ];
    Ok(FeatureRow { user_id, day, values })
}

/// One row per observed `(user, day)`, aggregating the records of the last
/// `window` calendar days ending at that day. Days without records get no
/// row. Input must be sorted by `(user, day)`.
pub fn build_features(records: &[VideoInteractionRecord], window: u32) -> Result<Vec<FeatureRow>> {
    if window < 1 {
        return Err(Error::InvalidInput("feature window must be >= 1".into()));
    }
    if !records.windows(2).all(|w| (w[0].user_id, w[0].day) <= (w[1].user_id, w[1].day)) {
        return Err(Error::InvalidInput("interaction records must be sorted by (user, day)".into()));
    }
    let mut rows = Vec::new();
    for user in records.chunk_by(|a, b| a.user_id == b.user_id) {
        let days: Vec<&[VideoInteractionRecord]> = user.chunk_by(|a, b| a.day == b.day).collect();
        let mut start = 0;
        for (k, day) in days.iter().enumerate() {
            let d = day[0].day;
            while days[start][0].day + window <= d {
                start += 1;
            }
            let block: Vec<&VideoInteractionRecord> = days[start..=k].iter().flat_map(|s| s.iter()).collect();
            rows.push(aggregate(day[0].user_id, d, &block)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::Priors;
    use crate::simulate::{simulate_cohort, CohortConfig, TemplateGenerator};

    fn records() -> Vec<VideoInteractionRecord> {
        let cfg = CohortConfig { n_users: 3, horizon_days: 12, ..Default::default() };
        simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator).unwrap().interactions
    }

    #[test]
    fn masks_partition_features() {
        let mut all: Vec<usize> = FeatureMask::CoherenceOnly.indices();
        all.extend(FeatureMask::BehaviorOnly.indices());
        assert_eq!(all, FeatureMask::Full.indices());
        assert!(!FeatureMask::CoherenceOnly.names().contains(&"watch_norm"));
        assert_eq!(
            FeatureMask::CoherenceOnly.names(),
            ["coherence", "drift", "accuracy", "latency_s", "skip_rate", "consistency"]
        );
    }

    #[test]
    fn daily_mean_of_five_records() {
        let recs = records();
        let rows = build_features(&recs, 1).unwrap();
        assert_eq!(rows.len(), 36);
        let day: Vec<_> = recs.iter().filter(|r| r.user_id == 1 && r.day == 4).collect();
        assert_eq!(day.len(), 5);
        let expected = day.iter().map(|r| r.coherence).sum::<f64>() / 5.0;
        let row = rows.iter().find(|r| r.user_id == 1 && r.day == 4).unwrap();
        assert!((row.coherence() - expected).abs() < 1e-12);
        assert!((row.drift() - (1.0 - expected)).abs() < 1e-12);
    }

    #[test]
    fn window_aggregates_trailing_days() {
        let recs = records();
        let rows = build_features(&recs, 3).unwrap();
        let block: Vec<_> = recs.iter().filter(|r| r.user_id == 0 && (3..=5).contains(&r.day)).collect();
        let expected = block.iter().map(|r| r.coherence).sum::<f64>() / block.len() as f64;
        let row = rows.iter().find(|r| r.user_id == 0 && r.day == 5).unwrap();
        assert!((row.coherence() - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_days_are_omitted() {
        let recs: Vec<_> = records().into_iter().filter(|r| r.day % 2 == 0).collect();
        let rows = build_features(&recs, 1).unwrap();
        assert_eq!(rows.len(), 18);
        assert!(rows.iter().all(|r| r.day % 2 == 0));
    }

    #[test]
    fn equal_event_counts_give_ln5() {
        let mut recs: Vec<_> = records().into_iter().filter(|r| r.user_id == 0 && r.day == 0).collect();
        for r in &mut recs {
            r.behavior.pause_count = 1;
            r.behavior.replay_count = 1;
            r.behavior.skip_s = 5.0;
            r.liked = true;
            r.shared = false;
        }
        let rows = build_features(&recs, 1).unwrap();
        assert!((rows[0].entropy() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unsorted_input_rejected() {
        let mut recs = records();
        recs.reverse();
        assert!(build_features(&recs, 1).is_err());
        assert!(build_features(&records(), 0).is_err());
    }
}
