//! User-level train/test splits: the default split and four challenge splits.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProgressionProfile;
use crate::rng::{stream, stream2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    Default,
    NoiseShift,
    SparseObservation,
    DelayedEvidence,
    ProfileGeneralization,
}

impl SplitKind {
    pub const ALL: [SplitKind; 5] = [
        SplitKind::Default,
        SplitKind::NoiseShift,
        SplitKind::SparseObservation,
        SplitKind::DelayedEvidence,
        SplitKind::ProfileGeneralization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Default => "default",
            SplitKind::NoiseShift => "noise-shift",
            SplitKind::SparseObservation => "sparse-observation",
            SplitKind::DelayedEvidence => "delayed-evidence",
            SplitKind::ProfileGeneralization => "profile-generalization",
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown split kind `{s}`")))
    }
}

/// Tunable split parameters with their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub train_frac: f64,
    pub train_sigma: f64,
    pub test_sigma: f64,
    pub dropout_p: f64,
    pub min_window_days: u32,
    pub held_out_profiles: Vec<String>,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            train_sigma: 0.05,
            test_sigma: 0.3,
            dropout_p: 0.3,
            min_window_days: 14,
            held_out_profiles: vec!["Stable Learner".into(), "Slow but Accurate".into(), "Needs Review".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
    pub train_user_ids: Vec<u32>,
    pub test_user_ids: Vec<u32>,
    pub train_sigma: Option<f64>,
    pub test_sigma: Option<f64>,
    pub dropout_p: Option<f64>,
    pub min_window_days: Option<u32>,
    pub held_out_profiles: Vec<String>,
    /// Removed `(user, day)` sessions on the test side, sorted.
    pub dropped: Vec<(u32, u32)>,
}

impl SplitSpec {
    fn base(kind: SplitKind, seed: u64, train: Vec<u32>, test: Vec<u32>) -> Self {
        Self {
            kind,
            seed,
            train_user_ids: train,
            test_user_ids: test,
            train_sigma: None,
            test_sigma: None,
            dropout_p: None,
            min_window_days: None,
            held_out_profiles: Vec::new(),
            dropped: Vec::new(),
        }
    }

    pub fn is_train(&self, user_id: u32) -> bool {
        self.train_user_ids.binary_search(&user_id).is_ok()
    }

    pub fn is_test(&self, user_id: u32) -> bool {
        self.test_user_ids.binary_search(&user_id).is_ok()
    }

    /// Whether `(user, day)` still exists after sparse dropout.
    pub fn is_retained(&self, user_id: u32, day: u32) -> bool {
        self.dropped.binary_search(&(user_id, day)).is_err()
    }

    /// Whether a test-side prediction at `(user, day)` is scored.
    pub fn is_scored(&self, user_id: u32, day: u32) -> bool {
        self.is_test(user_id) && self.is_retained(user_id, day) && day >= self.min_window_days.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let train: BTreeSet<_> = self.train_user_ids.iter().collect();
        if train.len() != self.train_user_ids.len() || !self.train_user_ids.is_sorted() {
            return Err(Error::InvalidInput("train ids must be sorted and unique".into()));
        }
        if !self.test_user_ids.is_sorted() || self.test_user_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("test ids must be sorted and unique".into()));
        }
        if self.test_user_ids.iter().any(|u| train.contains(u)) {
            return Err(Error::InvalidInput("train and test users overlap".into()));
        }
        if !self.dropped.is_sorted() {
            return Err(Error::InvalidInput("dropped sessions must be sorted".into()));
        }
        Ok(())
    }
}

/// Number of training users: `frac * n` rounded to nearest, ties down,
/// kept inside `[1, n - 1]`.
pub fn train_count(n: usize, frac: f64) -> usize {
    let x = frac * n as f64;
    let rounded = (x - 0.5).ceil().max(0.0) as usize;
    rounded.clamp(1, n - 1)
}

pub fn default_split(user_ids: &[u32], frac: f64, seed: u64) -> Result<SplitSpec> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidInput(format!("split fraction must be in (0, 1), got {frac}")));
    }
    let mut ids: Vec<u32> = user_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 users to split, got {}", ids.len())));
    }
    let n_train = train_count(ids.len(), frac);
    ids.shuffle(&mut stream(seed, "split.default", 0));
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec::base(SplitKind::Default, seed, train, test))
}

/// Default split with low-noise training and high-noise test perturbation.
pub fn noise_shift_split(user_ids: &[u32], params: &SplitParams, seed: u64) -> Result<SplitSpec> {
    let mut spec = default_split(user_ids, params.train_frac, seed)?;
    spec.kind = SplitKind::NoiseShift;
    spec.train_sigma = Some(params.train_sigma);
    spec.test_sigma = Some(params.test_sigma);
    Ok(spec)
}

/// Default split with each test-side session dropped independently.
pub fn sparse_observation_split(
    user_ids: &[u32],
    horizon_days: u32,
    params: &SplitParams,
    seed: u64,
) -> Result<SplitSpec> {
    let p = params.dropout_p;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("dropout_p must be in [0, 1), got {p}")));
    }
    let mut spec = default_split(user_ids, params.train_frac, seed)?;
    spec.kind = SplitKind::SparseObservation;
    spec.dropout_p = Some(p);
    for &u in &spec.test_user_ids {
        let mut rng = stream2(seed, "split.sparse", u64::from(u), 0);
        for day in 0..horizon_days {
            if rng.random_bool(p) {
                spec.dropped.push((u, day));
            }
        }
    }
    Ok(spec)
}

/// Default split whose evaluation mask skips days before `min_window_days`.
pub fn delayed_evidence_split(
    user_ids: &[u32],
    horizon_days: u32,
    params: &SplitParams,
    seed: u64,
) -> Result<SplitSpec> {
    let w = params.min_window_days;
    if w < 1 {
        return Err(Error::InvalidInput("min_window_days must be >= 1".into()));
    }
    if w >= horizon_days {
        return Err(Error::InvalidInput(format!("window {w} must be shorter than the {horizon_days}-day horizon")));
    }
    let mut spec = default_split(user_ids, params.train_frac, seed)?;
    spec.kind = SplitKind::DelayedEvidence;
    spec.min_window_days = Some(w);
    Ok(spec)
}

/// Simulation level: users in the latest onset quartile are held out.
pub fn profile_generalization_split(profiles: &[ProgressionProfile], seed: u64) -> Result<SplitSpec> {
    let mut onsets: Vec<u32> = profiles.iter().map(|p| p.onset_day()).collect();
    onsets.sort_unstable();
    if onsets.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 users".into()));
    }
    let cut = onsets[onsets.len() - onsets.len().div_ceil(4)];
    let (mut test, mut train): (Vec<&ProgressionProfile>, Vec<_>) = profiles.iter().partition(|p| p.onset_day() >= cut);
    if train.is_empty() {
        return Err(Error::InvalidInput("onset quartiles collapse to a single profile group".into()));
    }
    train.sort_by_key(|p| p.user_id);
    test.sort_by_key(|p| p.user_id);
    let mut spec = SplitSpec::base(
        SplitKind::ProfileGeneralization,
        seed,
        train.iter().map(|p| p.user_id).collect(),
        test.iter().map(|p| p.user_id).collect(),
    );
    spec.held_out_profiles = vec![format!("onset>={cut}")];
    Ok(spec)
}

/// Deployment level: sessions whose profile is in `held_out` go to test.
/// `items` pairs an id with its profile name.
pub fn profile_holdout_split(items: &[(u32, String)], held_out: &[String], seed: u64) -> Result<SplitSpec> {
    let groups: BTreeSet<&str> = items.iter().map(|(_, p)| p.as_str()).collect();
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 profile groups, found {}", groups.len())));
    }
    let (mut test, mut train): (Vec<u32>, Vec<u32>) = (Vec::new(), Vec::new());
    for (id, profile) in items {
        if held_out.iter().any(|h| h == profile) {
            test.push(*id);
        } else {
            train.push(*id);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput("profile hold-out leaves one side empty".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut spec = SplitSpec::base(SplitKind::ProfileGeneralization, seed, train, test);
    spec.held_out_profiles = held_out.to_vec();
    Ok(spec)
}

/// Build one split of the requested kind at simulation level.
pub fn build_split(
    kind: SplitKind,
    profiles: &[ProgressionProfile],
    horizon_days: u32,
    params: &SplitParams,
    seed: u64,
) -> Result<SplitSpec> {
    let ids: Vec<u32> = profiles.iter().map(|p| p.user_id).collect();
    match kind {
        SplitKind::Default => default_split(&ids, params.train_frac, seed),
        SplitKind::NoiseShift => noise_shift_split(&ids, params, seed),
        SplitKind::SparseObservation => sparse_observation_split(&ids, horizon_days, params, seed),
        SplitKind::DelayedEvidence => delayed_evidence_split(&ids, horizon_days, params, seed),
        SplitKind::ProfileGeneralization => profile_generalization_split(profiles, seed),
    }
}
