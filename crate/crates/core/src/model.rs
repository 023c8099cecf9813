//! Latent risk-state machine, behavioral coherence, drift and entropy.
//!
//! Everything here is a pure function of immutable values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time constant (seconds) of the latency-efficiency term of coherence.
pub const LATENCY_TIME_CONSTANT_S: f64 = 60.0;

/// Ordered latent risk state. These are simulation labels, not diagnoses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskState {
    Healthy,
    Mci,
    EarlyAd,
    ModAd,
    SevAd,
}

impl RiskState {
    pub const ALL: [RiskState; 5] = [
        RiskState::Healthy,
        RiskState::Mci,
        RiskState::EarlyAd,
        RiskState::ModAd,
        RiskState::SevAd,
    ];

    /// States scored by the probe and the coherence tables.
    pub const EVALUATED: [RiskState; 3] = [RiskState::Healthy, RiskState::Mci, RiskState::EarlyAd];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskState::Healthy => "Healthy",
            RiskState::Mci => "MCI",
            RiskState::EarlyAd => "EarlyAD",
            RiskState::ModAd => "ModAD",
            RiskState::SevAd => "SevAD",
        }
    }

    pub fn is_evaluated(self) -> bool {
        self <= RiskState::EarlyAd
    }
}

impl fmt::Display for RiskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RiskState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown risk state `{s}`")))
    }
}

/// A user's ordered transition days into MCI, EarlyAD, ModAD and SevAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionProfile {
    pub user_id: u32,
    transitions: [u32; 4],
}

impl ProgressionProfile {
    pub fn new(user_id: u32, d3: u32, d4: u32, d5: u32, d6: u32) -> Result<Self> {
        if !(0 < d3 && d3 < d4 && d4 < d5 && d5 < d6) {
            return Err(Error::InvalidInput(format!(
                "transition days must satisfy 0 < d3 < d4 < d5 < d6, got ({d3}, {d4}, {d5}, {d6})"
            )));
        }
        Ok(Self {
            user_id,
            transitions: [d3, d4, d5, d6],
        })
    }

    /// Transition days `[d3, d4, d5, d6]`.
    pub fn transitions(&self) -> [u32; 4] {
        self.transitions
    }

    /// First MCI day.
    pub fn onset_day(&self) -> u32 {
        self.transitions[0]
    }

    /// Piecewise state at `day`; boundaries are left-inclusive.
    pub fn state_at_day(&self, day: u32) -> RiskState {
        let passed = self.transitions.iter().filter(|&&t| day >= t).count();
        RiskState::ALL[passed]
    }
}

pub fn state_at_day(profile: &ProgressionProfile, day: u32) -> RiskState {
    profile.state_at_day(day)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceWeights {
    pub accuracy: f64,
    pub latency: f64,
    pub skip: f64,
    pub consistency: f64,
}

impl Default for CoherenceWeights {
    fn default() -> Self {
        Self {
            accuracy: 0.4,
            latency: 0.2,
            skip: 0.2,
            consistency: 0.2,
        }
    }
}

impl CoherenceWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.accuracy, self.latency, self.skip, self.consistency];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidConfig("coherence weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("coherence weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Per-interaction inputs to the coherence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceComponents {
    pub accuracy: f64,
    pub latency_s: f64,
    pub skip_rate: f64,
    pub consistency: f64,
}

impl CoherenceComponents {
    /// Clamp every field into its valid range.
    pub fn clipped(self) -> Self {
        Self {
            accuracy: self.accuracy.clamp(0.0, 1.0),
            latency_s: self.latency_s.max(0.0),
            skip_rate: self.skip_rate.clamp(0.0, 1.0),
            consistency: self.consistency.clamp(0.0, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.accuracy)
            && unit(self.skip_rate)
            && unit(self.consistency)
            && self.latency_s.is_finite()
            && self.latency_s >= 0.0
    }
}

/// Latency efficiency `exp(-t / 60)`.
pub fn latency_efficiency(latency_s: f64) -> f64 {
    (-latency_s / LATENCY_TIME_CONSTANT_S).exp()
}

pub fn coherence(c: &CoherenceComponents, w: &CoherenceWeights) -> f64 {
    w.accuracy * c.accuracy
        + w.latency * latency_efficiency(c.latency_s)
        + w.skip * (1.0 - c.skip_rate)
        + w.consistency * c.consistency
}

pub fn drift(coherence_score: f64) -> f64 {
    1.0 - coherence_score
}

/// Shannon entropy (nats) of a count distribution.
pub fn behavioral_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let total = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile() -> ProgressionProfile {
        ProgressionProfile::new(0, 50, 100, 150, 180).unwrap()
    }

    #[test]
    fn state_boundaries() {
        let p = profile();
        assert_eq!(p.state_at_day(30), RiskState::Healthy);
        assert_eq!(p.state_at_day(49), RiskState::Healthy);
        assert_eq!(p.state_at_day(50), RiskState::Mci);
        assert_eq!(p.state_at_day(100), RiskState::EarlyAd);
        assert_eq!(p.state_at_day(150), RiskState::ModAd);
        assert_eq!(p.state_at_day(179), RiskState::ModAd);
        assert_eq!(p.state_at_day(180), RiskState::SevAd);
        assert_eq!(p.state_at_day(199), RiskState::SevAd);
    }

    #[test]
    fn profile_rejects_unordered() {
        assert!(ProgressionProfile::new(0, 0, 1, 2, 3).is_err());
        assert!(ProgressionProfile::new(0, 5, 5, 6, 7).is_err());
        assert!(ProgressionProfile::new(0, 5, 9, 8, 10).is_err());
    }

    #[test]
    fn state_order_and_names() {
        assert!(RiskState::Healthy < RiskState::Mci && RiskState::ModAd < RiskState::SevAd);
        for st in RiskState::ALL {
            assert_eq!(st.name().parse::<RiskState>().unwrap(), st);
            assert_eq!(RiskState::from_code(st.code()), Some(st));
        }
    }

    #[test]
    fn coherence_examples() {
        let w = CoherenceWeights::default();
        let max = CoherenceComponents { accuracy: 1.0, latency_s: 0.0, skip_rate: 0.0, consistency: 1.0 };
        assert!((coherence(&max, &w) - 1.0).abs() < 1e-12);

        // direct evaluation: 0.4*0.85 + 0.2*exp(-5/60) + 0.2*0.9 + 0.2*0.88
        let healthy = CoherenceComponents { accuracy: 0.85, latency_s: 5.0, skip_rate: 0.10, consistency: 0.88 };
        assert!((coherence(&healthy, &w) - 0.880).abs() < 1e-3);
        let early = CoherenceComponents { accuracy: 0.42, latency_s: 12.5, skip_rate: 0.602, consistency: 0.38 };
        assert!((coherence(&early, &w) - 0.486).abs() < 1e-3);
    }

    #[test]
    fn drift_examples() {
        assert!((drift(0.88) - 0.12).abs() < 1e-12);
        assert_eq!(drift(1.0), 0.0);
        assert!((drift(0.486) - 0.514).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((behavioral_entropy(&[4, 4, 4, 4, 4]).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert_eq!(behavioral_entropy(&[0, 7, 0]).unwrap(), 0.0);
        let expected = -0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln();
        assert!((behavioral_entropy(&[3, 1]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5623).abs() < 1e-4);
        assert!(matches!(behavioral_entropy(&[0, 0]), Err(Error::EmptyDistribution)));
        assert!(matches!(behavioral_entropy(&[]), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn weights_validation() {
        assert!(CoherenceWeights::default().validate().is_ok());
        let bad = CoherenceWeights { accuracy: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn components() -> impl Strategy<Value = CoherenceComponents> {
        (0.0..=1.0f64, 0.0..600.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, t, s, c)| CoherenceComponents {
            accuracy: a,
            latency_s: t,
            skip_rate: s,
            consistency: c,
        })
    }

    proptest! {
        #[test]
        fn state_is_monotone(d3 in 1u32..100, g1 in 1u32..60, g2 in 1u32..60, g3 in 1u32..60, day in 0u32..400) {
            let p = ProgressionProfile::new(1, d3, d3 + g1, d3 + g1 + g2, d3 + g1 + g2 + g3).unwrap();
            prop_assert!(p.state_at_day(day) <= p.state_at_day(day + 1));
        }

        #[test]
        fn coherence_bounded_and_drift_complements(c in components()) {
            let w = CoherenceWeights::default();
            let score = coherence(&c, &w);
            prop_assert!((0.0..=1.0).contains(&score));
            prop_assert_eq!(drift(score) + score, 1.0);
        }

        #[test]
        fn coherence_is_monotone(c in components(), d in 0.0..0.5f64) {
            let w = CoherenceWeights::default();
            let base = coherence(&c, &w);
            let more_acc = CoherenceComponents { accuracy: (c.accuracy + d).min(1.0), ..c };
            let more_cons = CoherenceComponents { consistency: (c.consistency + d).min(1.0), ..c };
            let slower = CoherenceComponents { latency_s: c.latency_s + d * 100.0, ..c };
            let skippier = CoherenceComponents { skip_rate: (c.skip_rate + d).min(1.0), ..c };
            prop_assert!(coherence(&more_acc, &w) >= base);
            prop_assert!(coherence(&more_cons, &w) >= base);
            prop_assert!(coherence(&slower, &w) <= base);
            prop_assert!(coherence(&skippier, &w) <= base);
        }

        #[test]
        fn entropy_invariances(mut counts in proptest::collection::vec(0u64..50, 1..8)) {
            counts[0] += 1;
            let h = behavioral_entropy(&counts).unwrap();
            let k = counts.iter().filter(|&&c| c > 0).count() as f64;
            prop_assert!(h >= 0.0 && h <= k.ln() + 1e-12);
            let scaled: Vec<u64> = counts.iter().map(|c| c * 10).collect();
            prop_assert!((behavioral_entropy(&scaled).unwrap() - h).abs() < 1e-12);
            let mut reversed = counts.clone();
            reversed.reverse();
            prop_assert!((behavioral_entropy(&reversed).unwrap() - h).abs() < 1e-12);
        }
    }
}
