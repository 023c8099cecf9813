//! Noise injection, binary flips and per-user confounds.
//!
//! Additive noise is drawn once per `(user, day)` and component and shared by
//! that day's videos; confound offsets are drawn once per user and component.
//! Latency shifts are expressed in units of the 60 s time constant.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::config_digest;
use crate::error::{Error, Result};
use crate::model::{CoherenceComponents, CoherenceWeights, LATENCY_TIME_CONSTANT_S};
use crate::rng::{stream, stream2};
use crate::simulate::VideoInteractionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub flip_p_max: f64,
    pub confound_sd: f64,
    pub seed: u64,
}

pub const SIGMA_MENU: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            flip_p_max: 0.1,
            confound_sd: 0.03,
            seed: 17,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self { sigma: 0.0, flip_p_max: 0.0, confound_sd: 0.0, ..Default::default() }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0 && self.flip_p_max == 0.0 && self.confound_sd == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.flip_p_max) {
            return Err(Error::InvalidConfig(format!("flip_p_max must be in [0, 1], got {}", self.flip_p_max)));
        }
        if !(self.confound_sd.is_finite() && self.confound_sd >= 0.0) {
            return Err(Error::InvalidConfig(format!("confound_sd must be >= 0, got {}", self.confound_sd)));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        config_digest(self)
    }
}

/// Offsets on (accuracy, latency, skip_rate, consistency); latency in
/// time-constant units.
pub type ComponentShift = [f64; 4];

fn normal4<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> ComponentShift {
    if sd == 0.0 {
        return [0.0; 4];
    }
    let n = Normal::new(0.0, sd).expect("sd validated");
    [n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng)]
}

/// Day-level noise shared by every video of `(user, day)`.
pub fn day_noise(cfg: &NoiseConfig, user_id: u32, day: u32) -> ComponentShift {
    normal4(cfg.sigma, &mut stream2(cfg.seed, "perturb.noise", u64::from(user_id), u64::from(day)))
}

/// Stable per-user confound offsets.
pub fn confound_offsets(cfg: &NoiseConfig, user_id: u32) -> ComponentShift {
    normal4(cfg.confound_sd, &mut stream(cfg.seed, "perturb.confound", u64::from(user_id)))
}

fn shift(c: &CoherenceComponents, d: &ComponentShift) -> CoherenceComponents {
    CoherenceComponents {
        accuracy: c.accuracy + d[0],
        latency_s: c.latency_s + LATENCY_TIME_CONSTANT_S * d[1],
        skip_rate: c.skip_rate + d[2],
        consistency: c.consistency + d[3],
    }
    .clipped()
}

fn add(a: ComponentShift, b: ComponentShift) -> ComponentShift {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn apply_shift<F>(records: &mut [VideoInteractionRecord], w: &CoherenceWeights, delta: F)
where
    F: Fn(&VideoInteractionRecord) -> ComponentShift + Sync,
{
    records.par_iter_mut().for_each(|r| {
        let d = delta(r);
        r.components = shift(&r.components, &d);
        r.refresh_scores(w);
    });
}

/// Add day-level Gaussian noise to every component, clip, and recompute scores.
pub fn inject_noise(records: &mut [VideoInteractionRecord], cfg: &NoiseConfig, w: &CoherenceWeights) {
    if cfg.sigma == 0.0 {
        return;
    }
    apply_shift(records, w, |r| day_noise(cfg, r.user_id, r.day));
}

/// Add each user's stable offset to their components, clip, and recompute scores.
pub fn apply_confounds(records: &mut [VideoInteractionRecord], cfg: &NoiseConfig, w: &CoherenceWeights) {
    if cfg.confound_sd == 0.0 {
        return;
    }
    apply_shift(records, w, |r| confound_offsets(cfg, r.user_id));
}

/// Per-record flip probability drawn from U(0, flip_p_max).
pub fn flip_probability<R: Rng + ?Sized>(cfg: &NoiseConfig, rng: &mut R) -> f64 {
    if cfg.flip_p_max == 0.0 {
        0.0
    } else {
        rng.random_range(0.0..cfg.flip_p_max)
    }
}

fn record_key(r: &VideoInteractionRecord) -> u64 {
    (u64::from(r.day) << 32) | u64::from(r.video_index)
}

/// Invert `liked` and `shared` independently with a per-record probability.
/// Returns the number of inverted fields.
pub fn flip_binary(records: &mut [VideoInteractionRecord], cfg: &NoiseConfig) -> usize {
    if cfg.flip_p_max == 0.0 {
        return 0;
    }
    records
        .par_iter_mut()
        .map(|r| {
            let mut rng = stream2(cfg.seed, "perturb.flip", u64::from(r.user_id), record_key(r));
            let p = flip_probability(cfg, &mut rng);
            let mut n = 0;
            if rng.random_bool(p) {
                r.liked = !r.liked;
                n += 1;
            }
            if rng.random_bool(p) {
                r.shared = !r.shared;
                n += 1;
            }
            n
        })
        .sum()
}

/// Confounds plus day noise combined before a single clip, then flips.
/// Stamps the config digest into each record's provenance.
pub fn perturb(records: &mut [VideoInteractionRecord], cfg: &NoiseConfig, w: &CoherenceWeights) -> Result<()> {
    cfg.validate()?;
    if cfg.sigma > 0.0 || cfg.confound_sd > 0.0 {
        apply_shift(records, w, |r| add(confound_offsets(cfg, r.user_id), day_noise(cfg, r.user_id, r.day)));
    }
    flip_binary(records, cfg);
    let tag = format!("noise-{}", cfg.digest());
    records.par_iter_mut().for_each(|r| r.provenance = tag.clone());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::Priors;
    use crate::simulate::{simulate_cohort, CohortConfig, TemplateGenerator};

    fn cohort(users: u32, days: u32) -> Vec<VideoInteractionRecord> {
        let cfg = CohortConfig { n_users: users, horizon_days: days, ..Default::default() };
        simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator).unwrap().interactions
    }

    #[test]
    fn zero_config_is_identity() {
        let clean = cohort(5, 30);
        let mut x = clean.clone();
        let w = CoherenceWeights::default();
        let cfg = NoiseConfig::zero();
        inject_noise(&mut x, &cfg, &w);
        apply_confounds(&mut x, &cfg, &w);
        assert_eq!(flip_binary(&mut x, &cfg), 0);
        assert_eq!(x, clean);
    }

    #[test]
    fn noise_keeps_bounds_and_consistency() {
        let w = CoherenceWeights::default();
        for sigma in SIGMA_MENU.into_iter().chain([1.0]) {
            let mut x = cohort(4, 40);
            perturb(&mut x, &NoiseConfig::default().with_sigma(sigma), &w).unwrap();
            for r in &x {
                assert!(r.components.is_valid());
                assert!((r.coherence - crate::model::coherence(&r.components, &w)).abs() < 1e-12);
                assert_eq!(r.drift, 1.0 - r.coherence);
            }
        }
    }

    #[test]
    fn keys_unchanged() {
        let clean = cohort(3, 10);
        let mut x = clean.clone();
        perturb(&mut x, &NoiseConfig::default(), &CoherenceWeights::default()).unwrap();
        let keys = |v: &[VideoInteractionRecord]| v.iter().map(|r| (r.user_id, r.day, r.video_index)).collect::<Vec<_>>();
        assert_eq!(keys(&x), keys(&clean));
        assert!(x.iter().all(|r| r.provenance.starts_with("noise-")));
    }

    #[test]
    fn noise_shared_within_day() {
        let cfg = NoiseConfig::default();
        assert_eq!(day_noise(&cfg, 3, 9), day_noise(&cfg, 3, 9));
        assert_ne!(day_noise(&cfg, 3, 9), day_noise(&cfg, 3, 10));
    }

    #[test]
    fn confound_is_per_user() {
        let cfg = NoiseConfig { sigma: 0.0, flip_p_max: 0.0, confound_sd: 0.05, seed: 3 };
        let w = CoherenceWeights::default();
        let mut x = cohort(2, 5);
        for r in &mut x {
            r.components = CoherenceComponents { accuracy: 0.5, latency_s: 30.0, skip_rate: 0.5, consistency: 0.5 };
        }
        apply_confounds(&mut x, &cfg, &w);
        let u0: Vec<_> = x.iter().filter(|r| r.user_id == 0).map(|r| r.components).collect();
        assert!(u0.windows(2).all(|p| p[0] == p[1]));
        let u1 = x.iter().find(|r| r.user_id == 1).unwrap().components;
        assert_ne!(u0[0], u1);
    }

    #[test]
    fn confound_sample_sd() {
        let cfg = NoiseConfig { confound_sd: 0.05, ..NoiseConfig::default() };
        let xs: Vec<f64> = (0..200).map(|u| confound_offsets(&cfg, u)[0]).collect();
        let m = xs.iter().sum::<f64>() / 200.0;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!((0.035..=0.065).contains(&sd), "{sd}");
    }

    fn flip_rate(flip_p_max: f64) -> f64 {
        let mut x = cohort(40, 50);
        x.truncate(10_000);
        let before = x.clone();
        let cfg = NoiseConfig { flip_p_max, ..NoiseConfig::zero() };
        let n = flip_binary(&mut x, &cfg);
        let liked = x.iter().zip(&before).filter(|(a, b)| a.liked != b.liked).count();
        let shared = x.iter().zip(&before).filter(|(a, b)| a.shared != b.shared).count();
        assert_eq!(n, liked + shared);
        liked as f64 / x.len() as f64
    }

    #[test]
    fn flip_rates_match_uniform_mean() {
        assert!((flip_rate(1.0) - 0.5).abs() < 0.02);
        assert!((flip_rate(0.1) - 0.05).abs() < 0.01);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(NoiseConfig { sigma: -1.0, ..Default::default() }.validate().is_err());
        assert!(NoiseConfig { flip_p_max: 1.5, ..Default::default() }.validate().is_err());
    }
}
