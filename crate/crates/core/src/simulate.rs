//! Cohort simulation: users × days × videos with latent states kept apart.
//!
//! Each user owns a random stream derived from the master seed, and each
//! simulated day draws from its own `(user, day)` stream, so the cohort is
//! identical whether users are generated sequentially or in parallel.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coherence, drift, CoherenceComponents, CoherenceWeights, ProgressionProfile, RiskState};
use crate::priors::{sample_behaviors, sample_components, BehaviorSample, IntRange, Priors, Range};
use crate::rng::{stream, stream2, StreamRng};

/// Upper bound on in-memory interaction rows for one run.
pub const MAX_RECORDS: u64 = 50_000_000;

const MAX_PROFILE_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    /// Text probes may depend on the latent state.
    Full,
    /// Text probes never see the latent state.
    NoLabel,
}

impl std::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-label" => Ok(Self::NoLabel),
            other => Err(Error::InvalidInput(format!("unknown generation mode `{other}`"))),
        }
    }
}

/// Onset day range plus the three gaps between consecutive transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPriors {
    pub onset: IntRange,
    pub gaps: [IntRange; 3],
}

impl Default for TransitionPriors {
    fn default() -> Self {
        Self {
            onset: IntRange::new(30, 90),
            gaps: [IntRange::new(20, 50); 3],
        }
    }
}

impl TransitionPriors {
    /// Priors that always yield exactly `(d3, d4, d5, d6)`.
    pub fn fixed(d3: u32, d4: u32, d5: u32, d6: u32) -> Self {
        Self {
            onset: IntRange::new(d3, d3),
            gaps: [
                IntRange::new(d4 - d3, d4 - d3),
                IntRange::new(d5 - d4, d5 - d4),
                IntRange::new(d6 - d5, d6 - d5),
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        self.onset.validate("transitions.onset")?;
        for (k, g) in self.gaps.iter().enumerate() {
            g.validate(&format!("transitions.gaps[{k}]"))?;
        }
        if self.onset.hi == 0 || self.gaps.iter().any(|g| g.hi == 0) {
            return Err(Error::InvalidConfig(
                "transition priors cannot produce strictly ordered days (a range is pinned at 0)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_users: u32,
    pub horizon_days: u32,
    pub videos_per_day: u32,
    pub n_categories: u32,
    pub video_len_range: Range,
    pub mode: GenerationMode,
    pub seed: u64,
    pub transitions: TransitionPriors,
    pub weights: CoherenceWeights,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            horizon_days: 200,
            videos_per_day: 5,
            n_categories: 5,
            video_len_range: Range::new(15.0, 90.0),
            mode: GenerationMode::NoLabel,
            seed: 20_240_601,
            transitions: TransitionPriors::default(),
            weights: CoherenceWeights::default(),
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_users", self.n_users),
            ("horizon_days", self.horizon_days),
            ("videos_per_day", self.videos_per_day),
            ("n_categories", self.n_categories),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        let r = self.video_len_range;
        if !(r.lo.is_finite() && r.hi.is_finite() && 0.0 < r.lo && r.lo <= r.hi) {
            return Err(Error::InvalidConfig(format!("video_len_range [{}, {}] is invalid", r.lo, r.hi)));
        }
        self.transitions.validate()?;
        self.weights.validate()
    }

    pub fn expected_records(&self) -> u64 {
        u64::from(self.n_users) * u64::from(self.horizon_days) * u64::from(self.videos_per_day)
    }
}

/// One simulated video interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInteractionRecord {
    pub user_id: u32,
    pub day: u32,
    pub video_index: u32,
    pub category: String,
    pub video_title: String,
    pub video_length_s: f64,
    pub summary_text: String,
    pub components: CoherenceComponents,
    pub coherence: f64,
    pub drift: f64,
    pub behavior: BehaviorSample,
    pub liked: bool,
    pub shared: bool,
    pub provenance: String,
}

impl VideoInteractionRecord {
    /// Recompute coherence and drift from the stored components.
    pub fn refresh_scores(&mut self, w: &CoherenceWeights) {
        self.coherence = coherence(&self.components, w);
        self.drift = drift(self.coherence);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLabelRecord {
    pub user_id: u32,
    pub day: u32,
    pub state: RiskState,
}

/// Everything a text probe generator may look at.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRequest<'a> {
    pub title: &'a str,
    pub category: &'a str,
    pub mode: GenerationMode,
    /// Always `None` in no-label mode.
    pub state: Option<RiskState>,
    /// Deterministic per-record entropy for template variation.
    pub nonce: u64,
}

/// Free-text summary generator. Implementations must ignore `state` in
/// no-label mode.
pub trait TextProbeGenerator: Send + Sync {
    fn generate(&self, request: &ProbeRequest<'_>) -> Result<String>;
}

const CATEGORY_TOPICS: [&str; 5] = ["science", "history", "cooking", "travel", "music"];

const TOPIC_SENTENCES: [[&str; 3]; 5] = [
    [
        "The video explained how an everyday experiment works.",
        "It walked through a simple scientific idea step by step.",
        "The presenter showed what happens when two materials are mixed.",
    ],
    [
        "The video described an event from the past and its causes.",
        "It told the story of a city and how it changed over time.",
        "The narrator compared two historical periods.",
    ],
    [
        "The video showed how to prepare a quick meal.",
        "It listed the ingredients and the order they are added.",
        "The cook explained a technique for getting the texture right.",
    ],
    [
        "The video toured a coastal town and its markets.",
        "It gave tips on planning a short trip.",
        "The host visited a landmark and explained its history.",
    ],
    [
        "The video introduced a musical instrument and how it is played.",
        "It broke down the rhythm of a popular song.",
        "The performer explained how a melody is built.",
    ],
];

/// Per-state filler tokens appended in full mode.
const STATE_NOISE: [&[&str]; 5] = [
    &[""],
    &[" I think.", " um, mostly."],
    &[" something about it, I forget.", " um, the part, the thing."],
    &[" I am not sure what it was.", " it was, it was about the, hmm."],
    &[" don't know.", " the, the."],
];

/// Deterministic category-keyed template summaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl TextProbeGenerator for TemplateGenerator {
    fn generate(&self, request: &ProbeRequest<'_>) -> Result<String> {
        let topic = topic_index(request.category);
        let sentences = &TOPIC_SENTENCES[topic];
        let base = sentences[(request.nonce % sentences.len() as u64) as usize];
        let mut text = format!("{base} ({})", request.title);
        if let (GenerationMode::Full, Some(state)) = (request.mode, request.state) {
            let tokens = STATE_NOISE[state.code() as usize];
            text.push_str(tokens[((request.nonce >> 8) % tokens.len() as u64) as usize]);
        }
        Ok(text)
    }
}

fn topic_index(category: &str) -> usize {
    category
        .rsplit('-')
        .next()
        .and_then(|k| k.parse::<usize>().ok())
        .unwrap_or(0)
        % CATEGORY_TOPICS.len()
}

pub fn category_name(index: u32) -> String {
    format!("category-{index}")
}

pub fn video_title(category: u32, video_index: u32) -> String {
    format!("category-{category} video-{video_index}")
}

pub fn sample_profile<R: Rng + ?Sized>(user_id: u32, config: &CohortConfig, rng: &mut R) -> Result<ProgressionProfile> {
    let t = &config.transitions;
    for _ in 0..MAX_PROFILE_ATTEMPTS {
        let d3 = t.onset.sample(rng);
        let d4 = d3 + t.gaps[0].sample(rng);
        let d5 = d4 + t.gaps[1].sample(rng);
        let d6 = d5 + t.gaps[2].sample(rng);
        if let Ok(p) = ProgressionProfile::new(user_id, d3, d4, d5, d6) {
            return Ok(p);
        }
    }
    Err(Error::TransitionSampling(MAX_PROFILE_ATTEMPTS))
}

/// Simulate one user-day. Generator failures fall back to the template.
#[allow(clippy::too_many_arguments)]
pub fn simulate_day<R: Rng + ?Sized>(
    user_id: u32,
    day: u32,
    profile: &ProgressionProfile,
    config: &CohortConfig,
    priors: &Priors,
    rng: &mut R,
    generator: &dyn TextProbeGenerator,
) -> (Vec<VideoInteractionRecord>, HiddenLabelRecord) {
    let state = profile.state_at_day(day);
    let probe_state = match config.mode {
        GenerationMode::Full => Some(state),
        GenerationMode::NoLabel => None,
    };
    // Layout and text come from their own stream so state-dependent draws
    // cannot shift them.
    let mut layout = StreamRng::seed_from_u64(rng.random());
    let records = (0..config.videos_per_day)
        .map(|video_index| {
            let category_index = layout.random_range(0..config.n_categories);
            let category = category_name(category_index);
            let title = video_title(category_index, video_index);
            let video_length_s = config.video_len_range.sample(&mut layout);
            let nonce = layout.random::<u64>();
            let request = ProbeRequest {
                title: &title,
                category: &category,
                mode: config.mode,
                state: probe_state,
                nonce,
            };
            let summary_text = generator
                .generate(&request)
                .or_else(|_| TemplateGenerator.generate(&request))
                .unwrap_or_default();
            let components = sample_components(priors, state, rng);
            let behavior = sample_behaviors(priors, state, rng);
            let liked = rng.random_bool((behavior.like_pct / 100.0).clamp(0.0, 1.0));
            let shared = rng.random_bool((behavior.share_pct / 100.0).clamp(0.0, 1.0));
            let score = coherence(&components, &config.weights);
            VideoInteractionRecord {
                user_id,
                day,
                video_index,
                category,
                video_title: title,
                video_length_s,
                summary_text,
                components,
                coherence: score,
                drift: drift(score),
                behavior,
                liked,
                shared,
                provenance: "clean".to_string(),
            }
        })
        .collect();
    (records, HiddenLabelRecord { user_id, day, state })
}

/// A simulated cohort. `labels` and `profiles` are evaluation-only truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub interactions: Vec<VideoInteractionRecord>,
    pub labels: Vec<HiddenLabelRecord>,
    pub profiles: Vec<ProgressionProfile>,
}

impl Cohort {
    pub fn user_ids(&self) -> Vec<u32> {
        self.profiles.iter().map(|p| p.user_id).collect()
    }
}

fn simulate_user(
    user_id: u32,
    config: &CohortConfig,
    priors: &Priors,
    generator: &dyn TextProbeGenerator,
) -> Result<(ProgressionProfile, Vec<VideoInteractionRecord>, Vec<HiddenLabelRecord>)> {
    let mut user_rng = stream(config.seed, "cohort.profile", u64::from(user_id));
    let profile = sample_profile(user_id, config, &mut user_rng)?;
    let mut records = Vec::with_capacity((config.horizon_days * config.videos_per_day) as usize);
    let mut labels = Vec::with_capacity(config.horizon_days as usize);
    for day in 0..config.horizon_days {
        let mut day_rng = stream2(config.seed, "cohort.day", u64::from(user_id), u64::from(day));
        let (recs, label) = simulate_day(user_id, day, &profile, config, priors, &mut day_rng, generator);
        records.extend(recs);
        labels.push(label);
    }
    Ok((profile, records, labels))
}

pub fn simulate_cohort(config: &CohortConfig, priors: &Priors, generator: &dyn TextProbeGenerator) -> Result<Cohort> {
    config.validate()?;
    priors.validate()?;
    if config.expected_records() > MAX_RECORDS {
        return Err(Error::InvalidConfig(format!(
            "{} interaction records exceed the in-memory limit of {MAX_RECORDS}",
            config.expected_records()
        )));
    }
    let per_user: Vec<_> = (0..config.n_users)
        .into_par_iter()
        .map(|u| simulate_user(u, config, priors, generator))
        .collect::<Result<_>>()?;

    let mut cohort = Cohort {
        interactions: Vec::with_capacity(config.expected_records() as usize),
        labels: Vec::with_capacity((config.n_users * config.horizon_days) as usize),
        profiles: Vec::with_capacity(config.n_users as usize),
    };
    for (profile, records, labels) in per_user {
        cohort.profiles.push(profile);
        cohort.interactions.extend(records);
        cohort.labels.extend(labels);
    }
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    struct Failing;
    impl TextProbeGenerator for Failing {
        fn generate(&self, _: &ProbeRequest<'_>) -> Result<String> {
            Err(Error::TextProbe("service unavailable".into()))
        }
    }

    fn small(n_users: u32, horizon_days: u32) -> CohortConfig {
        CohortConfig { n_users, horizon_days, ..Default::default() }
    }

    #[test]
    fn degenerate_transition_priors() {
        let cfg = CohortConfig { transitions: TransitionPriors::fixed(50, 100, 150, 180), ..Default::default() };
        let mut rng = stream(0, "t", 0);
        let p = sample_profile(3, &cfg, &mut rng).unwrap();
        assert_eq!(p.transitions(), [50, 100, 150, 180]);
    }

    #[test]
    fn profiles_always_ordered() {
        let cfg = CohortConfig::default();
        let mut rng = stream(0, "t", 1);
        for u in 0..1000 {
            let [a, b, c, d] = sample_profile(u, &cfg, &mut rng).unwrap().transitions();
            assert!(0 < a && a < b && b < c && c < d);
        }
    }

    #[test]
    fn unsatisfiable_priors_error() {
        let cfg = CohortConfig {
            transitions: TransitionPriors { onset: IntRange::new(0, 5), gaps: [IntRange::new(0, 0); 3] },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let mut rng = stream(0, "t", 2);
        assert!(matches!(sample_profile(0, &cfg, &mut rng), Err(Error::TransitionSampling(_))));
    }

    #[test]
    fn onset_days_are_heterogeneous() {
        let cohort = simulate_cohort(&small(200, 2), &Priors::default(), &TemplateGenerator).unwrap();
        let d3: Vec<f64> = cohort.profiles.iter().map(|p| f64::from(p.onset_day())).collect();
        let mean = d3.iter().sum::<f64>() / d3.len() as f64;
        let var = d3.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d3.len() - 1) as f64;
        assert!(var > 0.0);
    }

    #[test]
    fn day_yields_one_record_per_video() {
        let cfg = CohortConfig::default();
        let priors = Priors::default();
        let profile = ProgressionProfile::new(0, 50, 100, 150, 180).unwrap();
        let mut rng = stream(0, "t", 3);
        let (recs, label) = simulate_day(0, 60, &profile, &cfg, &priors, &mut rng, &TemplateGenerator);
        assert_eq!(recs.len(), 5);
        assert_eq!(label.state, RiskState::Mci);
        for r in &recs {
            assert_eq!(r.coherence, coherence(&r.components, &cfg.weights));
            assert_eq!(r.drift, 1.0 - r.coherence);
        }
    }

    #[test]
    fn no_label_text_ignores_state() {
        let cfg = CohortConfig { mode: GenerationMode::NoLabel, ..Default::default() };
        let priors = Priors::default();
        let healthy = ProgressionProfile::new(0, 150, 160, 170, 180).unwrap();
        let severe = ProgressionProfile::new(0, 1, 2, 3, 4).unwrap();
        let (a, _) = simulate_day(0, 10, &healthy, &cfg, &priors, &mut stream(5, "t", 0), &TemplateGenerator);
        let (b, _) = simulate_day(0, 10, &severe, &cfg, &priors, &mut stream(5, "t", 0), &TemplateGenerator);
        let text = |v: &[VideoInteractionRecord]| v.iter().map(|r| r.summary_text.clone()).collect::<Vec<_>>();
        assert_eq!(text(&a), text(&b));

        let full = CohortConfig { mode: GenerationMode::Full, ..cfg };
        let (a, _) = simulate_day(0, 10, &healthy, &full, &priors, &mut stream(5, "t", 0), &TemplateGenerator);
        let (b, _) = simulate_day(0, 10, &severe, &full, &priors, &mut stream(5, "t", 0), &TemplateGenerator);
        assert_ne!(text(&a), text(&b));
    }

    #[test]
    fn generator_failure_falls_back_to_template() {
        let cfg = CohortConfig::default();
        let priors = Priors::default();
        let profile = ProgressionProfile::new(0, 50, 100, 150, 180).unwrap();
        let (a, _) = simulate_day(0, 3, &profile, &cfg, &priors, &mut stream(6, "t", 0), &Failing);
        let (b, _) = simulate_day(0, 3, &profile, &cfg, &priors, &mut stream(6, "t", 0), &TemplateGenerator);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| !r.summary_text.is_empty()));
    }

    #[test]
    fn healthy_day_coherence_at_zero_spread() {
        let cfg = CohortConfig::default();
        let priors = Priors::default().with_per_sample_sd(0.0);
        let profile = ProgressionProfile::new(0, 150, 160, 170, 180).unwrap();
        let mut rng = stream(7, "t", 0);
        let mut total = 0.0;
        let mut n = 0.0;
        for day in 0..100 {
            let (recs, _) = simulate_day(0, day, &profile, &cfg, &priors, &mut rng, &TemplateGenerator);
            total += recs.iter().map(|r| r.coherence).sum::<f64>();
            n += recs.len() as f64;
        }
        assert!((total / n - 0.880).abs() < 0.005);
    }

    #[test]
    fn cohort_shape_and_label_monotonicity() {
        let cfg = CohortConfig { n_users: 10, horizon_days: 20, videos_per_day: 5, ..Default::default() };
        let cohort = simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator).unwrap();
        assert_eq!(cohort.interactions.len(), 1_000);
        assert_eq!(cohort.labels.len(), 200);
        for w in cohort.labels.windows(2) {
            if w[0].user_id == w[1].user_id {
                assert!(w[0].state <= w[1].state);
                assert_eq!(w[0].day + 1, w[1].day);
            }
        }
        let keys: Vec<_> = cohort.interactions.iter().map(|r| (r.user_id, r.day, r.video_index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = small(12, 15);
        let priors = Priors::default();
        let par = simulate_cohort(&cfg, &priors, &TemplateGenerator).unwrap();
        let seq = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_cohort(&cfg, &priors, &TemplateGenerator).unwrap());
        assert_eq!(par, seq);
    }

    #[test]
    fn oversized_cohort_is_rejected() {
        let cfg = CohortConfig { n_users: 100_000, horizon_days: 1_000, ..Default::default() };
        assert!(matches!(
            simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator),
            Err(Error::InvalidConfig(_))
        ));
    }
}
