//! Deployment-level session generator: nine learner profiles, question-level
//! records in the extension schema, and per-session expected labels.
//!
//! Each session's profile centroid is perturbed by `overlap_noise` times a
//! per-parameter scale, then realized deterministically: missed and correct
//! counts are rounded quotas placed at random positions, and response times
//! are evenly spread around the session median.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnerStatus;
use crate::perturb::{flip_probability, NoiseConfig};
use crate::rng::stream2;

pub const VIDEO_TOPICS: [&str; 5] = ["science", "history", "cooking", "travel", "music"];
pub const QUESTION_TYPES: [&str; 4] = ["comprehension", "reasoning", "factual recall", "inference"];
pub const DIFFICULTIES: [&str; 3] = ["easy", "medium", "hard"];

/// Response time stored for missed questions.
pub const MISSED_RT_S: f64 = 30.0;
const MIN_RT_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayCondition {
    Immediate,
    Delayed,
}

impl DelayCondition {
    pub fn name(self) -> &'static str {
        match self {
            DelayCondition::Immediate => "immediate",
            DelayCondition::Delayed => "delayed",
        }
    }
}

impl std::str::FromStr for DelayCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "immediate" => Ok(Self::Immediate),
            "delayed" => Ok(Self::Delayed),
            _ => Err(Error::InvalidInput(format!("unknown delay condition `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub learner_id: u32,
    pub session_id: u32,
    pub video_topic: String,
    pub question_type: String,
    pub question_difficulty: String,
    pub delay_condition: DelayCondition,
    pub answer_correct: Option<bool>,
    pub response_time_seconds: f64,
    pub video_completion_rate: f64,
    pub pause_count: u32,
    pub replay_count: u32,
    pub skip_count: u32,
    pub missed_question: bool,
    pub attention_noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedLabel {
    pub session_id: u32,
    pub learner_id: u32,
    pub expected_status: LearnerStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeploymentConfig {
    pub sessions_per_profile: u32,
    pub questions_per_session: u32,
    /// Share of each session's questions asked after a delay.
    pub delayed_fraction: f64,
    /// Centroid perturbation sd, as a multiple of each parameter's scale.
    pub overlap_noise: f64,
    pub seed: u64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            sessions_per_profile: 56,
            questions_per_session: 10,
            delayed_fraction: 0.3,
            overlap_noise: 0.25,
            seed: 504,
        }
    }
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sessions_per_profile == 0 {
            return Err(Error::InvalidConfig("sessions_per_profile must be >= 1".into()));
        }
        if self.questions_per_session < 3 {
            return Err(Error::InvalidConfig("questions_per_session must be >= 3".into()));
        }
        if !(self.delayed_fraction > 0.0 && self.delayed_fraction < 1.0) {
            return Err(Error::InvalidConfig("delayed_fraction must be in (0, 1)".into()));
        }
        if !(self.overlap_noise.is_finite() && self.overlap_noise >= 0.0) {
            return Err(Error::InvalidConfig("overlap_noise must be >= 0".into()));
        }
        Ok(())
    }

    pub fn total_sessions(&self) -> u32 {
        self.sessions_per_profile * LearnerStatus::ALL.len() as u32
    }

    /// (immediate, delayed) counts; both conditions always occur.
    pub fn condition_counts(&self) -> (u32, u32) {
        let n = self.questions_per_session;
        let delayed = round_half_up(self.delayed_fraction * f64::from(n)).clamp(1, n - 1);
        (n - delayed, delayed)
    }
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor().max(0.0) as u32
}

/// Generative centroid of one learner profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub status: LearnerStatus,
    pub completion_rate: f64,
    pub missed_immediate: f64,
    pub missed_delayed: f64,
    pub p_correct_immediate: f64,
    pub p_correct_delayed: f64,
    pub median_rt_s: f64,
    pub rt_spread_s: f64,
    pub skip_mean: f64,
    pub pause_max: u32,
    pub replay_max: u32,
}

/// Perturbation scale per centroid parameter, in parameter units.
const PARAM_SCALE: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 1.0, 20.0, 10.0, 3.0];

impl ProfileSpec {
    fn params(&self) -> [f64; 8] {
        [
            self.completion_rate,
            self.missed_immediate,
            self.missed_delayed,
            self.p_correct_immediate,
            self.p_correct_delayed,
            self.median_rt_s,
            self.rt_spread_s,
            self.skip_mean,
        ]
    }

    fn with_params(&self, p: [f64; 8]) -> Self {
        Self {
            completion_rate: p[0].clamp(0.0, 1.0),
            missed_immediate: p[1].clamp(0.0, 1.0),
            missed_delayed: p[2].clamp(0.0, 1.0),
            p_correct_immediate: p[3].clamp(0.0, 1.0),
            p_correct_delayed: p[4].clamp(0.0, 1.0),
            median_rt_s: p[5].max(MIN_RT_S),
            rt_spread_s: p[6].max(0.0),
            skip_mean: p[7].max(0.0),
            ..*self
        }
    }

    /// Centroid with Gaussian noise of sd `noise * scale` on every parameter.
    pub fn perturbed<R: Rng + ?Sized>(&self, noise: f64, rng: &mut R) -> Self {
        if noise == 0.0 {
            return self.with_params(self.params());
        }
        let mut p = self.params();
        for (v, s) in p.iter_mut().zip(PARAM_SCALE) {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise * s * z;
        }
        self.with_params(p)
    }
}

#[allow(clippy::too_many_arguments)]
const fn spec(
    status: LearnerStatus,
    completion_rate: f64,
    missed_immediate: f64,
    missed_delayed: f64,
    p_correct_immediate: f64,
    p_correct_delayed: f64,
    median_rt_s: f64,
    rt_spread_s: f64,
    skip_mean: f64,
) -> ProfileSpec {
    ProfileSpec {
        status,
        completion_rate,
        missed_immediate,
        missed_delayed,
        p_correct_immediate,
        p_correct_delayed,
        median_rt_s,
        rt_spread_s,
        skip_mean,
        pause_max: 2,
        replay_max: 1,
    }
}

/// Default centroids, in status priority order.
pub fn default_profiles() -> Vec<ProfileSpec> {
    use LearnerStatus::*;
    vec![
        spec(LowEngagement, 0.45, 0.1, 0.1, 0.7, 0.6, 12.0, 4.0, 1.0),
        spec(FastButInaccurate, 0.9, 0.0, 0.0, 0.45, 0.45, 4.0, 1.5, 0.5),
        spec(DelayedRecallWeakness, 0.9, 0.0, 0.0, 0.9, 0.3, 12.0, 3.0, 0.5),
        spec(HighCognitiveLoad, 0.85, 0.0, 0.0, 0.45, 0.45, 26.0, 4.0, 0.5),
        spec(AttentionFluctuating, 0.85, 0.0, 0.0, 0.72, 0.67, 18.0, 11.0, 0.5),
        spec(StrongRetention, 0.9, 0.0, 0.0, 0.9, 1.0, 10.0, 3.0, 0.5),
        spec(StableLearner, 0.9, 0.0, 0.0, 0.72, 0.67, 12.0, 3.0, 0.5),
        spec(SlowButAccurate, 0.9, 0.0, 1.0, 0.8, 0.6, 24.0, 4.0, 0.5),
        spec(NeedsReview, 0.85, 0.0, 0.0, 0.57, 0.5, 12.0, 4.0, 0.5),
    ]
}

/// `n` evenly spaced offsets, centered and scaled to unit sample sd.
pub fn spread_offsets(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let c = (n as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..n).map(|i| i as f64 - c).collect();
    let sd = (raw.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    raw.into_iter().map(|v| v / sd).collect()
}

fn choose_positions<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(k);
    v
}

/// Realize one session's question records from (already perturbed) parameters.
pub fn session_to_records<R: Rng + ?Sized>(
    params: &ProfileSpec,
    cfg: &DeploymentConfig,
    learner_id: u32,
    session_id: u32,
    rng: &mut R,
) -> Vec<QuestionRecord> {
    let n = cfg.questions_per_session as usize;
    let (n_imm, n_del) = cfg.condition_counts();
    let mut conditions: Vec<DelayCondition> = std::iter::repeat_n(DelayCondition::Immediate, n_imm as usize)
        .chain(std::iter::repeat_n(DelayCondition::Delayed, n_del as usize))
        .collect();
    conditions.shuffle(rng);

    let mut missed = vec![false; n];
    let mut correct = vec![false; n];
    for (cond, p_miss, p_correct) in [
        (DelayCondition::Immediate, params.missed_immediate, params.p_correct_immediate),
        (DelayCondition::Delayed, params.missed_delayed, params.p_correct_delayed),
    ] {
        let idx: Vec<usize> = (0..n).filter(|&i| conditions[i] == cond).collect();
        let n_missed = round_half_up(p_miss * idx.len() as f64).min(idx.len() as u32) as usize;
        for i in choose_positions(&idx, n_missed, rng) {
            missed[i] = true;
        }
        let answered: Vec<usize> = idx.iter().copied().filter(|&i| !missed[i]).collect();
        let n_correct = round_half_up(p_correct * answered.len() as f64).min(answered.len() as u32) as usize;
        for i in choose_positions(&answered, n_correct, rng) {
            correct[i] = true;
        }
    }

    let answered: Vec<usize> = (0..n).filter(|&i| !missed[i]).collect();
    let mut rts: Vec<f64> = spread_offsets(answered.len())
        .into_iter()
        .map(|q| (params.median_rt_s.max(MIN_RT_S) + params.rt_spread_s * q).max(MIN_RT_S))
        .collect();
    rts.shuffle(rng);
    let mut response = vec![MISSED_RT_S; n];
    for (&i, rt) in answered.iter().zip(rts) {
        response[i] = rt;
    }

    let mut skips = vec![0u32; n];
    for _ in 0..round_half_up(params.skip_mean * n as f64) {
        skips[rng.random_range(0..n)] += 1;
    }

    let topic = VIDEO_TOPICS[rng.random_range(0..VIDEO_TOPICS.len())].to_string();
    (0..n)
        .map(|i| QuestionRecord {
            learner_id,
            session_id,
            video_topic: topic.clone(),
            question_type: QUESTION_TYPES[rng.random_range(0..QUESTION_TYPES.len())].to_string(),
            question_difficulty: DIFFICULTIES[rng.random_range(0..DIFFICULTIES.len())].to_string(),
            delay_condition: conditions[i],
            answer_correct: (!missed[i]).then_some(correct[i]),
            response_time_seconds: response[i],
            video_completion_rate: params.completion_rate,
            pause_count: rng.random_range(0..=params.pause_max),
            replay_count: rng.random_range(0..=params.replay_max),
            skip_count: skips[i],
            missed_question: missed[i],
            attention_noise_level: cfg.overlap_noise,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub questions: Vec<QuestionRecord>,
    pub expected: Vec<ExpectedLabel>,
}

pub fn generate_deployment(cfg: &DeploymentConfig, profiles: &[ProfileSpec]) -> Result<Deployment> {
    cfg.validate()?;
    if profiles.len() != LearnerStatus::ALL.len() {
        return Err(Error::InvalidConfig(format!("expected 9 profiles, got {}", profiles.len())));
    }
    let spp = cfg.sessions_per_profile;
    let sessions: Vec<(Vec<QuestionRecord>, ExpectedLabel)> = (0..profiles.len() as u32 * spp)
        .into_par_iter()
        .map(|sid| {
            let k = sid / spp;
            let profile = &profiles[k as usize];
            let mut rng = stream2(cfg.seed, "deployment.session", u64::from(k), u64::from(sid % spp));
            let params = profile.perturbed(cfg.overlap_noise, &mut rng);
            let records = session_to_records(&params, cfg, sid, sid, &mut rng);
            (records, ExpectedLabel { session_id: sid, learner_id: sid, expected_status: profile.status })
        })
        .collect();
    let mut out = Deployment { questions: Vec::new(), expected: Vec::new() };
    for (records, label) in sessions {
        out.questions.extend(records);
        out.expected.push(label);
    }
    Ok(out)
}

/// Invert `answer_correct` on answered questions with a per-record
/// probability drawn from U(0, flip_p_max). Returns the flip count.
pub fn flip_answers(questions: &mut [QuestionRecord], cfg: &NoiseConfig) -> usize {
    if cfg.flip_p_max == 0.0 {
        return 0;
    }
    let mut per_session = 0u64;
    let mut last = None;
    let mut flips = 0;
    for q in questions.iter_mut() {
        if last != Some(q.session_id) {
            per_session = 0;
            last = Some(q.session_id);
        }
        let mut rng = stream2(cfg.seed, "perturb.answer", u64::from(q.session_id), per_session);
        per_session += 1;
        let p = flip_probability(cfg, &mut rng);
        if let Some(c) = q.answer_correct.as_mut() {
            if rng.random_bool(p) {
                *c = !*c;
                flips += 1;
            }
        }
    }
    flips
}
