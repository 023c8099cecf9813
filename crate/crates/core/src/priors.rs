//! Per-state behavioral priors and coherence-component targets, and the
//! samplers that draw per-interaction values from them.
//!
//! Behavioral ranges are sampled uniformly (continuous metrics) or uniformly
//! over the inclusive integer range (count metrics). Accuracy, consistency and
//! skip rate are Gaussian around the state mean with a shared per-sample
//! spread, clipped to `[0, 1]`; latency is uniform over the state's reaction
//! time range.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{latency_efficiency, CoherenceComponents, CoherenceWeights, RiskState};

/// Default per-sample spread of the Gaussian component draws.
pub const DEFAULT_PER_SAMPLE_SD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            // Upper end is reachable only through the clamp; measure-zero either way.
            (self.lo + (self.hi - self.lo) * rng.random::<f64>()).clamp(self.lo, self.hi)
        } else {
            self.lo
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.lo >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{what}: range [{}, {}] must be finite, non-negative and ordered",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: u32,
    pub hi: u32,
}

impl IntRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: u32) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        if self.lo > self.hi {
            return Err(Error::InvalidConfig(format!("{what}: range [{}, {}] is reversed", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Behavioral metric ranges for one risk state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPriors {
    pub watch_s: Range,
    pub skip_s: Range,
    pub pause_count: IntRange,
    pub replay_count: IntRange,
    pub reaction_s: Range,
    pub like_pct: Range,
    pub share_pct: Range,
    pub churn_pct: Range,
    pub logins_per_day: Range,
}

impl BehaviorPriors {
    fn validate(&self, state: RiskState) -> Result<()> {
        let s = state.name();
        self.watch_s.validate(&format!("{s}.watch_s"))?;
        self.skip_s.validate(&format!("{s}.skip_s"))?;
        self.pause_count.validate(&format!("{s}.pause_count"))?;
        self.replay_count.validate(&format!("{s}.replay_count"))?;
        self.reaction_s.validate(&format!("{s}.reaction_s"))?;
        self.logins_per_day.validate(&format!("{s}.logins_per_day"))?;
        for (name, r) in [("like_pct", self.like_pct), ("share_pct", self.share_pct), ("churn_pct", self.churn_pct)] {
            r.validate(&format!("{s}.{name}"))?;
            if r.hi > 100.0 {
                return Err(Error::InvalidConfig(format!("{s}.{name}: percent range exceeds 100")));
            }
        }
        Ok(())
    }
}

/// Behavioral priors for all five states, indexed by state code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBehaviorPriors {
    pub states: [BehaviorPriors; 5],
}

impl StateBehaviorPriors {
    pub fn get(&self, state: RiskState) -> &BehaviorPriors {
        &self.states[state.code() as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentMeans {
    pub accuracy: f64,
    pub consistency: f64,
    pub skip_rate: f64,
}

/// Coherence-component targets for all five states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateComponentPriors {
    pub states: [ComponentMeans; 5],
    pub per_sample_sd: f64,
}

impl StateComponentPriors {
    pub fn get(&self, state: RiskState) -> &ComponentMeans {
        &self.states[state.code() as usize]
    }
}

/// Both prior tables together; the samplers need both because component
/// latency is drawn from the behavioral reaction-time range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub behavior: StateBehaviorPriors,
    pub components: StateComponentPriors,
}

impl Default for Priors {
    fn default() -> Self {
        let (behavior, components) = default_priors();
        Self { behavior, components }
    }
}

impl Priors {
    pub fn with_per_sample_sd(mut self, sd: f64) -> Self {
        self.components.per_sample_sd = sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for st in RiskState::ALL {
            self.behavior.get(st).validate(st)?;
            let m = self.components.get(st);
            for (name, v) in [("accuracy", m.accuracy), ("consistency", m.consistency), ("skip_rate", m.skip_rate)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!("{st}.{name} mean {v} outside [0, 1]")));
                }
            }
        }
        let sd = self.components.per_sample_sd;
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(Error::InvalidConfig(format!("per_sample_sd must be >= 0, got {sd}")));
        }
        Ok(())
    }
}

/// One sampled value per behavioral metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSample {
    pub watch_s: f64,
    pub skip_s: f64,
    pub pause_count: u32,
    pub replay_count: u32,
    pub reaction_s: f64,
    pub like_pct: f64,
    pub share_pct: f64,
    pub churn_pct: f64,
    pub logins_per_day: f64,
}

/// Skip rate that makes the coherence score hit `target` given the other
/// three components.
pub fn invert_skip_rate(target: f64, accuracy: f64, consistency: f64, latency_s: f64, w: &CoherenceWeights) -> f64 {
    let rest = w.accuracy * accuracy + w.latency * latency_efficiency(latency_s) + w.consistency * consistency;
    1.0 - (target - rest) / w.skip
}

const fn r(lo: f64, hi: f64) -> Range {
    Range::new(lo, hi)
}

const fn i(lo: u32, hi: u32) -> IntRange {
    IntRange::new(lo, hi)
}

pub fn default_behavior_priors() -> StateBehaviorPriors {
    StateBehaviorPriors {
        states: [
            BehaviorPriors {
                watch_s: r(60.0, 75.0),
                skip_s: r(0.0, 5.0),
                pause_count: i(0, 2),
                replay_count: i(0, 1),
                reaction_s: r(4.0, 6.0),
                like_pct: r(30.0, 40.0),
                share_pct: r(15.0, 20.0),
                churn_pct: r(1.0, 1.0),
                logins_per_day: r(2.0, 3.0),
            },
            BehaviorPriors {
                watch_s: r(40.0, 60.0),
                skip_s: r(5.0, 15.0),
                pause_count: i(1, 3),
                replay_count: i(1, 3),
                reaction_s: r(7.0, 10.0),
                like_pct: r(20.0, 25.0),
                share_pct: r(10.0, 15.0),
                churn_pct: r(2.0, 3.0),
                logins_per_day: r(1.0, 2.0),
            },
            BehaviorPriors {
                watch_s: r(20.0, 40.0),
                skip_s: r(10.0, 25.0),
                pause_count: i(2, 5),
                replay_count: i(2, 5),
                reaction_s: r(11.0, 14.0),
                like_pct: r(5.0, 10.0),
                share_pct: r(3.0, 7.0),
                churn_pct: r(5.0, 6.0),
                logins_per_day: r(0.5, 1.0),
            },
            BehaviorPriors {
                watch_s: r(15.0, 25.0),
                skip_s: r(15.0, 30.0),
                pause_count: i(3, 6),
                replay_count: i(3, 6),
                reaction_s: r(14.0, 17.0),
                like_pct: r(2.0, 5.0),
                share_pct: r(1.0, 3.0),
                churn_pct: r(7.0, 8.0),
                logins_per_day: r(0.3, 0.8),
            },
            BehaviorPriors {
                watch_s: r(10.0, 15.0),
                skip_s: r(20.0, 40.0),
                pause_count: i(4, 8),
                replay_count: i(4, 8),
                reaction_s: r(18.0, 22.0),
                like_pct: r(0.0, 2.0),
                share_pct: r(0.0, 1.0),
                churn_pct: r(12.0, 15.0),
                logins_per_day: r(0.0, 0.5),
            },
        ],
    }
}

/// Accuracy / consistency means for Healthy, MCI, EarlyAD.
const MEASURED_ACC_CONS: [(f64, f64); 3] = [(0.85, 0.88), (0.65, 0.62), (0.42, 0.38)];
/// Skip rates from inverting the coherence formula at coherence targets
/// 0.880 / 0.692 / 0.486 with latency at the reaction-time midpoint.
const INVERTED_SKIP: [f64; 3] = [0.100044, 0.327911, 0.601936];

pub fn default_component_priors() -> StateComponentPriors {
    let measured: Vec<ComponentMeans> = MEASURED_ACC_CONS
        .iter()
        .zip(INVERTED_SKIP)
        .map(|(&(accuracy, consistency), skip_rate)| ComponentMeans { accuracy, consistency, skip_rate })
        .collect();
    // ModAD and SevAD continue the Healthy -> EarlyAD trend one and two steps on.
    let step = |f: fn(&ComponentMeans) -> f64| (f(&measured[2]) - f(&measured[0])) / 2.0;
    let extrapolate = |k: f64| ComponentMeans {
        accuracy: (measured[2].accuracy + k * step(|m| m.accuracy)).clamp(0.0, 1.0),
        consistency: (measured[2].consistency + k * step(|m| m.consistency)).clamp(0.0, 1.0),
        skip_rate: (measured[2].skip_rate + k * step(|m| m.skip_rate)).clamp(0.0, 1.0),
    };
    StateComponentPriors {
        states: [measured[0], measured[1], measured[2], extrapolate(1.0), extrapolate(2.0)],
        per_sample_sd: DEFAULT_PER_SAMPLE_SD,
    }
}

pub fn default_priors() -> (StateBehaviorPriors, StateComponentPriors) {
    (default_behavior_priors(), default_component_priors())
}

pub fn sample_behaviors<R: Rng + ?Sized>(priors: &Priors, state: RiskState, rng: &mut R) -> BehaviorSample {
    let p = priors.behavior.get(state);
    BehaviorSample {
        watch_s: p.watch_s.sample(rng),
        skip_s: p.skip_s.sample(rng),
        pause_count: p.pause_count.sample(rng),
        replay_count: p.replay_count.sample(rng),
        reaction_s: p.reaction_s.sample(rng),
        like_pct: p.like_pct.sample(rng),
        share_pct: p.share_pct.sample(rng),
        churn_pct: p.churn_pct.sample(rng),
        logins_per_day: p.logins_per_day.sample(rng),
    }
}

fn gaussian_fraction<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let n = Normal::new(mean, sd).expect("sd validated finite and non-negative");
    n.sample(rng).clamp(0.0, 1.0)
}

pub fn sample_components<R: Rng + ?Sized>(priors: &Priors, state: RiskState, rng: &mut R) -> CoherenceComponents {
    let means = priors.components.get(state);
    let sd = priors.components.per_sample_sd;
    let accuracy = gaussian_fraction(means.accuracy, sd, rng);
    let latency_s = priors.behavior.get(state).reaction_s.sample(rng);
    let skip_rate = gaussian_fraction(means.skip_rate, sd, rng);
    let consistency = gaussian_fraction(means.consistency, sd, rng);
    CoherenceComponents {
        accuracy,
        latency_s,
        skip_rate,
        consistency,
    }
}
