//! Multinomial logistic-regression probe over standardized feature rows.
//!
//! The objective is mean cross-entropy plus `lambda / 2 * ||W||^2` with
//! `lambda = 1 / (C * n)`; biases are not penalized. Parameters are stored
//! flat, class-major: `theta[k * (d + 1) + j]`, with `j == d` the bias.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMask, FeatureRow};
use crate::model::RiskState;
use crate::rng::stream;

pub const N_CLASSES: usize = 3;

pub fn class_index(state: RiskState) -> Option<usize> {
    RiskState::EVALUATED.iter().position(|s| *s == state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Inverse regularization strength.
    pub l2_c: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Share of training users held back for early stopping.
    pub validation_frac: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2_c: 1.0,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 10,
            max_epochs: 200,
            validation_frac: 0.2,
            seed: 11,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_c > 0.0 && self.l2_c.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2_c must be > 0, got {}", self.l2_c)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_frac) {
            return Err(Error::InvalidConfig("validation_frac must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub user_id: u32,
    pub day: u32,
    pub x: Vec<f64>,
    pub y: usize,
}

/// Join feature rows with hidden states, keeping evaluated states only.
pub fn label_rows(
    features: &[FeatureRow],
    states: &BTreeMap<(u32, u32), RiskState>,
    mask: FeatureMask,
) -> Vec<LabeledRow> {
    features
        .iter()
        .filter_map(|f| {
            let y = class_index(*states.get(&(f.user_id, f.day))?)?;
            Some(LabeledRow { user_id: f.user_id, day: f.day, x: f.masked(mask), y })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

fn logits(theta: &[f64], d: usize, x: &[f64]) -> [f64; N_CLASSES] {
    let mut z = [0.0; N_CLASSES];
    for (k, zk) in z.iter_mut().enumerate() {
        let w = &theta[k * (d + 1)..(k + 1) * (d + 1)];
        *zk = w[d] + w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    z
}

pub fn softmax(z: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn l2_term(theta: &[f64], d: usize) -> f64 {
    (0..N_CLASSES).map(|k| theta[k * (d + 1)..k * (d + 1) + d].iter().map(|w| w * w).sum::<f64>()).sum()
}

/// Mean cross-entropy plus the weight penalty.
pub fn objective(theta: &[f64], d: usize, x: &[Vec<f64>], y: &[usize], lambda: f64) -> f64 {
    let ce: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = logits(theta, d, xi);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[yi]
        })
        .sum();
    ce / x.len() as f64 + 0.5 * lambda * l2_term(theta, d)
}

/// Analytic gradient of [`objective`].
pub fn gradient(theta: &[f64], d: usize, x: &[Vec<f64>], y: &[usize], lambda: f64) -> Vec<f64> {
    let all: Vec<usize> = (0..x.len()).collect();
    gradient_on(theta, d, x, y, &all, lambda)
}

/// Gradient of the objective restricted to the rows in `idx`.
fn gradient_on(theta: &[f64], d: usize, x: &[Vec<f64>], y: &[usize], idx: &[usize], lambda: f64) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let n = idx.len() as f64;
    for &i in idx {
        let (xi, yi) = (&x[i], y[i]);
        let p = softmax(&logits(theta, d, xi));
        for k in 0..N_CLASSES {
            let r = (p[k] - if k == yi { 1.0 } else { 0.0 }) / n;
            let gk = &mut g[k * (d + 1)..(k + 1) * (d + 1)];
            for (gj, xj) in gk[..d].iter_mut().zip(xi) {
                *gj += r * xj;
            }
            gk[d] += r;
        }
    }
    for k in 0..N_CLASSES {
        for j in 0..d {
            g[k * (d + 1) + j] += lambda * theta[k * (d + 1) + j];
        }
    }
    g
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, theta: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Deterministic full-batch minimization, used on small problems.
pub fn fit_full_batch(x: &[Vec<f64>], y: &[usize], d: usize, lambda: f64, iterations: usize, lr: f64) -> Vec<f64> {
    let mut theta = vec![0.0; N_CLASSES * (d + 1)];
    let mut opt = Adam::new(theta.len(), lr);
    for _ in 0..iterations {
        let g = gradient(&theta, d, x, y, lambda);
        opt.step(&mut theta, &g);
    }
    theta
}

/// Weight norm excluding biases.
pub fn weight_norm(theta: &[f64], d: usize) -> f64 {
    l2_term(theta, d).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub mask: FeatureMask,
    pub feature_names: Vec<String>,
    pub scaler: Standardizer,
    pub theta: Vec<f64>,
    pub epochs_run: usize,
    pub best_validation_loss: f64,
}

impl ProbeModel {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// A model with all-zero parameters and an identity scaler.
    pub fn zeros(mask: FeatureMask) -> Self {
        let names = mask.names();
        let d = names.len();
        Self {
            mask,
            feature_names: names.into_iter().map(String::from).collect(),
            scaler: Standardizer { mean: vec![0.0; d], scale: vec![1.0; d] },
            theta: vec![0.0; N_CLASSES * (d + 1)],
            epochs_run: 0,
            best_validation_loss: f64::NAN,
        }
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        let d = self.dim();
        &self.theta[class * (d + 1)..class * (d + 1) + d]
    }

    pub fn bias(&self, class: usize) -> f64 {
        let d = self.dim();
        self.theta[class * (d + 1) + d]
    }
}

/// Class probabilities for a raw (unstandardized, already masked) row.
pub fn probe_score(model: &ProbeModel, x: &[f64]) -> Result<[f64; N_CLASSES]> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    let z = model.scaler.apply(x);
    Ok(softmax(&logits(&model.theta, model.dim(), &z)))
}

/// `1 - P(Healthy)`.
pub fn risk_score(probs: &[f64; N_CLASSES]) -> f64 {
    1.0 - probs[0]
}

pub fn predict(probs: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    best
}

fn split_validation(rows: &[LabeledRow], cfg: &ProbeConfig) -> (Vec<usize>, Vec<usize>) {
    let mut users: Vec<u32> = rows.iter().map(|r| r.user_id).collect::<BTreeSet<_>>().into_iter().collect();
    users.shuffle(&mut stream(cfg.seed, "probe.validation", 0));
    let n_val = ((users.len() as f64) * cfg.validation_frac).round() as usize;
    if n_val == 0 || n_val >= users.len() {
        let all: Vec<usize> = (0..rows.len()).collect();
        return (all.clone(), all);
    }
    let val_users: BTreeSet<u32> = users[..n_val].iter().copied().collect();
    (0..rows.len()).partition(|&i| !val_users.contains(&rows[i].user_id))
}

/// Minibatch Adam with early stopping on a user-disjoint validation slice.
pub fn train_probe(rows: &[LabeledRow], mask: FeatureMask, cfg: &ProbeConfig) -> Result<ProbeModel> {
    cfg.validate()?;
    let d = mask.indices().len();
    if rows.is_empty() {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: r.x.len() });
    }
    let classes: BTreeSet<usize> = rows.iter().map(|r| r.y).collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass(RiskState::EVALUATED[*classes.first().unwrap()].name().into()));
    }

    let (train_idx, val_idx) = split_validation(rows, cfg);
    let raw: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].x.clone()).collect();
    let scaler = Standardizer::fit(&raw);
    let x: Vec<Vec<f64>> = raw.iter().map(|r| scaler.apply(r)).collect();
    let y: Vec<usize> = train_idx.iter().map(|&i| rows[i].y).collect();
    let xv: Vec<Vec<f64>> = val_idx.iter().map(|&i| scaler.apply(&rows[i].x)).collect();
    let yv: Vec<usize> = val_idx.iter().map(|&i| rows[i].y).collect();
    let lambda = 1.0 / (cfg.l2_c * x.len() as f64);

    let mut theta = vec![0.0; N_CLASSES * (d + 1)];
    let mut opt = Adam::new(theta.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = stream(cfg.seed, "probe.batches", 0);
    let mut best = (f64::INFINITY, theta.clone());
    let mut stale = 0;
    let mut epochs_run = 0;
    for _ in 0..cfg.max_epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let g = gradient_on(&theta, d, &x, &y, batch, lambda);
            opt.step(&mut theta, &g);
        }
        let val = objective(&theta, d, &xv, &yv, 0.0);
        if val < best.0 - 1e-9 {
            best = (val, theta.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if !best.1.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("probe weights diverged".into()));
    }
    Ok(ProbeModel {
        mask,
        feature_names: mask.names().into_iter().map(String::from).collect(),
        scaler,
        theta: best.1,
        epochs_run,
        best_validation_loss: best.0,
    })
}

/// Row-level predictions, in input order.
pub fn predict_rows(model: &ProbeModel, rows: &[LabeledRow]) -> Result<Vec<[f64; N_CLASSES]>> {
    rows.iter().map(|r| probe_score(model, &r.x)).collect()
}

/// Majority-vote prediction per `(user, true class)` group; ties go to the
/// lower class index. Returns `(truth, prediction)` pairs.
pub fn majority_vote(rows: &[LabeledRow], preds: &[usize]) -> Vec<(usize, usize)> {
    let mut votes: BTreeMap<(u32, usize), [usize; N_CLASSES]> = BTreeMap::new();
    for (r, &p) in rows.iter().zip(preds) {
        votes.entry((r.user_id, r.y)).or_default()[p] += 1;
    }
    votes
        .into_iter()
        .map(|((_, truth), v)| {
            let mut best = 0;
            for k in 1..N_CLASSES {
                if v[k] > v[best] {
                    best = k;
                }
            }
            (truth, best)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = stream(seed, "toy", 0);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let y = x.iter().map(|r: &Vec<f64>| if r[0] > 0.5 { 2 } else if r[0] > -0.5 { 1 } else { 0 }).collect();
        (x, y)
    }

    fn central_difference(theta: &[f64], d: usize, x: &[Vec<f64>], y: &[usize], lambda: f64) -> Vec<f64> {
        let h = 1e-5;
        (0..theta.len())
            .map(|i| {
                let mut a = theta.to_vec();
                let mut b = theta.to_vec();
                a[i] += h;
                b[i] -= h;
                (objective(&a, d, x, y, lambda) - objective(&b, d, x, y, lambda)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let (x, y) = toy(12, 4, seed);
            let mut rng = stream(seed, "theta", 0);
            let theta: Vec<f64> = (0..N_CLASSES * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = gradient(&theta, 4, &x, &y, 0.3);
            let fd = central_difference(&theta, 4, &x, &y, 0.3);
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            assert!(num / den < 1e-5, "seed {seed}: {}", num / den);
        }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let m = ProbeModel::zeros(FeatureMask::CoherenceOnly);
        let p = probe_score(&m, &[0.5; 6]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(probe_score(&m, &[0.5; 5]), Err(Error::DimensionMismatch { expected: 6, got: 5 })));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, y) = toy(40, 3, 2);
        let theta = fit_full_batch(&x, &y, 3, 0.01, 300, 0.05);
        for xi in &x {
            let p = softmax(&logits(&theta, 3, xi));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stronger_penalty_shrinks_weights() {
        for seed in 0..5 {
            let (x, y) = toy(60, 3, seed);
            let norms: Vec<f64> = [0.001, 0.01, 0.1, 1.0]
                .iter()
                .map(|&l| weight_norm(&fit_full_batch(&x, &y, 3, l, 4000, 0.05), 3))
                .collect();
            assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{norms:?}");
        }
    }

    fn rows_from(x: &[Vec<f64>], y: &[usize]) -> Vec<LabeledRow> {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (x, &y))| LabeledRow { user_id: (i % 20) as u32, day: i as u32, x: x.clone(), y })
            .collect()
    }

    #[test]
    fn drift_weight_raises_risk() {
        let mut rng = stream(9, "drift", 0);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..600 {
            let k = i % 3;
            let drift = 0.12 + 0.2 * k as f64 + 0.03 * rng.random_range(-1.0..1.0);
            x.push(vec![1.0 - drift, drift, 0.0, 0.0, 0.0, 0.0]);
            y.push(k);
        }
        let model = train_probe(&rows_from(&x, &y), FeatureMask::CoherenceOnly, &ProbeConfig::default()).unwrap();
        let w = model.weights(2)[1] - model.weights(0)[1];
        assert!(w > 0.0);
        let lo = risk_score(&probe_score(&model, &[0.8, 0.2, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let hi = risk_score(&probe_score(&model, &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(hi > lo);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = toy(20, 6, 1);
        let rows = rows_from(&x, &[1; 20]);
        assert!(matches!(train_probe(&rows, FeatureMask::CoherenceOnly, &ProbeConfig::default()), Err(Error::SingleClass(_))));
    }

    #[test]
    fn majority_vote_groups_by_user_and_class() {
        let rows: Vec<LabeledRow> =
            [(0, 0), (0, 0), (0, 0), (0, 1), (1, 2)].iter().map(|&(u, y)| LabeledRow { user_id: u, day: 0, x: vec![], y }).collect();
        let votes = majority_vote(&rows, &[0, 1, 0, 1, 2]);
        assert_eq!(votes, vec![(0, 0), (1, 1), (2, 2)]);
    }
}
