//! Run configuration and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deployment::DeploymentConfig;
use crate::digest::config_digest;
use crate::error::{Error, Result};
use crate::experiments::EvaluationConfig;
use crate::perturb::NoiseConfig;
use crate::priors::{Priors, DEFAULT_PER_SAMPLE_SD};
use crate::rng::stream;
use crate::simulate::{CohortConfig, TransitionPriors};
use crate::splits::{SplitKind, SplitParams};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// When set, every stage seed is derived from it.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub per_sample_sd: f64,
    pub cohort: CohortConfig,
    pub noise: NoiseConfig,
    pub splits: SplitParams,
    pub split_seed: u64,
    pub deployment: DeploymentConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("run"),
            per_sample_sd: DEFAULT_PER_SAMPLE_SD,
            cohort: CohortConfig::default(),
            noise: NoiseConfig::default(),
            splits: SplitParams::default(),
            split_seed: 7,
            deployment: DeploymentConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Stage seed derived from a master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    stream(master, label, 0).random()
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(m) => Error::Toml(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Copy with stage seeds derived from `seed` when it is set.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(m) = self.seed {
            c.cohort.seed = derive_seed(m, "run.cohort");
            c.noise.seed = derive_seed(m, "run.noise");
            c.split_seed = derive_seed(m, "run.split");
            c.deployment.seed = derive_seed(m, "run.deployment");
            c.evaluation.noise.seed = c.noise.seed;
            c.evaluation.split_seed = c.split_seed;
            c.evaluation.probe.seed = derive_seed(m, "run.probe");
        }
        c
    }

    pub fn priors(&self) -> Priors {
        Priors::default().with_per_sample_sd(self.per_sample_sd)
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        self.noise.validate()?;
        self.deployment.validate()?;
        self.evaluation.validate()?;
        self.priors().validate()?;
        let s = &self.splits;
        if !(0.0 < s.train_frac && s.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!("splits.train_frac must be in (0, 1), got {}", s.train_frac)));
        }
        if !(0.0..1.0).contains(&s.dropout_p) {
            return Err(Error::InvalidConfig(format!("splits.dropout_p must be in [0, 1), got {}", s.dropout_p)));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        config_digest(&self.resolved())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub kind: SplitKind,
    pub file: String,
    pub n_train_users: usize,
    pub n_test_users: usize,
    pub n_dropped_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub digest: String,
    pub n_users: u32,
    pub horizon_days: u32,
    pub videos_per_day: u32,
    pub mode: String,
    pub per_sample_sd: f64,
    pub transitions: TransitionPriors,
    pub interaction_records: usize,
    pub hidden_label_rows: usize,
    pub splits: Vec<SplitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub digest: String,
    pub sessions: u32,
    pub questions: usize,
    pub sessions_per_profile: u32,
    pub overlap_noise: f64,
    pub flipped_answers: usize,
}

/// What each generating stage wrote into a run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub cohort: Option<CohortSummary>,
    pub deployment: Option<DeploymentSummary>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        crate::io::write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }
}
