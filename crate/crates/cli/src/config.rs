//! Pipeline run configuration (JSON file behind `pipeline --config`).

use crate::csvio::SchemaConfig;
use anyhow::{bail, Context, Result};
use itr_core::{CvConfig, ForestParams, LearnerConfig, RistParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cohort CSV path.
    pub input: PathBuf,
    /// Optional schema-config JSON path.
    pub schema: Option<PathBuf>,
    /// Restriction horizons in days (one report set per horizon).
    pub horizons: Vec<f64>,
    /// Learners to compare against the zero-order rule.
    pub learners: Vec<String>,
    /// Cross-validation folds.
    pub k: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Hajek normalization of the value estimator.
    pub normalized: bool,
    /// Propensity clipping bound.
    pub clip: f64,
    /// Run variable screening before fitting.
    pub select_variables: bool,
    /// Covariates kept by screening.
    pub top_m: usize,
    pub importance_folds: usize,
    /// Label for the reward column of the reports.
    pub reward_label: String,
    pub forest: ForestParams,
    pub rist: RistOverrides,
    pub learner: LearnerConfig,
}

/// RIST settings without the horizon (taken from each report's horizon).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RistOverrides {
    pub n_trees: usize,
    pub n_imputation_cycles: usize,
    pub min_events_per_leaf: usize,
    pub n_random_splits: usize,
}

impl Default for RistOverrides {
    fn default() -> Self {
        let base = RistParams::new(1.0);
        RistOverrides {
            n_trees: base.n_trees,
            n_imputation_cycles: base.n_imputation_cycles,
            min_events_per_leaf: base.min_events_per_leaf,
            n_random_splits: base.n_random_splits,
        }
    }
}

impl RistOverrides {
    pub fn with_horizon(&self, horizon: f64) -> RistParams {
        RistParams {
            n_trees: self.n_trees,
            n_imputation_cycles: self.n_imputation_cycles,
            min_events_per_leaf: self.min_events_per_leaf,
            n_random_splits: self.n_random_splits,
            horizon,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            schema: None,
            horizons: vec![30.0, 180.0, 365.0],
            learners: vec!["rwl".into(), "rf".into(), "earl".into()],
            k: 10,
            seed: 20240101,
            out_dir: PathBuf::from("itr-out"),
            normalized: true,
            clip: 0.01,
            select_variables: true,
            top_m: 10,
            importance_folds: 10,
            reward_label: "days_event_free".into(),
            forest: ForestParams::default(),
            rist: RistOverrides::default(),
            learner: LearnerConfig::default(),
        }
    }
}

pub const KNOWN_LEARNERS: [&str; 3] = ["rwl", "rf", "earl"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// All validation happens before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            bail!("argument error: config has no input path");
        }
        if !self.input.exists() {
            bail!("argument error: input file {} does not exist", self.input.display());
        }
        if let Some(schema) = &self.schema {
            if !schema.exists() {
                bail!("argument error: schema file {} does not exist", schema.display());
            }
        }
        if self.k < 2 {
            bail!("argument error: k must be >= 2, got {}", self.k);
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|h| !(*h > 0.0)) {
            bail!("argument error: horizons must be positive and non-empty");
        }
        if self.learners.is_empty() {
            bail!("argument error: no learners requested");
        }
        for learner in &self.learners {
            if !KNOWN_LEARNERS.contains(&learner.as_str()) && learner != "zero" {
                bail!(
                    "argument error: unknown learner `{learner}` (expected zero, rwl, rf, or earl)"
                );
            }
        }
        if self.top_m == 0 {
            bail!("argument error: top_m must be >= 1");
        }
        if !(0.0..0.5).contains(&self.clip) {
            bail!("argument error: clip must be in [0, 0.5)");
        }
        Ok(())
    }

    pub fn load_schema(&self) -> Result<SchemaConfig> {
        match &self.schema {
            Some(path) => SchemaConfig::load(path),
            None => Ok(SchemaConfig::default()),
        }
    }

    pub fn cv_config(&self, horizon: f64) -> CvConfig {
        let mut cfg = CvConfig::new(horizon, self.seed);
        cfg.k = self.k;
        cfg.normalized = self.normalized;
        cfg.clip = self.clip;
        cfg.propensity_forest = self.forest.clone();
        cfg.policy_forest = self.forest.clone();
        cfg.rist = self.rist.with_horizon(horizon);
        cfg.learner = self.learner.clone();
        cfg.learner.outcome_forest = self.forest.clone();
        cfg
    }
}
