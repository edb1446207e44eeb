use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthRule;
use crate::error::{MarkovError, Result};
use crate::models::{ModelSpec, SimConfig};
use crate::stats::statistics::StatisticKind;
use crate::stats::weights::{WeightKind, WeightSpec};

/// How bootstrap replicates turn into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// `bootstrap_b` replicates per Monte Carlo path, p-value per path.
    #[default]
    PerReplicate,
    /// `bootstrap_b` replicates per path, pooled across all paths into one
    /// null distribution.
    Pooled,
}

/// A Monte Carlo experiment. Field names are the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub sim: SimConfig,
    pub statistic: StatisticKind,
    pub bandwidth: BandwidthRule,
    /// Trimming and taper; the kind always follows `statistic`.
    pub weights: WeightSpec,
    pub mc_reps: usize,
    pub bootstrap_b: usize,
    pub bootstrap_mode: BootstrapMode,
    pub alpha_levels: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSpec::ou(),
            sim: SimConfig::default(),
            statistic: StatisticKind::T1Star,
            bandwidth: BandwidthRule::default(),
            weights: WeightSpec::new(WeightKind::RatioWeight),
            mc_reps: 200,
            bootstrap_b: 99,
            bootstrap_mode: BootstrapMode::PerReplicate,
            alpha_levels: vec![0.05, 0.01],
            theta_grid: vec![0.0],
            output_dir: PathBuf::from("out"),
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the line and column of malformed input.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            MarkovError::InvalidInput(format!("config line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// The full-size protocol: `n = 2400`, 1000 paths, three bootstrap
    /// replicates per path pooled into one null distribution.
    pub fn paper_scale(self) -> Self {
        ExperimentConfig {
            sim: SimConfig { n_obs: 2400, ..self.sim },
            mc_reps: 1000,
            bootstrap_b: 3,
            bootstrap_mode: BootstrapMode::Pooled,
            ..self
        }
    }

    /// Weight spec with the kind the statistic needs.
    pub fn weight_spec(&self) -> WeightSpec {
        WeightSpec {
            kind: self.statistic.weight_kind(),
            ..self.weights
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MarkovError::InvalidInput(m));
        if self.mc_reps < 1 {
            return bad("mc_reps must be at least 1".into());
        }
        if self.bootstrap_b < 1 {
            return bad("bootstrap_b must be at least 1".into());
        }
        if let Some(a) = self.alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha_levels must lie in (0, 1), got {a}"));
        }
        if let Some(t) = self.theta_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("theta_grid must lie in [0, 1], got {t}"));
        }
        self.model.validate()?;
        self.sim.validate()?;
        self.weight_spec().validate()
    }
}
