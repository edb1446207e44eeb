use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{select, BandwidthRule, Target};
use crate::bootstrap::{bootstrap_from_fit, bootstrap_null, fit_ou_ls, statistic_on_path};
use crate::descriptive::{ks_distance, robust_spread};
use crate::error::{MarkovError, Result};
use crate::estimators::{Bandwidths, TripleSample};
use crate::models::{simulate, JumpType, ModelSpec, ModelVariant, Path, SimConfig};
use crate::rng::derive_seed;
use crate::estimators::TransitionEstimator;
use crate::stats::report::{bootstrap_pvalue, pvalues, run_test, TestReport};
use crate::stats::statistics::StatisticKind;
use crate::stats::weights::{WeightFunction, WeightSpec};

use super::config::{BootstrapMode, ExperimentConfig};

/// Largest tolerated fraction of failed Monte Carlo paths.
pub const MAX_REP_FAILURE_FRACTION: f64 = 0.05;

const LABEL_SIM: u64 = 1;
const LABEL_BOOT: u64 = 2;

/// Bandwidth target for a statistic.
pub fn target_for(kind: StatisticKind) -> Target {
    match kind {
        StatisticKind::T2 => Target::T2,
        _ => Target::T1Family,
    }
}

/// Tests one observed series: bandwidths from `rule`, plug-in calibration
/// and, when `replicates > 0`, a residual-bootstrap p-value.
pub fn test_series(
    path: &Path,
    kind: StatisticKind,
    rule: &BandwidthRule,
    weight: &WeightSpec,
    replicates: usize,
    seed: u64,
) -> Result<TestReport> {
    let sample = TripleSample::from_path(&path.values, path.delta)?;
    let bw = select(rule, &sample, target_for(kind))?;
    let spec = WeightSpec {
        kind: kind.weight_kind(),
        ..*weight
    };
    let w = WeightFunction::from_sample(&spec, &sample)?;
    let est = TransitionEstimator::with_defaults(sample, bw)?;
    let report = run_test(&est, kind, &w)?;
    if replicates == 0 {
        return Ok(report);
    }
    let boot = bootstrap_null(path, kind, bw, &spec, replicates, seed)?;
    Ok(pvalues(report, None, Some(&boot.values)))
}

/// One Monte Carlo path: its statistic and bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub statistic: f64,
    pub bootstrap: Vec<f64>,
    pub bandwidths: Bandwidths,
}

/// Simulates path `rep` and computes the statistic and `B` replicates.
///
/// Path seeds depend on `(master_seed, rep)` only, so every θ in a grid
/// sees the same underlying noise.
pub fn run_rep(cfg: &ExperimentConfig, model: &ModelSpec, n_obs: usize, rep: u64) -> Result<RepOutcome> {
    let sim = SimConfig {
        n_obs,
        seed: derive_seed(cfg.master_seed, &[LABEL_SIM, rep]),
        ..cfg.sim
    };
    let path = simulate(model, &sim)?;
    let sample = TripleSample::from_path(&path.values, path.delta)?;
    let kind = cfg.statistic;
    let bw = select(&cfg.bandwidth, &sample, target_for(kind))?;
    let spec = cfg.weight_spec();
    let statistic = statistic_on_path(&path, kind, bw, &spec)?;
    let fit = fit_ou_ls(&path)?;
    let boot = bootstrap_from_fit(
        &fit,
        n_obs,
        kind,
        bw,
        &spec,
        cfg.bootstrap_b,
        derive_seed(cfg.master_seed, &[LABEL_BOOT, rep]),
    )?;
    Ok(RepOutcome {
        statistic,
        bootstrap: boot.values,
        bandwidths: bw,
    })
}

/// All Monte Carlo paths at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub theta: f64,
    pub n_obs: usize,
    /// Statistic per successful path, in path order.
    pub statistics: Vec<f64>,
    /// Bootstrap p-value per successful path.
    pub pvalues: Vec<f64>,
    /// All bootstrap replicates, in path order.
    pub pooled: Vec<f64>,
    pub failures: usize,
}

impl CellResult {
    pub fn rejections(&self, alpha: f64) -> usize {
        self.pvalues.iter().filter(|&&p| p <= alpha).count()
    }
}

/// Runs `mc_reps` paths of `model` with `n_obs` observations.
pub fn run_cell(cfg: &ExperimentConfig, model: &ModelSpec, n_obs: usize) -> Result<CellResult> {
    cfg.validate()?;
    model.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = (0..cfg.mc_reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(cfg, model, n_obs, rep))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut last = None;
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => last = Some(e),
        }
    }
    let failures = cfg.mc_reps - ok.len();
    if failures as f64 > MAX_REP_FAILURE_FRACTION * cfg.mc_reps as f64 {
        return Err(MarkovError::ReplicateFailures {
            failed: failures,
            total: cfg.mc_reps,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    let kind = cfg.statistic;
    let pooled: Vec<f64> = ok.iter().flat_map(|o| o.bootstrap.iter().copied()).collect();
    let oriented_pool: Vec<f64> = pooled.iter().map(|&v| kind.discrepancy(v)).collect();
    let pvalues = ok
        .iter()
        .map(|o| {
            let t = kind.discrepancy(o.statistic);
            match cfg.bootstrap_mode {
                BootstrapMode::PerReplicate => {
                    let b: Vec<f64> = o.bootstrap.iter().map(|&v| kind.discrepancy(v)).collect();
                    bootstrap_pvalue(t, &b)
                }
                BootstrapMode::Pooled => bootstrap_pvalue(t, &oriented_pool),
            }
        })
        .collect();
    Ok(CellResult {
        theta: model.theta,
        n_obs,
        statistics: ok.iter().map(|o| o.statistic).collect(),
        pvalues,
        pooled,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub family: String,
    pub s_or_jumptype: String,
    pub alpha: f64,
    pub theta: f64,
    pub rejections: usize,
    pub reps: usize,
    pub rate: f64,
    pub se: f64,
}

/// Rejection rates keyed by family, scale or jump type, level and θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,s_or_jumptype,alpha,theta,rejections,reps,rate,se\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.family, r.s_or_jumptype, r.alpha, r.theta, r.rejections, r.reps, r.rate, r.se
            );
        }
        out
    }

    /// The row at `(alpha, theta)`, if present.
    pub fn get(&self, alpha: f64, theta: f64) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.theta == theta)
    }
}

fn scale_label(m: &ModelSpec) -> String {
    match m.variant {
        ModelVariant::OuNull => "-".into(),
        ModelVariant::H1StochasticLevel | ModelVariant::H2StochasticVol => format!("{}", m.s_scale),
        ModelVariant::H3Jumps => match m.jump_type {
            JumpType::GaussianIid => JumpType::GaussianIid.label().into(),
            JumpType::CirDriven => JumpType::CirDriven.label().into(),
        },
    }
}

fn rows_for(cfg: &ExperimentConfig, model: &ModelSpec, cell: &CellResult) -> Vec<PowerRow> {
    let reps = cell.pvalues.len();
    cfg.alpha_levels
        .iter()
        .map(|&alpha| {
            let rejections = cell.rejections(alpha);
            let rate = if reps == 0 { 0.0 } else { rejections as f64 / reps as f64 };
            PowerRow {
                family: model.family_label().into(),
                s_or_jumptype: scale_label(model),
                alpha,
                theta: cell.theta,
                rejections,
                reps,
                rate,
                se: (rate * (1.0 - rate) / reps.max(1) as f64).sqrt(),
            }
        })
        .collect()
}

/// Rejection rates of the configured model at `θ = 0`.
pub fn run_size(cfg: &ExperimentConfig) -> Result<PowerTable> {
    let model = cfg.model.with_theta(0.0);
    let cell = run_cell(cfg, &model, cfg.sim.n_obs)?;
    Ok(PowerTable {
        rows: rows_for(cfg, &model, &cell),
    })
}

/// Rejection rates over `theta_grid` × `alpha_levels`.
pub fn run_power(cfg: &ExperimentConfig) -> Result<PowerTable> {
    let mut table = PowerTable::default();
    for &theta in &cfg.theta_grid {
        let model = cfg.model.with_theta(theta);
        let cell = run_cell(cfg, &model, cfg.sim.n_obs)?;
        table.rows.extend(rows_for(cfg, &model, &cell));
    }
    Ok(table)
}

/// Monte Carlo versus pooled-bootstrap distributions of the statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub n_obs: usize,
    pub grid: Vec<f64>,
    pub true_density: Vec<f64>,
    pub bootstrap_density: Vec<f64>,
    /// Two-sample Kolmogorov distance between the raw samples.
    pub ks_distance: f64,
    pub statistics: Vec<f64>,
    pub pooled: Vec<f64>,
}

impl DensityComparison {
    /// CSV with header `x,true_density,bootstrap_density`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,true_density,bootstrap_density\n");
        for ((x, a), b) in self.grid.iter().zip(&self.true_density).zip(&self.bootstrap_density) {
            let _ = writeln!(out, "{x},{a},{b}");
        }
        out
    }

    /// CSV with header `source,index,statistic`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("source,index,statistic\n");
        for (i, v) in self.statistics.iter().enumerate() {
            let _ = writeln!(out, "monte_carlo,{i},{v}");
        }
        for (i, v) in self.pooled.iter().enumerate() {
            let _ = writeln!(out, "bootstrap,{i},{v}");
        }
        out
    }
}

/// Gaussian kernel density estimate with a normal-reference bandwidth.
pub fn gaussian_kde(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sample.len() as f64;
    let s = robust_spread(sample);
    let h = if s > 0.0 { 0.9 * s * n.powf(-0.2) } else { 1e-12 };
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| sample.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

/// Pairs a Monte Carlo statistic sample with a pooled bootstrap sample.
pub fn compare_distributions(n_obs: usize, statistics: Vec<f64>, pooled: Vec<f64>) -> DensityComparison {
    let lo = statistics.iter().chain(&pooled).copied().fold(f64::INFINITY, f64::min);
    let hi = statistics.iter().chain(&pooled).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-12);
    let points = 201;
    let grid: Vec<f64> = (0..points)
        .map(|k| lo - pad + (hi - lo + 2.0 * pad) * k as f64 / (points - 1) as f64)
        .collect();
    DensityComparison {
        n_obs,
        true_density: gaussian_kde(&statistics, &grid),
        bootstrap_density: gaussian_kde(&pooled, &grid),
        ks_distance: ks_distance(&statistics, &pooled),
        grid,
        statistics,
        pooled,
    }
}

/// Monte Carlo distribution of the statistic under the configured model
/// against the pool of `bootstrap_b` replicates per path.
pub fn run_bootstrap_density(cfg: &ExperimentConfig) -> Result<DensityComparison> {
    if cfg.mc_reps < 100 {
        return Err(MarkovError::InvalidInput(format!(
            "bootstrap density comparison needs mc_reps >= 100, got {}",
            cfg.mc_reps
        )));
    }
    let cell = run_cell(cfg, &cfg.model, cfg.sim.n_obs)?;
    Ok(compare_distributions(cfg.sim.n_obs, cell.statistics, cell.pooled))
}
