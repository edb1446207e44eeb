//! Test reports and p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{MarkovError, Result};
use crate::estimators::{Bandwidths, TransitionEstimator, TripleSample};
use crate::kernels::{KernelNorms, KernelSpec};

use super::calibration::{
    calibrate_t1, calibrate_t1_star, calibrate_t2, estimate_plugin_quantities, weight_integrals, Calibration,
};
use super::statistics::{statistic_value, StatisticKind, StatisticValue};
use super::weights::{WeightFunction, WeightSpec};

/// Weighted points a report needs.
pub const MIN_WEIGHTED_POINTS: usize = 30;

/// Outcome of one Markov test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: StatisticKind,
    pub statistic: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub z_score: Option<f64>,
    pub p_normal: Option<f64>,
    pub r_scale: Option<f64>,
    pub dof: Option<f64>,
    pub p_chisq: Option<f64>,
    pub p_bootstrap: Option<f64>,
    pub bootstrap_replicates: usize,
    pub n_used: usize,
    pub floor_breaches: usize,
    pub dropped: usize,
    /// Set when the plug-in calibration could not be formed.
    pub calibration_failure: Option<String>,
    pub bandwidths: Bandwidths,
}

impl TestReport {
    /// A report with only the statistic filled in.
    pub fn from_value(v: &StatisticValue, bw: Bandwidths) -> Self {
        TestReport {
            kind: v.kind,
            statistic: v.value,
            mu: None,
            sigma: None,
            z_score: None,
            p_normal: None,
            r_scale: None,
            dof: None,
            p_chisq: None,
            p_bootstrap: None,
            bootstrap_replicates: 0,
            n_used: v.n_used,
            floor_breaches: v.floor_breaches,
            dropped: v.dropped,
            calibration_failure: None,
            bandwidths: bw,
        }
    }
}

/// `(1 + #{T_b ≥ T}) / (B + 1)`, on values already oriented so that large
/// is extreme.
pub fn bootstrap_pvalue(statistic: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&t| t >= statistic).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// Fills asymptotic and bootstrap p-values into `report`.
pub fn pvalues(mut report: TestReport, calibration: Option<&Calibration>, bootstrap: Option<&[f64]>) -> TestReport {
    if let Some(c) = calibration {
        let z = (report.statistic - c.mu) / c.sigma;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        report.mu = Some(c.mu);
        report.sigma = Some(c.sigma);
        report.z_score = Some(z);
        report.p_normal = Some(normal.sf(z));
        report.r_scale = Some(c.r_scale);
        report.dof = Some(c.dof);
        report.p_chisq = ChiSquared::new(c.dof).ok().map(|chi| chi.sf(c.r_scale * report.statistic));
    }
    if let Some(b) = bootstrap {
        if !b.is_empty() {
            let kind = report.kind;
            let oriented: Vec<f64> = b.iter().map(|&v| kind.discrepancy(v)).collect();
            report.p_bootstrap = Some(bootstrap_pvalue(kind.discrepancy(report.statistic), &oriented));
            report.bootstrap_replicates = b.len();
        }
    }
    report
}

/// Plug-in null calibration of `kind`, or `None` for `T0`.
pub fn plugin_calibration(
    est: &TransitionEstimator,
    kind: StatisticKind,
    weight: &WeightFunction,
) -> Result<Option<Calibration>> {
    let norms = KernelNorms::from_kernels(est.w_kernel(), est.k_kernel());
    let bw = est.bandwidths();
    match kind {
        StatisticKind::T0 => Ok(None),
        StatisticKind::T1Star => {
            let (a, b) = weight_integrals(weight)?;
            calibrate_t1_star(a, b, bw, &norms).map(Some)
        }
        StatisticKind::T1 => {
            let q = estimate_plugin_quantities(est, weight)?;
            calibrate_t1(&q, bw, &norms).map(Some)
        }
        StatisticKind::T2 => {
            let q = estimate_plugin_quantities(est, weight)?;
            let cross = est.w_kernel().cross_product(bw.h1, bw.h3);
            calibrate_t2(q.omega_x_integral, q.omega_x_sq, q.omega_v_integral, bw, &norms, cross).map(Some)
        }
    }
}

/// Computes `kind` with its plug-in calibration on an existing estimator.
pub fn run_test(est: &TransitionEstimator, kind: StatisticKind, weight: &WeightFunction) -> Result<TestReport> {
    if weight.kind != kind.weight_kind() {
        return Err(MarkovError::InvalidInput(format!(
            "{} needs a {:?} weight, got {:?}",
            kind.name(),
            kind.weight_kind(),
            weight.kind
        )));
    }
    let v = statistic_value(est, kind, weight)?;
    if v.n_used < MIN_WEIGHTED_POINTS {
        return Err(MarkovError::InsufficientSupport {
            count: v.n_used,
            required: MIN_WEIGHTED_POINTS,
        });
    }
    let report = TestReport::from_value(&v, *est.bandwidths());
    match plugin_calibration(est, kind, weight) {
        Ok(c) => Ok(pvalues(report, c.as_ref(), None)),
        Err(MarkovError::Calibration(msg)) => Ok(TestReport {
            calibration_failure: Some(msg),
            ..report
        }),
        Err(e) => Err(e),
    }
}

fn run_on_sample(sample: &TripleSample, bw: Bandwidths, spec: &WeightSpec, kind: StatisticKind) -> Result<TestReport> {
    let spec = WeightSpec {
        kind: kind.weight_kind(),
        ..*spec
    };
    let weight = WeightFunction::from_sample(&spec, sample)?;
    let est = TransitionEstimator::new(sample.clone(), bw, KernelSpec::default(), KernelSpec::default())?;
    run_test(&est, kind, &weight)
}

/// `T1 = Σ (p̂ - r̂)² w` with plug-in calibration.
pub fn t1(sample: &TripleSample, bw: Bandwidths, w: &WeightSpec) -> Result<TestReport> {
    run_on_sample(sample, bw, w, StatisticKind::T1)
}

/// `T1* = Σ ((p̂ - r̂) / p̂)² w*` with plug-in calibration.
pub fn t1_star(sample: &TripleSample, bw: Bandwidths, w_star: &WeightSpec) -> Result<TestReport> {
    run_on_sample(sample, bw, w_star, StatisticKind::T1Star)
}

/// `T2 = Σ (P̂ - R̂)² ω(X_i)` with plug-in calibration.
pub fn t2(sample: &TripleSample, bw: Bandwidths, omega: &WeightSpec) -> Result<TestReport> {
    run_on_sample(sample, bw, omega, StatisticKind::T2)
}

/// `T0 = Σ log(r̂ / p̂) w*`; bootstrap calibration only.
pub fn t0_glr(sample: &TripleSample, bw: Bandwidths, w_star: &WeightSpec) -> Result<TestReport> {
    run_on_sample(sample, bw, w_star, StatisticKind::T0)
}
