//! Residual bootstrap under a least-squares OU fit.
//!
//! The path is fitted as an AR(1), pseudo-paths are rebuilt from the fitted
//! recursion with innovations resampled from the recentred residuals, and the
//! statistic is recomputed on each pseudo-path with the original bandwidths.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};
use crate::estimators::{Bandwidths, TransitionEstimator, TripleSample};
use crate::kernels::KernelSpec;
use crate::models::Path;
use crate::rng::{derive_seed, stream_rng};
use crate::stats::statistics::{statistic_value, StatisticKind};
use crate::stats::weights::{WeightFunction, WeightSpec};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuFit {
    pub kappa_hat: f64,
    pub alpha_hat: f64,
    pub sigma_hat: f64,
    /// AR(1) slope `e^{-κ̂Δ}`.
    pub rho_hat: f64,
    /// AR(1) intercept.
    pub intercept: f64,
    pub delta: f64,
    /// Innovations, recentred to mean zero.
    pub residuals: Vec<f64>,
    /// Source values, for drawing a starting point.
    pub marginal: Vec<f64>,
}

/// Ordinary least squares of `X_{i+1}` on `X_i`.
pub fn fit_ou_ls(path: &Path) -> Result<OuFit> {
    let v = &path.values;
    if v.len() < 30 {
        return Err(MarkovError::InvalidInput(format!("OU fit needs at least 30 values, got {}", v.len())));
    }
    let m = (v.len() - 1) as f64;
    let (xs, ys) = (&v[..v.len() - 1], &v[1..]);
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(MarkovError::ZeroSpread);
    }
    let rho = sxy / sxx;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MarkovError::NonstationaryFit { rho });
    }
    let c = my - rho * mx;
    let mut resid: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - c - rho * x).collect();
    let rm = resid.iter().sum::<f64>() / m;
    resid.iter_mut().for_each(|e| *e -= rm);
    let var = resid.iter().map(|e| e * e).sum::<f64>() / (m - 1.0);
    let kappa = -rho.ln() / path.delta;
    Ok(OuFit {
        kappa_hat: kappa,
        alpha_hat: c / (1.0 - rho),
        sigma_hat: (var * 2.0 * kappa / (1.0 - rho * rho)).sqrt(),
        rho_hat: rho,
        intercept: c,
        delta: path.delta,
        residuals: resid,
        marginal: v.clone(),
    })
}

/// Rebuilds a pseudo-path of `n_obs + 2` values from the fitted recursion.
pub fn resample_path(fit: &OuFit, n_obs: usize, seed: u64) -> Path {
    let mut rng = stream_rng(seed, 0, 0);
    let mut x = fit.marginal[rng.random_range(0..fit.marginal.len())];
    let mut values = Vec::with_capacity(n_obs + 2);
    values.push(x);
    let k = fit.residuals.len();
    for _ in 1..n_obs + 2 {
        let e = if k == 0 { 0.0 } else { fit.residuals[rng.random_range(0..k)] };
        x = fit.intercept + fit.rho_hat * x + e;
        values.push(x);
    }
    Path {
        values,
        delta: fit.delta,
        model: None,
        seed: Some(seed),
    }
}

/// Bootstrap replicates of a statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub kind: StatisticKind,
    /// Successful replicate values, ordered by replicate id.
    pub values: Vec<f64>,
    pub failures: usize,
    /// The bandwidths every replicate used.
    pub bandwidths: Bandwidths,
}

impl BootstrapDistribution {
    /// CSV with header `replicate,statistic`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,statistic\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }
}

/// Computes `kind` on a path with fixed bandwidths and a freshly fitted weight.
pub fn statistic_on_path(path: &Path, kind: StatisticKind, bw: Bandwidths, weight: &WeightSpec) -> Result<f64> {
    let sample = TripleSample::from_path(&path.values, path.delta)?;
    let spec = WeightSpec {
        kind: kind.weight_kind(),
        ..*weight
    };
    let w = WeightFunction::from_sample(&spec, &sample)?;
    let est = TransitionEstimator::new(sample, bw, KernelSpec::default(), KernelSpec::default())?;
    Ok(statistic_value(&est, kind, &w)?.value)
}

/// `B` bootstrap replicates from an existing fit.
pub fn bootstrap_from_fit(
    fit: &OuFit,
    n_obs: usize,
    kind: StatisticKind,
    bw: Bandwidths,
    weight: &WeightSpec,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapDistribution> {
    if replicates == 0 {
        return Err(MarkovError::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    let results: Vec<Result<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let p = resample_path(fit, n_obs, derive_seed(seed, &[b]));
            statistic_on_path(&p, kind, bw, weight)
        })
        .collect();
    let mut values = Vec::with_capacity(replicates);
    let mut last = None;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => last = Some(e),
        }
    }
    let failures = replicates - values.len();
    if failures as f64 > MAX_FAILURE_FRACTION * replicates as f64 {
        return Err(MarkovError::ReplicateFailures {
            failed: failures,
            total: replicates,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok(BootstrapDistribution {
        kind,
        values,
        failures,
        bandwidths: bw,
    })
}

/// Fits the OU null to `path` and returns `B` bootstrap replicates of `kind`,
/// each computed with the bandwidths `bw` of the original sample.
pub fn bootstrap_null(
    path: &Path,
    kind: StatisticKind,
    bw: Bandwidths,
    weight: &WeightSpec,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapDistribution> {
    let fit = fit_ou_ls(path)?;
    bootstrap_from_fit(&fit, path.len() - 2, kind, bw, weight, replicates, seed)
}
