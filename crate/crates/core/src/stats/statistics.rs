//! The four discrepancy statistics between direct and composed estimates.

use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};
use crate::estimators::{Family, TransitionEstimator};

use super::weights::{WeightFunction, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// Weighted log-likelihood ratio `Σ log(r̂ / p̂) w*`.
    T0,
    /// `Σ (p̂ - r̂)² w`.
    T1,
    /// `Σ ((p̂ - r̂) / p̂)² w*`.
    T1Star,
    /// `Σ (P̂ - R̂)² ω(X_i)`.
    T2,
}

impl StatisticKind {
    pub fn weight_kind(self) -> WeightKind {
        match self {
            StatisticKind::T1 => WeightKind::DensityWeight,
            StatisticKind::T0 | StatisticKind::T1Star => WeightKind::RatioWeight,
            StatisticKind::T2 => WeightKind::XOnlyWeight,
        }
    }

    pub fn family(self) -> Family {
        match self {
            StatisticKind::T2 => Family::Distribution,
            _ => Family::Density,
        }
    }

    /// Orients a value so that larger means stronger evidence against the
    /// Markov hypothesis. `T0` is a log-likelihood ratio of the composed
    /// against the direct fit and falls under departures; the others grow.
    pub fn discrepancy(self, value: f64) -> f64 {
        match self {
            StatisticKind::T0 => -value,
            _ => value,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::T0 => "t0",
            StatisticKind::T1 => "t1",
            StatisticKind::T1Star => "t1_star",
            StatisticKind::T2 => "t2",
        }
    }
}

impl std::str::FromStr for StatisticKind {
    type Err = MarkovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t0" => Ok(StatisticKind::T0),
            "t1" => Ok(StatisticKind::T1),
            "t1_star" | "t1*" => Ok(StatisticKind::T1Star),
            "t2" => Ok(StatisticKind::T2),
            other => Err(MarkovError::InvalidInput(format!("unknown statistic `{other}`"))),
        }
    }
}

/// Largest fraction of weighted points `T0` may drop at the density floor.
pub const T0_MAX_DROP_FRACTION: f64 = 0.05;

/// Floor `1e-4 / range(Z)` for density denominators and logarithms.
pub fn density_floor(z_range: (f64, f64)) -> f64 {
    1e-4 / (z_range.1 - z_range.0)
}

/// A statistic value with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub kind: StatisticKind,
    pub value: f64,
    /// Sample points with positive weight.
    pub n_used: usize,
    /// Points where `p̂` fell below the density floor (floored for `T1*`).
    pub floor_breaches: usize,
    /// Points dropped from `T0` because `p̂` or `r̂` fell below the floor.
    pub dropped: usize,
}

/// Combines direct and composed estimates at the weighted points.
///
/// `direct` and `composed` are `p̂`, `r̂` for the density statistics and `P̂`,
/// `R̂` for `T2`.
pub fn statistic_from_estimates(
    kind: StatisticKind,
    direct: &[f64],
    composed: &[f64],
    weights: &[f64],
    floor: f64,
) -> Result<StatisticValue> {
    let mut value = 0.0;
    let mut breaches = 0;
    let mut dropped = 0;
    for ((&p, &r), &w) in direct.iter().zip(composed).zip(weights) {
        match kind {
            StatisticKind::T1 | StatisticKind::T2 => value += (p - r).powi(2) * w,
            StatisticKind::T1Star => {
                let denom = if p < floor {
                    breaches += 1;
                    floor
                } else {
                    p
                };
                value += ((p - r) / denom).powi(2) * w;
            }
            StatisticKind::T0 => {
                if p < floor || r < floor {
                    if p < floor {
                        breaches += 1;
                    }
                    dropped += 1;
                } else {
                    value += (r / p).ln() * w;
                }
            }
        }
    }
    let n_used = weights.len();
    if kind == StatisticKind::T0 && dropped as f64 > T0_MAX_DROP_FRACTION * n_used as f64 {
        return Err(MarkovError::FloorBreach {
            dropped,
            total: n_used,
        });
    }
    Ok(StatisticValue {
        kind,
        value,
        n_used,
        floor_breaches: breaches,
        dropped,
    })
}

/// Evaluates `kind` on the estimator's own sample.
pub fn statistic_value(
    est: &TransitionEstimator,
    kind: StatisticKind,
    weight: &WeightFunction,
) -> Result<StatisticValue> {
    let sample = est.sample();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..sample.n() {
        let w = weight.eval(sample.x[i], sample.z[i]);
        if w > 0.0 {
            points.push(i);
            weights.push(w);
        }
    }
    let floor = density_floor(est.z_range());
    if points.is_empty() {
        return statistic_from_estimates(kind, &[], &[], &[], floor);
    }
    let ev = est.evaluate_at_sample(&points, kind.family())?;
    match kind {
        StatisticKind::T2 => {
            statistic_from_estimates(kind, &ev.cdf_direct, &ev.cdf_indirect, &weights, floor)
        }
        _ => statistic_from_estimates(kind, &ev.p_direct, &ev.r_indirect, &weights, floor),
    }
}
