//! Default bandwidth selection.
//!
//! The empirical rule is a robust-spread normal-reference rule
//! `h = c · min(sd, IQR / 1.349) · n^{-e}` with rate exponent `e = 1/5` for
//! the density statistics and `e = 2/9` for the distribution statistic. The
//! conditioning bandwidth uses the spread of `X`, the response bandwidth the
//! spread of `Z`; `b1 = h3 = h1` and `b2 = h2`.

use serde::{Deserialize, Serialize};

use crate::descriptive::robust_spread;
use crate::error::{MarkovError, Result};
use crate::estimators::{Bandwidths, TripleSample};
use crate::kernels::{weights_on_window, KernelSpec, SortedSample};

/// Rate exponent for `T0`, `T1` and `T1*`.
pub const DENSITY_EXPONENT: f64 = 1.0 / 5.0;
/// Rate exponent for `T2`.
pub const DISTRIBUTION_EXPONENT: f64 = 2.0 / 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    #[default]
    EmpiricalRule,
    Fixed,
    Cv,
}

/// Which statistic the bandwidths are for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    T1Family,
    T2,
}

impl Target {
    pub fn exponent(self) -> f64 {
        match self {
            Target::T1Family => DENSITY_EXPONENT,
            Target::T2 => DISTRIBUTION_EXPONENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandwidthRule {
    pub kind: RuleKind,
    pub c_scale: f64,
    /// Overrides the target's rate exponent.
    pub exponent: Option<f64>,
    /// Bandwidths returned by [`RuleKind::Fixed`].
    pub fixed: Option<Bandwidths>,
    /// Multipliers of `c_scale` searched by [`RuleKind::Cv`].
    pub cv_grid: Vec<f64>,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule {
            kind: RuleKind::EmpiricalRule,
            c_scale: 1.0,
            exponent: None,
            fixed: None,
            cv_grid: vec![0.5, 0.625, 0.75, 0.875, 1.0, 1.25, 1.5, 1.75, 2.0],
        }
    }
}

impl BandwidthRule {
    pub fn empirical(c_scale: f64) -> Self {
        BandwidthRule {
            c_scale,
            ..Default::default()
        }
    }

    pub fn fixed(bw: Bandwidths) -> Self {
        BandwidthRule {
            kind: RuleKind::Fixed,
            fixed: Some(bw),
            ..Default::default()
        }
    }
}

/// Bandwidths for `sample` under `rule`.
pub fn select(rule: &BandwidthRule, sample: &TripleSample, target: Target) -> Result<Bandwidths> {
    if rule.kind == RuleKind::Fixed {
        let bw = rule.fixed.ok_or_else(|| {
            MarkovError::InvalidInput("fixed bandwidth rule without bandwidths".into())
        })?;
        bw.validate()?;
        return Ok(bw);
    }
    if sample.n() < 30 {
        return Err(MarkovError::InvalidInput(format!(
            "bandwidth selection needs n >= 30, got {}",
            sample.n()
        )));
    }
    if !(rule.c_scale > 0.0 && rule.c_scale.is_finite()) {
        return Err(MarkovError::InvalidInput(format!(
            "c_scale must be positive, got {}",
            rule.c_scale
        )));
    }
    let base = empirical(rule.c_scale, rule.exponent.unwrap_or(target.exponent()), sample)?;
    match rule.kind {
        RuleKind::EmpiricalRule => Ok(base),
        RuleKind::Cv => cross_validate(sample, &base, &rule.cv_grid),
        RuleKind::Fixed => unreachable!(),
    }
}

fn empirical(c: f64, exponent: f64, sample: &TripleSample) -> Result<Bandwidths> {
    let sx = robust_spread(&sample.x);
    let sz = robust_spread(&sample.z);
    if !(sx > 0.0 && sz > 0.0) {
        return Err(MarkovError::ZeroSpread);
    }
    let rate = (sample.n() as f64).powf(-exponent);
    Ok(Bandwidths::tied(c * sx * rate, c * sz * rate))
}

/// Picks the multiplier of `base` maximising the leave-one-out
/// log-likelihood of the direct 2Δ density at the sample pairs.
fn cross_validate(sample: &TripleSample, base: &Bandwidths, grid: &[f64]) -> Result<Bandwidths> {
    if grid.is_empty() {
        return Err(MarkovError::InvalidInput("empty cross-validation grid".into()));
    }
    let k = KernelSpec::default();
    let xs = SortedSample::new(&sample.x);
    let n = sample.n();
    let floor = 1e-300_f64;
    let mut best: Option<(f64, Bandwidths)> = None;
    let mut vals = Vec::new();
    let mut weights = Vec::new();
    let mut idx = Vec::new();
    for &m in grid {
        let bw = base.scaled(m);
        let mut score = 0.0;
        for i in 0..n {
            let win = xs.window(sample.x[i], bw.h1);
            vals.clear();
            idx.clear();
            for (&v, &j) in xs.values()[win.clone()].iter().zip(&xs.order()[win]) {
                if j != i {
                    vals.push(v);
                    idx.push(j);
                }
            }
            let p = match weights_on_window(&vals, sample.x[i], bw.h1, &k, n - 1, &mut weights) {
                Ok(()) => {
                    let acc: f64 = idx
                        .iter()
                        .zip(&weights)
                        .map(|(&j, &a)| a * k.scaled(sample.z[j] - sample.z[i], bw.h2))
                        .sum();
                    acc / (n - 1) as f64
                }
                Err(_) => 0.0,
            };
            score += p.max(floor).ln();
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, bw));
        }
    }
    Ok(best.expect("nonempty grid").1)
}
