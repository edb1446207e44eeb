//! Smooth trimming weights.
//!
//! A weight is a product of one-dimensional tapered boxes over the marginal
//! `[q_τ, q_{1-τ}]` quantile range. Inside the box the weight rises from 0 to
//! 1 along a quintic smoothstep, which has vanishing first and second
//! derivatives at both ends, so the weight is twice continuously
//! differentiable with compact support.

use serde::{Deserialize, Serialize};

use crate::descriptive::{quantile_sorted, sorted_copy};
use crate::error::{MarkovError, Result};
use crate::estimators::TripleSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `w(x, z)` for `T1`.
    DensityWeight,
    /// `w*(x, z)` for `T0` and `T1*`.
    RatioWeight,
    /// `ω(x)` for `T2`.
    XOnlyWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub trim_quantile: f64,
    /// Total taper width as a fraction of the trimmed range (half on each side).
    pub smoothness: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::new(WeightKind::RatioWeight)
    }
}

impl WeightSpec {
    pub fn new(kind: WeightKind) -> Self {
        WeightSpec {
            kind,
            trim_quantile: 0.05,
            smoothness: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trim_quantile > 0.0 && self.trim_quantile < 0.5) {
            return Err(MarkovError::InvalidInput(format!(
                "trim_quantile must lie in (0, 0.5), got {}",
                self.trim_quantile
            )));
        }
        if !(0.0..=1.0).contains(&self.smoothness) {
            return Err(MarkovError::InvalidInput(format!(
                "smoothness must lie in [0, 1], got {}",
                self.smoothness
            )));
        }
        Ok(())
    }
}

/// `6t⁵ - 15t⁴ + 10t³` clamped to `[0, 1]`.
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// A one-dimensional box `[lo, hi]` with smooth shoulders of width `taper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperedBox {
    pub lo: f64,
    pub hi: f64,
    pub taper: f64,
}

impl TaperedBox {
    pub fn eval(&self, v: f64) -> f64 {
        if !(v > self.lo && v < self.hi) {
            return 0.0;
        }
        if self.taper <= 0.0 {
            return 1.0;
        }
        smoothstep((v - self.lo) / self.taper) * smoothstep((self.hi - v) / self.taper)
    }

    fn from_quantiles(values: &[f64], spec: &WeightSpec) -> Self {
        let s = sorted_copy(values);
        let lo = quantile_sorted(&s, spec.trim_quantile);
        let hi = quantile_sorted(&s, 1.0 - spec.trim_quantile);
        TaperedBox {
            lo,
            hi,
            taper: 0.5 * spec.smoothness * (hi - lo),
        }
    }
}

/// A weight function fitted to a particular sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub kind: WeightKind,
    pub x_box: TaperedBox,
    /// Absent for [`WeightKind::XOnlyWeight`].
    pub z_box: Option<TaperedBox>,
}

impl WeightFunction {
    pub fn from_sample(spec: &WeightSpec, sample: &TripleSample) -> Result<Self> {
        spec.validate()?;
        let x_box = TaperedBox::from_quantiles(&sample.x, spec);
        let z_box = match spec.kind {
            WeightKind::XOnlyWeight => None,
            _ => Some(TaperedBox::from_quantiles(&sample.z, spec)),
        };
        Ok(WeightFunction {
            kind: spec.kind,
            x_box,
            z_box,
        })
    }

    /// A weight that vanishes everywhere.
    pub fn zero(kind: WeightKind) -> Self {
        let empty = TaperedBox {
            lo: 0.0,
            hi: 0.0,
            taper: 0.0,
        };
        WeightFunction {
            kind,
            x_box: empty,
            z_box: (kind != WeightKind::XOnlyWeight).then_some(empty),
        }
    }

    pub fn eval(&self, x: f64, z: f64) -> f64 {
        let wx = self.x_box.eval(x);
        match (&self.z_box, wx) {
            (_, 0.0) => 0.0,
            (Some(zb), w) => w * zb.eval(z),
            (None, w) => w,
        }
    }

    /// Weights at the sample pairs `(X_i, Z_i)`.
    pub fn at_sample(&self, sample: &TripleSample) -> Vec<f64> {
        sample
            .x
            .iter()
            .zip(&sample.z)
            .map(|(&x, &z)| self.eval(x, z))
            .collect()
    }
}
