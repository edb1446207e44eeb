//! Direct and Chapman–Kolmogorov-composed transition estimators.
//!
//! From a single path `X_0, X_Δ, …` we form overlapping triples
//! `(X_i, Y_i, Z_i) = (X_{iΔ}, X_{(i+1)Δ}, X_{(i+2)Δ})`. The pairs `(Y_i, Z_i)`
//! estimate the Δ-transition, the pairs `(X_i, Z_i)` estimate the
//! 2Δ-transition directly, and regressing the Δ-estimates `p̂(z | Y_i)` on
//! `X_i` gives the composed 2Δ-transition that a Markov process must match.
//!
//! Point evaluators live on [`TransitionEstimator`]; the batched paths used by
//! the test statistics are in [`batch`].

pub mod batch;

use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};
use crate::kernels::{check_bandwidth, effective_weights, EffectiveWeights, KernelSpec, SortedSample};

pub use batch::{Family, GridEvaluation, SampleEvaluation};

/// Overlapping `(X_i, Y_i, Z_i)` triples cut from one sampled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub delta: f64,
}

/// Smallest number of triples an estimator will accept.
pub const MIN_TRIPLES: usize = 10;

impl TripleSample {
    /// Builds `n = values.len() - 2` triples.
    pub fn from_path(values: &[f64], delta: f64) -> Result<Self> {
        if values.len() < MIN_TRIPLES + 2 {
            return Err(MarkovError::InvalidInput(format!(
                "path of length {} gives fewer than {MIN_TRIPLES} triples",
                values.len()
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(MarkovError::InvalidInput(format!("delta must be positive, got {delta}")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(MarkovError::InvalidInput(format!("non-finite path value {bad}")));
        }
        let n = values.len() - 2;
        Ok(TripleSample {
            x: values[..n].to_vec(),
            y: values[1..n + 1].to_vec(),
            z: values[2..].to_vec(),
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The path these triples were cut from.
    pub fn path(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        out.push(self.y[self.n() - 1]);
        out.push(self.z[self.n() - 1]);
        out
    }

    /// Triples of the time-reversed path `X_{n+1-i}`.
    pub fn reversed(&self) -> TripleSample {
        let rev = |v: &Vec<f64>| v.iter().rev().copied().collect::<Vec<_>>();
        TripleSample {
            x: rev(&self.z),
            y: rev(&self.y),
            z: rev(&self.x),
            delta: self.delta,
        }
    }
}

/// The five smoothing parameters.
///
/// `b1`, `b2` smooth the Δ-transition in the conditioning and response
/// directions, `h1`, `h2` do the same for the direct 2Δ estimator, and `h3` is
/// the bandwidth of the composing regression on `X_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub b1: f64,
    pub b2: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

impl Bandwidths {
    /// Conditioning bandwidth `h` and response bandwidth `g`, tied as
    /// `b1 = h3 = h1 = h`, `b2 = h2 = g`.
    pub fn tied(h: f64, g: f64) -> Self {
        Bandwidths {
            b1: h,
            b2: g,
            h1: h,
            h2: g,
            h3: h,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.b1, self.b2, self.h1, self.h2, self.h3]
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.as_array() {
            check_bandwidth(b)?;
        }
        Ok(())
    }

    /// Largest over smallest bandwidth.
    pub fn order_ratio(&self) -> f64 {
        let a = self.as_array();
        let max = a.iter().copied().fold(f64::MIN, f64::max);
        let min = a.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    /// True when the bandwidths are not of the same order (ratio above 10).
    pub fn same_order_warning(&self) -> bool {
        self.order_ratio() > 10.0
    }

    pub fn scaled(&self, a: f64) -> Self {
        Bandwidths {
            b1: self.b1 * a,
            b2: self.b2 * a,
            h1: self.h1 * a,
            h2: self.h2 * a,
            h3: self.h3 * a,
        }
    }
}

/// Immutable prepared estimator: the sample, sorted views of its conditioning
/// coordinates, bandwidths and kernels.
#[derive(Debug, Clone)]
pub struct TransitionEstimator {
    sample: TripleSample,
    bw: Bandwidths,
    /// Kernel in the conditioning direction (`W`).
    w_kernel: KernelSpec,
    /// Kernel in the response direction (`K`).
    k_kernel: KernelSpec,
    x_sorted: SortedSample,
    y_sorted: SortedSample,
    z_min: f64,
    z_max: f64,
}

impl TransitionEstimator {
    pub fn new(
        sample: TripleSample,
        bw: Bandwidths,
        w_kernel: KernelSpec,
        k_kernel: KernelSpec,
    ) -> Result<Self> {
        bw.validate()?;
        if sample.n() < MIN_TRIPLES {
            return Err(MarkovError::InvalidInput(format!(
                "need at least {MIN_TRIPLES} triples, got {}",
                sample.n()
            )));
        }
        let x_sorted = SortedSample::new(&sample.x);
        let y_sorted = SortedSample::new(&sample.y);
        let z_min = sample.z.iter().copied().fold(f64::INFINITY, f64::min);
        let z_max = sample.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(TransitionEstimator {
            sample,
            bw,
            w_kernel,
            k_kernel,
            x_sorted,
            y_sorted,
            z_min,
            z_max,
        })
    }

    /// Epanechnikov kernels in both directions.
    pub fn with_defaults(sample: TripleSample, bw: Bandwidths) -> Result<Self> {
        Self::new(sample, bw, KernelSpec::default(), KernelSpec::default())
    }

    pub fn sample(&self) -> &TripleSample {
        &self.sample
    }

    pub fn bandwidths(&self) -> &Bandwidths {
        &self.bw
    }

    pub fn w_kernel(&self) -> &KernelSpec {
        &self.w_kernel
    }

    pub fn k_kernel(&self) -> &KernelSpec {
        &self.k_kernel
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z_min, self.z_max)
    }

    pub(crate) fn x_sorted(&self) -> &SortedSample {
        &self.x_sorted
    }

    pub(crate) fn y_sorted(&self) -> &SortedSample {
        &self.y_sorted
    }

    /// The same estimator on the time-reversed path.
    pub fn reversed(&self) -> Result<Self> {
        Self::new(self.sample.reversed(), self.bw, self.w_kernel, self.k_kernel)
    }

    /// Local-linear weights in the `Y` direction at `y` (bandwidth `b1`).
    pub fn weights_y(&self, y: f64) -> Result<EffectiveWeights> {
        effective_weights(&self.y_sorted, y, self.bw.b1, &self.w_kernel)
    }

    /// Local-linear weights in the `X` direction at `x` with bandwidth `h`.
    pub fn weights_x(&self, x: f64, h: f64) -> Result<EffectiveWeights> {
        effective_weights(&self.x_sorted, x, h, &self.w_kernel)
    }

    fn kernel_sum(&self, w: &EffectiveWeights, z: f64, g: f64) -> f64 {
        let acc: f64 = w
            .indices
            .iter()
            .zip(&w.weights)
            .map(|(&i, &a)| a * self.k_kernel.scaled(self.sample.z[i] - z, g))
            .sum();
        acc / w.n as f64
    }

    /// `p̂(z | y, Δ)`. Not clipped: local-linear densities can be negative.
    pub fn density_1step(&self, y: f64, z: f64) -> Result<f64> {
        let w = self.weights_y(y)?;
        Ok(self.kernel_sum(&w, z, self.bw.b2))
    }

    /// `P̂(z | y, Δ)`, the local-linear fit of `I(Z_i < z)`.
    pub fn distribution_1step(&self, y: f64, z: f64) -> Result<f64> {
        let w = self.weights_y(y)?;
        Ok(step_sum(&w, &self.sample.z, z))
    }

    /// `p̂(z | x, 2Δ)` from the pairs `(X_i, Z_i)`.
    pub fn density_2step_direct(&self, x: f64, z: f64) -> Result<f64> {
        let w = self.weights_x(x, self.bw.h1)?;
        Ok(self.kernel_sum(&w, z, self.bw.h2))
    }

    /// `P̂(z | x, 2Δ)` from the pairs `(X_i, Z_i)`.
    pub fn distribution_2step_direct(&self, x: f64, z: f64) -> Result<f64> {
        let w = self.weights_x(x, self.bw.h1)?;
        Ok(step_sum(&w, &self.sample.z, z))
    }

    /// `r̂(z | x, 2Δ)`: local-linear regression (bandwidth `h3`) of
    /// `p̂(z | Y_j, Δ)` on `X_j`.
    pub fn density_2step_indirect(&self, x: f64, z: f64) -> Result<f64> {
        self.compose(x, |y| self.density_1step(y, z))
    }

    /// `R̂(z | x, 2Δ)`: local-linear regression of `P̂(z | Y_j, Δ)` on `X_j`.
    pub fn distribution_2step_indirect(&self, x: f64, z: f64) -> Result<f64> {
        let v = self.compose(x, |y| self.distribution_1step(y, z))?;
        // Every inner P̂ is exactly 0 or 1 beyond the response range.
        Ok(if z <= self.z_min {
            0.0
        } else if z > self.z_max {
            1.0
        } else {
            v
        })
    }

    fn compose(&self, x: f64, inner: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let w = self.weights_x(x, self.bw.h3)?;
        let mut acc = 0.0;
        let mut kept_mass = 0.0;
        let mut dropped = 0;
        let mut active = 0;
        for (&j, &a) in w.indices.iter().zip(&w.weights) {
            if a == 0.0 {
                continue;
            }
            active += 1;
            match inner(self.sample.y[j]) {
                Ok(v) => {
                    acc += a * v;
                    kept_mass += a;
                }
                Err(MarkovError::DegenerateDesign { .. }) | Err(MarkovError::DegenerateWindow { .. }) => {
                    dropped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        finish_composition(x, acc, kept_mass, dropped, active, w.n)
    }
}

/// Completes `n⁻¹ Σ a_j v_j`, renormalising over kept mass when a small
/// fraction of inner designs was degenerate.
pub(crate) fn finish_composition(
    at: f64,
    acc: f64,
    kept_mass: f64,
    dropped: usize,
    active: usize,
    n: usize,
) -> Result<f64> {
    if dropped == 0 {
        return Ok(acc / n as f64);
    }
    if (dropped as f64) < 0.01 * active as f64 && kept_mass != 0.0 {
        Ok(acc / kept_mass)
    } else {
        Err(MarkovError::InnerDegenerate {
            at,
            dropped,
            window: active,
        })
    }
}

/// `n⁻¹ Σ w_i I(Z_i < z)`, exactly 0 or 1 when `z` lies at or below every,
/// or above every, positively weighted response.
fn step_sum(w: &EffectiveWeights, z_all: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    let mut any_below = false;
    let mut any_above = false;
    for (&i, &a) in w.indices.iter().zip(&w.weights) {
        if a == 0.0 {
            continue;
        }
        if z_all[i] < z {
            acc += a;
            any_below = true;
        } else {
            any_above = true;
        }
    }
    match (any_below, any_above) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        _ => acc / w.n as f64,
    }
}
