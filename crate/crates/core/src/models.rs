//! Simulators for the Ornstein–Uhlenbeck null and three alternatives.
//!
//! The null uses the exact Gaussian transition. Alternatives are joint Euler
//! schemes with `substeps` refinements per sampling interval. Each random
//! ingredient draws from its own stream, so at `θ = 0` every alternative
//! produces exactly the same path as every other (an Euler OU path).

use std::fmt::Write as _;
use std::io::BufRead;

use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};
use crate::rng::stream_rng;

const STREAM_X: u64 = 0;
const STREAM_LATENT: u64 = 1;
const STREAM_ARRIVALS: u64 = 2;
const STREAM_SIZES: u64 = 3;
const STREAM_INIT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_obs: usize,
    pub delta: f64,
    pub substeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_obs: 1200,
            delta: 1.0 / 52.0,
            substeps: 20,
            burn_in: 500,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn new(n_obs: usize, seed: u64) -> Self {
        SimConfig {
            n_obs,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps < 1 {
            return Err(MarkovError::InvalidInput("substeps must be at least 1".into()));
        }
        if self.n_obs < 12 {
            return Err(MarkovError::InvalidInput(format!("n_obs must be at least 12, got {}", self.n_obs)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(MarkovError::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    OuNull,
    /// Mean reversion towards a slowly moving OU level.
    H1StochasticLevel,
    /// Diffusion coefficient mixed with a CIR volatility.
    H2StochasticVol,
    /// Compound Poisson jumps.
    H3Jumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpType {
    /// Independent `N(0, (σ/2)²)` sizes; the process stays Markov.
    #[default]
    GaussianIid,
    /// Size equal to the current value of a latent CIR process.
    CirDriven,
}

impl JumpType {
    pub fn label(self) -> &'static str {
        match self {
            JumpType::GaussianIid => "i",
            JumpType::CirDriven => "ii",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub kappa: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub theta: f64,
    pub s_scale: f64,
    pub jump_type: JumpType,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            variant: ModelVariant::OuNull,
            kappa: 0.2,
            alpha: 0.085,
            sigma: 0.08,
            theta: 0.0,
            s_scale: 10.0,
            jump_type: JumpType::GaussianIid,
        }
    }
}

impl ModelSpec {
    pub fn ou() -> Self {
        Self::default()
    }

    pub fn h1(theta: f64, s_scale: f64) -> Self {
        ModelSpec {
            variant: ModelVariant::H1StochasticLevel,
            theta,
            s_scale,
            ..Self::default()
        }
    }

    pub fn h2(theta: f64, s_scale: f64) -> Self {
        ModelSpec {
            variant: ModelVariant::H2StochasticVol,
            theta,
            s_scale,
            ..Self::default()
        }
    }

    pub fn h3(theta: f64, jump_type: JumpType) -> Self {
        ModelSpec {
            variant: ModelVariant::H3Jumps,
            theta,
            jump_type,
            ..Self::default()
        }
    }

    pub fn with_theta(self, theta: f64) -> Self {
        ModelSpec { theta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.sigma > 0.0) {
            return Err(MarkovError::InvalidInput("kappa and sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(MarkovError::InvalidInput(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.variant != ModelVariant::OuNull && self.variant != ModelVariant::H3Jumps && !(self.s_scale > 0.0) {
            return Err(MarkovError::InvalidInput("s_scale must be positive".into()));
        }
        Ok(())
    }

    /// Stationary variance `σ² / (2κ)` of the OU core.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.kappa)
    }

    /// `2κ₂b / σ₂²` for the CIR volatility of the stochastic-volatility model.
    pub fn feller_ratio(&self) -> Option<f64> {
        (self.variant == ModelVariant::H2StochasticVol).then(|| {
            let (k2, b, s2) = self.latent_params();
            2.0 * k2 * b / (s2 * s2)
        })
    }

    /// `true` when the Feller condition fails for the volatility factor.
    pub fn feller_warning(&self) -> bool {
        self.feller_ratio().is_some_and(|r| r < 1.0)
    }

    /// `(rate, level, vol)` of the slow latent factor.
    fn latent_params(&self) -> (f64, f64, f64) {
        (self.kappa / self.s_scale, self.s_scale * self.alpha, self.sigma / 2.0)
    }

    pub fn family_label(&self) -> &'static str {
        match self.variant {
            ModelVariant::OuNull => "ou",
            ModelVariant::H1StochasticLevel => "h1",
            ModelVariant::H2StochasticVol => "h2",
            ModelVariant::H3Jumps => "h3",
        }
    }
}

/// A simulated or loaded series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub values: Vec<f64>,
    pub delta: f64,
    pub model: Option<ModelSpec>,
    pub seed: Option<u64>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `index,time,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,time,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i, i as f64 * self.delta, v);
        }
        out
    }

    /// Parses `index,time,value` CSV. The sampling interval is taken from the
    /// time column when present, else `default_delta`.
    pub fn from_csv<R: BufRead>(reader: R, default_delta: f64) -> Result<Path> {
        let mut values = Vec::new();
        let mut times = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| MarkovError::InvalidInput(format!("line {}: cannot parse `{s}`", lineno + 1)))
            };
            match fields.len() {
                1 => values.push(parse(fields[0])?),
                3 => {
                    times.push(parse(fields[1])?);
                    values.push(parse(fields[2])?);
                }
                k => {
                    return Err(MarkovError::InvalidInput(format!(
                        "line {}: expected 3 fields, found {k}",
                        lineno + 1
                    )))
                }
            }
        }
        let delta = if times.len() >= 2 { times[1] - times[0] } else { default_delta };
        if !(delta > 0.0) {
            return Err(MarkovError::InvalidInput("time column must be increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(MarkovError::InvalidInput(format!("non-finite value {v}")));
        }
        Ok(Path {
            values,
            delta,
            model: None,
            seed: None,
        })
    }
}

/// Path plus latent-state diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub path: Path,
    /// Latent factor at each retained observation (empty for the null).
    pub latent: Vec<f64>,
    /// Smallest latent value seen on any substep.
    pub latent_min: f64,
    /// Jumps over the retained observation window.
    pub jumps: u64,
    /// Length of the retained window in time units.
    pub horizon: f64,
}

/// Dispatches on `m.variant`.
pub fn simulate(m: &ModelSpec, c: &SimConfig) -> Result<Path> {
    match m.variant {
        ModelVariant::OuNull => simulate_ou_exact(m, c),
        _ => simulate_traced(m, c).map(|t| t.path),
    }
}

fn draw_stationary(m: &ModelSpec, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0, STREAM_INIT);
    let e: f64 = StandardNormal.sample(&mut rng);
    m.alpha + m.stationary_variance().sqrt() * e
}

/// Exact Gaussian recursion started from the stationary law.
pub fn simulate_ou_exact(m: &ModelSpec, c: &SimConfig) -> Result<Path> {
    m.validate()?;
    c.validate()?;
    if m.variant != ModelVariant::OuNull {
        return Err(MarkovError::InvalidInput("simulate_ou_exact needs the ou_null variant".into()));
    }
    let rho = (-m.kappa * c.delta).exp();
    let eta = (m.sigma * m.sigma * (1.0 - rho * rho) / (2.0 * m.kappa)).sqrt();
    let mut rng = stream_rng(c.seed, 0, STREAM_X);
    let mut x = draw_stationary(m, c.seed);
    let mut values = Vec::with_capacity(c.n_obs + 2);
    values.push(x);
    for _ in 1..c.n_obs + 2 {
        let e: f64 = StandardNormal.sample(&mut rng);
        x = m.alpha + (x - m.alpha) * rho + eta * e;
        values.push(x);
    }
    Ok(Path {
        values,
        delta: c.delta,
        model: Some(*m),
        seed: Some(c.seed),
    })
}

/// Stochastic-level alternative.
pub fn simulate_h1(m: &ModelSpec, c: &SimConfig) -> Result<Path> {
    expect_variant(m, ModelVariant::H1StochasticLevel)?;
    simulate_traced(m, c).map(|t| t.path)
}

/// Stochastic-volatility alternative.
pub fn simulate_h2(m: &ModelSpec, c: &SimConfig) -> Result<Path> {
    expect_variant(m, ModelVariant::H2StochasticVol)?;
    simulate_traced(m, c).map(|t| t.path)
}

/// Jump alternative.
pub fn simulate_h3(m: &ModelSpec, c: &SimConfig) -> Result<Path> {
    expect_variant(m, ModelVariant::H3Jumps)?;
    simulate_traced(m, c).map(|t| t.path)
}

fn expect_variant(m: &ModelSpec, v: ModelVariant) -> Result<()> {
    if m.variant != v {
        return Err(MarkovError::InvalidInput(format!("expected variant {v:?}, got {:?}", m.variant)));
    }
    Ok(())
}

/// Euler simulation of any variant with latent diagnostics.
///
/// The null variant is run through the same Euler scheme here (useful for
/// comparing alternatives at `θ = 0`); [`simulate`] uses the exact recursion.
pub fn simulate_traced(m: &ModelSpec, c: &SimConfig) -> Result<SimTrace> {
    m.validate()?;
    c.validate()?;
    let dt = c.delta / c.substeps as f64;
    let sq = dt.sqrt();
    let mut rx = stream_rng(c.seed, 0, STREAM_X);
    let mut rl = stream_rng(c.seed, 0, STREAM_LATENT);
    let mut ra = stream_rng(c.seed, 0, STREAM_ARRIVALS);
    let mut rs = stream_rng(c.seed, 0, STREAM_SIZES);
    let arrivals = (m.variant == ModelVariant::H3Jumps && m.theta > 0.0)
        .then(|| Poisson::new(m.theta * dt))
        .transpose()
        .map_err(|e| MarkovError::InvalidInput(format!("jump intensity: {e}")))?;

    let (k1, a1, s1) = m.latent_params();
    let half_sigma = m.sigma / 2.0;
    let mut x = draw_stationary(m, c.seed);
    let mut latent = match m.variant {
        ModelVariant::OuNull => 0.0,
        ModelVariant::H1StochasticLevel | ModelVariant::H2StochasticVol => a1,
        ModelVariant::H3Jumps => m.alpha,
    };
    let mut latent_min = latent;
    let total = c.burn_in + c.n_obs + 2;
    let mut values = Vec::with_capacity(c.n_obs + 2);
    let mut trace = Vec::new();
    let mut jumps = 0u64;
    for obs in 0..total {
        if obs >= c.burn_in {
            values.push(x);
            if m.variant != ModelVariant::OuNull {
                trace.push(latent);
            }
        }
        if obs + 1 == total {
            break;
        }
        let counting = obs >= c.burn_in;
        for _ in 0..c.substeps {
            let dw: f64 = StandardNormal.sample(&mut rx);
            let dw = dw * sq;
            match m.variant {
                ModelVariant::OuNull => {
                    x += m.kappa * (m.alpha - x) * dt + m.sigma * dw;
                }
                ModelVariant::H1StochasticLevel => {
                    let db: f64 = StandardNormal.sample(&mut rl);
                    let level = m.theta * latent + (1.0 - m.theta) * m.alpha;
                    x += m.kappa * (level - x) * dt + m.sigma * dw;
                    latent += k1 * (a1 - latent) * dt + s1 * db * sq;
                }
                ModelVariant::H2StochasticVol => {
                    let db: f64 = StandardNormal.sample(&mut rl);
                    let yp = latent.max(0.0);
                    let vol = (1.0 - m.theta) * m.sigma + m.theta * yp.sqrt();
                    x += m.kappa * (m.alpha - x) * dt + vol * dw;
                    latent += k1 * (a1 - yp) * dt + s1 * yp.sqrt() * db * sq;
                }
                ModelVariant::H3Jumps => {
                    x += m.kappa * (m.alpha - x) * dt + m.sigma * dw;
                    if m.jump_type == JumpType::CirDriven {
                        let db: f64 = StandardNormal.sample(&mut rl);
                        let jp = latent.max(0.0);
                        latent += m.kappa * (m.alpha - jp) * dt + half_sigma * jp.sqrt() * db * sq;
                    }
                    if let Some(p) = &arrivals {
                        let k = p.sample(&mut ra) as u64;
                        for _ in 0..k {
                            x += match m.jump_type {
                                JumpType::GaussianIid => {
                                    let e: f64 = StandardNormal.sample(&mut rs);
                                    half_sigma * e
                                }
                                JumpType::CirDriven => latent.max(0.0),
                            };
                        }
                        if counting {
                            jumps += k;
                        }
                    }
                }
            }
            latent_min = latent_min.min(latent);
        }
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(MarkovError::InvalidInput(format!("simulation diverged ({v})")));
    }
    Ok(SimTrace {
        path: Path {
            values,
            delta: c.delta,
            model: Some(*m),
            seed: Some(c.seed),
        },
        latent: trace,
        latent_min,
        jumps,
        horizon: (c.n_obs + 1) as f64 * c.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptive::{autocorr_lag1, mean, variance};

    #[test]
    fn fast_reversion_decorrelates() {
        let m = ModelSpec {
            kappa: 50.0,
            ..ModelSpec::ou()
        };
        let c = SimConfig {
            delta: 1.0,
            ..SimConfig::new(10_000, 3)
        };
        let p = simulate_ou_exact(&m, &c).unwrap();
        assert!(autocorr_lag1(&p.values).abs() < 0.05);
    }

    #[test]
    fn ou_stationary_moments_and_autocorrelation() {
        let m = ModelSpec {
            kappa: 2.0,
            ..ModelSpec::ou()
        };
        let c = SimConfig {
            delta: 0.5,
            ..SimConfig::new(50_000, 11)
        };
        let p = simulate_ou_exact(&m, &c).unwrap();
        let rho = (-m.kappa * c.delta).exp();
        let n = p.len() as f64;
        let v = m.stationary_variance();
        // Long-run variance of the mean of an AR(1).
        let se_mean = (v * (1.0 + rho) / (1.0 - rho) / n).sqrt();
        assert!((mean(&p.values) - m.alpha).abs() < 3.0 * se_mean);
        let se_var = v * (2.0 * (1.0 + rho * rho) / (1.0 - rho * rho) / n).sqrt();
        assert!((variance(&p.values) - v).abs() < 3.0 * se_var);
        let se_rho = ((1.0 - rho * rho) / n).sqrt();
        assert!((autocorr_lag1(&p.values) - rho).abs() < 3.0 * se_rho);
    }

    #[test]
    fn same_seed_same_path() {
        for m in [ModelSpec::h1(0.5, 10.0), ModelSpec::h2(0.5, 10.0), ModelSpec::h3(1.0, JumpType::CirDriven)] {
            let c = SimConfig::new(200, 5);
            assert_eq!(simulate(&m, &c).unwrap(), simulate(&m, &c).unwrap());
        }
    }

    #[test]
    fn theta_zero_alternatives_coincide() {
        let c = SimConfig::new(300, 9);
        let base = simulate_traced(&ModelSpec::ou(), &c).unwrap().path.values;
        for m in [
            ModelSpec::h1(0.0, 10.0),
            ModelSpec::h2(0.0, 100.0),
            ModelSpec::h3(0.0, JumpType::GaussianIid),
            ModelSpec::h3(0.0, JumpType::CirDriven),
        ] {
            assert_eq!(simulate(&m, &c).unwrap().values, base, "{m:?}");
        }
    }

    #[test]
    fn cir_latent_stays_nonnegative() {
        // 50_000 observations × 20 substeps = 10⁶ substeps.
        let m = ModelSpec::h2(1.0, 10.0);
        let c = SimConfig {
            burn_in: 0,
            ..SimConfig::new(50_000, 1)
        };
        let t = simulate_traced(&m, &c).unwrap();
        assert!(t.latent.iter().all(|&y| y >= 0.0));
        assert!(!m.feller_warning());
    }

    #[test]
    fn jump_count_is_poisson() {
        let m = ModelSpec::h3(1.0, JumpType::GaussianIid);
        let reps = 1000;
        let mut total = 0u64;
        let mut horizon = 0.0;
        for r in 0..reps {
            let c = SimConfig {
                burn_in: 0,
                ..SimConfig::new(100, r)
            };
            let t = simulate_traced(&m, &c).unwrap();
            total += t.jumps;
            horizon = t.horizon;
        }
        let mean_count = total as f64 / reps as f64;
        let expected = m.theta * horizon;
        let se = (expected / reps as f64).sqrt();
        assert!((mean_count - expected).abs() < 3.0 * se, "{mean_count} vs {expected}");
    }

    #[test]
    fn cir_jump_sizes_positive() {
        let m = ModelSpec::h3(1.0, JumpType::CirDriven);
        let t = simulate_traced(&m, &SimConfig::new(2000, 2)).unwrap();
        assert!(t.latent.iter().all(|&j| j > 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let p = simulate(&ModelSpec::ou(), &SimConfig::new(20, 1)).unwrap();
        let csv = p.to_csv();
        assert!(csv.starts_with("index,time,value\n"));
        let q = Path::from_csv(csv.as_bytes(), 1.0).unwrap();
        assert_eq!(q.values, p.values);
        assert!((q.delta - p.delta).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(simulate(&ModelSpec::ou(), &SimConfig::new(5, 1)).is_err());
        assert!(simulate(&ModelSpec::h1(1.5, 10.0), &SimConfig::new(50, 1)).is_err());
    }
}
