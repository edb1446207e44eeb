//! Reference implementations for the integration tests: full loops over the
//! sample with no windows, sorting or prefix sums.

#![allow(dead_code)]

use markovgate::estimators::{Bandwidths, TripleSample};
use markovgate::stats::{StatisticKind, WeightFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Full-sample local-linear weights `W_n(D_i - y, y; b)`; `None` when the
/// design is degenerate.
pub fn ll_weights(design: &[f64], y: f64, b: f64) -> Option<Vec<f64>> {
    let n = design.len() as f64;
    let mut s = [0.0; 3];
    let mut support = Vec::new();
    for &d in design {
        let u = (d - y) / b;
        let k = epanechnikov(u) / b;
        if k > 0.0 {
            support.push(d);
        }
        s[0] += k / n;
        s[1] += u * k / n;
        s[2] += u * u * k / n;
    }
    let distinct = support.iter().any(|&v| v != support[0]);
    if support.is_empty() || !distinct {
        return None;
    }
    let det = s[0] * s[2] - s[1] * s[1];
    if det <= 1e-8 * (s[0] * s[2] + 1e-300) {
        return None;
    }
    Some(
        design
            .iter()
            .map(|&d| epanechnikov((d - y) / b) / b * (s[2] - (d - y) / b * s[1]) / det)
            .collect(),
    )
}

fn kernel_density(w: &[f64], z_all: &[f64], z: f64, g: f64) -> f64 {
    let n = w.len() as f64;
    w.iter().zip(z_all).map(|(a, zi)| a * epanechnikov((zi - z) / g) / g).sum::<f64>() / n
}

fn step(w: &[f64], z_all: &[f64], z: f64) -> f64 {
    let n = w.len() as f64;
    let below = w.iter().zip(z_all).any(|(&a, &zi)| a != 0.0 && zi < z);
    let above = w.iter().zip(z_all).any(|(&a, &zi)| a != 0.0 && zi >= z);
    if !below {
        0.0
    } else if !above {
        1.0
    } else {
        w.iter().zip(z_all).filter(|(_, &zi)| zi < z).map(|(a, _)| a).sum::<f64>() / n
    }
}

pub struct Oracle<'a> {
    pub s: &'a TripleSample,
    pub bw: Bandwidths,
}

impl Oracle<'_> {
    pub fn p1(&self, y: f64, z: f64) -> Option<f64> {
        let w = ll_weights(&self.s.y, y, self.bw.b1)?;
        Some(kernel_density(&w, &self.s.z, z, self.bw.b2))
    }

    pub fn cdf1(&self, y: f64, z: f64) -> Option<f64> {
        let w = ll_weights(&self.s.y, y, self.bw.b1)?;
        Some(step(&w, &self.s.z, z))
    }

    pub fn p2(&self, x: f64, z: f64) -> Option<f64> {
        let w = ll_weights(&self.s.x, x, self.bw.h1)?;
        Some(kernel_density(&w, &self.s.z, z, self.bw.h2))
    }

    pub fn cdf2(&self, x: f64, z: f64) -> Option<f64> {
        let w = ll_weights(&self.s.x, x, self.bw.h1)?;
        Some(step(&w, &self.s.z, z))
    }

    fn compose(&self, x: f64, inner: impl Fn(f64) -> Option<f64>) -> Option<f64> {
        let a = ll_weights(&self.s.x, x, self.bw.h3)?;
        let n = a.len() as f64;
        let (mut acc, mut mass, mut dropped, mut active) = (0.0, 0.0, 0usize, 0usize);
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            active += 1;
            match inner(self.s.y[j]) {
                Some(v) => {
                    acc += aj * v;
                    mass += aj;
                }
                None => dropped += 1,
            }
        }
        if dropped == 0 {
            Some(acc / n)
        } else if (dropped as f64) < 0.01 * active as f64 && mass != 0.0 {
            Some(acc / mass)
        } else {
            None
        }
    }

    pub fn r2(&self, x: f64, z: f64) -> Option<f64> {
        self.compose(x, |y| self.p1(y, z))
    }

    pub fn big_r2(&self, x: f64, z: f64) -> Option<f64> {
        let v = self.compose(x, |y| self.cdf1(y, z))?;
        let lo = self.s.z.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.s.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(if z <= lo {
            0.0
        } else if z > hi {
            1.0
        } else {
            v
        })
    }

    /// The statistic by direct summation; `None` on any degenerate point or
    /// when `T0` drops more than 5% of its points.
    pub fn statistic(&self, kind: StatisticKind, w: &WeightFunction) -> Option<f64> {
        let lo = self.s.z.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.s.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = 1e-4 / (hi - lo);
        let (mut value, mut used, mut dropped) = (0.0, 0usize, 0usize);
        for i in 0..self.s.n() {
            let (x, z) = (self.s.x[i], self.s.z[i]);
            let wi = w.eval(x, z);
            if wi <= 0.0 {
                continue;
            }
            used += 1;
            match kind {
                StatisticKind::T1 => value += (self.p2(x, z)? - self.r2(x, z)?).powi(2) * wi,
                StatisticKind::T1Star => {
                    let p = self.p2(x, z)?;
                    let r = self.r2(x, z)?;
                    value += ((p - r) / p.max(floor)).powi(2) * wi;
                }
                StatisticKind::T0 => {
                    let p = self.p2(x, z)?;
                    let r = self.r2(x, z)?;
                    if p < floor || r < floor {
                        dropped += 1;
                    } else {
                        value += (r / p).ln() * wi;
                    }
                }
                StatisticKind::T2 => value += (self.cdf2(x, z)? - self.big_r2(x, z)?).powi(2) * wi,
            }
        }
        if kind == StatisticKind::T0 && dropped as f64 > 0.05 * used as f64 {
            return None;
        }
        Some(value)
    }
}

/// `|a - b| ≤ rel · max(|a|, |b|) + abs_floor`.
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs_floor
}

/// A Gaussian AR(1) path with random persistence, mean and scale.
pub fn random_path(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho: f64 = rng.random_range(0.3..0.97);
    let mean: f64 = rng.random_range(-1.0..1.0);
    let scale: f64 = rng.random_range(0.05..2.0);
    let mut x = mean;
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = mean + rho * (x - mean) + scale * e;
            x
        })
        .collect()
}

/// Bandwidths `c · sd · n^{-1/5}` with independent random `c` per coordinate.
pub fn random_bandwidths(s: &TripleSample, seed: u64) -> Bandwidths {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let rate = (s.n() as f64).powf(-0.2);
    let (sx, sz) = (sd(&s.x), sd(&s.z));
    let mut draw = |spread: f64| rng.random_range(0.8..2.5) * spread * rate;
    Bandwidths {
        h1: draw(sx),
        h2: draw(sz),
        h3: draw(sx),
        b1: draw(sx),
        b2: draw(sz),
    }
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, simpson(f, a, b), tol, 40)
}

pub const ORACLE_REL: f64 = 1e-8;

/// Compares every library estimator and statistic with the loops above on
/// one random instance of size `n`. Returns a description of each mismatch.
pub fn oracle_mismatches(n: usize, seed: u64) -> Vec<String> {
    use markovgate::estimators::{Family, TransitionEstimator};
    use markovgate::stats::{statistic_value, WeightSpec};

    let path = random_path(n + 2, seed);
    let s = TripleSample::from_path(&path, 1.0 / 52.0).unwrap();
    let bw = random_bandwidths(&s, seed);
    let est = TransitionEstimator::with_defaults(s.clone(), bw).unwrap();
    let o = Oracle { s: &s, bw };
    let mut bad = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let lo = path.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pairs: Vec<(f64, f64)> = (0..s.n()).step_by(3).map(|i| (s.x[i], s.z[i])).collect();
    for _ in 0..20 {
        pairs.push((rng.random_range(lo..hi), rng.random_range(lo - 0.1..hi + 0.1)));
    }

    fn check(bad: &mut Vec<String>, what: &str, x: f64, z: f64, lib: Option<f64>, want: Option<f64>, scale: f64) {
        match (lib, want) {
            (Some(a), Some(b)) if close(a, b, ORACLE_REL, 1e-12 * scale) => {}
            (None, None) => {}
            (a, b) => bad.push(format!("{what} at ({x}, {z}): library {a:?}, reference {b:?}")),
        }
    }

    let dscale = 1.0 / (hi - lo);
    for &(x, z) in &pairs {
        check(&mut bad, "p1", x, z, est.density_1step(x, z).ok(), o.p1(x, z), dscale);
        check(&mut bad, "P1", x, z, est.distribution_1step(x, z).ok(), o.cdf1(x, z), 1.0);
        check(&mut bad, "p2", x, z, est.density_2step_direct(x, z).ok(), o.p2(x, z), dscale);
        check(&mut bad, "P2", x, z, est.distribution_2step_direct(x, z).ok(), o.cdf2(x, z), 1.0);
        check(&mut bad, "r2", x, z, est.density_2step_indirect(x, z).ok(), o.r2(x, z), dscale);
        check(&mut bad, "R2", x, z, est.distribution_2step_indirect(x, z).ok(), o.big_r2(x, z), 1.0);
    }

    // Batched evaluation, point by point so degenerate points stay isolated.
    for &(x, z) in &pairs {
        let ev = est.evaluate_pairs(&[(x, z)], Family::Both).ok();
        let want_dens = o.p2(x, z).zip(o.r2(x, z));
        let want_cdf = o.cdf2(x, z).zip(o.big_r2(x, z));
        if let (Some((p, r)), Some((pc, rc))) = (want_dens, want_cdf) {
            match ev {
                Some(ev) => {
                    check(&mut bad, "batch p2", x, z, Some(ev.p_direct[0]), Some(p), dscale);
                    check(&mut bad, "batch r2", x, z, Some(ev.r_indirect[0]), Some(r), dscale);
                    check(&mut bad, "batch P2", x, z, Some(ev.cdf_direct[0]), Some(pc), 1.0);
                    check(&mut bad, "batch R2", x, z, Some(ev.cdf_indirect[0]), Some(rc), 1.0);
                }
                None => bad.push(format!("batch failed at ({x}, {z}) where the reference is defined")),
            }
        }
    }

    let x_nodes: Vec<f64> = (0..7).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 7.0).collect();
    let z_nodes: Vec<f64> = (0..9).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 9.0).collect();
    if let Ok(g) = est.evaluate_grid(&x_nodes, &z_nodes) {
        for (ix, &x) in x_nodes.iter().enumerate() {
            if !g.row_ok[ix] {
                continue;
            }
            for (iz, &z) in z_nodes.iter().enumerate() {
                check(&mut bad, "grid p2", x, z, Some(g.at(&g.p_direct, ix, iz)), o.p2(x, z), dscale);
                check(&mut bad, "grid r2", x, z, Some(g.at(&g.r_indirect, ix, iz)), o.r2(x, z), dscale);
                check(&mut bad, "grid P2", x, z, Some(g.at(&g.cdf_direct, ix, iz)), o.cdf2(x, z), 1.0);
                check(&mut bad, "grid R2", x, z, Some(g.at(&g.cdf_indirect, ix, iz)), o.big_r2(x, z), 1.0);
            }
        }
    }

    for kind in [StatisticKind::T0, StatisticKind::T1, StatisticKind::T1Star, StatisticKind::T2] {
        let w = WeightFunction::from_sample(&WeightSpec::new(kind.weight_kind()), &s).unwrap();
        let lib = statistic_value(&est, kind, &w).ok().map(|v| v.value);
        let want = o.statistic(kind, &w);
        match (lib, want) {
            (Some(a), Some(b)) if close(a, b, ORACLE_REL, 1e-12 * s.n() as f64 * dscale * dscale) => {}
            (None, None) => {}
            (a, b) => bad.push(format!("{kind:?}: library {a:?}, reference {b:?}")),
        }
    }
    bad
}
