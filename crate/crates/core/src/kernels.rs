//! Smoothing kernels and the local-linear effective-weight machinery.
//!
//! Every estimator in the crate is a local-linear smoother: at an evaluation
//! point `y` it fits a weighted intercept and slope to the sample and reports
//! the intercept. The fit collapses to a set of data-dependent weights
//! `W_n(Y_i - y, y; b)`, normalised so that the estimate is
//! `n⁻¹ Σ W_n(Y_i - y, y; b) · response_i`.
//!
//! All built-in kernels are even polynomials on `[-1, 1]`, so they vanish
//! outside a window of half-width `b` around the evaluation point. Samples are
//! sorted once ([`SortedSample`]) and windows are located by binary search,
//! which makes each evaluation cost proportional to the window size rather
//! than `n`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};

/// Built-in compactly supported kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Epanechnikov,
    Quartic,
    Triweight,
}

/// A symmetric kernel on `[-1, 1]` with its cached norm constants.
///
/// The constants are exact rationals obtained by symbolic integration of the
/// polynomial kernels; the unit tests re-derive them by adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub support_radius: f64,
    /// `∫ K²`
    pub l2_norm_sq: f64,
    /// `∫ (K ∗ K)²`
    pub conv_l2_norm_sq: f64,
    /// `∫ K`
    pub mu0: f64,
    /// `∫ u² K(u) du`
    pub mu2: f64,
}

// Coefficients of u^0, u^2, u^4, ... for each kernel on |u| <= 1.
const EPANECHNIKOV_COEFFS: [f64; 2] = [0.75, -0.75];
const QUARTIC_COEFFS: [f64; 3] = [15.0 / 16.0, -30.0 / 16.0, 15.0 / 16.0];
const TRIWEIGHT_COEFFS: [f64; 4] = [35.0 / 32.0, -105.0 / 32.0, 105.0 / 32.0, -35.0 / 32.0];

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Epanechnikov => KernelSpec {
                kind,
                support_radius: 1.0,
                l2_norm_sq: 3.0 / 5.0,
                conv_l2_norm_sq: 167.0 / 385.0,
                mu0: 1.0,
                mu2: 1.0 / 5.0,
            },
            KernelKind::Quartic => KernelSpec {
                kind,
                support_radius: 1.0,
                l2_norm_sq: 5.0 / 7.0,
                conv_l2_norm_sq: 1_168_780.0 / 2_263_261.0,
                mu0: 1.0,
                mu2: 1.0 / 7.0,
            },
            KernelKind::Triweight => KernelSpec {
                kind,
                support_radius: 1.0,
                l2_norm_sq: 350.0 / 429.0,
                conv_l2_norm_sq: 151_766_930.0 / 258_150_321.0,
                mu0: 1.0,
                mu2: 1.0 / 9.0,
            },
        }
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelKind::Epanechnikov)
    }

    /// `K(u)`; zero outside the support.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        let u2 = u * u;
        match self.kind {
            KernelKind::Epanechnikov => 0.75 * (1.0 - u2),
            KernelKind::Quartic => {
                let v = 1.0 - u2;
                15.0 / 16.0 * v * v
            }
            KernelKind::Triweight => {
                let v = 1.0 - u2;
                35.0 / 32.0 * v * v * v
            }
        }
    }

    /// `K_h(x) = K(x / h) / h`.
    #[inline]
    pub fn scaled(&self, x: f64, h: f64) -> f64 {
        self.eval(x / h) / h
    }

    /// `∫ K_a(u) K_b(u) du`, exact from the polynomial coefficients; equals
    /// `‖K‖² / a` when `a == b`.
    pub fn cross_product(&self, a: f64, b: f64) -> f64 {
        let m = self.support_radius * a.min(b);
        let c = self.even_coeffs();
        let mut total = 0.0;
        for (i, ci) in c.iter().enumerate() {
            for (j, cj) in c.iter().enumerate() {
                let e = (2 * i + 2 * j + 1) as i32;
                total += ci * cj * 2.0 * m.powi(e) / (e as f64 * a.powi(2 * i as i32 + 1) * b.powi(2 * j as i32 + 1));
            }
        }
        total
    }

    /// Coefficients `c_m` of `K(u) = Σ c_m u^{2m}` on the support.
    pub(crate) fn even_coeffs(&self) -> &'static [f64] {
        match self.kind {
            KernelKind::Epanechnikov => &EPANECHNIKOV_COEFFS,
            KernelKind::Quartic => &QUARTIC_COEFFS,
            KernelKind::Triweight => &TRIWEIGHT_COEFFS,
        }
    }

    /// Polynomial degree of the kernel on its support.
    pub(crate) fn degree(&self) -> usize {
        2 * (self.even_coeffs().len() - 1)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::epanechnikov()
    }
}

/// `K(u)`, zero outside the support.
pub fn kernel_eval(k: &KernelSpec, u: f64) -> f64 {
    k.eval(u)
}

/// `∫ (K ∗ K)²(u) du`.
pub fn conv_norm(k: &KernelSpec) -> f64 {
    k.conv_l2_norm_sq
}

/// The four kernel norms that enter the asymptotic null moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelNorms {
    /// `‖W‖²` for the conditioning-direction kernel.
    pub w_l2: f64,
    /// `‖K‖²` for the response-direction kernel.
    pub k_l2: f64,
    /// `‖W ∗ W‖²`
    pub w_conv: f64,
    /// `‖K ∗ K‖²`
    pub k_conv: f64,
}

impl KernelNorms {
    pub fn from_kernels(w: &KernelSpec, k: &KernelSpec) -> Self {
        KernelNorms {
            w_l2: w.l2_norm_sq,
            k_l2: k.l2_norm_sq,
            w_conv: w.conv_l2_norm_sq,
            k_conv: k.conv_l2_norm_sq,
        }
    }
}

/// A sample sorted once, with the permutation back to original indices.
#[derive(Debug, Clone)]
pub struct SortedSample {
    values: Vec<f64>,
    order: Vec<usize>,
}

impl SortedSample {
    pub fn new(sample: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| sample[i]).collect();
        SortedSample { values, order }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `order()[s]` is the original index of the `s`-th smallest value.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Sorted positions of the points with `|v - center| <= half_width`.
    pub fn window(&self, center: f64, half_width: f64) -> Range<usize> {
        let lo = self.values.partition_point(|&v| v < center - half_width);
        let hi = self.values.partition_point(|&v| v <= center + half_width);
        lo..hi.max(lo)
    }
}

/// The weighted moments `s_{n,j}(y)`, `j = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMoments {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl LocalMoments {
    pub fn determinant(&self) -> f64 {
        self.s0 * self.s2 - self.s1 * self.s1
    }

    /// Degeneracy threshold applied to the determinant.
    pub fn ridge_floor(&self) -> f64 {
        1e-8 * (self.s0 * self.s2 + 1e-300)
    }
}

fn moments_over(values: &[f64], y: f64, b: f64, k: &KernelSpec, n: usize) -> LocalMoments {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &v in values {
        let u = (v - y) / b;
        let kw = k.eval(u) / b;
        s0 += kw;
        s1 += u * kw;
        s2 += u * u * kw;
    }
    let nf = n as f64;
    LocalMoments {
        s0: s0 / nf,
        s1: s1 / nf,
        s2: s2 / nf,
    }
}

/// Local-linear weights for the sorted window `values` around `y`, written to
/// `out` aligned with `values`. `n` is the full sample size.
pub(crate) fn weights_on_window(
    values: &[f64],
    y: f64,
    b: f64,
    k: &KernelSpec,
    n: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    if values.is_empty() {
        return Err(MarkovError::DegenerateWindow { at: y });
    }
    let m = moments_over(values, y, b, k, n);
    // Distinct support points among those with positive kernel weight.
    let mut first = None;
    let mut distinct = false;
    for &v in values {
        if k.eval((v - y) / b) > 0.0 {
            match first {
                None => first = Some(v),
                Some(f) if f != v => {
                    distinct = true;
                    break;
                }
                _ => {}
            }
        }
    }
    if !distinct {
        return Err(MarkovError::DegenerateDesign {
            at: y,
            reason: "fewer than two distinct points in window",
        });
    }
    let det = m.determinant();
    if det <= m.ridge_floor() {
        return Err(MarkovError::DegenerateDesign {
            at: y,
            reason: "moment determinant below ridge floor",
        });
    }
    out.reserve(values.len());
    for &v in values {
        let d = v - y;
        let kw = k.eval(d / b) / b;
        out.push(kw * (m.s2 - d / b * m.s1) / det);
    }
    Ok(())
}

/// Weighted local moments at `y`, computed over the window only.
pub fn local_moments(
    sample: &SortedSample,
    y: f64,
    b: f64,
    k: &KernelSpec,
) -> Result<LocalMoments> {
    check_bandwidth(b)?;
    let win = sample.window(y, b * k.support_radius);
    if win.is_empty() {
        return Err(MarkovError::DegenerateWindow { at: y });
    }
    Ok(moments_over(
        &sample.values()[win],
        y,
        b,
        k,
        sample.len(),
    ))
}

/// Effective local-linear weights restricted to the window around a point.
///
/// `weights[m]` is `W_n(Y_i - y, y; b)` for `i = indices[m]`; all other
/// sample points carry weight zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveWeights {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Full sample size, the `n` in `n⁻¹ Σ`.
    pub n: usize,
}

impl EffectiveWeights {
    /// `n⁻¹ Σ_i W_n(Y_i - y, y; b) · responses[i]`.
    pub fn apply(&self, responses: &[f64]) -> f64 {
        let acc: f64 = self
            .indices
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * responses[i])
            .sum();
        acc / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn effective_weights(
    sample: &SortedSample,
    y: f64,
    b: f64,
    k: &KernelSpec,
) -> Result<EffectiveWeights> {
    check_bandwidth(b)?;
    let win = sample.window(y, b * k.support_radius);
    let mut weights = Vec::new();
    weights_on_window(
        &sample.values()[win.clone()],
        y,
        b,
        k,
        sample.len(),
        &mut weights,
    )?;
    Ok(EffectiveWeights {
        indices: sample.order()[win].to_vec(),
        weights,
        n: sample.len(),
    })
}

/// Local-linear regression of `responses` on `xs`, evaluated at `y`.
pub fn local_linear_fit(
    xs: &[f64],
    responses: &[f64],
    y: f64,
    b: f64,
    k: &KernelSpec,
) -> Result<f64> {
    if xs.len() != responses.len() {
        return Err(MarkovError::InvalidInput(format!(
            "length mismatch: {} design points, {} responses",
            xs.len(),
            responses.len()
        )));
    }
    let sorted = SortedSample::new(xs);
    Ok(effective_weights(&sorted, y, b, k)?.apply(responses))
}

pub(crate) fn check_bandwidth(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(MarkovError::InvalidInput(format!(
            "bandwidth must be positive and finite, got {b}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [KernelKind; 3] = [
        KernelKind::Epanechnikov,
        KernelKind::Quartic,
        KernelKind::Triweight,
    ];

    /// Adaptive Simpson quadrature.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    fn conv_by_quadrature(k: &KernelSpec) -> f64 {
        // (K*K)(t) = ∫ K(u) K(t-u) du over u in [t-1, 1] for t in [0, 2].
        let conv = |t: f64| {
            adaptive_simpson(&|u| k.eval(u) * k.eval(t - u), t - 1.0, 1.0, 1e-13)
        };
        2.0 * adaptive_simpson(&|t| conv(t).powi(2), 0.0, 2.0, 1e-12)
    }

    #[test]
    fn epanechnikov_values() {
        let k = KernelSpec::epanechnikov();
        assert_eq!(kernel_eval(&k, 0.0), 0.75);
        assert_eq!(kernel_eval(&k, 2.0), 0.0);
        assert_eq!(kernel_eval(&k, -1.5), 0.0);
        assert_eq!(k.l2_norm_sq, 0.6);
    }

    #[test]
    fn cross_product_matches_quadrature() {
        for kind in ALL {
            let k = KernelSpec::new(kind);
            assert!((k.cross_product(0.3, 0.3) - k.l2_norm_sq / 0.3).abs() < 1e-12);
            for (a, b) in [(0.2f64, 0.5f64), (0.7, 0.1)] {
                let m = a.min(b);
                let q = adaptive_simpson(&|u| k.scaled(u, a) * k.scaled(u, b), -m, m, 1e-13);
                let exact = k.cross_product(a, b);
                assert!((q - exact).abs() < 1e-8 * exact, "{kind:?} {a} {b}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn kernel_constants_match_quadrature() {
        for kind in ALL {
            let k = KernelSpec::new(kind);
            let mass = adaptive_simpson(&|u| k.eval(u), -1.0, 1.0, 1e-13);
            let l2 = adaptive_simpson(&|u| k.eval(u).powi(2), -1.0, 1.0, 1e-13);
            let mu2 = adaptive_simpson(&|u| u * u * k.eval(u), -1.0, 1.0, 1e-13);
            assert!((mass - k.mu0).abs() < 1e-8, "{kind:?} mass {mass}");
            assert!((l2 - k.l2_norm_sq).abs() < 1e-8, "{kind:?} l2 {l2}");
            assert!((mu2 - k.mu2).abs() < 1e-8, "{kind:?} mu2 {mu2}");
            let conv = conv_by_quadrature(&k);
            assert!(
                (conv - conv_norm(&k)).abs() < 1e-8,
                "{kind:?} conv {conv} vs {}",
                k.conv_l2_norm_sq
            );
            // Cauchy-Schwarz / Young: ‖K∗K‖² ≤ ‖K‖²
            assert!(conv <= l2);
        }
    }

    #[test]
    fn kernels_symmetric_and_polynomial_form_agrees() {
        for kind in ALL {
            let k = KernelSpec::new(kind);
            for i in 0..=200 {
                let u = -1.2 + 2.4 * i as f64 / 200.0;
                assert_eq!(k.eval(u), k.eval(-u));
                if u.abs() <= 1.0 {
                    let poly: f64 = k
                        .even_coeffs()
                        .iter()
                        .enumerate()
                        .map(|(m, c)| c * u.powi(2 * m as i32))
                        .sum();
                    assert!((poly - k.eval(u)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_centered_point_moments() {
        let k = KernelSpec::epanechnikov();
        let s = SortedSample::new(&[0.3]);
        let m = local_moments(&s, 0.3, 0.5, &k).unwrap();
        assert_eq!(m.s0, 0.75 / 0.5);
        assert_eq!(m.s1, 0.0);
        assert_eq!(m.s2, 0.0);
    }

    #[test]
    fn windowed_moments_match_full_loop() {
        let k = KernelSpec::epanechnikov();
        let data = [0.12, -0.4, 0.33, 0.05, 0.9];
        let s = SortedSample::new(&data);
        for &(y, b) in &[(0.1, 0.3), (0.0, 1.0), (0.5, 0.45)] {
            let m = local_moments(&s, y, b, &k).unwrap();
            let naive = moments_over(&data, y, b, &k, data.len());
            for (a, e) in [(m.s0, naive.s0), (m.s1, naive.s1), (m.s2, naive.s2)] {
                assert!((a - e).abs() <= 1e-12 * e.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn empty_window_is_an_error() {
        let k = KernelSpec::epanechnikov();
        let s = SortedSample::new(&[0.0, 0.1, 0.2]);
        assert!(matches!(
            local_moments(&s, 5.0, 0.5, &k),
            Err(MarkovError::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn single_distinct_point_is_degenerate() {
        let k = KernelSpec::epanechnikov();
        let s = SortedSample::new(&[0.2, 0.2, 0.2, 3.0]);
        assert!(matches!(
            effective_weights(&s, 0.2, 0.5, &k),
            Err(MarkovError::DegenerateDesign { .. })
        ));
    }

    #[test]
    fn weights_match_normal_equations() {
        // Four-point design, evaluation at the median. Solve the weighted
        // 2x2 normal equations for unit responses e_i directly.
        let k = KernelSpec::epanechnikov();
        let xs = [0.1, 0.35, 0.5, 0.8];
        let y = 0.425;
        let b = 0.6;
        let ew = effective_weights(&SortedSample::new(&xs), y, b, &k).unwrap();
        let n = xs.len() as f64;
        for (m, &i) in ew.indices.iter().enumerate() {
            // alpha-hat for responses e_i: [1 0] (X'WX)^-1 X'W e_i
            let mut a = [[0.0; 2]; 2];
            for &x in &xs {
                let w = k.eval((x - y) / b);
                let d = x - y;
                a[0][0] += w;
                a[0][1] += w * d;
                a[1][1] += w * d * d;
            }
            a[1][0] = a[0][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let wi = k.eval((xs[i] - y) / b);
            let di = xs[i] - y;
            let alpha = (a[1][1] * wi - a[0][1] * wi * di) / det;
            assert!(
                (ew.weights[m] / n - alpha).abs() < 1e-12,
                "{} vs {}",
                ew.weights[m] / n,
                alpha
            );
        }
    }

    #[test]
    fn fit_reproduces_constants_and_lines() {
        let k = KernelSpec::new(KernelKind::Quartic);
        let xs: Vec<f64> = (0..30).map(|i| ((i * 37) % 30) as f64 / 29.0).collect();
        let c: Vec<f64> = vec![2.5; xs.len()];
        let line: Vec<f64> = xs.iter().map(|x| -1.5 * x + 0.25).collect();
        for y in [0.2, 0.5, 0.77] {
            let fc = local_linear_fit(&xs, &c, y, 0.2, &k).unwrap();
            assert!((fc - 2.5).abs() < 1e-12);
            let fl = local_linear_fit(&xs, &line, y, 0.2, &k).unwrap();
            assert!((fl - (-1.5 * y + 0.25)).abs() < 1e-10);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let k = KernelSpec::epanechnikov();
        assert!(local_linear_fit(&[0.0, 1.0], &[1.0], 0.5, 1.0, &k).is_err());
    }
}
