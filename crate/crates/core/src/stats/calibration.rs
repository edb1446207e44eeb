//! Plug-in asymptotic null calibration.
//!
//! Under the Markov null, `(T1 - μ1) / σ1` and `(T2 - μ2) / σ2` are
//! asymptotically standard normal, and `r·T ≈ χ²` with `r = 2μ/σ²` and
//! `μ·r` degrees of freedom. The centring and scale depend on functionals of
//! the unknown transition densities (`Ω11 … Ω15`, `Ω2`, the conditional
//! variance surface `V`); this module estimates them by tensor-product
//! midpoint quadrature over the trimmed support, plugging in the crate's own
//! estimators. For `T1*` only the leading terms survive and they depend on the
//! weight function alone.
//!
//! These approximations are known to be rough at moderate local sample sizes
//! `n·h1·h2`; the bootstrap is the primary calibration and these values are
//! reported as diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{MarkovError, Result};
use crate::estimators::{Bandwidths, TransitionEstimator};
use crate::kernels::KernelNorms;

use super::weights::WeightFunction;

/// Grid nodes per axis.
pub const GRID_NODES: usize = 101;

/// Midpoints of `count` equal cells covering `[lo, hi]`.
pub fn midpoint_nodes(lo: f64, hi: f64, count: usize) -> (Vec<f64>, f64) {
    let step = (hi - lo) / count as f64;
    ((0..count).map(|k| lo + (k as f64 + 0.5) * step).collect(), step)
}

/// Plug-in estimates of the functionals in the null mean and variance.
///
/// Grid surfaces are stored row-major as `[x_index * z_nodes.len() + z_index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginQuantities {
    pub x_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    pub dx: f64,
    pub dz: f64,
    /// `∫ w p²`
    pub omega11: f64,
    /// `∫ w p³`
    pub omega12: f64,
    /// `∫ w s p`
    pub omega13: f64,
    /// `∫ w r² p`
    pub omega14: f64,
    /// `∫ w s* p* (π(z)/π(x))²`
    pub omega15: f64,
    /// `∫ w² p⁴`
    pub omega2: f64,
    /// `∫ w`
    pub weight_integral: f64,
    /// `∫ w²`
    pub weight_sq_integral: f64,
    /// `∫ ω(x) dx` for the `x` marginal of the weight.
    pub omega_x_integral: f64,
    /// `‖ω‖² = ∫ ω²(x) dx`.
    pub omega_x_sq: f64,
    /// `∫ ω(x) E[V(X, Z) | X = x] dx`.
    pub omega_v_integral: f64,
    /// Invariant density estimate at the `x` nodes.
    pub pi_hat: Vec<f64>,
    /// Conditional variance of `P(z | Y, Δ)` given `X = x`, floored at 0.
    pub v_hat: Vec<f64>,
    /// Grid points where the raw `V` estimate fell below `-1e-6`.
    pub v_negative: usize,
    /// Grid rows left out of the quadrature because the local design there
    /// was degenerate (forward `x` rows, reverse `z` rows).
    pub skipped_x_rows: usize,
    pub skipped_z_rows: usize,
    pub p_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    /// Reverse-process `p*(x | z, 2Δ)`.
    pub p_star_hat: Vec<f64>,
    /// Reverse-process `s*(x | z, 2Δ)`.
    pub s_star_hat: Vec<f64>,
}

/// Null mean, scale and chi-square calibration of a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mu: f64,
    pub sigma: f64,
    /// `r` in `r·T ≈ χ²_dof`.
    pub r_scale: f64,
    pub dof: f64,
}

impl Calibration {
    fn from_moments(mu: f64, sigma_sq: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(MarkovError::Calibration(format!("non-positive null mean {mu}")));
        }
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(MarkovError::Calibration(format!("non-positive null variance {sigma_sq}")));
        }
        let r = 2.0 * mu / sigma_sq;
        Ok(Calibration {
            mu,
            sigma: sigma_sq.sqrt(),
            r_scale: r,
            dof: r * mu,
        })
    }
}

/// Kernel density estimate of the invariant density from the `X` sample.
pub fn invariant_density(est: &TransitionEstimator, at: &[f64]) -> Vec<f64> {
    let xs = est.x_sorted();
    let h = est.bandwidths().h1;
    let k = est.w_kernel();
    let n = xs.len() as f64;
    at.iter()
        .map(|&x| {
            let win = xs.window(x, h * k.support_radius);
            xs.values()[win].iter().map(|&v| k.scaled(v - x, h)).sum::<f64>() / n
        })
        .collect()
}

/// Integration box for a weight: its own box in each direction, or the
/// full response range when the weight depends on `x` alone.
fn integration_box(est: &TransitionEstimator, w: &WeightFunction) -> Result<((f64, f64), (f64, f64))> {
    let xb = (w.x_box.lo, w.x_box.hi);
    let zb = match &w.z_box {
        Some(b) => (b.lo, b.hi),
        None => est.z_range(),
    };
    if !(xb.1 > xb.0 && zb.1 > zb.0) {
        return Err(MarkovError::Calibration("degenerate integration support".into()));
    }
    Ok((xb, zb))
}

/// `∫ w` and `∫ w²` by midpoint quadrature on the weight's own box.
pub fn weight_integrals(w: &WeightFunction) -> Result<(f64, f64)> {
    let zb = w
        .z_box
        .ok_or_else(|| MarkovError::Calibration("weight has no z support".into()))?;
    if !(w.x_box.hi > w.x_box.lo && zb.hi > zb.lo) {
        return Err(MarkovError::Calibration("degenerate integration support".into()));
    }
    let (xn, dx) = midpoint_nodes(w.x_box.lo, w.x_box.hi, GRID_NODES);
    let (zn, dz) = midpoint_nodes(zb.lo, zb.hi, GRID_NODES);
    let mut a = 0.0;
    let mut b = 0.0;
    for &x in &xn {
        for &z in &zn {
            let v = w.eval(x, z);
            a += v;
            b += v * v;
        }
    }
    Ok((a * dx * dz, b * dx * dz))
}

/// Estimates every plug-in functional for weight `w`.
pub fn estimate_plugin_quantities(est: &TransitionEstimator, w: &WeightFunction) -> Result<PluginQuantities> {
    let ((xlo, xhi), (zlo, zhi)) = integration_box(est, w)?;
    let (x_nodes, dx) = midpoint_nodes(xlo, xhi, GRID_NODES);
    let (z_nodes, dz) = midpoint_nodes(zlo, zhi, GRID_NODES);
    let nx = x_nodes.len();
    let nz = z_nodes.len();
    let cell = dx * dz;
    let bw = *est.bandwidths();

    let fwd = est.evaluate_grid(&x_nodes, &z_nodes)?;
    // Reverse process: condition on the later value z, respond in x.
    let rev = est.reversed()?.evaluate_grid(&z_nodes, &x_nodes)?;
    let pi_x = invariant_density(est, &x_nodes);
    let pi_z = invariant_density(est, &z_nodes);

    let mut p_star = vec![0.0; nx * nz];
    let mut s_star = vec![0.0; nx * nz];
    for a in 0..nx {
        for c in 0..nz {
            p_star[a * nz + c] = rev.p_direct[c * nx + a];
            s_star[a * nz + c] = rev.s_indirect[c * nx + a];
        }
    }

    let (mut o11, mut o12, mut o13, mut o14, mut o15, mut o2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut wi, mut wi2) = (0.0, 0.0);
    for a in 0..nx {
        for c in 0..nz {
            let g = a * nz + c;
            let wv = w.eval(x_nodes[a], z_nodes[c]);
            if wv == 0.0 || !fwd.row_ok[a] {
                continue;
            }
            let p = fwd.p_direct[g];
            let r = fwd.r_indirect[g];
            let s = fwd.s_indirect[g];
            let ratio = pi_z[c] / pi_x[a].max(1e-12);
            o11 += wv * p * p;
            o12 += wv * p * p * p;
            o13 += wv * s * p;
            o14 += wv * r * r * p;
            if rev.row_ok[c] {
                o15 += wv * s_star[g] * p_star[g] * ratio * ratio;
            }
            o2 += wv * wv * p.powi(4);
            wi += wv;
            wi2 += wv * wv;
        }
    }

    // V(x, z): regression on X of squared residuals P̂(z | Y_j) - R̂(z | X_j).
    let inner = est.inner_matrices(&z_nodes)?;
    let n = est.n();
    let mut resid = vec![0.0; n * nz];
    let mut ok = inner.ok.clone();
    let mut buf = Vec::new();
    let mut row = vec![0.0; nz];
    for j in 0..n {
        if !ok[j] {
            continue;
        }
        match est.regress_rows(est.sample().x[j], bw.h3, &inner.cdf, nz, &inner.ok, &mut buf, &mut row) {
            Ok(()) => {
                for c in 0..nz {
                    resid[j * nz + c] = (inner.cdf[j * nz + c] - row[c]).powi(2);
                }
            }
            Err(e) if e.is_local_degeneracy() => ok[j] = false,
            Err(e) => return Err(e),
        }
    }
    let mut v_hat = vec![0.0; nx * nz];
    let mut v_negative = 0;
    let (mut ox, mut ox2, mut ov) = (0.0, 0.0, 0.0);
    for a in 0..nx {
        let om = w.x_box.eval(x_nodes[a]);
        ox += om;
        ox2 += om * om;
        let out = &mut v_hat[a * nz..(a + 1) * nz];
        if !fwd.row_ok[a] {
            continue;
        }
        match est.regress_rows(x_nodes[a], bw.h3, &resid, nz, &ok, &mut buf, out) {
            Ok(()) => {}
            Err(e) if e.is_local_degeneracy() => {
                out.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            Err(e) => return Err(e),
        }
        let mut vbar = 0.0;
        for c in 0..nz {
            if out[c] < -1e-6 {
                v_negative += 1;
            }
            out[c] = out[c].max(0.0);
            vbar += out[c] * fwd.p_direct[a * nz + c] * dz;
        }
        ov += om * vbar;
    }

    Ok(PluginQuantities {
        x_nodes,
        z_nodes,
        dx,
        dz,
        omega11: o11 * cell,
        omega12: o12 * cell,
        omega13: o13 * cell,
        omega14: o14 * cell,
        omega15: o15 * cell,
        omega2: o2 * cell,
        weight_integral: wi * cell,
        weight_sq_integral: wi2 * cell,
        omega_x_integral: ox * dx,
        omega_x_sq: ox2 * dx,
        omega_v_integral: ov * dx,
        pi_hat: pi_x,
        v_hat,
        v_negative,
        skipped_x_rows: fwd.row_ok.iter().filter(|&&k| !k).count(),
        skipped_z_rows: rev.row_ok.iter().filter(|&&k| !k).count(),
        p_hat: fwd.p_direct,
        r_hat: fwd.r_indirect,
        s_hat: fwd.s_indirect,
        p_star_hat: p_star,
        s_star_hat: s_star,
    })
}

/// Null mean of `T1` from its five leading terms.
pub fn t1_null_mean(q: &PluginQuantities, bw: &Bandwidths, norms: &KernelNorms) -> f64 {
    q.omega11 * norms.w_l2 * norms.k_l2 / (bw.h1 * bw.h2) - q.omega12 * norms.w_l2 / bw.h1
        + (q.omega13 - q.omega14) * norms.w_l2 / bw.h3
        + q.omega15 * norms.k_l2 / bw.b2
}

/// `(μ1, σ1, r1, a_n)` for `T1`.
pub fn calibrate_t1(q: &PluginQuantities, bw: &Bandwidths, norms: &KernelNorms) -> Result<Calibration> {
    let mu = t1_null_mean(q, bw, norms);
    let var = 2.0 * q.omega2 * norms.w_conv * norms.k_conv / (bw.h1 * bw.h2);
    Calibration::from_moments(mu, var)
}

/// `(μ1*, σ1*, r1*, a_n*)` for `T1*`: the leading terms with `w` replaced by
/// `p⁻² w*`, which reduce to `∫ w*` and `∫ w*²`.
pub fn calibrate_t1_star(
    weight_integral: f64,
    weight_sq_integral: f64,
    bw: &Bandwidths,
    norms: &KernelNorms,
) -> Result<Calibration> {
    let num = weight_integral * norms.w_l2 * norms.k_l2;
    let den = weight_sq_integral * norms.w_conv * norms.k_conv;
    let r = num / den;
    let dof = num * num / den / (bw.h1 * bw.h2);
    let mu = dof / r;
    Calibration::from_moments(mu, 2.0 * mu / r)
}

/// `(μ2, σ2, r2, b_n)` for `T2`. `w_cross` is `∫ W_h1 W_h3`.
///
/// The `V` term carries `‖W‖²/h3 - 2∫ W_h1 W_h3`: the direct regression on
/// `1{Z < z}` and the composing regression on `P(z | Y)` share the spread of
/// `P(z | Y_j)` among nearby `X_j`, so their cross term does not vanish when
/// `h1` and `h3` are of the same order. With `h1 = h3` the coefficient is
/// `-‖W‖²/h1`.
pub fn calibrate_t2(
    omega_integral: f64,
    omega_sq: f64,
    omega_v_integral: f64,
    bw: &Bandwidths,
    norms: &KernelNorms,
    w_cross: f64,
) -> Result<Calibration> {
    let mu = norms.w_l2 / (6.0 * bw.h1) * omega_integral + (norms.w_l2 / bw.h3 - 2.0 * w_cross) * omega_v_integral;
    let var = norms.w_conv * omega_sq / (45.0 * bw.h1);
    Calibration::from_moments(mu, var)
}
