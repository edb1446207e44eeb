//! Batched evaluation of the direct and composed estimators.
//!
//! Composing `r̂(z | x) = n⁻¹ Σ_j a_j(x) p̂(z | Y_j)` at many points naively
//! costs a full inner sum per `(point, j)` pair. Here each inner estimator
//! `p̂(· | Y_j)` is turned once into a table: its nonzero weights sorted by
//! `Z`, with prefix sums of `B_k u_k^q` (`u_k` the scaled, centred response)
//! for every power `q` up to the kernel degree. Because the kernels are
//! polynomials on their support, any query `Σ_k B_k K((Z_k - z) / b2)` is a
//! fixed combination of prefix differences over the binary-searched window,
//! so a query costs `O(log k)` instead of `O(k)`.
//!
//! Work is organised by inner index `j`: the outer windows are transposed so
//! that each table is built once and then queried by every evaluation point
//! whose outer window contains `X_j`.

use std::ops::Range;

use crate::error::{MarkovError, Result};
use crate::kernels::{weights_on_window, KernelSpec};

use super::{finish_composition, TransitionEstimator};

/// Which estimator family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `p̂` and `r̂`.
    Density,
    /// `P̂` and `R̂`.
    Distribution,
    Both,
}

impl Family {
    fn density(self) -> bool {
        matches!(self, Family::Density | Family::Both)
    }

    fn distribution(self) -> bool {
        matches!(self, Family::Distribution | Family::Both)
    }
}

/// Direct and composed 2Δ estimates at a list of `(x, z)` points. Vectors
/// of a family that was not requested are empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleEvaluation {
    pub p_direct: Vec<f64>,
    pub r_indirect: Vec<f64>,
    pub cdf_direct: Vec<f64>,
    pub cdf_indirect: Vec<f64>,
}

/// Estimates on a tensor grid, stored row-major as `[x_index * nz + z_index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub x_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    /// `p̂(z | x, 2Δ)`
    pub p_direct: Vec<f64>,
    /// `r̂(z | x, 2Δ)`
    pub r_indirect: Vec<f64>,
    /// Regression of `p̂²(z | Y_j, Δ)` on `X_j`: the plug-in for
    /// `s(z | x, 2Δ) = E[p²(z | Y) | X = x]`.
    pub s_indirect: Vec<f64>,
    /// `P̂(z | x, 2Δ)`
    pub cdf_direct: Vec<f64>,
    /// `R̂(z | x, 2Δ)`
    pub cdf_indirect: Vec<f64>,
    /// `false` for `x` rows whose local design was degenerate; those rows
    /// are left at zero.
    pub row_ok: Vec<bool>,
}

impl GridEvaluation {
    pub fn at(&self, values: &[f64], ix: usize, iz: usize) -> f64 {
        values[ix * self.z_nodes.len() + iz]
    }
}

/// Sorted-response prefix table for one inner estimator `p̂(· | Y_j)`.
#[derive(Debug, Clone)]
pub(crate) struct InnerTable {
    z: Vec<f64>,
    /// Row `m` holds `Σ_{k<m} B_k u_k^q` for `q = 0..=degree`.
    prefix: Vec<f64>,
    stride: usize,
    center: f64,
    g: f64,
    n: f64,
    kernel: KernelSpec,
    binom: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl InnerTable {
    pub(crate) fn new(kernel: KernelSpec, g: f64, n: usize) -> Self {
        let degree = kernel.degree();
        let mut binom = vec![vec![0.0; degree + 1]; degree + 1];
        for p in 0..=degree {
            binom[p][0] = 1.0;
            for q in 1..=p {
                binom[p][q] = binom[p - 1][q - 1] + if q < p { binom[p - 1][q] } else { 0.0 };
            }
        }
        InnerTable {
            z: Vec::new(),
            prefix: Vec::new(),
            stride: degree + 1,
            center: 0.0,
            g,
            n: n as f64,
            kernel,
            binom,
            weights: Vec::new(),
        }
    }

    /// Rebuilds the table for the inner estimator at `Y_j = y`.
    #[cfg(test)]
    pub(crate) fn rebuild(&mut self, est: &TransitionEstimator, y: f64) -> Result<()> {
        let ys = est.y_sorted();
        let b1 = est.bandwidths().b1;
        let wk = est.w_kernel();
        let win = ys.window(y, b1 * wk.support_radius);
        weights_on_window(&ys.values()[win.clone()], y, b1, wk, ys.len(), &mut self.weights)?;
        let z_all = &est.sample().z;
        let mut pairs = Vec::new();
        for (&i, &b) in ys.order()[win].iter().zip(&self.weights) {
            if b != 0.0 {
                pairs.push((z_all[i], b));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.fill(&pairs);
        Ok(())
    }

    /// Builds the prefix sums from `(Z_k, B_k)` pairs sorted by `Z_k`, all
    /// with nonzero weight.
    fn fill(&mut self, pairs: &[(f64, f64)]) {
        let len = pairs.len();
        self.center = pairs[len / 2].0;
        self.z.clear();
        self.z.extend(pairs.iter().map(|p| p.0));
        self.prefix.clear();
        self.prefix.resize((len + 1) * self.stride, 0.0);
        for (m, &(z, b)) in pairs.iter().enumerate() {
            let u = (z - self.center) / self.g;
            let (head, tail) = self.prefix.split_at_mut((m + 1) * self.stride);
            let prev = &head[m * self.stride..];
            let next = &mut tail[..self.stride];
            let mut term = b;
            for q in 0..self.stride {
                next[q] = prev[q] + term;
                term *= u;
            }
        }
    }

    /// `p̂(z | y, Δ) = n⁻¹ Σ_k B_k K_{b2}(Z_k - z)`.
    #[cfg(test)]
    pub(crate) fn density(&self, z: f64) -> f64 {
        let half = self.g * self.kernel.support_radius;
        let lo = self.z.partition_point(|&v| v < z - half);
        let hi = self.z.partition_point(|&v| v <= z + half);
        self.density_between(z, lo, hi)
    }

    /// [`Self::density`] for queries in nondecreasing `z`, advancing `c`.
    pub(crate) fn density_sweep(&self, z: f64, c: &mut Cursor) -> f64 {
        let half = self.g * self.kernel.support_radius;
        let len = self.z.len();
        while c.lo < len && self.z[c.lo] < z - half {
            c.lo += 1;
        }
        c.hi = c.hi.max(c.lo);
        while c.hi < len && self.z[c.hi] <= z + half {
            c.hi += 1;
        }
        self.density_between(z, c.lo, c.hi)
    }

    fn density_between(&self, z: f64, lo: usize, hi: usize) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let s = self.stride;
        let upper = &self.prefix[hi * s..hi * s + s];
        let lower = &self.prefix[lo * s..lo * s + s];
        let t = (z - self.center) / self.g;
        if s == 3 {
            // Quadratic kernel: c0 S0 + c2 (S2 - 2t S1 + t² S0).
            let c = self.kernel.even_coeffs();
            let d0 = upper[0] - lower[0];
            let d1 = upper[1] - lower[1];
            let d2 = upper[2] - lower[2];
            return (c[0] * d0 + c[1] * (d2 - 2.0 * t * d1 + t * t * d0)) / (self.g * self.n);
        }
        // (-t)^p for p = 0..=degree
        let mut neg_t = [0.0f64; 8];
        neg_t[0] = 1.0;
        for p in 1..s {
            neg_t[p] = neg_t[p - 1] * -t;
        }
        let mut total = 0.0;
        for (m, &c) in self.kernel.even_coeffs().iter().enumerate() {
            let p = 2 * m;
            let mut acc = 0.0;
            for q in 0..=p {
                acc += self.binom[p][q] * neg_t[p - q] * (upper[q] - lower[q]);
            }
            total += c * acc;
        }
        total / (self.g * self.n)
    }

    /// `P̂(z | y, Δ) = n⁻¹ Σ_k B_k I(Z_k < z)`, exact at the extremes.
    #[cfg(test)]
    pub(crate) fn cdf(&self, z: f64) -> f64 {
        self.cdf_below(self.z.partition_point(|&v| v < z))
    }

    /// [`Self::cdf`] for queries in nondecreasing `z`, advancing `c`.
    pub(crate) fn cdf_sweep(&self, z: f64, c: &mut Cursor) -> f64 {
        while c.below < self.z.len() && self.z[c.below] < z {
            c.below += 1;
        }
        self.cdf_below(c.below)
    }

    fn cdf_below(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else if m == self.z.len() {
            1.0
        } else {
            self.prefix[m * self.stride] / self.n
        }
    }
}

/// Forward-only table positions for a run of sorted queries.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Cursor {
    lo: usize,
    hi: usize,
    below: usize,
}

/// Inner tables for a nondecreasing sequence of conditioning values.
///
/// The `Y`-window is kept as a list of sample indices ordered by `Z`; moving
/// to the next `Y_j` only removes and inserts the few points that leave or
/// enter the window, so no per-table sort is needed.
#[derive(Debug, Clone)]
pub(crate) struct SlidingInner {
    pub table: InnerTable,
    members: Vec<u32>,
    lo: usize,
    hi: usize,
    last: f64,
    ybuf: Vec<f64>,
    pairs: Vec<(f64, f64)>,
}

impl SlidingInner {
    pub(crate) fn new(est: &TransitionEstimator) -> Self {
        SlidingInner {
            table: InnerTable::new(*est.k_kernel(), est.bandwidths().b2, est.n()),
            members: Vec::new(),
            lo: 0,
            hi: 0,
            last: f64::NEG_INFINITY,
            ybuf: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn position(&self, z: &[f64], i: u32) -> std::result::Result<usize, usize> {
        let key = z[i as usize];
        self.members
            .binary_search_by(|&m| z[m as usize].total_cmp(&key).then(m.cmp(&i)))
    }

    /// Moves the window to `y` (which must not decrease) and rebuilds the
    /// table. On a degenerate design the window still moves.
    pub(crate) fn advance(&mut self, est: &TransitionEstimator, y: f64) -> Result<()> {
        debug_assert!(y >= self.last, "conditioning values must be nondecreasing");
        self.last = y;
        let ys = est.y_sorted();
        let order = ys.order();
        let z = &est.sample().z;
        let b1 = est.bandwidths().b1;
        let wk = est.w_kernel();
        let win = ys.window(y, b1 * wk.support_radius);
        if win.start >= self.hi || self.members.is_empty() {
            self.members.clear();
            self.members.extend(order[win.clone()].iter().map(|&i| i as u32));
            self.members
                .sort_by(|&a, &b| z[a as usize].total_cmp(&z[b as usize]).then(a.cmp(&b)));
        } else {
            for &i in &order[self.lo..win.start] {
                if let Ok(p) = self.position(z, i as u32) {
                    self.members.remove(p);
                }
            }
            for &i in &order[self.hi.max(win.start)..win.end] {
                if let Err(p) = self.position(z, i as u32) {
                    self.members.insert(p, i as u32);
                }
            }
        }
        self.lo = win.start;
        self.hi = win.end;
        let y_all = &est.sample().y;
        self.ybuf.clear();
        self.ybuf.extend(self.members.iter().map(|&m| y_all[m as usize]));
        weights_on_window(&self.ybuf, y, b1, wk, ys.len(), &mut self.table.weights)?;
        self.pairs.clear();
        for (&m, &b) in self.members.iter().zip(&self.table.weights) {
            if b != 0.0 {
                self.pairs.push((z[m as usize], b));
            }
        }
        let pairs = std::mem::take(&mut self.pairs);
        self.table.fill(&pairs);
        self.pairs = pairs;
        Ok(())
    }
}

/// Outer window around `x` in the sorted `X` sample with its local-linear
/// weights (aligned with the sorted positions in the returned range).
pub(crate) fn outer_window(
    est: &TransitionEstimator,
    x: f64,
    h: f64,
    buf: &mut Vec<f64>,
) -> Result<Range<usize>> {
    let xs = est.x_sorted();
    let wk = est.w_kernel();
    let win = xs.window(x, h * wk.support_radius);
    weights_on_window(&xs.values()[win.clone()], x, h, wk, xs.len(), buf)?;
    Ok(win)
}

/// Direct 2Δ estimates at `z` from an outer window.
fn direct_at(
    est: &TransitionEstimator,
    win: &Range<usize>,
    weights: &[f64],
    z: f64,
    family: Family,
) -> (f64, f64) {
    let order = &est.x_sorted().order()[win.clone()];
    let z_all = &est.sample().z;
    let h2 = est.bandwidths().h2;
    let k = est.k_kernel();
    let mut dens = 0.0;
    let mut cdf = 0.0;
    let mut below = false;
    let mut above = false;
    for (&i, &a) in order.iter().zip(weights) {
        if a == 0.0 {
            continue;
        }
        let zi = z_all[i];
        if family.density() {
            dens += a * k.scaled(zi - z, h2);
        }
        if zi < z {
            cdf += a;
            below = true;
        } else {
            above = true;
        }
    }
    let n = est.n() as f64;
    let cdf = match (below, above) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        _ => cdf / n,
    };
    (dens / n, cdf)
}

impl TransitionEstimator {
    /// Direct and composed estimates at the sample triples `(X_i, Z_i)` for
    /// each `i` in `points`.
    pub fn evaluate_at_sample(&self, points: &[usize], family: Family) -> Result<SampleEvaluation> {
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .map(|&i| (self.sample().x[i], self.sample().z[i]))
            .collect();
        self.evaluate_pairs(&pairs, family)
    }

    /// Direct and composed estimates at arbitrary `(x, z)` points.
    pub fn evaluate_pairs(&self, pairs: &[(f64, f64)], family: Family) -> Result<SampleEvaluation> {
        let bw = *self.bandwidths();
        let n = self.n();
        let np = pairs.len();
        let mut out = SampleEvaluation::default();
        if family.density() {
            out.p_direct.reserve(np);
        }
        if family.distribution() {
            out.cdf_direct.reserve(np);
        }

        // Direct estimates and the outer windows of the composition.
        let mut buf = Vec::new();
        let mut starts = Vec::with_capacity(np);
        let mut outer_weights: Vec<Vec<f64>> = Vec::with_capacity(np);
        for &(x, z) in pairs {
            let win = outer_window(self, x, bw.h1, &mut buf)?;
            let (d, c) = direct_at(self, &win, &buf, z, family);
            if family.density() {
                out.p_direct.push(d);
            }
            if family.distribution() {
                out.cdf_direct.push(c);
            }
            let win3 = if bw.h3 == bw.h1 {
                win
            } else {
                outer_window(self, x, bw.h3, &mut buf)?
            };
            starts.push(win3.start);
            outer_weights.push(buf.clone());
        }

        // Transpose: for every inner index j (keyed by the rank of Y_j, so
        // that inner tables are visited in increasing Y), the points whose
        // outer window contains X_j.
        let x_order = self.x_sorted().order();
        let y_order = self.y_sorted().order();
        let mut y_rank = vec![0usize; n];
        for (t, &j) in y_order.iter().enumerate() {
            y_rank[j] = t;
        }
        let key = |s: usize| y_rank[x_order[s]];
        let mut counts = vec![0usize; n + 1];
        for (p, w) in outer_weights.iter().enumerate() {
            for (off, &a) in w.iter().enumerate() {
                if a != 0.0 {
                    counts[key(starts[p] + off) + 1] += 1;
                }
            }
        }
        for s in 0..n {
            counts[s + 1] += counts[s];
        }
        // Filling in order of the query z makes every bucket sorted by z.
        let mut by_z: Vec<usize> = (0..np).collect();
        by_z.sort_by(|&a, &b| pairs[a].1.total_cmp(&pairs[b].1).then(a.cmp(&b)));
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0.0f64); counts[n]];
        for &p in &by_z {
            let w = &outer_weights[p];
            for (off, &a) in w.iter().enumerate() {
                if a != 0.0 {
                    let s = key(starts[p] + off);
                    entries[fill[s]] = (p as u32, a);
                    fill[s] += 1;
                }
            }
        }
        drop(outer_weights);

        let mut acc_r = vec![0.0; np];
        let mut acc_cdf = vec![0.0; np];
        let mut mass = vec![0.0; np];
        let mut dropped = vec![0usize; np];
        let mut active = vec![0usize; np];
        let mut inner = SlidingInner::new(self);
        for t in 0..n {
            let bucket = &entries[counts[t]..counts[t + 1]];
            if bucket.is_empty() {
                continue;
            }
            let j = y_order[t];
            let ok = match inner.advance(self, self.sample().y[j]) {
                Ok(()) => true,
                Err(MarkovError::DegenerateDesign { .. }) | Err(MarkovError::DegenerateWindow { .. }) => false,
                Err(e) => return Err(e),
            };
            let mut cd = Cursor::default();
            let mut cc = Cursor::default();
            for &(p, a) in bucket {
                let p = p as usize;
                active[p] += 1;
                if !ok {
                    dropped[p] += 1;
                    continue;
                }
                let z = pairs[p].1;
                if family.density() {
                    acc_r[p] += a * inner.table.density_sweep(z, &mut cd);
                }
                if family.distribution() {
                    acc_cdf[p] += a * inner.table.cdf_sweep(z, &mut cc);
                }
                mass[p] += a;
            }
        }
        for p in 0..np {
            let x = pairs[p].0;
            if family.density() {
                out.r_indirect
                    .push(finish_composition(x, acc_r[p], mass[p], dropped[p], active[p], n)?);
            }
            if family.distribution() {
                let v = finish_composition(x, acc_cdf[p], mass[p], dropped[p], active[p], n)?;
                out.cdf_indirect.push(v);
            }
        }
        if family.distribution() {
            // Exact boundary values: every inner P̂ is exactly 0 (or 1) when
            // z is at or below (above) all responses.
            let (zmin, zmax) = self.z_range();
            for (p, &(_, z)) in pairs.iter().enumerate() {
                if z <= zmin {
                    out.cdf_indirect[p] = 0.0;
                } else if z > zmax {
                    out.cdf_indirect[p] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Inner estimates `p̂(z_g | Y_j, Δ)` and `P̂(z_g | Y_j, Δ)` for every
    /// sample index `j` and grid node `z_g`, row-major by `j`. Rows whose
    /// inner design is degenerate are flagged `false`.
    pub(crate) fn inner_matrices(&self, z_nodes: &[f64]) -> Result<InnerMatrices> {
        let n = self.n();
        let g = z_nodes.len();
        let mut density = vec![0.0; n * g];
        let mut cdf = vec![0.0; n * g];
        let mut ok = vec![true; n];
        let mut inner = SlidingInner::new(self);
        for &j in self.y_sorted().order() {
            match inner.advance(self, self.sample().y[j]) {
                Ok(()) => {
                    // Grid nodes are increasing.
                    let (mut cd, mut cc) = (Cursor::default(), Cursor::default());
                    for (c, &z) in z_nodes.iter().enumerate() {
                        density[j * g + c] = inner.table.density_sweep(z, &mut cd);
                        cdf[j * g + c] = inner.table.cdf_sweep(z, &mut cc);
                    }
                }
                Err(MarkovError::DegenerateDesign { .. }) | Err(MarkovError::DegenerateWindow { .. }) => {
                    ok[j] = false;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(InnerMatrices { density, cdf, ok })
    }

    /// Regression on `X` (bandwidth `h`) of per-sample rows: returns
    /// `n⁻¹ Σ_j a_j(x) rows[j][c]` for every column `c`.
    pub(crate) fn regress_rows(
        &self,
        x: f64,
        h: f64,
        rows: &[f64],
        width: usize,
        ok: &[bool],
        buf: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<()> {
        let win = outer_window(self, x, h, buf)?;
        let order = &self.x_sorted().order()[win];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut mass = 0.0;
        let mut dropped = 0;
        let mut active = 0;
        for (&j, &a) in order.iter().zip(buf.iter()) {
            if a == 0.0 {
                continue;
            }
            active += 1;
            if !ok[j] {
                dropped += 1;
                continue;
            }
            mass += a;
            let row = &rows[j * width..(j + 1) * width];
            for (o, &r) in out.iter_mut().zip(row) {
                *o += a * r;
            }
        }
        let n = self.n();
        for o in out.iter_mut() {
            *o = finish_composition(x, *o, mass, dropped, active, n)?;
        }
        Ok(())
    }

    /// All direct and composed estimates on the grid `x_nodes × z_nodes`.
    pub fn evaluate_grid(&self, x_nodes: &[f64], z_nodes: &[f64]) -> Result<GridEvaluation> {
        let nz = z_nodes.len();
        let nx = x_nodes.len();
        let inner = self.inner_matrices(z_nodes)?;
        let squared: Vec<f64> = inner.density.iter().map(|v| v * v).collect();
        let bw = *self.bandwidths();
        let mut grid = GridEvaluation {
            x_nodes: x_nodes.to_vec(),
            z_nodes: z_nodes.to_vec(),
            p_direct: vec![0.0; nx * nz],
            r_indirect: vec![0.0; nx * nz],
            s_indirect: vec![0.0; nx * nz],
            cdf_direct: vec![0.0; nx * nz],
            cdf_indirect: vec![0.0; nx * nz],
            row_ok: vec![true; nx],
        };
        let mut buf = Vec::new();
        for (a, &x) in x_nodes.iter().enumerate() {
            let row = a * nz..(a + 1) * nz;
            let filled = (|| -> Result<()> {
                let win = outer_window(self, x, bw.h1, &mut buf)?;
                for (c, &z) in z_nodes.iter().enumerate() {
                    let (d, f) = direct_at(self, &win, &buf, z, Family::Both);
                    grid.p_direct[a * nz + c] = d;
                    grid.cdf_direct[a * nz + c] = f;
                }
                self.regress_rows(x, bw.h3, &inner.density, nz, &inner.ok, &mut buf, &mut grid.r_indirect[row.clone()])?;
                self.regress_rows(x, bw.h3, &squared, nz, &inner.ok, &mut buf, &mut grid.s_indirect[row.clone()])?;
                self.regress_rows(x, bw.h3, &inner.cdf, nz, &inner.ok, &mut buf, &mut grid.cdf_indirect[row.clone()])
            })();
            match filled {
                Ok(()) => {}
                Err(e) if e.is_local_degeneracy() => {
                    grid.row_ok[a] = false;
                    for v in [
                        &mut grid.p_direct,
                        &mut grid.r_indirect,
                        &mut grid.s_indirect,
                        &mut grid.cdf_direct,
                        &mut grid.cdf_indirect,
                    ] {
                        v[row.clone()].iter_mut().for_each(|x| *x = 0.0);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(grid)
    }
}

/// Inner Δ-estimates on a response grid for every sample index.
#[derive(Debug, Clone)]
pub(crate) struct InnerMatrices {
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub ok: Vec<bool>,
}
