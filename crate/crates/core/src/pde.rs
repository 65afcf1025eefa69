//! Grid solution of the Parisi PDE for atomic order parameters.
//!
//! On a level where the distribution function equals a constant `m`, the PDE is
//! solved exactly by a Cole-Hopf step `Phi(x, u) = (1/m) log E exp(m Phi(x + sqrt(v) z, u'))`
//! with `v = xi'(u') - xi'(u)`. Steps are taken slice by slice from the closed form
//! above the last atom down to `u = 0`.
//!
//! Spatial derivatives are carried through each step as moments of the tilted
//! Gaussian weights `w ~ exp(m Phi)`:
//!
//! * `Phi'   = E_w Phi'`
//! * `Phi''  = E_w Phi'' + m Var_w Phi'`
//! * `Phi''' = E_w Phi''' + 3m Cov_w(Phi', Phi'') + m^2 K3_w(Phi')`
//!
//! so `|Phi'| <= 1` and `Phi'' >= 0` hold by construction.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc;
use crate::measure::{OrderParameter, RsbMeasure};
use crate::mixture::Mixture;
use crate::quad::{interp_lagrange, GaussHermite};

/// Discretization parameters of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Half-width of the spatial grid `[-x_max, x_max]`.
    pub x_max: f64,
    /// Number of spatial nodes; odd so that the origin is a node.
    pub n_x: usize,
    /// Number of uniform `u` slices before the atom locations are inserted.
    pub n_u: usize,
    /// Gauss-Hermite order for steps narrower than two grid cells.
    pub quad_order: usize,
}

/// Smallest admissible `x_max` for a mixture.
pub fn min_x_max(mix: &Mixture) -> f64 {
    6.0 * mix.xi_p(1.0).sqrt() + 8.0
}

impl GridParams {
    /// Default grid: `x_max = 6 sqrt(xi'(1)) + 8`, 2049 nodes, 513 slices, order 40.
    pub fn for_mixture(mix: &Mixture) -> Self {
        Self { x_max: min_x_max(mix), n_x: 2049, n_u: 513, quad_order: 40 }
    }

    /// Same grid with twice the spatial resolution and quadrature order.
    pub fn refined(&self) -> Self {
        Self { n_x: 2 * self.n_x - 1, quad_order: 2 * self.quad_order, ..*self }
    }

    pub fn validate(&self, mix: &Mixture) -> Result<()> {
        if self.n_x < 256 || self.n_x % 2 == 0 {
            return Err(Error::InvalidGrid(format!("n_x = {} must be odd and at least 256", self.n_x)));
        }
        if self.quad_order < 20 {
            return Err(Error::InvalidGrid(format!("quad_order = {} is below 20", self.quad_order)));
        }
        if self.n_u < 2 {
            return Err(Error::InvalidGrid("need at least two u slices".into()));
        }
        let need = min_x_max(mix);
        if !(self.x_max >= need * (1.0 - 1e-12)) {
            return Err(Error::InvalidGrid(format!("x_max = {} is below {need}", self.x_max)));
        }
        Ok(())
    }
}

/// One stored `u` slice: `Phi` and its first three spatial derivatives on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub u: f64,
    pub phi: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
}

impl Slice {
    /// Field `j` (0 for `Phi`, 1..3 for the derivatives).
    pub fn field(&self, j: usize) -> &[f64] {
        match j {
            0 => &self.phi,
            1 => &self.d1,
            2 => &self.d2,
            _ => &self.d3,
        }
    }
}

/// `log cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `(tanh x, sech^2 x, -2 sech^2 x tanh x)` computed from `exp(-2|x|)`.
fn log_cosh_derivatives(x: f64) -> (f64, f64, f64) {
    let e = (-2.0 * x.abs()).exp();
    let t = x.signum() * (1.0 - e) / (1.0 + e);
    let s2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    (t, s2, -2.0 * s2 * t)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Grid {
    pub x_max: f64,
    pub n: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(p: &GridParams) -> Self {
        Self { x_max: p.x_max, n: p.n_x, dx: 2.0 * p.x_max / (p.n_x - 1) as f64 }
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_max + i as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Field value at grid index `idx`, which may lie outside the grid. `Phi` is
    /// continued with slope one in `|x|`, derivatives by their boundary values.
    fn sample_index(&self, values: &[f64], idx: isize, field: usize) -> f64 {
        let n = self.n as isize;
        if idx < 0 {
            let base = values[0];
            if field == 0 {
                base + (-idx) as f64 * self.dx
            } else {
                base
            }
        } else if idx >= n {
            let base = values[self.n - 1];
            if field == 0 {
                base + (idx - n + 1) as f64 * self.dx
            } else {
                base
            }
        } else {
            values[idx as usize]
        }
    }

    /// Quintic interpolation with the same continuation outside the grid.
    pub fn sample(&self, values: &[f64], y: f64, field: usize) -> f64 {
        if y < -self.x_max {
            let base = values[0];
            return if field == 0 { base + (-self.x_max - y) } else { base };
        }
        if y > self.x_max {
            let base = values[self.n - 1];
            return if field == 0 { base + (y - self.x_max) } else { base };
        }
        interp_lagrange(values, -self.x_max, self.dx, y, 6)
    }

    pub fn closed_form(&self, mix: &Mixture, u: f64) -> Slice {
        let shift = 0.5 * (mix.xi_p(1.0) - mix.xi_p(u));
        let mut s = Slice {
            u,
            phi: Vec::with_capacity(self.n),
            d1: Vec::with_capacity(self.n),
            d2: Vec::with_capacity(self.n),
            d3: Vec::with_capacity(self.n),
        };
        for i in 0..self.n {
            let x = self.x(i);
            let (t, s2, t3) = log_cosh_derivatives(x);
            s.phi.push(log_cosh(x) + shift);
            s.d1.push(t);
            s.d2.push(s2);
            s.d3.push(t3);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Node {
    lw: f64,
    w: f64,
    phi: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

/// Tilted average of the nodes: `(Phi, Phi', Phi'', Phi''')` after one Cole-Hopf step.
fn combine(nodes: &mut [Node], m: f64, derivs: bool) -> Option<[f64; 4]> {
    if m == 0.0 {
        let mut out = [0.0; 4];
        for nd in nodes.iter() {
            out[0] += nd.w * nd.phi;
            out[1] += nd.w * nd.d1;
            out[2] += nd.w * nd.d2;
            out[3] += nd.w * nd.d3;
        }
        return Some(out);
    }
    let phi;
    if m < 1e-2 {
        // Small m: expand around the plain mean so nothing cancels.
        let s: f64 = nodes.iter().map(|nd| nd.w * nd.phi).sum();
        let mut acc = 0.0;
        for nd in nodes.iter_mut() {
            let e = (m * (nd.phi - s)).exp_m1();
            acc += nd.w * e;
            nd.lw = e;
        }
        let total = 1.0 + acc;
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        phi = s + acc.ln_1p() / m;
        for nd in nodes.iter_mut() {
            nd.w = nd.w * (1.0 + nd.lw) / total;
        }
    } else {
        // Shift by the dominant term of sum w exp(m Phi).
        let top = nodes
            .iter()
            .filter(|nd| nd.w > 0.0)
            .map(|nd| nd.lw + m * nd.phi)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for nd in nodes.iter_mut() {
            let t = if nd.w > 0.0 { (nd.lw + m * nd.phi - top).exp() } else { 0.0 };
            nd.w = t;
            total += t;
        }
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        phi = (top + total.ln()) / m;
        for nd in nodes.iter_mut() {
            nd.w /= total;
        }
    }
    if !derivs {
        return Some([phi, 0.0, 0.0, 0.0]);
    }
    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    for nd in nodes.iter() {
        m1 += nd.w * nd.d1;
        m2 += nd.w * nd.d2;
        m3 += nd.w * nd.d3;
    }
    let (mut var, mut cov, mut k3) = (0.0, 0.0, 0.0);
    for nd in nodes.iter() {
        let a = nd.d1 - m1;
        let b = nd.d2 - m2;
        var += nd.w * a * a;
        cov += nd.w * a * b;
        k3 += nd.w * a * a * a;
    }
    Some([phi, m1, m2 + m * var, m3 + 3.0 * m * cov + m * m * k3])
}

/// Gaussian-step engine shared by the full solver, the level-to-level evaluator and
/// the on-demand slices.
pub(crate) struct Stepper {
    pub grid: Grid,
    gh: GaussHermite,
    gh_log_weights: Vec<f64>,
}

impl Stepper {
    pub fn new(params: &GridParams) -> Self {
        let gh = GaussHermite::new(params.quad_order);
        let total: f64 = gh.weights().iter().sum();
        let gh_log_weights = gh.weights().iter().map(|w| (w / total).ln()).collect();
        Self { grid: Grid::new(params), gh, gh_log_weights }
    }

    /// Fills `buf` with the Gaussian nodes around `x_i` (grid index `i`, or the
    /// off-grid point `x` when `i` is `None`).
    fn nodes(&self, src: &Slice, x: f64, i: Option<usize>, var: f64, buf: &mut Vec<Node>) {
        buf.clear();
        let sd = var.sqrt();
        let g = &self.grid;
        if sd >= 2.0 * g.dx && i.is_some() {
            let i = i.unwrap() as isize;
            let half = (9.0 * sd / g.dx).ceil() as isize;
            let log_norm = {
                let s: f64 = (-half..=half)
                    .map(|j| (-(j as f64 * g.dx).powi(2) / (2.0 * var)).exp())
                    .sum();
                s.ln()
            };
            for j in -half..=half {
                let lw = -(j as f64 * g.dx).powi(2) / (2.0 * var) - log_norm;
                let idx = i + j;
                buf.push(Node {
                    lw,
                    w: lw.exp(),
                    phi: g.sample_index(&src.phi, idx, 0),
                    d1: g.sample_index(&src.d1, idx, 1),
                    d2: g.sample_index(&src.d2, idx, 2),
                    d3: g.sample_index(&src.d3, idx, 3),
                });
            }
        } else if sd >= 2.0 * g.dx {
            // Off-grid target with a wide kernel: trapezoid on a shifted uniform lattice.
            let half = (9.0 * sd / g.dx).ceil() as isize;
            let mut lws = Vec::with_capacity((2 * half + 1) as usize);
            for j in -half..=half {
                lws.push(-(j as f64 * g.dx).powi(2) / (2.0 * var));
            }
            let norm: f64 = lws.iter().map(|l| l.exp()).sum::<f64>().ln();
            for (jj, lw) in (-half..=half).zip(lws) {
                let y = x + jj as f64 * g.dx;
                let lw = lw - norm;
                buf.push(Node {
                    lw,
                    w: lw.exp(),
                    phi: g.sample(&src.phi, y, 0),
                    d1: g.sample(&src.d1, y, 1),
                    d2: g.sample(&src.d2, y, 2),
                    d3: g.sample(&src.d3, y, 3),
                });
            }
        } else {
            for (k, &z) in self.gh.nodes().iter().enumerate() {
                let y = x + sd * z;
                let lw = self.gh_log_weights[k];
                buf.push(Node {
                    lw,
                    w: lw.exp(),
                    phi: g.sample(&src.phi, y, 0),
                    d1: g.sample(&src.d1, y, 1),
                    d2: g.sample(&src.d2, y, 2),
                    d3: g.sample(&src.d3, y, 3),
                });
            }
        }
    }

    /// One Cole-Hopf step of variance `var` with level parameter `m`, on every node.
    pub fn step(&self, src: &Slice, u: f64, var: f64, m: f64, derivs: bool) -> Result<Slice> {
        if var <= 0.0 {
            let mut out = src.clone();
            out.u = u;
            return Ok(out);
        }
        let g = self.grid;
        let rows: Vec<Option<[f64; 4]>> = (0..g.n)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                self.nodes(src, g.x(i), Some(i), var, buf);
                combine(buf, m, derivs)
            })
            .collect();
        let mut out = Slice {
            u,
            phi: Vec::with_capacity(g.n),
            d1: Vec::with_capacity(g.n),
            d2: Vec::with_capacity(g.n),
            d3: Vec::with_capacity(g.n),
        };
        for r in rows {
            let r = r.ok_or(Error::QuadratureUnderflow { u })?;
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::QuadratureUnderflow { u });
            }
            out.phi.push(r[0]);
            out.d1.push(r[1]);
            out.d2.push(r[2]);
            out.d3.push(r[3]);
        }
        Ok(out)
    }

    /// Grid-index half-width read by a step of variance `var`, stencil included.
    fn reach(&self, var: f64) -> usize {
        if var <= 0.0 {
            return 4;
        }
        let sd = var.sqrt();
        let zmax = self.gh.nodes().last().copied().unwrap_or(0.0);
        let span = if sd >= 2.0 * self.grid.dx { 9.0 * sd } else { zmax * sd };
        (span / self.grid.dx).ceil() as usize + 4
    }

    /// Value-only step on the index range `lo..=hi`. Nodes outside the range hold
    /// NaN unless the range touches the grid edge.
    fn step_values(&self, src: &Slice, u: f64, var: f64, m: f64, lo: usize, hi: usize) -> Result<Slice> {
        let g = self.grid;
        let mut phi = vec![f64::NAN; g.n];
        let mut buf = Vec::new();
        for (i, out) in phi.iter_mut().enumerate().take(hi + 1).skip(lo) {
            if var <= 0.0 {
                *out = src.phi[i];
                continue;
            }
            self.value_nodes(src, g.x(i), i, var, &mut buf);
            let r = combine(&mut buf, m, false).ok_or(Error::QuadratureUnderflow { u })?;
            if !r[0].is_finite() {
                return Err(Error::QuadratureUnderflow { u });
            }
            *out = r[0];
        }
        Ok(Slice { u, phi, d1: Vec::new(), d2: Vec::new(), d3: Vec::new() })
    }

    fn value_nodes(&self, src: &Slice, x: f64, i: usize, var: f64, buf: &mut Vec<Node>) {
        buf.clear();
        let sd = var.sqrt();
        let g = &self.grid;
        if sd >= 2.0 * g.dx {
            let half = (9.0 * sd / g.dx).ceil() as isize;
            let lws: Vec<f64> = (-half..=half).map(|j| -(j as f64 * g.dx).powi(2) / (2.0 * var)).collect();
            let norm = lws.iter().map(|l| l.exp()).sum::<f64>().ln();
            for (j, lw) in (-half..=half).zip(lws) {
                let lw = lw - norm;
                let phi = g.sample_index(&src.phi, i as isize + j, 0);
                buf.push(Node { lw, w: lw.exp(), phi, ..Node::default() });
            }
        } else {
            for (k, &z) in self.gh.nodes().iter().enumerate() {
                let lw = self.gh_log_weights[k];
                let phi = g.sample(&src.phi, x + sd * z, 0);
                buf.push(Node { lw, w: lw.exp(), phi, ..Node::default() });
            }
        }
    }
}

fn check_boundary(slice: &Slice, dx: f64) -> Result<()> {
    let n = slice.phi.len();
    let slope = if slice.d1.iter().all(|v| *v == 0.0) {
        (slice.phi[n - 1] - slice.phi[n - 2]) / dx
    } else {
        slice.d1[n - 1].abs().min(slice.d1[0].abs())
    };
    if (slope - 1.0).abs() > 1e-6 {
        return Err(Error::GridTooSmall { boundary_slope: slope });
    }
    Ok(())
}

/// `Phi_mu(0, 0)` by one Cole-Hopf step per level, without derivatives.
///
/// Each level is evaluated only on the nodes that the levels below can reach from
/// the origin.
pub(crate) fn phi_at_origin(mix: &Mixture, mu: &RsbMeasure, params: &GridParams) -> Result<f64> {
    params.validate(mix)?;
    let stepper = Stepper::new(params);
    let grid = stepper.grid;
    let (m, q) = (mu.m(), mu.q());
    let k = mu.k();
    let vars: Vec<f64> = (0..=k).map(|p| (mix.xi_p(q[p + 1]) - mix.xi_p(q[p])).max(0.0)).collect();
    // reach[p]: index half-width needed on the slice at q_p.
    let mut reach = vec![0usize; k + 2];
    for p in 1..=k + 1 {
        reach[p] = reach[p - 1] + stepper.reach(vars[p - 1]);
    }
    let centre = (grid.n - 1) / 2;
    let mut slice = grid.closed_form(mix, q[k + 1]);
    for p in (0..=k).rev() {
        if p == 0 {
            if vars[0] <= 0.0 {
                return Ok(slice.phi[centre]);
            }
            let mut buf = Vec::new();
            stepper.value_nodes(&slice, 0.0, centre, vars[0], &mut buf);
            let r = combine(&mut buf, m[0], false).ok_or(Error::QuadratureUnderflow { u: 0.0 })?;
            return Ok(r[0]);
        }
        let lo = centre.saturating_sub(reach[p]);
        let hi = (centre + reach[p]).min(grid.n - 1);
        slice = stepper.step_values(&slice, q[p], vars[p], m[p], lo, hi)?;
    }
    unreachable!("loop returns at the bottom level")
}

/// Gridded solution `Phi_mu(x, u)` with spatial derivatives up to order three.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    params: GridParams,
    slices: Vec<Slice>,
    measure: RsbMeasure,
    mixture: Mixture,
}

/// Solves the Parisi PDE for an atomic measure on the given grid.
///
/// ```
/// use parisi::{pde::{solve_pde, GridParams}, Mixture, RsbMeasure};
///
/// let mix = Mixture::sk(0.8);
/// let mut grid = GridParams::for_mixture(&mix);
/// grid.n_u = 33;
/// let sol = solve_pde(&mix, &RsbMeasure::dirac(0.0).unwrap(), &grid).unwrap();
/// let expected = 0.5f64.cosh().ln() + 0.5 * (1.28 - 1.28 * 0.25);
/// assert!((sol.eval_phi(0.5, 0.25, 0).unwrap() - expected).abs() < 1e-9);
/// ```
pub fn solve_pde(mix: &Mixture, mu: &RsbMeasure, params: &GridParams) -> Result<PdeSolution> {
    params.validate(mix)?;
    let stepper = Stepper::new(params);
    let grid = stepper.grid;
    let top_atom = mu.q()[mu.k() + 1];
    let mut us: Vec<f64> = (0..params.n_u).map(|i| i as f64 / (params.n_u - 1) as f64).collect();
    us.extend_from_slice(&mu.q()[1..=mu.k() + 1]);
    us.sort_by(f64::total_cmp);
    us.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    // Keep atom locations exact after deduplication.
    for u in us.iter_mut() {
        if let Some(q) = mu.q().iter().find(|q| (**q - *u).abs() < 1e-14) {
            *u = *q;
        }
    }
    let mut slices: Vec<Slice> = Vec::with_capacity(us.len());
    let mut below: Option<Slice> = None;
    for &u in us.iter().rev() {
        let slice = match &below {
            Some(prev) if u < top_atom => {
                let var = mix.xi_p(prev.u) - mix.xi_p(u);
                stepper.step(prev, u, var, mu.cdf(u), true)?
            }
            _ => grid.closed_form(mix, u),
        };
        check_boundary(&slice, grid.dx)?;
        below = Some(slice.clone());
        slices.push(slice);
    }
    slices.reverse();
    Ok(PdeSolution { params: *params, slices, measure: mu.clone(), mixture: mix.clone() })
}

impl PdeSolution {
    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn measure(&self) -> &RsbMeasure {
        &self.measure
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub(crate) fn grid(&self) -> Grid {
        Grid::new(&self.params)
    }

    pub fn x_grid(&self) -> Vec<f64> {
        self.grid().xs()
    }

    pub fn u_slices(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.u).collect()
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    /// Index of the stored slice at exactly `u`, if any.
    pub fn slice_index(&self, u: f64) -> Option<usize> {
        self.slices.iter().position(|s| s.u == u)
    }

    /// `Phi(., u)` and derivatives at any `u`, by one exact step from the stored
    /// slice just above.
    pub fn slice_at(&self, u: f64) -> Result<Slice> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain { value: u, domain: "[0, 1]" });
        }
        let j = self.slices.partition_point(|s| s.u < u);
        let above = &self.slices[j.min(self.slices.len() - 1)];
        if above.u == u {
            return Ok(above.clone());
        }
        let grid = self.grid();
        if u >= self.measure.q()[self.measure.k() + 1] {
            return Ok(grid.closed_form(&self.mixture, u));
        }
        let var = self.mixture.xi_p(above.u) - self.mixture.xi_p(u);
        Stepper::new(&self.params).step(above, u, var, self.measure.cdf(u), true)
    }

    /// `d^j/dx^j Phi(x, u)`: cubic interpolation in `x`, linear in `u`.
    pub fn eval_phi(&self, x: f64, u: f64, j: usize) -> Result<f64> {
        if x.abs() > self.params.x_max {
            return Err(Error::Domain { value: x, domain: "[-x_max, x_max]" });
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain { value: u, domain: "[0, 1]" });
        }
        if j > 3 {
            return Err(Error::Domain { value: j as f64, domain: "derivative order 0..=3" });
        }
        let grid = self.grid();
        let at = |s: &Slice| interp_lagrange(s.field(j), -grid.x_max, grid.dx, x, 4);
        let hi = self.slices.partition_point(|s| s.u < u).min(self.slices.len() - 1);
        let upper = &self.slices[hi];
        if upper.u == u || hi == 0 {
            return Ok(at(upper));
        }
        let lower = &self.slices[hi - 1];
        let t = (u - lower.u) / (upper.u - lower.u);
        Ok((1.0 - t) * at(lower) + t * at(upper))
    }

    /// Writes the binary dump: magic, version, sizes, then row-major doubles.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<()> {
        self.write_dump_inner(w).map_err(|e| Error::Dump(e.to_string()))
    }

    fn write_dump_inner<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_u32::<LittleEndian>(DUMP_VERSION)?;
        w.write_u64::<LittleEndian>(self.params.n_x as u64)?;
        w.write_u64::<LittleEndian>(self.slices.len() as u64)?;
        w.write_u64::<LittleEndian>(self.params.n_u as u64)?;
        w.write_u64::<LittleEndian>(self.params.quad_order as u64)?;
        w.write_f64::<LittleEndian>(self.params.x_max)?;
        for s in &self.slices {
            w.write_f64::<LittleEndian>(s.u)?;
        }
        for j in 0..4 {
            for s in &self.slices {
                for &v in s.field(j) {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        for doc in [
            serde_json::to_vec(&self.measure).expect("measure serializes"),
            serde_json::to_vec(&self.mixture).expect("mixture serializes"),
        ] {
            w.write_u64::<LittleEndian>(doc.len() as u64)?;
            w.write_all(&doc)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`PdeSolution::write_dump`].
    pub fn read_dump<R: Read>(r: &mut R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Dump(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Dump("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != DUMP_VERSION {
            return Err(Error::Dump(format!("unsupported version {version}")));
        }
        let n_x = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let n_slices = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let n_u = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let quad_order = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let x_max = r.read_f64::<LittleEndian>().map_err(io)?;
        if n_x == 0 || n_slices == 0 || n_x.saturating_mul(n_slices) > 1 << 28 {
            return Err(Error::Dump("implausible dimensions".into()));
        }
        let mut us = vec![0.0; n_slices];
        r.read_f64_into::<LittleEndian>(&mut us).map_err(io)?;
        let mut fields: Vec<Vec<Vec<f64>>> = Vec::with_capacity(4);
        for _ in 0..4 {
            let mut rows = Vec::with_capacity(n_slices);
            for _ in 0..n_slices {
                let mut row = vec![0.0; n_x];
                r.read_f64_into::<LittleEndian>(&mut row).map_err(io)?;
                rows.push(row);
            }
            fields.push(rows);
        }
        let mut docs = Vec::with_capacity(2);
        for _ in 0..2 {
            let len = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            if len > 1 << 24 {
                return Err(Error::Dump("implausible document length".into()));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(io)?;
            docs.push(buf);
        }
        let measure: RsbMeasure =
            serde_json::from_slice(&docs[0]).map_err(|e| Error::Dump(e.to_string()))?;
        let mixture: Mixture =
            serde_json::from_slice(&docs[1]).map_err(|e| Error::Dump(e.to_string()))?;
        let [phi, d1, d2, d3]: [Vec<Vec<f64>>; 4] = fields.try_into().expect("four fields");
        let slices = us
            .into_iter()
            .zip(phi)
            .zip(d1)
            .zip(d2)
            .zip(d3)
            .map(|((((u, phi), d1), d2), d3)| Slice { u, phi, d1, d2, d3 })
            .collect();
        Ok(Self { params: GridParams { x_max, n_x, n_u, quad_order }, slices, measure, mixture })
    }
}

const DUMP_MAGIC: &[u8; 8] = b"PARISIPD";
const DUMP_VERSION: u32 = 1;

/// Monte Carlo estimate of `d^j/dx^j Phi(x, u)` from the path representation
/// `E F_j(dV, ..., d^{j-1}V, tanh(x + M(1) - M(u))) exp V(x, u)`.
///
/// Spatial derivatives of `V` are central differences with step `1e-3` on the same
/// path. Returns `(estimate, standard error)`.
pub fn mc_derivative_oracle(
    sol: &PdeSolution,
    x: f64,
    u: f64,
    j: u32,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(1..=3).contains(&j) {
        return Err(Error::Domain { value: f64::from(j), domain: "derivative order 1..=3" });
    }
    if n_paths < 1000 {
        return Err(Error::Domain { value: n_paths as f64, domain: "n_paths >= 1000" });
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain { value: u, domain: "[0, 1]" });
    }
    const H: f64 = 1e-3;
    let mix = sol.mixture();
    let grid = sol.grid();
    let atoms: Vec<(f64, f64)> = sol.measure().atoms().into_iter().filter(|a| a.1 > 0.0).collect();
    let below: f64 = atoms.iter().filter(|a| a.0 <= u).map(|a| a.1).sum();
    let above: Vec<(f64, f64, usize)> = atoms
        .iter()
        .filter(|a| a.0 > u)
        .map(|&(q, w)| (q, w, sol.slice_index(q).expect("atoms are stored slices")))
        .collect();
    let offsets = [-H, 0.0, H];
    let phi_u: [f64; 3] = if below > 0.0 {
        let s = sol.slice_at(u)?;
        offsets.map(|d| grid.sample(&s.phi, x + d, 0))
    } else {
        [0.0; 3]
    };
    let xi_u = mix.xi_p(u);
    let xi_1 = mix.xi_p(1.0);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut clock = xi_u;
        let mut b = 0.0;
        let mut v = [0.0f64; 3];
        for &(q, w, idx) in &above {
            let t = mix.xi_p(q);
            let z: f64 = rng.sample(StandardNormal);
            b += (t - clock).max(0.0).sqrt() * z;
            clock = t;
            let s = &sol.slices()[idx];
            for (vk, d) in v.iter_mut().zip(offsets) {
                *vk -= w * grid.sample(&s.phi, x + d + b, 0);
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        let b1 = b + (xi_1 - clock).max(0.0).sqrt() * z;
        for (k, (vk, d)) in v.iter_mut().zip(offsets).enumerate() {
            *vk += log_cosh(x + d + b1) - below * phi_u[k];
        }
        let y1 = (v[2] - v[0]) / (2.0 * H);
        let y2 = (v[2] - 2.0 * v[1] + v[0]) / (H * H);
        let w = (x + b1).tanh();
        let f = match j {
            1 => w,
            2 => (1.0 - w * w) + w * y1,
            _ => w * y2 + (y1 - 2.0 * w) * (1.0 - w * w) + ((1.0 - w * w) + w * y1) * y1,
        };
        f * v[1].exp()
    };
    Ok(mc::mean_and_se(n_paths, seed, sample))
}
