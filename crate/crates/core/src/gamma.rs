//! The self-consistency curve `Gamma(u) = E (d_x Phi(M(u), u))^2 exp W(u)` and its
//! derivatives, computed through the law of `M` tilted by `exp W`.
//!
//! For an atomic measure the tilted law at `u` has a density of the form
//! `rho(x, u) = g_V(x) exp L(x, u)` with `g_V` the centred Gaussian density of
//! variance `V = xi'(u)`. Within a level, `L` is carried from slice to slice by a
//! Brownian-bridge expectation:
//!
//! `L(x, u2) = m Phi(x, u2) + log E exp(L(Y, u1) - m Phi(Y, u1))`,
//! `Y ~ N(x V1/V2, V1 (V2 - V1)/V2)`, `m = mu([0, u1])`.
//!
//! Expectations against `rho` use the trapezoid rule on the grid when the Gaussian is
//! resolved and Gauss-Hermite nodes otherwise.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mc;
use crate::measure::OrderParameter;
use crate::pde::{Grid, PdeSolution, Slice};
use crate::quad::{interp_lagrange, GaussHermite};

const BRIDGE_ORDER: usize = 24;
const MASS_TOL: f64 = 1e-4;

/// `log rho(x, u) - log g_{xi'(u)}(x)` on every stored slice of a solution.
#[derive(Debug, Clone)]
pub struct TiltedDensity {
    u: Vec<f64>,
    log_tilt: Vec<Vec<f64>>,
    masses: Vec<f64>,
    grid: Grid,
    quad_order: usize,
}

/// Values of `Gamma` and its derivatives at a list of `u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub u_samples: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    pub gamma_pp_right: Vec<f64>,
    pub gamma_pp_left: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// Mass of the tilted density before renormalization.
    pub mass: Vec<f64>,
}

impl GammaReport {
    /// `(u, Gamma(u))` pairs.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.u_samples.iter().copied().zip(self.gamma.iter().copied()).collect()
    }
}

struct Bridge {
    gh: GaussHermite,
}

impl Bridge {
    fn new() -> Self {
        Self { gh: GaussHermite::new(BRIDGE_ORDER) }
    }

    /// `L(., u2)` from `L(., u1)`; `prev` and `next` are the PDE slices at `u1`, `u2`.
    fn advance(&self, grid: &Grid, xi: (f64, f64), m: f64, log_prev: &[f64], prev: &Slice, next: &Slice) -> Vec<f64> {
        let (v1, v2) = xi;
        let v = v2 - v1;
        if v <= 0.0 {
            return (0..grid.n).map(|i| log_prev[i] + m * (next.phi[i] - prev.phi[i])).collect();
        }
        let residual: Vec<f64> = log_prev.iter().zip(&prev.phi).map(|(l, p)| l - m * p).collect();
        if v1 <= 0.0 {
            let at_zero = interp_lagrange(&residual, -grid.x_max, grid.dx, 0.0, 6);
            return next.phi.iter().map(|p| m * p + at_zero).collect();
        }
        let ratio = v1 / v2;
        let sd = (v1 * v / v2).sqrt();
        (0..grid.n)
            .into_par_iter()
            .map(|i| {
                let mean = grid.x(i) * ratio;
                let vals: Vec<f64> = self
                    .gh
                    .nodes()
                    .iter()
                    .map(|z| interp_lagrange(&residual, -grid.x_max, grid.dx, mean + sd * z, 6))
                    .collect();
                let top = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let s: f64 = vals.iter().zip(self.gh.weights()).map(|(v, w)| w * (v - top).exp()).sum();
                m * next.phi[i] + top + s.ln()
            })
            .collect()
    }
}

/// Builds the tilted density on every stored slice of `sol`.
pub fn tilted_density(sol: &PdeSolution) -> Result<TiltedDensity> {
    let grid = sol.grid();
    let mix = sol.mixture();
    let mu = sol.measure();
    let slices = sol.slices();
    let bridge = Bridge::new();
    let mut log_tilt: Vec<Vec<f64>> = Vec::with_capacity(slices.len());
    let first = &slices[0];
    let m0 = mu.cdf(first.u);
    let phi00 = interp_lagrange(&first.phi, -grid.x_max, grid.dx, 0.0, 6);
    log_tilt.push(first.phi.iter().map(|p| m0 * (p - phi00)).collect());
    for i in 1..slices.len() {
        let (prev, next) = (&slices[i - 1], &slices[i]);
        let xi = (mix.xi_p(prev.u), mix.xi_p(next.u));
        let l = bridge.advance(&grid, xi, mu.cdf(prev.u), &log_tilt[i - 1], prev, next);
        log_tilt.push(l);
    }
    let mut td = TiltedDensity {
        u: slices.iter().map(|s| s.u).collect(),
        log_tilt,
        masses: Vec::new(),
        grid,
        quad_order: sol.params().quad_order,
    };
    td.masses = (0..td.u.len())
        .map(|i| td.raw_expect(&td.log_tilt[i], mix.xi_p(td.u[i]), &[], &|_| 1.0))
        .collect();
    for (&u, &mass) in td.u.iter().zip(&td.masses) {
        if (mass - 1.0).abs() > MASS_TOL || !mass.is_finite() {
            return Err(Error::MassLeak { u, mass });
        }
    }
    Ok(td)
}

impl TiltedDensity {
    pub fn u_slices(&self) -> &[f64] {
        &self.u
    }

    /// Pre-renormalization mass of every slice.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Largest deviation of a slice mass from one.
    pub fn max_mass_drift(&self) -> f64 {
        self.masses.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Normalized density values on the grid at slice `i`; `None` at `u = 0`, where
    /// the law is a point mass.
    pub fn density(&self, i: usize, xi_prime: f64) -> Option<Vec<f64>> {
        if xi_prime <= 0.0 {
            return None;
        }
        let norm = (2.0 * std::f64::consts::PI * xi_prime).sqrt() * self.masses[i];
        Some(
            self.log_tilt[i]
                .iter()
                .enumerate()
                .map(|(j, l)| {
                    let x = self.grid.x(j);
                    (l - x * x / (2.0 * xi_prime)).exp() / norm
                })
                .collect(),
        )
    }

    /// Unnormalized `int g_V e^L f`, where `f` combines the grid arrays in `fields`
    /// pointwise.
    fn raw_expect(&self, log_tilt: &[f64], v: f64, fields: &[&[f64]], f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let g = &self.grid;
        let mut point = vec![0.0; fields.len()];
        let sample = |point: &mut Vec<f64>, y: f64, idx: Option<usize>| {
            for (p, fld) in point.iter_mut().zip(fields) {
                if fld.is_empty() {
                    continue;
                }
                *p = match idx {
                    Some(j) => fld[j],
                    None => interp_lagrange(fld, -g.x_max, g.dx, y, 6),
                };
            }
        };
        if v <= 0.0 {
            sample(&mut point, 0.0, None);
            let l0 = interp_lagrange(log_tilt, -g.x_max, g.dx, 0.0, 6);
            return l0.exp() * f(&point);
        }
        let sd = v.sqrt();
        let mut acc = 0.0;
        if sd >= 1.5 * g.dx {
            let log_norm = 0.5 * (2.0 * std::f64::consts::PI * v).ln();
            for (j, l) in log_tilt.iter().enumerate() {
                let x = g.x(j);
                let w = (l - x * x / (2.0 * v) - log_norm).exp();
                if w == 0.0 {
                    continue;
                }
                sample(&mut point, x, Some(j));
                acc += g.dx * w * f(&point);
            }
        } else {
            let gh = GaussHermite::new(self.quad_order);
            for (&z, &w) in gh.nodes().iter().zip(gh.weights()) {
                let y = sd * z;
                sample(&mut point, y, None);
                let l = interp_lagrange(log_tilt, -g.x_max, g.dx, y, 6);
                acc += w * l.exp() * f(&point);
            }
        }
        acc
    }

    /// Tilt at any `u`: the stored slice if present, else one bridge step from the
    /// stored slice below.
    fn tilt_at(&self, sol: &PdeSolution, slice: &Slice) -> Result<Vec<f64>> {
        if let Some(i) = self.u.iter().position(|&u| u == slice.u) {
            return Ok(self.log_tilt[i].clone());
        }
        let below = self.u.partition_point(|&u| u < slice.u) - 1;
        let prev = &sol.slices()[below];
        let mix = sol.mixture();
        let xi = (mix.xi_p(prev.u), mix.xi_p(slice.u));
        let m = sol.measure().cdf(prev.u);
        Ok(Bridge::new().advance(&self.grid, xi, m, &self.log_tilt[below], prev, slice))
    }
}

/// Per-sample tilted moments `(mass, E(Phi')^2, E(Phi'')^2, E(Phi''')^2, E(Phi'')^3)`.
fn moments(td: &TiltedDensity, sol: &PdeSolution, u: f64) -> Result<[f64; 5]> {
    let slice = sol.slice_at(u)?;
    let tilt = td.tilt_at(sol, &slice)?;
    let v = sol.mixture().xi_p(u);
    let fields: [&[f64]; 3] = [&slice.d1, &slice.d2, &slice.d3];
    let mass = td.raw_expect(&tilt, v, &[], &|_| 1.0);
    if (mass - 1.0).abs() > MASS_TOL || !mass.is_finite() {
        return Err(Error::MassLeak { u, mass });
    }
    let e = |f: &dyn Fn(&[f64]) -> f64| td.raw_expect(&tilt, v, &fields, f) / mass;
    Ok([
        mass,
        e(&|p| p[0] * p[0]),
        e(&|p| p[1] * p[1]),
        e(&|p| p[2] * p[2]),
        e(&|p| p[1] * p[1] * p[1]),
    ])
}

/// `Gamma(u) = int (d_x Phi)^2 rho dx` at each sample.
pub fn gamma_curve(td: &TiltedDensity, sol: &PdeSolution, u_samples: &[f64]) -> Result<Vec<f64>> {
    u_samples
        .par_iter()
        .map(|&u| moments(td, sol, u).map(|m| m[1]))
        .collect()
}

/// `Gamma`, `Gamma'`, the one-sided second derivatives and their components.
pub fn gamma_derivatives(td: &TiltedDensity, sol: &PdeSolution, u_samples: &[f64]) -> Result<GammaReport> {
    let mix = sol.mixture();
    let mu = sol.measure();
    let rows: Vec<[f64; 5]> = u_samples.par_iter().map(|&u| moments(td, sol, u)).collect::<Result<_>>()?;
    let mut r = GammaReport {
        u_samples: u_samples.to_vec(),
        gamma: Vec::new(),
        gamma_prime: Vec::new(),
        gamma_pp_right: Vec::new(),
        gamma_pp_left: Vec::new(),
        gamma1: Vec::new(),
        gamma2: Vec::new(),
        mass: Vec::new(),
    };
    for (&u, [mass, g, e2, e3sq, e2cube]) in u_samples.iter().zip(rows) {
        let (x2, x3) = (mix.xi_pp(u), mix.xi_ppp(u));
        let g1 = x3 * e2 + x2 * x2 * e3sq;
        let g2 = 2.0 * x2 * x2 * e2cube;
        r.gamma.push(g);
        r.gamma_prime.push(x2 * e2);
        r.gamma1.push(g1);
        r.gamma2.push(g2);
        r.gamma_pp_right.push(g1 - mu.cdf(u) * g2);
        r.gamma_pp_left.push(g1 - mu.cdf_left(u) * g2);
        r.mass.push(mass);
    }
    Ok(r)
}

/// Solves the PDE, builds the tilted density and evaluates the full report.
pub fn gamma_report(
    mix: &crate::Mixture,
    mu: &crate::RsbMeasure,
    params: &crate::GridParams,
    u_samples: &[f64],
) -> Result<GammaReport> {
    let sol = crate::solve_pde(mix, mu, params)?;
    let td = tilted_density(&sol)?;
    gamma_derivatives(&td, &sol, u_samples)
}

enum PathFunctional {
    Gamma,
    TiltMass,
}

fn mc_path(sol: &PdeSolution, u: f64, n_paths: usize, seed: u64, what: PathFunctional) -> Result<(f64, f64)> {
    if n_paths < 1000 {
        return Err(Error::Domain { value: n_paths as f64, domain: "n_paths >= 1000" });
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain { value: u, domain: "[0, 1]" });
    }
    let grid = sol.grid();
    let mix = sol.mixture();
    let at_u = sol.slice_at(u)?;
    let atoms: Vec<(f64, f64, usize)> = sol
        .measure()
        .atoms()
        .into_iter()
        .filter(|&(q, w)| w > 0.0 && q <= u)
        .map(|(q, w)| (q, w, sol.slice_index(q).expect("atoms are stored slices")))
        .collect();
    let xi_u = mix.xi_p(u);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut clock = 0.0;
        let mut b = 0.0;
        let mut w_sum = 0.0;
        for &(q, w, idx) in &atoms {
            let t = mix.xi_p(q);
            let z: f64 = rng.sample(StandardNormal);
            b += (t - clock).max(0.0).sqrt() * z;
            clock = t;
            w_sum -= w * grid.sample(&sol.slices()[idx].phi, b, 0);
        }
        let z: f64 = rng.sample(StandardNormal);
        b += (xi_u - clock).max(0.0).sqrt() * z;
        let mass: f64 = atoms.iter().map(|a| a.1).sum();
        let weight = (w_sum + mass * grid.sample(&at_u.phi, b, 0)).exp();
        match what {
            PathFunctional::Gamma => {
                let d = grid.sample(&at_u.d1, b, 1);
                d * d * weight
            }
            PathFunctional::TiltMass => weight,
        }
    };
    Ok(mc::mean_and_se(n_paths, seed, sample))
}

/// Path-sampling estimate of `Gamma(u)` with its standard error.
pub fn mc_gamma_oracle(sol: &PdeSolution, u: f64, n_paths: usize, seed: u64) -> Result<(f64, f64)> {
    mc_path(sol, u, n_paths, seed, PathFunctional::Gamma)
}

/// Path-sampling estimate of `E exp W(u)`, which equals one.
pub fn mc_tilt_mass(sol: &PdeSolution, u: f64, n_paths: usize, seed: u64) -> Result<(f64, f64)> {
    mc_path(sol, u, n_paths, seed, PathFunctional::TiltMass)
}
