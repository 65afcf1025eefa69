//! Crisanti-Sommers functional of spherical models and the stationarity curves `F`, `f`.
//!
//! The functional implemented here is
//! `1/2 (int_0^1 x xi' dq + int_0^qhat dq / x_hat(q) + log(1 - qhat))`, where
//! `x_hat(q) = int_q^1 x(s) ds` and `qhat` is where `x` reaches one. Its variational
//! derivative is `F(q) = xi'(q) - int_0^q ds / x_hat(s)^2`, and a measure is optimal
//! iff it is carried by the set `S` where `f = int_0^q F` is maximal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{DensitySegment, GeneralMeasure, OrderParameter};
use crate::mixture::Mixture;
use crate::quad::{adaptive_simpson, bisect};

/// Right end of the working range `[0, q_1]`.
pub const Q_ONE: f64 = 1.0 - 1e-6;

/// Uniform points used by [`spherical_certify`] before atoms are inserted.
pub const CERTIFY_POINTS: usize = 4001;

/// Density cells of the continuous part built by [`solve_two_plus_p`].
pub const TWO_PLUS_P_CELLS: usize = 4096;

/// `f`, `F`, the maximizing set of `f` and the mass the measure puts on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphericalReport {
    pub q_grid: Vec<f64>,
    pub f_curve: Vec<f64>,
    /// `F = f'`.
    #[serde(rename = "F_curve")]
    pub slope_curve: Vec<f64>,
    /// Maximal runs of grid points where `f` is within tolerance of its maximum.
    #[serde(rename = "S_intervals")]
    pub s_intervals: Vec<(f64, f64)>,
    #[serde(rename = "mass_on_S")]
    pub mass_on_s: f64,
    /// Top of the support of the measure.
    #[serde(rename = "q_M")]
    pub q_m: f64,
    pub verdict: bool,
}

/// `x_hat(q) = int_q^1 mu([0, s]) ds`, with the closed form `1 - q` above `qhat`.
fn x_hat(mu: &GeneralMeasure, q_hat: f64, q: f64) -> f64 {
    if q >= q_hat {
        1.0 - q
    } else {
        mu.tail_integral(q)
    }
}

fn simpson_rel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let scale = f(a).abs().max(f(b).abs()) * (b - a);
    adaptive_simpson(&f, a, b, 1e-13 * (1.0 + scale))
}

/// Crisanti-Sommers value, or `+inf` when `mu([0, q]) < 1` for every `q < 1`.
pub fn cs_value(mix: &Mixture, mu: &GeneralMeasure) -> f64 {
    let Some(q_hat) = mu.saturation_point() else {
        return f64::INFINITY;
    };
    // int_0^1 x xi' dq = xi(1) - int xi dmu.
    let drift = mix.xi(1.0) - mu.expect(&|q| mix.xi(q));
    let pieces = pieces(mu, q_hat);
    let inverse: f64 = pieces
        .windows(2)
        .map(|w| simpson_rel(&|q| 1.0 / x_hat(mu, q_hat, q), w[0], w[1]))
        .sum();
    0.5 * (drift + inverse + (1.0 - q_hat).ln())
}

/// Breakpoints of `mu` inside `[0, q_hat]`, thinned to at most 64 pieces.
fn pieces(mu: &GeneralMeasure, q_hat: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = mu.breakpoints().into_iter().filter(|&q| q > 0.0 && q < q_hat).collect();
    let stride = pts.len().div_ceil(64).max(1);
    pts = pts.into_iter().step_by(stride).collect();
    pts.insert(0, 0.0);
    if q_hat > 0.0 {
        pts.push(q_hat);
    }
    pts
}

/// `f` and `F` on an increasing grid inside `[0, q_1]`.
///
/// Uses `f(q) = xi(q) - q G(q) + H(q)` with `G = int_0^q x_hat^-2` and
/// `H = int_0^q s x_hat^-2`.
pub fn variational_curves(mix: &Mixture, mu: &GeneralMeasure, q_grid: &[f64]) -> Result<SphericalReport> {
    if q_grid.windows(2).any(|w| w[1] < w[0]) || q_grid.iter().any(|&q| !(0.0..=Q_ONE).contains(&q)) {
        return Err(Error::Domain { value: q_grid.last().copied().unwrap_or(f64::NAN), domain: "[0, q_1], increasing" });
    }
    let q_hat = mu.saturation_point().unwrap_or(1.0);
    let top = q_grid.last().copied().unwrap_or(0.0);
    if top > 0.0 && x_hat(mu, q_hat, top) <= 0.0 {
        return Err(Error::DegenerateTail(top));
    }
    let (mut g, mut h, mut last) = (0.0, 0.0, 0.0f64);
    let mut f_curve = Vec::with_capacity(q_grid.len());
    let mut slope = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let below = last.min(q_hat);
        let split = q.min(q_hat);
        if split > below {
            g += simpson_rel(&|s| x_hat(mu, q_hat, s).powi(-2), below, split);
            h += simpson_rel(&|s| s * x_hat(mu, q_hat, s).powi(-2), below, split);
        }
        if q > q_hat {
            // Above qhat: int ds/(1-s)^2 and int s ds/(1-s)^2 in closed form.
            let a = last.max(q_hat);
            let inv = |s: f64| 1.0 / (1.0 - s);
            g += inv(q) - inv(a);
            h += inv(q) - inv(a) + (1.0 - q).ln() - (1.0 - a).ln();
        }
        last = q;
        slope.push(mix.xi_p(q) - g);
        f_curve.push(mix.xi(q) - q * g + h);
    }
    Ok(SphericalReport {
        q_grid: q_grid.to_vec(),
        f_curve,
        slope_curve: slope,
        s_intervals: Vec::new(),
        mass_on_s: 0.0,
        q_m: q_hat.min(1.0),
        verdict: false,
    })
}

/// Runs of grid indices where `f >= max f - tol_f`, as closed intervals.
fn maximizing_runs(grid: &[f64], f: &[f64], tol_f: f64) -> Vec<(f64, f64)> {
    let top = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=grid.len() {
        let inside = i < grid.len() && f[i] >= top - tol_f;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((grid[s], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

/// `mu(S)` for `S` a union of disjoint closed intervals.
fn mass_on<M: OrderParameter + ?Sized>(mu: &M, intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|&(a, b)| mu.cdf(b) - mu.cdf_left(a)).sum::<f64>().clamp(0.0, 1.0)
}

/// Certifies `mu` when `mu(S) >= 1 - tol`, with `S` extracted at relative flatness
/// `1e-8 (1 + |max f|)` on a uniform grid that also contains every atom.
pub fn spherical_certify(mix: &Mixture, mu: &GeneralMeasure, tol: f64) -> Result<SphericalReport> {
    let mut grid: Vec<f64> = (0..CERTIFY_POINTS).map(|i| Q_ONE * i as f64 / (CERTIFY_POINTS - 1) as f64).collect();
    grid.extend(mu.atoms().iter().map(|a| a.0).filter(|&q| q <= Q_ONE));
    if let Some(q_hat) = mu.saturation_point() {
        grid.push(q_hat.min(Q_ONE));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut report = variational_curves(mix, mu, &grid)?;
    let top = report.f_curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol_f = 1e-8 * (1.0 + top.abs());
    report.s_intervals = maximizing_runs(&report.q_grid, &report.f_curve, tol_f);
    report.mass_on_s = mass_on(mu, &report.s_intervals);
    report.verdict = report.mass_on_s >= 1.0 - tol;
    Ok(report)
}

/// Closed-form distribution function `xi'''(u) / (2 xi''(u)^{3/2})` of the
/// continuous part of a full-replica-symmetry-breaking measure.
pub fn frsb_density(mix: &Mixture, u: f64) -> Result<f64> {
    let x2 = mix.xi_pp(u);
    if x2 <= 0.0 {
        return Err(Error::SingularMixture(u));
    }
    let value = mix.xi_ppp(u) / (2.0 * x2.powf(1.5));
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::CdfOutOfRange { u, value });
    }
    Ok(value)
}

/// `d/du` of [`frsb_density`].
fn frsb_pdf(mix: &Mixture, u: f64) -> f64 {
    let (x2, x3, x4) = (mix.xi_pp(u), mix.xi_ppp(u), mix.derivative(u, 4));
    x4 / (2.0 * x2.powf(1.5)) - 0.75 * x3 * x3 / x2.powf(2.5)
}

/// Exact solution of the `xi = beta^2 ((1 - t) u^2 + t u^p)` model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPlusP {
    pub mixture: Mixture,
    pub measure: GeneralMeasure,
    #[serde(rename = "q_M")]
    pub q_m: f64,
    /// Both hypotheses of the closed form hold.
    pub applicable: bool,
    /// `4(p-3)/((p-1)p^2) - t/(1-t)`.
    pub shape_margin: f64,
    /// `beta^2 - 1/(2(1-t))`.
    pub temperature_margin: f64,
}

/// `(1 - q)^2 xi''(q) - 1`, whose root is the top of the support.
pub fn two_plus_p_gap(mix: &Mixture, q: f64) -> f64 {
    (1.0 - q).powi(2) * mix.xi_pp(q) - 1.0
}

/// Builds the continuous part from [`frsb_density`] on `[0, q_M)` plus an atom at
/// `q_M`. The measure is returned even when `applicable` is false, as long as it is
/// a probability measure.
pub fn solve_two_plus_p(beta_sq: f64, t: f64, p: u32) -> Result<TwoPlusP> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain { value: t, domain: "(0, 1)" });
    }
    if p < 4 {
        return Err(Error::Domain { value: p as f64, domain: "p >= 4" });
    }
    let mix = Mixture::from_pairs(&[(2, beta_sq * (1.0 - t)), (p, beta_sq * t)])?;
    let pf = p as f64;
    let shape_margin = 4.0 * (pf - 3.0) / ((pf - 1.0) * pf * pf) - t / (1.0 - t);
    let temperature_margin = beta_sq - 1.0 / (2.0 * (1.0 - t));
    let applicable = shape_margin >= 0.0 && temperature_margin > 0.0;
    let q_m = if two_plus_p_gap(&mix, 0.0) > 0.0 {
        bisect(|q| two_plus_p_gap(&mix, q), 0.0, 1.0, 1e-12).ok_or(Error::SingularMixture(0.0))?
    } else {
        0.0
    };
    let measure = if q_m > 0.0 {
        let values: Vec<f64> = (0..=TWO_PLUS_P_CELLS)
            .map(|i| frsb_pdf(&mix, q_m * i as f64 / TWO_PLUS_P_CELLS as f64).max(0.0))
            .collect();
        let h = q_m / TWO_PLUS_P_CELLS as f64;
        let dens_mass: f64 = values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        let seg = DensitySegment { a: 0.0, b: q_m, values };
        let origin = frsb_density(&mix, 0.0)?;
        let top = 1.0 - origin - dens_mass;
        if top < 0.0 {
            return Err(Error::CdfOutOfRange { u: q_m, value: 1.0 - top });
        }
        GeneralMeasure::new(vec![(0.0, origin), (q_m, top)], vec![seg])?
    } else {
        GeneralMeasure::dirac(0.0)
    };
    Ok(TwoPlusP { mixture: mix, measure, q_m, applicable, shape_margin, temperature_margin })
}

/// `max |xi''(u)^{-1/2} - x_hat(u)|` over `n` uniform points of `[a, b]`.
pub fn stationarity_residual(mix: &Mixture, mu: &GeneralMeasure, a: f64, b: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n.max(2) - 1) as f64)
        .map(|u| (mix.xi_pp(u).powf(-0.5) - mu.tail_integral(u)).abs())
        .fold(0.0, f64::max)
}

/// Support diagnostics around the origin and at interior accumulation points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub origin_in_support: bool,
    /// `xi''(0)`; the gap statement concerns `xi''(0) != 1`.
    pub xi_pp_origin: f64,
    /// Distance from the origin to the rest of the support; zero when the support
    /// accumulates at the origin, `None` when the origin is not in the support.
    pub gap_above_origin: Option<f64>,
    /// Atoms that sit strictly inside a region of positive density.
    pub interior_atoms: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

/// Locates the support near the origin and lists atoms inside continuous regions.
pub fn spherical_structure_checks(mix: &Mixture, mu: &GeneralMeasure) -> StructureReport {
    let positive = |u: f64| mu.density_at(u) > 0.0;
    let density_start = mu
        .density()
        .iter()
        .filter_map(|seg| {
            let h = (seg.b - seg.a) / (seg.values.len() - 1) as f64;
            // A cell carries mass as soon as either node value is positive.
            seg.values.windows(2).position(|w| w[0] > 0.0 || w[1] > 0.0).map(|i| seg.a + i as f64 * h)
        })
        .fold(f64::INFINITY, f64::min);
    let first_atom_above = mu.atoms().iter().filter(|a| a.0 > 0.0).map(|a| a.0).fold(f64::INFINITY, f64::min);
    let origin_atom = mu.atoms().iter().any(|a| a.0 == 0.0);
    let origin_in_support = origin_atom || density_start == 0.0;
    let next = density_start.min(first_atom_above);
    let gap_above_origin = origin_in_support.then(|| if next.is_finite() { next } else { 1.0 });
    let eps = 1e-9;
    let interior_atoms: Vec<(f64, f64)> = mu
        .atoms()
        .iter()
        .copied()
        .filter(|&(q, _)| q > eps && q < 1.0 - eps && positive(q - eps) && positive(q + eps))
        .collect();
    let xi_pp_origin = mix.xi_pp(0.0);
    let mut notes = Vec::new();
    if origin_in_support && xi_pp_origin != 1.0 {
        match gap_above_origin {
            Some(g) if g > 0.0 => notes.push(format!("support has a gap (0, {g}) above the origin")),
            _ => notes.push(format!(
                "support accumulates at the origin with xi''(0) = {xi_pp_origin}; no gap above the origin"
            )),
        }
    }
    if !interior_atoms.is_empty() {
        notes.push(format!("{} atom(s) inside a continuous region", interior_atoms.len()));
    }
    StructureReport { origin_in_support, xi_pp_origin, gap_above_origin, interior_atoms, notes }
}

/// CSV rows `q,x_q,F,f` for a report and the measure it was computed from.
pub fn report_csv(report: &SphericalReport, mu: &GeneralMeasure) -> String {
    let mut out = String::from("q,x_q,F,f\n");
    for ((q, slope), f) in report.q_grid.iter().zip(&report.slope_curve).zip(&report.f_curve) {
        out.push_str(&format!("{q},{},{slope},{f}\n", mu.cdf(*q)));
    }
    out
}
