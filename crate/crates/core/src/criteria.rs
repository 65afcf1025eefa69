//! Arithmetic checks of the temperature conditions and of Gaussian identities used by the solvers.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, SQRT_2};

use serde::Serialize;

use crate::error::Result;
use crate::gamma::gamma_report;
use crate::measure::{OrderParameter, RsbMeasure};
use crate::mixture::Mixture;
use crate::pde::GridParams;
use crate::quad::{bisect, normal_cdf, normal_pdf, GaussLegendre};

/// Hypothesis checks for one mixture. Margins are the signed slack of each
/// inequality: positive when it holds strictly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    /// Root of `xi''(q) = 1` when `xi''(0) < 1`.
    pub q_hat_gap: Option<f64>,
    pub thm3_satisfied: bool,
    /// `xi(1) - max(8 log 2, sqrt(xi'(1)) 2^(xi'(1)/xi(1) + 5) / 3)`.
    pub thm3_margin: f64,
    pub thm4_satisfied: bool,
    /// `beta_2 - 1/sqrt(2)`; must be positive.
    pub thm4_window_lower_margin: f64,
    /// `3/(2 sqrt(2)) - beta_2`; must be nonnegative.
    pub thm4_window_upper_margin: f64,
    /// `1 - xi'''(1)/6 - 2/3 sqrt(xi''(1))`; must be nonnegative.
    pub thm4_lhs_margin: f64,
    pub notes: Vec<String>,
}

/// Root of `xi''(q) = 1` when `xi''(0) < 1`; `Some(1.0)` if `xi'' < 1` on all of
/// `[0, 1]`; `None` if `xi''(0) >= 1`.
pub fn check_thm1_gap(mix: &Mixture) -> Option<f64> {
    if mix.xi_pp(0.0) >= 1.0 {
        return None;
    }
    if mix.xi_pp(1.0) < 1.0 {
        return Some(1.0);
    }
    bisect(|q| mix.xi_pp(q) - 1.0, 0.0, 1.0, 1e-12)
}

/// Slack of the multi-level sufficient condition.
pub fn thm3_margin(mix: &Mixture) -> f64 {
    let (xi1, dxi1) = (mix.xi(1.0), mix.xi_p(1.0));
    let rhs = (8.0 * LN_2).max(dxi1.sqrt() * 2f64.powf(dxi1 / xi1 + 5.0) / 3.0);
    xi1 - rhs
}

/// Slacks `(window lower, window upper, lhs)` of the one-level condition.
pub fn thm4_margins(mix: &Mixture) -> (f64, f64, f64) {
    let beta2 = mix.coefficient(2).sqrt();
    let lhs = mix.xi_ppp(1.0) / 6.0 + 2.0 / 3.0 * mix.xi_pp(1.0).sqrt();
    (beta2 - FRAC_1_SQRT_2, 3.0 / (2.0 * SQRT_2) - beta2, 1.0 - lhs)
}

/// Evaluates both temperature conditions and the gap point.
pub fn check_rsb_criteria(mix: &Mixture) -> CriteriaReport {
    let thm3 = thm3_margin(mix);
    let (lo, hi, lhs) = thm4_margins(mix);
    let q_hat_gap = check_thm1_gap(mix);
    let mut notes = Vec::new();
    if thm3 > 0.0 {
        notes.push("neither one-level nor replica symmetric".to_string());
    }
    let thm4 = lo > 0.0 && hi >= 0.0 && lhs >= 0.0;
    if thm4 {
        notes.push("one-level measures jump at the top of the support".to_string());
    }
    if let Some(q) = q_hat_gap {
        notes.push(format!("no mass in (0, {q})"));
    }
    CriteriaReport {
        q_hat_gap,
        thm3_satisfied: thm3 > 0.0,
        thm3_margin: thm3,
        thm4_satisfied: thm4,
        thm4_window_lower_margin: lo,
        thm4_window_upper_margin: hi,
        thm4_lhs_margin: lhs,
        notes,
    }
}

/// Lower bound `int xi(q)/xi(1) dmu >= 1 - sqrt(2 log 2 / xi(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentBound {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates the moment bound for any order parameter, with slack `1e-9`.
pub fn moment_bound_check<M: OrderParameter + ?Sized>(mix: &Mixture, mu: &M) -> MomentBound {
    let xi1 = mix.xi(1.0);
    let lhs = mu.expect(&|q| mix.xi(q)) / xi1;
    let rhs = 1.0 - (2.0 * LN_2 / xi1).sqrt();
    MomentBound { lhs, rhs, satisfied: lhs >= rhs - 1e-9 }
}

/// `E e^{a|g|}` by quadrature against `2 e^{a^2/2} Phi(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsExpRow {
    pub a: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub residual: f64,
}

/// `3/(4|a|) <= e^{a^2/2} int_{|a|}^inf e^{-s^2/2} ds <= 1/|a|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MillsRow {
    pub a: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSelftest {
    pub abs_exp: Vec<AbsExpRow>,
    pub mills: Vec<MillsRow>,
    pub passed: bool,
}

/// Composite 20-point Gauss-Legendre on unit panels of `[0, len]`.
fn panels(f: impl Fn(f64) -> f64, len: f64) -> f64 {
    let gl = GaussLegendre::new(20);
    let n = len.ceil() as usize;
    (0..n).map(|i| gl.integrate(i as f64, (i + 1) as f64, &f)).sum()
}

/// `E e^{a|g|}` for standard normal `g`, by quadrature.
pub fn abs_exp_moment(a: f64) -> f64 {
    panels(|x| 2.0 * (a * x).exp() * normal_pdf(x), 40.0 + a.abs())
}

/// `e^{a^2/2} int_{|a|}^inf e^{-s^2/2} ds`, integrated in the shifted form
/// `int_0^inf e^{-|a| t - t^2/2} dt`.
pub fn mills_value(a: f64) -> f64 {
    let b = a.abs();
    panels(|t| (-b * t - 0.5 * t * t).exp(), 40.0)
}

/// The identity at `a in {-3, -1, 0, 1, 3}` to `1e-10` and the tail bounds at
/// `a in {-2, -3, -5}`.
///
/// The bounds hold for the unnormalized tail integral; with the `1/sqrt(2 pi)`
/// factor the lower bound fails, e.g. `e^2 phi(-2) ~ 0.168 < 3/8`.
pub fn gaussian_selftest() -> GaussianSelftest {
    let abs_exp: Vec<AbsExpRow> = [-3.0, -1.0, 0.0, 1.0, 3.0]
        .into_iter()
        .map(|a: f64| {
            let quadrature = abs_exp_moment(a);
            let closed_form = 2.0 * (0.5 * a * a).exp() * normal_cdf(a);
            AbsExpRow { a, quadrature, closed_form, residual: (quadrature - closed_form).abs() }
        })
        .collect();
    let mills: Vec<MillsRow> = [-2.0, -3.0, -5.0]
        .into_iter()
        .map(|a: f64| {
            let value = mills_value(a);
            let (lower, upper) = (3.0 / (4.0 * a.abs()), 1.0 / a.abs());
            MillsRow { a, lower, value, upper, holds: lower <= value && value <= upper }
        })
        .collect();
    let passed = abs_exp.iter().all(|r| r.residual <= 1e-10) && mills.iter().all(|r| r.holds);
    GaussianSelftest { abs_exp, mills, passed }
}

/// Pointwise comparison of `mu([0, u])` with `Gamma_1(u) / Gamma_2(u)`, the value the
/// distribution function must take wherever `Gamma'' = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityConsistency {
    pub u: Vec<f64>,
    pub x_mu: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
}

/// Evaluates `(zeta F1 + F2) / F3` with `zeta = xi'''/xi''^2`,
/// `F1 = E (d_x^2 Phi)^2`, `F2 = E (d_x^3 Phi)^2`, `F3 = 2 E (d_x^2 Phi)^3`
/// under the tilted density, at `n` uniform points of `[a, b]`.
pub fn density_consistency(
    mix: &Mixture,
    mu: &RsbMeasure,
    a: f64,
    b: f64,
    n: usize,
    params: &GridParams,
) -> Result<DensityConsistency> {
    let u: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n.max(2) - 1) as f64).collect();
    let report = gamma_report(mix, mu, params, &u)?;
    // Gamma_1 / Gamma_2 equals the ratio above after cancelling xi''^2.
    let rhs: Vec<f64> = report.gamma1.iter().zip(&report.gamma2).map(|(g1, g2)| g1 / g2).collect();
    let x_mu: Vec<f64> = u.iter().map(|&v| mu.cdf(v)).collect();
    let residual: Vec<f64> = x_mu.iter().zip(&rhs).map(|(x, r)| (x - r).abs()).collect();
    let max_residual = residual.iter().copied().fold(0.0, f64::max);
    Ok(DensityConsistency { u, x_mu, rhs, residual, max_residual })
}
