//! Command execution. Every command produces one JSON document and optionally a CSV.

use anyhow::{Context, Result};
use parisi::criteria::{check_rsb_criteria, gaussian_selftest, moment_bound_check};
use parisi::optimizer::{certify_with, minimize_adaptive};
use parisi::spherical::{
    cs_value, report_csv, solve_two_plus_p, spherical_certify, spherical_structure_checks, stationarity_residual,
};
use parisi::{gamma_report, parisi_value, GridParams, Mixture, OrderParameter, RsbMeasure};
use serde_json::{json, Value};

use crate::config::{Command, Model, RunConfig};

/// Result JSON plus optional CSV text, and whether the optimizer ran out of budget.
pub struct Outcome {
    pub json: Value,
    pub csv: Option<String>,
    pub exhausted: bool,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Solve => solve(cfg),
        Command::Gamma => gamma(cfg),
        Command::SphericalSolve => spherical(cfg),
        Command::Check => check(cfg),
        Command::Export => export(cfg),
    }
}

fn mixture(cfg: &RunConfig) -> &Mixture {
    cfg.mixture.as_ref().expect("validated configs carry a mixture")
}

fn grid(cfg: &RunConfig) -> GridParams {
    cfg.grid.apply(mixture(cfg))
}

fn measure_or_origin(cfg: &RunConfig) -> Result<RsbMeasure> {
    Ok(match &cfg.measure {
        Some(mu) => mu.clone(),
        None => RsbMeasure::dirac(0.0)?,
    })
}

/// `q,x_q` rows: every breakpoint appears twice, at the left and right limit.
fn order_parameter_csv<M: OrderParameter + ?Sized>(mu: &M) -> String {
    let mut out = String::from("q,x_q\n");
    let mut points: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    points.extend(mu.breakpoints());
    points.sort_by(f64::total_cmp);
    points.dedup();
    for q in points {
        let (left, right) = (mu.cdf_left(q), mu.cdf(q));
        if left != right {
            out.push_str(&format!("{q},{left}\n"));
        }
        out.push_str(&format!("{q},{right}\n"));
    }
    out
}

fn solve(cfg: &RunConfig) -> Result<Outcome> {
    let mix = mixture(cfg);
    let mut opts = cfg.optimizer.clone();
    opts.grid = Some(grid(cfg));
    let found = minimize_adaptive(mix, &opts).context("minimization failed")?;
    let certificate = certify_with(mix, &found.measure, opts.tol, &grid(cfg)).context("certification failed")?;
    let json = json!({
        "measure": found.measure,
        "value": found.value,
        "certificate": certificate,
        "trace": found.trace,
    });
    let csv = cfg.csv.as_ref().map(|_| order_parameter_csv(&found.measure));
    Ok(Outcome { json, csv, exhausted: found.exhausted })
}

fn gamma(cfg: &RunConfig) -> Result<Outcome> {
    let mix = mixture(cfg);
    let mu = measure_or_origin(cfg)?;
    let us = cfg.u_samples.clone().unwrap_or_else(|| (0..=100).map(|i| i as f64 / 100.0).collect());
    let report = gamma_report(mix, &mu, &grid(cfg), &us).context("gamma evaluation failed")?;
    let csv = cfg.csv.as_ref().map(|_| {
        let mut out = String::from("u,gamma,gamma_prime,gamma_pp_right,gamma_pp_left\n");
        for i in 0..report.u_samples.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                report.u_samples[i],
                report.gamma[i],
                report.gamma_prime[i],
                report.gamma_pp_right[i],
                report.gamma_pp_left[i]
            ));
        }
        out
    });
    Ok(Outcome { json: json!({ "measure": mu, "gamma": report }), csv, exhausted: false })
}

fn spherical(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.two_plus_p.expect("validated spherical configs carry p, t and beta_sq");
    let sol = solve_two_plus_p(params.beta_sq, params.t, params.p).context("spherical solve failed")?;
    let tol = cfg.optimizer.tol;
    let report = spherical_certify(&sol.mixture, &sol.measure, tol).context("spherical certification failed")?;
    let stationarity = if sol.q_m > 0.06 {
        Some(stationarity_residual(&sol.mixture, &sol.measure, 0.05, sol.q_m - 0.01, 200))
    } else {
        None
    };
    let json = json!({
        "mixture": sol.mixture,
        "measure": sol.measure,
        "q_M": sol.q_m,
        "applicable": sol.applicable,
        "shape_margin": sol.shape_margin,
        "temperature_margin": sol.temperature_margin,
        "value": cs_value(&sol.mixture, &sol.measure),
        "mass_on_S": report.mass_on_s,
        "S_intervals": report.s_intervals,
        "verdict": report.verdict,
        "stationarity_residual": stationarity,
        "structure": spherical_structure_checks(&sol.mixture, &sol.measure),
    });
    let csv = cfg.csv.as_ref().map(|_| report_csv(&report, &sol.measure));
    Ok(Outcome { json, csv, exhausted: false })
}

fn check(cfg: &RunConfig) -> Result<Outcome> {
    let mix = mixture(cfg);
    let mut json = serde_json::to_value(check_rsb_criteria(mix))?;
    json["gaussian_selftest"] = serde_json::to_value(gaussian_selftest())?;
    if let Some(mu) = &cfg.measure {
        json["moment_bound"] = serde_json::to_value(moment_bound_check(mix, mu))?;
    }
    Ok(Outcome { json, csv: None, exhausted: false })
}

fn export(cfg: &RunConfig) -> Result<Outcome> {
    let mix = mixture(cfg);
    let mu = measure_or_origin(cfg)?;
    let value = match cfg.model {
        Model::Ising => parisi_value(mix, &mu, &grid(cfg)).context("evaluation failed")?,
        Model::Spherical => cs_value(mix, &mu.to_general()),
    };
    let csv = cfg.csv.as_ref().map(|_| order_parameter_csv(&mu));
    Ok(Outcome { json: json!({ "measure": mu, "value": value }), csv, exhausted: false })
}
