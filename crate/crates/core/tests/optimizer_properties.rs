use std::f64::consts::LN_2;

use parisi::criteria::density_consistency;
use parisi::functional::directional_derivative;
use parisi::optimizer::support_gamma;
use parisi::{
    certify, metric_d, minimize_adaptive, minimize_fixed_k, GridParams, Mixture, OptimizerOptions, PerturbationField,
    RsbMeasure, Verdict,
};

const SK_LOW_RS: f64 = 0.3196389176469;
const SK_LOW_ONE_LEVEL: f64 = 0.3196379568504;

#[test]
fn high_temperature_value_and_free_energy() {
    let mix = Mixture::sk(0.6);
    let found = minimize_fixed_k(&mix, 0, &OptimizerOptions::default()).unwrap();
    found.require_converged().unwrap();
    assert!(found.measure.q_max() < 1e-3, "{:?}", found.measure.atoms());
    assert!((found.value - 0.18).abs() < 1e-6, "{}", found.value);
    let free_energy = LN_2 + found.value;
    assert!((free_energy - (LN_2 + 0.18)).abs() < 1e-6);
}

#[test]
fn one_level_gap_below_replica_symmetric_optimum() {
    let mix = Mixture::sk(0.8);
    let opts = OptimizerOptions::default();
    let rs = minimize_fixed_k(&mix, 0, &opts).unwrap();
    let one = minimize_fixed_k(&mix, 1, &opts).unwrap();
    assert!((rs.value - SK_LOW_RS).abs() < 1e-10, "{}", rs.value);
    assert!((one.value - SK_LOW_ONE_LEVEL).abs() < 1e-10, "{}", one.value);
    let gap = rs.value - one.value;
    assert!((gap - 9.608e-7).abs() < 1e-9, "gap {gap:e}");
    assert!(one.value <= 0.5 * mix.xi(1.0));

    // A different start set lands on the same optimum.
    let other = minimize_fixed_k(&mix, 1, &OptimizerOptions { seed: 17, ..opts }).unwrap();
    assert!((other.value - one.value).abs() < 1e-6, "{} vs {}", other.value, one.value);
}

#[test]
fn adaptive_trace_is_monotone_and_below_origin_value() {
    let mix = Mixture::from_pairs(&[(2, 0.25), (3, 0.2)]).unwrap();
    let found = minimize_adaptive(&mix, &OptimizerOptions::default()).unwrap();
    assert!(!found.trace.is_empty());
    for w in found.trace.windows(2) {
        assert!(w[1].value <= w[0].value, "{:?}", found.trace);
        assert_eq!(w[1].k, w[0].k + 1);
    }
    assert!(found.value <= 0.5 * mix.xi(1.0) + 1e-12);
    assert_eq!(found.value, found.trace.last().unwrap().value);
}

#[test]
fn hat_perturbations_do_not_decrease_certified_minimizer() {
    let mix = Mixture::sk(0.6);
    let opts = OptimizerOptions::default();
    let found = minimize_adaptive(&mix, &opts).unwrap();
    assert!(metric_d(&found.measure, &RsbMeasure::dirac(0.0).unwrap()) <= 1e-3);
    let cert = certify(&mix, &found.measure, opts.tol).unwrap();
    assert_eq!(cert.verdict, Verdict::ConsistentMinimizer);
    let samples = support_gamma(&mix, &found.measure, &GridParams::for_mixture(&mix)).unwrap();
    for i in 0..50 {
        let center = i as f64 / 49.0;
        let height = 0.02 + 0.3 * ((i * 7) % 11) as f64 / 11.0;
        let height = if i % 2 == 0 { height } else { -height };
        let Ok(a) = PerturbationField::hat(center, height) else {
            continue;
        };
        let d = directional_derivative(&mix, &found.measure, &a, &samples).unwrap();
        assert!(d >= -opts.tol, "center {center} height {height}: {d}");
    }
}

/// Three-level adaptive output for `xi = 0.64 u^2` on the default grid.
fn sk_low_adaptive() -> RsbMeasure {
    RsbMeasure::from_atoms(&[
        (0.025676291094198746, 0.07581511913595113),
        (0.0769290110503137, 0.07554797652875628),
        (0.12787521386099143, 0.8486369043352926),
    ])
    .unwrap()
}

#[test]
fn low_temperature_fixture_regressions() {
    let mix = Mixture::sk(0.8);
    let mu = sk_low_adaptive();
    let grid = GridParams::for_mixture(&mix);
    let cert = certify(&mix, &mu, 1e-3).unwrap();
    assert!(cert.gamma_residual < 1e-6, "{}", cert.gamma_residual);
    // No atom at the origin: the finite-level fit of a continuous measure.
    assert_eq!(cert.verdict, Verdict::ViolatesOrigin);
    let dc = density_consistency(&mix, &mu, 0.03, 0.125, 20, &grid).unwrap();
    // Tracked, not a correctness bound: the atomic fit only approximates the
    // distribution function that the consistency relation determines.
    assert!((dc.max_residual - 0.0349570).abs() < 1e-5, "{}", dc.max_residual);
}
