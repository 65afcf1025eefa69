//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::SQRT_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use parisi::criteria::{check_rsb_criteria, gaussian_selftest, thm3_margin};
use parisi::functional::directional_derivative;
use parisi::gamma::{gamma_curve, gamma_derivatives, mc_gamma_oracle, tilted_density};
use parisi::optimizer::support_gamma;
use parisi::quad::{bisect, GaussHermite};
use parisi::spherical::{solve_two_plus_p, spherical_certify, stationarity_residual, two_plus_p_gap};
use parisi::{
    certify, metric_d, minimize_adaptive, parisi_value, recursion_oracle, solve_pde, GridParams, Mixture,
    OptimizerOptions, OrderParameter, PerturbationField, RsbMeasure, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn random_mixture(rng: &mut ChaCha8Rng) -> Mixture {
    let mut pairs = vec![(2, rng.random_range(0.05..0.6))];
    for p in [3, 4, 6] {
        if rng.random_bool(0.5) {
            pairs.push((p, rng.random_range(0.05..0.5)));
        }
    }
    Mixture::from_pairs(&pairs).expect("positive coefficients")
}

/// `k + 1` atoms, `k <= 2`, the lowest one at the origin half of the time.
fn random_measure(rng: &mut ChaCha8Rng) -> RsbMeasure {
    let n = rng.random_range(1..=3);
    let mut qs: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.95)).collect();
    if rng.random_bool(0.5) {
        qs[0] = 0.0;
    }
    qs.sort_by(f64::total_cmp);
    let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = ws.iter().sum();
    let atoms: Vec<(f64, f64)> = qs.into_iter().zip(ws).map(|(q, w)| (q, w / total)).collect();
    RsbMeasure::from_atoms(&atoms).expect("valid atoms")
}

fn pde_closed_form() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mix = random_mixture(&mut rng);
        let start = Instant::now();
        let sol = solve_pde(&mix, &RsbMeasure::dirac(0.0).unwrap(), &GridParams::for_mixture(&mix))
            .map_err(|e| e.to_string())?;
        within(start.elapsed(), Duration::from_secs(5))?;
        let xs = sol.x_grid();
        for s in sol.slices() {
            let shift = 0.5 * (mix.xi_p(1.0) - mix.xi_p(s.u));
            for (x, phi) in xs.iter().zip(&s.phi) {
                worst = worst.max((phi - (x.cosh().ln() + shift)).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max error {worst:.3e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn functional_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mixtures = [
        Mixture::sk(0.8),
        Mixture::from_pairs(&[(2, 0.4), (3, 0.3)]).unwrap(),
        Mixture::from_pairs(&[(2, 0.2), (4, 0.5), (6, 0.2)]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mix = &mixtures[i % 3];
        let mu = random_measure(&mut rng);
        let pde = parisi_value(mix, &mu, &GridParams::for_mixture(mix)).map_err(|e| e.to_string())?;
        let oracle = recursion_oracle(mix, &mu, 80).map_err(|e| e.to_string())?;
        worst = worst.max((pde - oracle).abs());
    }
    ensure(worst <= 1e-6, || format!("max disagreement {worst:.3e}"))?;
    let mut dirac: f64 = 0.0;
    for mix in &mixtures {
        let v = parisi_value(mix, &RsbMeasure::dirac(0.0).unwrap(), &GridParams::for_mixture(mix))
            .map_err(|e| e.to_string())?;
        dirac = dirac.max((v - 0.5 * mix.xi(1.0)).abs());
    }
    ensure(dirac <= 1e-8, || format!("P(delta_0) off by {dirac:.3e}"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("max disagreement {worst:.2e}, P(delta_0) error {dirac:.2e}"))
}

fn gamma_oracles() -> Check {
    let start = Instant::now();
    let mix = Mixture::sk(0.8);
    let sol = solve_pde(&mix, &RsbMeasure::dirac(0.0).unwrap(), &GridParams::for_mixture(&mix))
        .map_err(|e| e.to_string())?;
    let td = tilted_density(&sol).map_err(|e| e.to_string())?;
    let us: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    let report = gamma_derivatives(&td, &sol, &us).map_err(|e| e.to_string())?;
    let gh = GaussHermite::new(200);
    let mut worst: f64 = 0.0;
    for (&u, &g) in us.iter().zip(&report.gamma) {
        let t = 1.28 * u;
        let want = gh.expect(0.0, 1.0, |z| (z * t.sqrt() + t).tanh().powi(2));
        worst = worst.max((g - want).abs());
    }
    ensure(worst <= 1e-5, || format!("quadrature mismatch {worst:.3e}"))?;
    let mut worst_z: f64 = 0.0;
    for (i, &u) in [0.25, 0.5, 1.0].iter().enumerate() {
        let (mean, se) = mc_gamma_oracle(&sol, u, 10_000, 10 + i as u64).map_err(|e| e.to_string())?;
        let g = gamma_curve(&td, &sol, &[u]).map_err(|e| e.to_string())?[0];
        let z = (mean - g).abs() / se;
        ensure(z <= 3.0, || format!("path estimate {mean} +- {se} vs {g} at u = {u}"))?;
        worst_z = worst_z.max(z);
    }
    let drift = report.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    ensure(drift <= 1e-4, || format!("tilted mass drift {drift:.3e}"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("quadrature {worst:.2e}, path z <= {worst_z:.2}, mass drift {drift:.2e}"))
}

fn one_level_slope() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mix = Mixture::from_pairs(&[(2, 0.8), (3, 0.3)]).unwrap();
    let gh = GaussHermite::new(200);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = rng.random_range(0.15..0.85);
        let q = rng.random_range(0.1..0.85);
        let mu = RsbMeasure::from_atoms(&[(0.0, m), (q, 1.0 - m)]).unwrap();
        let sol = solve_pde(&mix, &mu, &GridParams::for_mixture(&mix)).map_err(|e| e.to_string())?;
        let td = tilted_density(&sol).map_err(|e| e.to_string())?;
        let got = gamma_derivatives(&td, &sol, &[q]).map_err(|e| e.to_string())?.gamma_prime[0];
        let sd = mix.xi_p(q).sqrt();
        let num = gh.expect(0.0, sd, |z| z.cosh().powf(m - 4.0));
        let den = gh.expect(0.0, sd, |z| z.cosh().powf(m));
        let want = mix.xi_pp(q) * num / den;
        let rel = (got - want).abs() / want.abs();
        ensure(rel <= 1e-4, || format!("m = {m}, q = {q}: {got} vs {want}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn slice_bounds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut d1_max, mut d2_max, mut d2_min, mut odd): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for _ in 0..10 {
        let mix = random_mixture(&mut rng);
        let mu = random_measure(&mut rng);
        let sol = solve_pde(&mix, &mu, &GridParams::for_mixture(&mix)).map_err(|e| e.to_string())?;
        for s in sol.slices() {
            let n = s.phi.len();
            for i in 0..n {
                d1_max = d1_max.max(s.d1[i].abs());
                d2_max = d2_max.max(s.d2[i]);
                d2_min = d2_min.min(s.d2[i]);
                odd = odd.max((s.phi[i] - s.phi[n - 1 - i]).abs());
            }
        }
    }
    ensure(d1_max <= 1.0 + 1e-9, || format!("|d_x Phi| reaches {d1_max}"))?;
    ensure(d2_min > 0.0 && d2_max <= 1.0 + 1e-9, || format!("d_xx Phi in [{d2_min:e}, {d2_max}]"))?;
    ensure(odd <= 1e-10, || format!("evenness residual {odd:.3e}"))?;
    Ok(format!("|d1| <= {d1_max:.12}, d2 in [{d2_min:.2e}, {d2_max:.12}], evenness {odd:.1e}"))
}

/// Minimizers from the replica-symmetric region check, reused for first-order optimality.
struct Certified {
    mix: Mixture,
    measure: RsbMeasure,
}

fn rs_region(certified: &mut Vec<Certified>) -> Check {
    let start = Instant::now();
    let opts = OptimizerOptions::default();

    let high = Mixture::sk(0.6);
    let found = minimize_adaptive(&high, &opts).map_err(|e| e.to_string())?;
    let d = metric_d(&found.measure, &RsbMeasure::dirac(0.0).unwrap());
    ensure(d <= 1e-3, || format!("beta 0.6: d(result, delta_0) = {d:.3e}"))?;
    let cert = certify(&high, &found.measure, opts.tol).map_err(|e| e.to_string())?;
    ensure(cert.verdict == Verdict::ConsistentMinimizer, || format!("beta 0.6: {:?}", cert.verdict))?;
    certified.push(Certified { mix: high, measure: found.measure });

    let low = Mixture::sk(0.8);
    let origin = certify(&low, &RsbMeasure::dirac(0.0).unwrap(), opts.tol).map_err(|e| e.to_string())?;
    ensure(origin.verdict == Verdict::ViolatesGammaSlope, || format!("beta 0.8, delta_0: {:?}", origin.verdict))?;
    let found = minimize_adaptive(&low, &opts).map_err(|e| e.to_string())?;
    let samples = support_gamma(&low, &found.measure, &GridParams::for_mixture(&low)).map_err(|e| e.to_string())?;
    let fixed = samples.iter().filter(|(q, g)| (g - q).abs() <= 1e-3).count();
    ensure(fixed >= 2, || format!("beta 0.8: only {fixed} support points with |Gamma(q) - q| <= 1e-3"))?;
    let cert = certify(&low, &found.measure, opts.tol).map_err(|e| e.to_string())?;
    if cert.verdict == Verdict::ConsistentMinimizer {
        certified.push(Certified { mix: low, measure: found.measure.clone() });
    }
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "beta 0.6 d = {d:.1e}; beta 0.8 Gamma'(0) = {:.3}, {} support points, certificate {:?}",
        origin.gamma_prime_max,
        fixed,
        cert.verdict
    ))
}

fn condition_checkers() -> Check {
    let margin = |b: f64| thm3_margin(&Mixture::pure(3, b));
    let threshold = bisect(margin, 140.0, 160.0, 1e-9).ok_or("no sign change in [140, 160]")?;
    ensure((threshold - 147.80).abs() <= 0.01, || format!("threshold {threshold}"))?;
    let holds = |b: f64| check_rsb_criteria(&Mixture::sk(b)).thm4_satisfied;
    let (lo, hi) = (1.0 / SQRT_2, 3.0 / (2.0 * SQRT_2));
    for (b, want) in [(lo - 1e-9, false), (lo + 1e-9, true), (hi - 1e-9, true), (hi + 1e-9, false), (0.9, true)] {
        ensure(holds(b) == want, || format!("one-level condition at beta {b}: expected {want}"))?;
    }
    // A cubic term large enough to break the left-hand-side bound inside the window.
    let cubic = Mixture::from_pairs(&[(2, 0.81), (3, 4.0)]).unwrap();
    ensure(!check_rsb_criteria(&cubic).thm4_satisfied, || "cubic term should violate the bound".into())?;
    Ok(format!("multi-level threshold beta_3 = {threshold:.4}"))
}

fn spherical_exact() -> Check {
    let start = Instant::now();
    let sol = solve_two_plus_p(1.0, 0.05, 4).map_err(|e| e.to_string())?;
    ensure(two_plus_p_gap(&sol.mixture, 0.28) > 0.0 && two_plus_p_gap(&sol.mixture, 0.29) < 0.0, || {
        "bracket h(0.28) > 0 > h(0.29) fails".into()
    })?;
    ensure((sol.q_m - 0.2836).abs() <= 5e-4, || format!("q_M = {}", sol.q_m))?;
    let cdf = sol.measure.cdf(0.1);
    ensure((cdf - 0.0228).abs() <= 1e-4, || format!("cdf(0.1) = {cdf}"))?;
    let report = spherical_certify(&sol.mixture, &sol.measure, 1e-3).map_err(|e| e.to_string())?;
    ensure(report.mass_on_s >= 0.999, || format!("mass on S = {}", report.mass_on_s))?;
    let res = stationarity_residual(&sol.mixture, &sol.measure, 0.05, sol.q_m - 0.01, 400);
    ensure(res <= 1e-6, || format!("stationarity residual {res:.3e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("q_M = {:.6}, cdf(0.1) = {cdf:.5}, mass on S = {:.6}, residual {res:.1e}", sol.q_m, report.mass_on_s))
}

/// Piecewise-linear field with `a(u) in [-u, 1 - u]`, scaled down to slope at most one.
fn random_field(rng: &mut ChaCha8Rng) -> PerturbationField {
    let mut us: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..0.99)).collect();
    us.push(0.0);
    us.push(1.0);
    us.sort_by(f64::total_cmp);
    let mut nodes: Vec<(f64, f64)> = us.iter().map(|&u| (u, rng.random_range(-u..=1.0 - u))).collect();
    let slope = nodes.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max);
    if slope > 1.0 {
        let s = 0.999 / slope;
        nodes.iter_mut().for_each(|n| n.1 *= s);
    }
    PerturbationField::new(nodes).expect("admissible by construction")
}

fn first_order(certified: &[Certified]) -> Check {
    ensure(!certified.is_empty(), || "no certified minimizers to test".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut min_dir, mut worst_fd): (f64, f64) = (f64::INFINITY, 0.0);
    for c in certified {
        let grid = GridParams::for_mixture(&c.mix);
        let samples = support_gamma(&c.mix, &c.measure, &grid).map_err(|e| e.to_string())?;
        let value = parisi_value(&c.mix, &c.measure, &grid).map_err(|e| e.to_string())?;
        let at = |a: &PerturbationField, t: f64| -> Result<f64, String> {
            let mu = a.perturb(&c.measure, t).map_err(|e| e.to_string())?;
            parisi_value(&c.mix, &mu, &grid).map_err(|e| e.to_string())
        };
        for _ in 0..50 {
            let a = random_field(&mut rng);
            let dir = directional_derivative(&c.mix, &c.measure, &a, &samples).map_err(|e| e.to_string())?;
            // Richardson extrapolation of the one-sided difference quotient.
            let t = 1e-2;
            let fd_t = (at(&a, t)? - value) / t;
            let fd_half = (at(&a, 0.5 * t)? - value) / (0.5 * t);
            let fd = 2.0 * fd_half - fd_t;
            let gap = (dir - fd).abs();
            ensure(dir >= -1e-3, || format!("directional derivative {dir}"))?;
            ensure(gap <= 1e-4 * (1.0 + value.abs()), || format!("derivative {dir} vs difference {fd}"))?;
            min_dir = min_dir.min(dir);
            worst_fd = worst_fd.max(gap);
        }
    }
    Ok(format!("{} minimizer(s), min derivative {min_dir:.2e}, max difference gap {worst_fd:.2e}", certified.len()))
}

fn gaussian_identities() -> Check {
    let start = Instant::now();
    let report = gaussian_selftest();
    let worst = report.abs_exp.iter().map(|r| r.residual).fold(0.0, f64::max);
    ensure(report.abs_exp.len() == 5 && worst <= 1e-10, || format!("identity residual {worst:.3e}"))?;
    for r in &report.mills {
        ensure(r.holds, || format!("tail bound fails at a = {}: {} not in [{}, {}]", r.a, r.value, r.lower, r.upper))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("identity residual {worst:.1e}, {} tail bounds hold", report.mills.len()))
}

fn main() -> ExitCode {
    let mut certified = Vec::new();
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let r = f();
        let line = match &r {
            Ok(detail) => format!("PASS {name}: {detail} [{:.1?}]", start.elapsed()),
            Err(why) => format!("FAIL {name}: {why} [{:.1?}]", start.elapsed()),
        };
        println!("{line}");
        results.push((name, r));
    };
    run("1 pde closed form", &mut pde_closed_form);
    run("2 functional oracle", &mut functional_oracle);
    run("3 gamma oracles", &mut gamma_oracles);
    run("4 one-level gamma slope", &mut one_level_slope);
    run("5 slice bounds", &mut slice_bounds);
    run("6 replica-symmetric region", &mut || rs_region(&mut certified));
    run("7 condition checkers", &mut condition_checkers);
    run("8 spherical exact solution", &mut spherical_exact);
    run("9 first-order optimality", &mut || first_order(&certified));
    run("10 gaussian identities", &mut gaussian_identities);
    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
