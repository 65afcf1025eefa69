//! Minimization of `P` over atomic order parameters and certification of candidates.
//!
//! The certificate checks necessary conditions only. A `ConsistentMinimizer` verdict
//! means no check failed, not that the measure is proved optimal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::moment_bound_check;
use crate::error::{Error, Result};
use crate::functional::parisi_value;
use crate::gamma::gamma_report;
use crate::measure::RsbMeasure;
use crate::mixture::Mixture;
use crate::pde::GridParams;

/// Largest number of levels the optimizer accepts.
pub const MAX_LEVELS: usize = 8;

/// Atoms closer than this are merged before certification.
pub const MERGE_DISTANCE: f64 = 1e-4;
/// Atoms lighter than this are dropped before certification.
pub const MIN_ATOM_MASS: f64 = 1e-6;

const LOGIT_CAP: f64 = 30.0;

/// Search settings shared by the fixed-level and adaptive minimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Nelder-Mead starts per level.
    pub n_starts: usize,
    /// Function evaluations allowed per start.
    pub max_evals: usize,
    /// Highest level tried by [`minimize_adaptive`].
    pub max_k: usize,
    /// The adaptive search stops once a level gains less than this.
    pub improve_tol: f64,
    /// Stopping threshold on the spread of simplex values.
    pub ftol: f64,
    /// Certification tolerance.
    pub tol: f64,
    pub seed: u64,
    /// Solver grid; `None` selects [`GridParams::for_mixture`].
    pub grid: Option<GridParams>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evals: 4000,
            max_k: 4,
            improve_tol: 1e-7,
            ftol: 1e-13,
            tol: 1e-3,
            seed: 0,
            grid: None,
        }
    }
}

impl OptimizerOptions {
    fn grid_for(&self, mix: &Mixture) -> GridParams {
        self.grid.unwrap_or_else(|| GridParams::for_mixture(mix))
    }
}

/// Best measure found at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub measure: RsbMeasure,
    pub value: f64,
    pub evaluations: usize,
    /// Set when some start ran out of evaluations before converging.
    pub exhausted: bool,
}

impl Minimum {
    /// `Err(BudgetExhausted)` if any start hit its evaluation cap.
    pub fn require_converged(&self) -> Result<()> {
        if self.exhausted {
            Err(Error::BudgetExhausted { evaluations: self.evaluations })
        } else {
            Ok(())
        }
    }
}

/// One row of the adaptive search trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub value: f64,
}

/// Output of [`minimize_adaptive`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveResult {
    pub measure: RsbMeasure,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
    pub exhausted: bool,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(s: f64) -> f64 {
    let s = s.clamp(1e-13, 1.0 - 1e-13);
    (s / (1.0 - s)).ln().clamp(-LOGIT_CAP, LOGIT_CAP)
}

/// Maps `2k + 1` unconstrained numbers to an ordered triplet: each `q_p` takes a
/// logistic fraction of the room left above `q_{p-1}`, and likewise for `m_p`.
pub fn decode(k: usize, theta: &[f64]) -> Result<RsbMeasure> {
    assert_eq!(theta.len(), 2 * k + 1, "parameter count");
    let mut m = vec![0.0];
    for &t in &theta[..k] {
        let prev = *m.last().unwrap();
        m.push(prev + sigmoid(t) * (1.0 - prev));
    }
    m.push(1.0);
    let mut q = vec![0.0];
    for &t in &theta[k..] {
        let prev: f64 = *q.last().unwrap();
        q.push(prev + sigmoid(t) * (1.0 - prev));
    }
    // Saturated logits give empty levels, which `from_atoms` drops.
    let atoms: Vec<(f64, f64)> = (1..=k + 1).map(|p| (q[p], m[p] - m[p - 1])).collect();
    RsbMeasure::from_atoms(&atoms)
}

/// Inverse of [`decode`] for a list of `k + 1` atoms (zero masses allowed).
pub fn encode(atoms: &[(f64, f64)]) -> Vec<f64> {
    let k = atoms.len() - 1;
    let mut theta = Vec::with_capacity(2 * k + 1);
    let mut prev = 0.0;
    for &(_, w) in &atoms[..k] {
        let next: f64 = prev + w;
        theta.push(logit((next - prev) / (1.0 - prev).max(1e-300)));
        prev = next.min(1.0);
    }
    let mut prev = 0.0;
    for &(q, _) in atoms {
        theta.push(logit((q - prev) / (1.0 - prev).max(1e-300)));
        prev = q;
    }
    theta
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder-Mead with standard coefficients, restarted once from its own optimum.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> Simplex {
    let mut out = nelder_mead_once(f, x0, step, max_evals, ftol);
    if out.converged && out.evaluations < max_evals {
        let again = nelder_mead_once(f, &out.best, 0.25 * step, max_evals - out.evaluations, ftol);
        out.evaluations += again.evaluations;
        out.converged = again.converged;
        if again.value < out.value {
            out.best = again.best;
            out.value = again.value;
        }
    }
    out
}

fn nelder_mead_once(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> Simplex {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i] > 0.0 { -step } else { step };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut converged = false;
    while evals.get() < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread <= ftol * (1.0 + vals[0].abs()) || size < 1e-9 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[n]).map(|(c, w)| (c + t * (c - w)).clamp(-LOGIT_CAP, LOGIT_CAP)).collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        // Outside contraction if the reflection helped at all, inside otherwise.
        let xc = along(if fr < vals[n] { 0.5 } else { -0.5 });
        let fc = eval(&xc);
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
            vals[i] = eval(&shrunk);
            pts[i] = shrunk;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Simplex { best: pts[best].clone(), value: vals[best], evaluations: evals.get(), converged }
}

/// Merges atoms within [`MERGE_DISTANCE`], drops atoms below [`MIN_ATOM_MASS`] and
/// moves atoms at `q <= MERGE_DISTANCE` to the origin.
pub fn consolidate(mu: &RsbMeasure) -> Result<RsbMeasure> {
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (q, w) in mu.atoms() {
        if w < MIN_ATOM_MASS {
            continue;
        }
        let q = if q <= MERGE_DISTANCE { 0.0 } else { q };
        match atoms.last_mut() {
            Some(last) if q - last.0 <= MERGE_DISTANCE => {
                // Keep the origin pinned when merging into it.
                let loc = if last.0 == 0.0 { 0.0 } else { (last.0 * last.1 + q * w) / (last.1 + w) };
                *last = (loc, last.1 + w);
            }
            _ => atoms.push((q, w)),
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.is_empty() || total <= 0.0 {
        return Err(Error::InvalidMeasure("every atom is below the mass floor".into()));
    }
    for a in &mut atoms {
        a.1 /= total;
    }
    RsbMeasure::from_atoms(&atoms)
}

fn objective<'a>(mix: &'a Mixture, k: usize, grid: &'a GridParams) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |theta: &[f64]| {
        decode(k, theta)
            .and_then(|mu| parisi_value(mix, &mu, grid))
            .unwrap_or(f64::INFINITY)
    }
}

fn random_start(k: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..2 * k + 1).map(|_| rng.random_range(-4.0..4.0)).collect()
}

fn search(mix: &Mixture, k: usize, mut starts: Vec<Vec<f64>>, opts: &OptimizerOptions) -> Result<Minimum> {
    if k > MAX_LEVELS {
        return Err(Error::LevelCapExceeded { k, max: MAX_LEVELS });
    }
    let grid = opts.grid_for(mix);
    grid.validate(mix)?;
    let mut stream = 1;
    while starts.len() < opts.n_starts.max(1) {
        starts.push(random_start(k, opts.seed, stream));
        stream += 1;
    }
    let f = objective(mix, k, &grid);
    let runs: Vec<Simplex> = starts
        .par_iter()
        .map(|x0| nelder_mead(&f, x0, 1.0, opts.max_evals, opts.ftol))
        .collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let exhausted = runs.iter().any(|r| !r.converged);
    // Ties go to the earliest start so the result is independent of scheduling.
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .unwrap();
    if !best.value.is_finite() {
        return Err(Error::QuadratureUnderflow { u: 0.0 });
    }
    let raw = decode(k, &best.best)?;
    let measure = consolidate(&raw)?;
    let value = parisi_value(mix, &measure, &grid)?;
    let (measure, value) = if value <= best.value { (measure, value) } else { (raw, best.value) };
    Ok(Minimum { measure, value, evaluations, exhausted })
}

/// Best `k`-level measure over `opts.n_starts` Nelder-Mead runs.
///
/// The first start is the neutral point of the parameterization; the rest are drawn
/// from `opts.seed`.
pub fn minimize_fixed_k(mix: &Mixture, k: usize, opts: &OptimizerOptions) -> Result<Minimum> {
    search(mix, k, vec![vec![0.0; 2 * k + 1]], opts)
}

/// Splits the measure at the point of `[0, q_max]` where `|Gamma(u) - u|` is largest.
/// Returns the seeded atom list and the same measure with a massless atom there.
fn split_seed(mix: &Mixture, mu: &RsbMeasure, grid: &GridParams) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let atoms: Vec<(f64, f64)> = mu.atoms().into_iter().filter(|a| a.1 > 0.0).collect();
    let top = mu.q_max().max(0.05);
    let probes: Vec<f64> = (1..=32).map(|i| top * i as f64 / 33.0).collect();
    let report = gamma_report(mix, mu, grid, &probes)?;
    let far_from_atoms = |u: f64| atoms.iter().all(|a| (a.0 - u).abs() > 2.0 * MERGE_DISTANCE);
    let u_star = probes
        .iter()
        .zip(&report.gamma)
        .filter(|(u, _)| far_from_atoms(**u))
        .max_by(|a, b| (a.1 - a.0).abs().total_cmp(&(b.1 - b.0).abs()))
        .map_or(0.5 * top, |(u, _)| *u);
    let donor = atoms.iter().rposition(|a| a.0 < u_star).unwrap_or(0);
    let mut split = atoms.clone();
    let half = 0.5 * split[donor].1;
    split[donor].1 = half;
    split.push((u_star, half));
    split.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut padded = atoms;
    padded.push((u_star, 0.0));
    padded.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((split, padded))
}

/// Raises the level one at a time, seeding each level from the previous optimum,
/// until a level improves the value by less than `opts.improve_tol`.
pub fn minimize_adaptive(mix: &Mixture, opts: &OptimizerOptions) -> Result<AdaptiveResult> {
    if opts.max_k > MAX_LEVELS {
        return Err(Error::LevelCapExceeded { k: opts.max_k, max: MAX_LEVELS });
    }
    let grid = opts.grid_for(mix);
    let first = minimize_fixed_k(mix, 0, opts)?;
    let mut exhausted = first.exhausted;
    let mut best = (first.measure, first.value);
    let mut trace = vec![TraceEntry { k: 0, value: first.value }];
    for k in 1..=opts.max_k {
        let levels = best.0.atoms().iter().filter(|a| a.1 > 0.0).count();
        if levels < k {
            // The previous level already collapsed onto fewer atoms.
            break;
        }
        let (split, padded) = split_seed(mix, &best.0, &grid)?;
        let found = search(mix, k, vec![encode(&split), encode(&padded)], opts)?;
        exhausted |= found.exhausted;
        let gain = best.1 - found.value;
        trace.push(TraceEntry { k, value: found.value.min(best.1) });
        if gain > 0.0 {
            best = (found.measure, found.value);
        }
        if gain < opts.improve_tol {
            break;
        }
    }
    Ok(AdaptiveResult { measure: best.0, value: best.1, trace, exhausted })
}

/// Outcome of [`certify`], in the order the checks are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ConsistentMinimizer,
    ViolatesGammaFixedPoint,
    ViolatesGammaSlope,
    ViolatesOrigin,
    ViolatesMomentBound,
}

/// Necessary-condition checks of a candidate minimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// Atoms after consolidation.
    pub support_estimate: Vec<(f64, f64)>,
    /// `max |Gamma(q) - q|` over the support.
    pub gamma_residual: f64,
    /// `max Gamma'(q)` over the support.
    pub gamma_prime_max: f64,
    pub origin_in_support: bool,
    pub origin_mass: f64,
    pub moment_bound_lhs: f64,
    pub moment_bound_rhs: f64,
    pub verdict: Verdict,
}

/// [`certify_with`] on the default grid.
pub fn certify(mix: &Mixture, mu: &RsbMeasure, tol: f64) -> Result<Certificate> {
    certify_with(mix, mu, tol, &GridParams::for_mixture(mix))
}

/// Checks `Gamma(q) = q` and `Gamma'(q) <= 1` on the support, an atom at the origin,
/// and the moment lower bound, each up to `tol`.
pub fn certify_with(mix: &Mixture, mu: &RsbMeasure, tol: f64, grid: &GridParams) -> Result<Certificate> {
    let mu = consolidate(mu)?;
    let support: Vec<(f64, f64)> = mu.atoms().into_iter().filter(|a| a.1 > 0.0).collect();
    let us: Vec<f64> = support.iter().map(|a| a.0).collect();
    let report = gamma_report(mix, &mu, grid, &us)?;
    let gamma_residual = us.iter().zip(&report.gamma).map(|(q, g)| (g - q).abs()).fold(0.0, f64::max);
    let gamma_prime_max = report.gamma_prime.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let origin_mass = support.iter().find(|a| a.0 == 0.0).map_or(0.0, |a| a.1);
    let bound = moment_bound_check(mix, &mu);
    let verdict = if gamma_residual > tol {
        Verdict::ViolatesGammaFixedPoint
    } else if gamma_prime_max > 1.0 + tol {
        Verdict::ViolatesGammaSlope
    } else if origin_mass <= 0.0 {
        Verdict::ViolatesOrigin
    } else if bound.lhs < bound.rhs - tol {
        Verdict::ViolatesMomentBound
    } else {
        Verdict::ConsistentMinimizer
    };
    Ok(Certificate {
        support_estimate: support,
        gamma_residual,
        gamma_prime_max,
        origin_in_support: origin_mass > 0.0,
        origin_mass,
        moment_bound_lhs: bound.lhs,
        moment_bound_rhs: bound.rhs,
        verdict,
    })
}

/// `(q, Gamma(q))` at every atom of positive mass, as needed by
/// [`directional_derivative`](crate::functional::directional_derivative).
pub fn support_gamma(mix: &Mixture, mu: &RsbMeasure, grid: &GridParams) -> Result<Vec<(f64, f64)>> {
    let us: Vec<f64> = mu.atoms().into_iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect();
    Ok(gamma_report(mix, mu, grid, &us)?.samples())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::metric_d;
    use proptest::prelude::*;

    #[test]
    fn decode_encode_round_trip() {
        let atoms = [(0.0, 0.2), (0.3, 0.5), (0.7, 0.3)];
        let mu = decode(2, &encode(&atoms)).unwrap();
        for (a, b) in mu.atoms().iter().zip(atoms) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    proptest! {
        #[test]
        fn decode_is_always_admissible(theta in prop::collection::vec(-40.0f64..40.0, 5)) {
            let mu = decode(2, &theta).unwrap();
            let total: f64 = mu.atoms().iter().map(|a| a.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 7.0;
        let out = nelder_mead(&f, &[0.0, 0.0], 1.0, 2000, 1e-15);
        assert!(out.converged);
        assert!((out.best[0] - 1.0).abs() < 1e-6 && (out.best[1] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn consolidate_merges_and_pins_origin() {
        let mu = RsbMeasure::from_atoms(&[(5e-5, 0.3), (0.4, 0.3), (0.40005, 0.4 - 1e-7), (0.9, 1e-7)]).unwrap();
        let c = consolidate(&mu).unwrap();
        let atoms = c.atoms();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].0, 0.0);
        assert!((atoms[1].0 - 0.4000286).abs() < 1e-6);
        assert!((atoms[1].1 - 0.7).abs() < 1e-6);
    }

    #[test]
    fn high_temperature_sk_stays_at_origin() {
        let mix = Mixture::sk(0.6);
        let opts = OptimizerOptions { n_starts: 3, ..Default::default() };
        let k0 = minimize_fixed_k(&mix, 0, &opts).unwrap();
        assert!((k0.value - 0.18).abs() < 1e-6, "{}", k0.value);
        let k1 = minimize_fixed_k(&mix, 1, &opts).unwrap();
        let delta = RsbMeasure::dirac(0.0).unwrap();
        assert!(metric_d(&k1.measure, &delta) <= 1e-3, "{:?}", k1.measure);
    }

    #[test]
    fn dirac_certificates() {
        let delta = RsbMeasure::dirac(0.0).unwrap();
        let c = certify(&Mixture::sk(0.6), &delta, 1e-3).unwrap();
        assert_eq!(c.verdict, Verdict::ConsistentMinimizer);
        assert!((c.gamma_prime_max - 0.72).abs() < 1e-6);
        let c = certify(&Mixture::sk(0.8), &delta, 1e-3).unwrap();
        assert_eq!(c.verdict, Verdict::ViolatesGammaSlope);
        let off = RsbMeasure::dirac(0.3).unwrap();
        let c = certify(&Mixture::sk(0.6), &off, 1.0).unwrap();
        assert_eq!(c.verdict, Verdict::ViolatesOrigin);
    }
}
