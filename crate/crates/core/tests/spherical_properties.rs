use parisi::spherical::{cs_value, solve_two_plus_p, spherical_structure_checks, variational_curves};
use parisi::{GeneralMeasure, Mixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atomic(atoms: Vec<(f64, f64)>) -> GeneralMeasure {
    GeneralMeasure::new(atoms, vec![]).unwrap()
}

#[test]
fn exact_measure_beats_one_level_grid() {
    let sol = solve_two_plus_p(1.0, 0.05, 4).unwrap();
    let exact = cs_value(&sol.mixture, &sol.measure);
    assert!(exact <= cs_value(&sol.mixture, &GeneralMeasure::dirac(0.0)));
    let mut best = f64::INFINITY;
    for i in 1..=20 {
        let q = 0.5 * i as f64 / 20.0;
        for j in 1..20 {
            let m = j as f64 / 20.0;
            best = best.min(cs_value(&sol.mixture, &atomic(vec![(0.0, m), (q, 1.0 - m)])));
        }
    }
    assert!(exact <= best, "{exact} vs best one-level {best}");
}

#[test]
fn exact_measure_beats_random_family() {
    let cases = [(1.0, 0.05, 4), (1.2, 0.03, 5), (0.9, 0.02, 6)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (beta_sq, t, p) in cases {
        let sol = solve_two_plus_p(beta_sq, t, p).unwrap();
        assert!(sol.applicable);
        let exact = cs_value(&sol.mixture, &sol.measure);
        for i in 0..200 {
            let levels = 2 + i % 2;
            let mut qs: Vec<f64> = (0..levels).map(|_| rng.random_range(0.0..0.9)).collect();
            qs[0] = 0.0;
            qs.sort_by(f64::total_cmp);
            let ws: Vec<f64> = (0..levels).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = ws.iter().sum();
            let candidate = atomic(qs.into_iter().zip(ws).map(|(q, w)| (q, w / total)).collect());
            let v = cs_value(&sol.mixture, &candidate);
            assert!(exact <= v, "{exact} > {v} for {:?}", candidate.atoms());
        }
    }
}

#[test]
fn f_is_the_primitive_of_slope_curve() {
    let sol = solve_two_plus_p(1.0, 0.05, 4).unwrap();
    let h = 1e-4;
    let centres: Vec<f64> = (1..10).map(|i| 0.6 * i as f64 / 10.0).collect();
    let grid: Vec<f64> = centres.iter().flat_map(|&q| [q - h, q, q + h]).collect();
    let r = variational_curves(&sol.mixture, &sol.measure, &grid).unwrap();
    for c in 0..centres.len() {
        let fd = (r.f_curve[3 * c + 2] - r.f_curve[3 * c]) / (2.0 * h);
        let slope = r.slope_curve[3 * c + 1];
        assert!((fd - slope).abs() < 1e-6 * (1.0 + slope.abs()), "q {}: {fd} vs {slope}", centres[c]);
    }
}

#[test]
fn structure_of_exact_measure() {
    let sol = solve_two_plus_p(1.0, 0.05, 4).unwrap();
    let s = spherical_structure_checks(&sol.mixture, &sol.measure);
    assert!(s.origin_in_support);
    assert!((s.xi_pp_origin - 1.9).abs() < 1e-12);
    assert_eq!(s.gap_above_origin, Some(0.0));
    // Interior of the continuous region carries no atoms.
    for (q, w) in sol.measure.atoms() {
        if *q > 0.0 && *q < sol.q_m {
            assert!(*w < 1e-6, "{q} {w}");
        }
    }
    let sk = Mixture::sk(0.5);
    let trivial = spherical_structure_checks(&sk, &GeneralMeasure::dirac(0.0));
    assert!(trivial.interior_atoms.is_empty());
}
