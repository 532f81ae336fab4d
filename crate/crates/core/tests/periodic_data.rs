use anosov_lab::conjugacy::ConjugacyPair;
use anosov_lab::geom::Vec2;
use anosov_lab::periodic_data::*;
use anosov_lab::torus_map::{examples, NewtonConfig};
use proptest::prelude::*;

fn closed_form() -> (f64, f64) {
    let r = 17f64.sqrt();
    (((3.0 + r) / 2.0).ln(), ((r - 3.0) / 2.0).ln())
}

fn cfg() -> ShootingConfig {
    ShootingConfig::default()
}

#[test]
fn smooth_conjugate_orbits_are_images_of_linear_orbits() {
    let f = examples::smooth_conjugate_example();
    let h = f.ground_truth().unwrap().clone();
    let newton = NewtonConfig::default();
    let mut worst: f64 = 0.0;
    for (_, _, seed) in linear_seeds(&f, 4).unwrap() {
        let o = continue_periodic_orbit(&f, &seed, &cfg()).unwrap();
        assert_eq!(o.words, seed.words);
        assert!(o.residual < 1e-10);
        assert!(o.torus_defect(&f) < 1e-10);
        for (x, s) in o.lifts.iter().zip(&seed.lifts) {
            let truth = h.inverse(s, &newton).unwrap();
            worst = worst.max((x - truth).norm());
        }
    }
    assert!(worst < 1e-8, "worst {worst:e}");
}

#[test]
fn origin_continues_to_itself() {
    for f in [examples::shear_example(), examples::raw_family(0.05), examples::smooth_conjugate_example()] {
        assert!(f.perturbation(&Vec2::zeros()).norm() < 1e-15);
        let seed = &linear_seeds(&f, 1).unwrap()[0].2;
        assert_eq!(seed.lifts[0], Vec2::zeros());
        let o = continue_periodic_orbit(&f, seed, &cfg()).unwrap();
        assert!(o.lifts[0].norm() < 1e-14);
    }
}

#[test]
fn smooth_conjugate_exponents_match_linear() {
    let f = examples::smooth_conjugate_example();
    let (lu, ls) = closed_form();
    let report = specialness_diagnostic(&f, 6, &cfg()).unwrap();
    assert!(report.failures.is_empty());
    for r in &report.orbits {
        assert!((r.exponents.lambda_u - lu).abs() < 1e-8);
        assert!((r.exponents.lambda_s - ls).abs() < 1e-8);
        assert!(r.exponents.sum_residual() < 1e-10);
        assert!(r.exponents.det_relative_defect < 1e-10);
    }
    assert!(report.stable_spread < 1e-7, "spread {:e}", report.stable_spread);
    assert_eq!(report.verdict, SpecialnessVerdict::ConsistentWithSpecial);
}

#[test]
fn shear_example_is_not_special() {
    let f = examples::shear_example();
    let report = specialness_diagnostic(&f, 6, &cfg()).unwrap();
    assert!(report.failures.is_empty());
    for r in &report.orbits {
        assert!(r.residual < 1e-10);
        assert!(r.exponents.lambda_u > 0.0 && r.exponents.lambda_s < 0.0);
        assert!(r.exponents.sum_residual() < 1e-10);
        // constant Jacobian 2
        assert!((r.exponents.mean_log_jacobian - 2f64.ln()).abs() < 1e-12);
    }
    assert!(report.stable_spread > 100.0 * cfg().residual_tol);
    assert!(report.stable_spread > 1e-3, "spread {:e}", report.stable_spread);
    eprintln!("shear stable spread {:e}", report.stable_spread);
    assert_eq!(report.verdict, SpecialnessVerdict::NonSpecialAtScannedPeriods);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), report.orbits.len() + 1);
}

#[test]
fn livshitz_identity_is_exactly_zero() {
    for f in [examples::shear_example(), examples::raw_family(0.05)] {
        let rep = livshitz_obstruction(&f, &f, None, 4, &cfg()).unwrap();
        assert_eq!(rep.value, 0.0);
        assert_eq!(rep.stable_value, 0.0);
    }
}

#[test]
fn livshitz_smooth_conjugate_vs_linear() {
    let f = examples::smooth_conjugate_example();
    let a = examples::linear();
    let pair = ConjugacyPair::build(&f, &a, 1e-11).unwrap();
    let rep = livshitz_obstruction(&f, &a, Some(&pair), 6, &cfg()).unwrap();
    assert!(rep.value < 1e-6, "obstruction {:e}", rep.value);
    assert!(rep.terms.iter().all(|t| t.match_shift < 1e-8));
}

#[test]
fn livshitz_shear_vs_linear() {
    let f = examples::shear_example();
    let a = examples::linear();
    let pair = ConjugacyPair::build(&f, &a, 1e-11).unwrap();
    let rep = livshitz_obstruction(&f, &a, Some(&pair), 6, &cfg()).unwrap();
    assert!(rep.value > 1e-3, "obstruction {:e}", rep.value);
    assert!(rep.value > 100.0 * cfg().residual_tol);
    let shift = rep.terms.iter().map(|t| t.match_shift).fold(0.0, f64::max);
    eprintln!("shear obstruction {:e}, max match shift {shift:e}", rep.value);
    let mut report = specialness_diagnostic(&f, 6, &cfg()).unwrap();
    attach_livshitz(&mut report, &rep);
    assert!(report.orbits.iter().all(|r| r.livshitz_term.is_some()));
    assert_eq!(report.livshitz, Some(rep.value));
}

#[test]
fn birkhoff_linear_and_conjugate() {
    let (lu, _) = closed_form();
    let x0 = Vec2::new(0.2718281828, 0.5772156649);
    let lin = birkhoff_exponent(&examples::linear(), &x0, 100_000, 20).unwrap();
    assert!((lin.mean - lu).abs() < 1e-6, "{}", lin.mean);
    let f = examples::smooth_conjugate_example();
    let est = birkhoff_exponent(&f, &x0, 100_000, 20).unwrap();
    assert!((est.mean - lu).abs() < 1e-3, "{}", est.mean);
    let half = birkhoff_exponent(&f, &x0, 50_000, 20).unwrap();
    assert!(est.stderr < half.stderr);
}

#[test]
fn continuation_failure_reports_parameter() {
    // amplitude far past the certified range with a short Newton budget
    let seeds = linear_seeds(&examples::linear(), 2).unwrap();
    let wild = examples::raw_family(60.0);
    let failed = seeds
        .iter()
        .filter_map(|(_, _, s)| continue_periodic_orbit(&wild, s, &ShootingConfig { steps: 1, max_iter: 3, ..cfg() }).err())
        .next();
    match failed {
        Some(anosov_lab::LabError::ContinuationFailed { eps, .. }) => assert_eq!(eps, 1.0),
        Some(anosov_lab::LabError::PeriodCollapse(..)) => {}
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exponents_invariant_under_rotation(period in 2usize..=5, pick in 0usize..1000, k in 1usize..5) {
        let f = examples::shear_example();
        let seeds: Vec<_> = linear_seeds(&f, period).unwrap().into_iter().filter(|s| s.0 == period).collect();
        let seed = &seeds[pick % seeds.len()].2;
        let o = continue_periodic_orbit(&f, seed, &cfg()).unwrap();
        let e0 = orbit_exponents(&f, &o).unwrap();
        let r = o.rotated(&f, k % period).unwrap();
        let e1 = orbit_exponents(&f, &r).unwrap();
        prop_assert!((e0.lambda_u - e1.lambda_u).abs() < 1e-12);
        prop_assert!((e0.lambda_s - e1.lambda_s).abs() < 1e-12);
        prop_assert!(e0.sum_residual() < 1e-10);
    }

    #[test]
    fn linear_counts_match_determinant(a in 1i64..4, b in 1i64..3, c in 1i64..3, d in 0i64..3, n in 1u32..5) {
        let l = anosov_lab::torus_map::IntMatrix2::new([[a, b], [c, d]]);
        prop_assume!(l.is_ok());
        let l = l.unwrap();
        let p = l.pow(n);
        let det = (p[0][0] - 1) * (p[1][1] - 1) - p[0][1] * p[1][0];
        prop_assume!(det != 0);
        let pts = periodic_points_linear(&l, n).unwrap();
        prop_assert_eq!(pts.len() as i128, det.abs());
        prop_assert!(pts.contains(&RationalPoint::origin()));
    }
}
