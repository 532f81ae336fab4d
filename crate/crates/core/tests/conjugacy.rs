use anosov_lab::conjugacy::*;
use anosov_lab::geom::Vec2;
use anosov_lab::splitting::{grow_leaf_segment, unstable_direction, Flavor};
use anosov_lab::torus_map::examples::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

#[test]
fn smooth_conjugate_recovers_ground_truth() {
    let f = smooth_conjugate_example();
    let h = ConjugacyField::build(&f, TOL).unwrap();
    let d = diagnose(&h, 1000, 7).unwrap();
    assert!(d.ground_truth_error.unwrap() < 1e-6, "{d:?}");
    assert!(d.max_residual < 10.0 * TOL, "{d:?}");
    assert!(d.sup_u <= d.sup_bound);
    assert!(d.max_inverse_residual < 1e-8);
    // periodicity is limited by truncation, so check it with a tighter field
    let fine = ConjugacyField::build(&f, 1e-12).unwrap();
    let d = diagnose(&fine, 200, 9).unwrap();
    assert!(d.periodicity_defect < 1e-10, "{d:?}");
}

#[test]
fn shear_example_residual_and_bound() {
    let f = shear_example();
    let h = ConjugacyField::build(&f, TOL).unwrap();
    let d = diagnose(&h, 1000, 8).unwrap();
    assert!(d.max_residual < 10.0 * TOL, "{d:?}");
    assert!(d.sup_u <= d.sup_bound, "{d:?}");
    assert!(d.max_inverse_residual < 1e-8);
    // the stable part follows the backward orbit of the lift
    assert!(d.periodicity_defect > 1e-6, "{d:?}");
}

#[test]
fn inverse_round_trip() {
    let f = shear_example();
    let h = ConjugacyField::build(&f, TOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let y = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let x = h.eval_inverse(&y).unwrap();
        assert!((h.eval(&x).unwrap() - y).norm() < 1e-8);
    }
}

#[test]
fn leaves_map_to_lines() {
    let x = Vec2::new(0.3, 0.55);
    let lin = ConjugacyField::build(&linear(), TOL).unwrap();
    let seg = grow_leaf_segment(&linear(), &x, Flavor::Unstable, 0.5, 1e-2).unwrap();
    assert!(lin.leaf_image_check(&seg).unwrap() < 1e-15);
    let f = smooth_conjugate_example();
    let h = ConjugacyField::build(&f, TOL).unwrap();
    let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.5, 1e-2).unwrap();
    assert!(h.leaf_image_check(&seg).unwrap() < 1e-6);
    let f = shear_example();
    let h = ConjugacyField::build(&f, 1e-6).unwrap();
    let mut prev = f64::INFINITY;
    for (hm, tol) in [(4e-2, 1e-4), (1e-2, 1e-6), (2.5e-3, 1e-8)] {
        let h = ConjugacyField::build(&f, tol).unwrap();
        let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.5, hm).unwrap();
        let dev = h.leaf_image_check(&seg).unwrap();
        // already at roundoff for the coarsest setting
        assert!(dev <= prev.max(1e-14));
        prev = dev;
    }
    let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.5, 1e-2).unwrap();
    assert!(h.leaf_image_check(&seg).unwrap() < 1e-4);
}

fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).rev().map(|k| 2f64.powi(-k)).collect()
}

#[test]
fn holder_slopes() {
    let x = Vec2::new(0.41, 0.13);
    let scales = dyadic(4, 14);
    let lin = ConjugacyField::build(&linear(), TOL).unwrap();
    let seg = grow_leaf_segment(&linear(), &x, Flavor::Unstable, 0.5, 1e-3).unwrap();
    let r = estimate_holder_along_leaf(&lin, &seg, &Arclength, &scales, 16).unwrap();
    assert!((r.fit.slope - 1.0).abs() < 1e-6);

    let f = smooth_conjugate_example();
    let h = ConjugacyField::build(&f, 1e-10).unwrap();
    let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.5, 1e-3).unwrap();
    let r = estimate_holder_along_leaf(&h, &seg, &Arclength, &scales, 16).unwrap();
    assert!((0.98..=1.02).contains(&r.fit.slope), "{r:?}");
    assert!(!r.non_stabilizing, "{r:?}");
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert!(json["scales"].is_array() && json["slopes"].is_array() && json["residuals"].is_array());
}

#[test]
fn holder_needs_scales() {
    let lin = ConjugacyField::build(&linear(), TOL).unwrap();
    let seg = grow_leaf_segment(&linear(), &Vec2::zeros(), Flavor::Unstable, 0.01, 1e-3).unwrap();
    let r = estimate_holder_along_leaf(&lin, &seg, &Arclength, &dyadic(1, 6), 8);
    assert!(matches!(r, Err(anosov_lab::LabError::InsufficientScaleRange { .. })));
}

#[test]
fn u_derivative_matches_dh() {
    let f = smooth_conjugate_example();
    let h = ConjugacyField::build(&f, 1e-11).unwrap();
    let truth = f.ground_truth().unwrap().clone();
    let image = |a: &Vec2, b: &Vec2| Ok((a - b).norm());
    for x in [Vec2::new(0.2, 0.7), Vec2::new(0.9, 0.1)] {
        let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.05, 1e-4).unwrap();
        let d = u_derivative_of_h(&h, &seg, 0.0, 1e-3, &Arclength, &image).unwrap();
        let e = unstable_direction(&f, &x, 1e-13).unwrap().dir;
        let exact = (truth.jacobian(&x) * e).norm();
        assert!((d - exact).abs() < 1e-4, "{d} vs {exact}");
        // chain rule: D_H(Fx)·|DF(x)e| = λ_u·D_H(x)
        let fx = f.lift(&x);
        let seg2 = grow_leaf_segment(&f, &fx, Flavor::Unstable, 0.05, 1e-4).unwrap();
        let d2 = u_derivative_of_h(&h, &seg2, 0.0, 1e-3, &Arclength, &image).unwrap();
        let lu = reference_matrix().hyperbolic_eigen().unwrap().lambda_u;
        let growth = (f.df(&x) * e).norm();
        assert!((d2 * growth - lu * d).abs() < 1e-6 * lu * d.max(1.0) * 10.0, "{} vs {}", d2 * growth, lu * d);
    }
}
