use anosov_lab::geom::{line_angle, Vec2};
use anosov_lab::splitting::*;
use anosov_lab::torus_map::examples::*;
use anosov_lab::torus_map::{certify_hyperbolicity, CertificateParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_leaf_is_straight() {
    let f = linear();
    let e = reference_matrix().hyperbolic_eigen().unwrap().clone();
    let x = Vec2::new(0.3, 0.4);
    for (flavor, v) in [(Flavor::Unstable, e.v_u), (Flavor::Stable, e.v_s)] {
        let seg = grow_leaf_segment(&f, &x, flavor, 0.5, 1e-3).unwrap();
        assert_eq!(seg.base(), x);
        assert!((seg.length() - 1.0).abs() < 1e-9, "{}", seg.length() - 1.0);
        for p in seg.vertices() {
            let d = p - x;
            assert!((d.x * v.y - d.y * v.x).abs() < 1e-10);
        }
        for w in seg.vertices().windows(2) {
            assert!((w[1] - w[0]).norm() <= 1e-3 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn conjugate_leaves_map_to_lines() {
    let f = smooth_conjugate_example();
    let h = f.ground_truth().unwrap().clone();
    let e = reference_matrix().hyperbolic_eigen().unwrap().clone();
    let x = Vec2::new(0.7, -0.2);
    for (flavor, v) in [(Flavor::Unstable, e.v_u), (Flavor::Stable, e.v_s)] {
        let seg = grow_leaf_segment(&f, &x, flavor, 0.6, 2e-3).unwrap();
        let hx = h.apply(&x);
        let worst = seg
            .vertices()
            .iter()
            .map(|p| {
                let d = h.apply(p) - hx;
                (d.x * v.y - d.y * v.x).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{flavor:?} deviation {worst}");
    }
}

#[test]
fn resolution_independence() {
    let f = shear_example();
    let x = Vec2::new(0.1, 0.9);
    for flavor in [Flavor::Unstable, Flavor::Stable] {
        let a = grow_leaf_segment(&f, &x, flavor, 0.5, 1e-3).unwrap();
        let b = grow_leaf_segment(&f, &x, flavor, 0.5, 2e-3).unwrap();
        let (a0, a1) = a.endpoints();
        let (b0, b1) = b.endpoints();
        assert!((a0 - b0).norm() < 1e-4 * 0.5 && (a1 - b1).norm() < 1e-4 * 0.5);
        assert!((a.length() - b.length()).abs() / a.length() < 1e-4);
    }
}

#[test]
fn leaf_chords_stay_in_cones() {
    let f = shear_example();
    let cert = certify_hyperbolicity(&f, &CertificateParams::default()).unwrap();
    for flavor in [Flavor::Unstable, Flavor::Stable] {
        let seg = grow_leaf_segment(&f, &Vec2::new(0.45, 0.05), flavor, 0.8, 4e-3).unwrap();
        assert!(seg.chords_in_cone(&f, &cert).unwrap());
    }
}

#[test]
fn image_of_unstable_leaf_is_unstable_leaf() {
    let f = shear_example();
    let x = Vec2::new(0.25, 0.6);
    let seg = grow_leaf_segment(&f, &x, Flavor::Unstable, 0.1, 5e-4).unwrap();
    let fx = f.lift(&x);
    let image = grow_leaf_segment(&f, &fx, Flavor::Unstable, 0.5, 5e-4).unwrap();
    let worst = seg
        .vertices()
        .iter()
        .map(|p| image.project(&f.lift(p)).2)
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "hausdorff {worst}");
}

#[test]
fn linear_holonomy_is_translation_along_stable_direction() {
    let f = linear();
    let e = reference_matrix().hyperbolic_eigen().unwrap().clone();
    let src = grow_leaf_segment(&f, &Vec2::new(0.2, 0.2), Flavor::Unstable, 0.3, 1e-3).unwrap();
    let dst = grow_leaf_segment(&f, &Vec2::new(0.15, 0.35), Flavor::Unstable, 0.3, 1e-3).unwrap();
    for s in [-0.1, 0.0, 0.07] {
        let (q, _) = src.point_at_arclength(&f, s).unwrap();
        let h = stable_holonomy(&f, &src, &dst, &q, 1e-12).unwrap();
        // intersection of q + t v_s with the line through dst's base along v_u
        let b = dst.base();
        let m = anosov_lab::Mat2::from_columns(&[e.v_s, -e.v_u]);
        let st = m.try_inverse().unwrap() * (b - q);
        let exact = q + st.x * e.v_s;
        assert!((h.point - exact).norm() < 1e-10);
    }
}

#[test]
fn holonomy_round_trip_and_identity() {
    let f = shear_example();
    let src = grow_leaf_segment(&f, &Vec2::new(0.3, 0.3), Flavor::Unstable, 0.25, 1e-3).unwrap();
    let dst = grow_leaf_segment(&f, &Vec2::new(0.26, 0.42), Flavor::Unstable, 0.3, 1e-3).unwrap();
    let map = HolonomyMap::new(&src, &dst, 1e-11);
    for s in [-0.15, 0.0, 0.12] {
        let (q, _) = src.point_at_arclength(&f, s).unwrap();
        let there = map.apply(&f, &q).unwrap();
        let back = map.inverse().apply(&f, &there.point).unwrap();
        assert!((back.point - q).norm() < 1e-8);
        let same = stable_holonomy(&f, &src, &src, &q, 1e-11).unwrap();
        assert!((same.point - q).norm() < 1e-10);
    }
}

#[test]
fn holonomy_reports_missing_intersection() {
    let f = shear_example();
    let src = grow_leaf_segment(&f, &Vec2::new(0.3, 0.3), Flavor::Unstable, 0.05, 1e-3).unwrap();
    let dst = grow_leaf_segment(&f, &Vec2::new(0.3, 0.3), Flavor::Unstable, 0.05, 1e-3).unwrap();
    let far = Vec2::new(5.0, -4.0);
    assert!(stable_holonomy(&f, &src, &dst, &far, 1e-11).is_err());
}

#[test]
fn quasi_isometry_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<Vec2> = (0..6).map(|_| Vec2::new(rng.random(), rng.random())).collect();
    let lengths = [0.25, 0.5, 1.0, 2.0];
    let lin = quasi_isometry_constant(&linear(), Flavor::Unstable, &samples, &lengths, 2e-3).unwrap();
    assert!(lin.iter().all(|r| (r.q - 1.0).abs() < 1e-9));
    let f = smooth_conjugate_example();
    for flavor in [Flavor::Unstable, Flavor::Stable] {
        let rows = quasi_isometry_constant(&f, flavor, &samples, &lengths, 2e-3).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].q >= w[0].q);
        }
        assert!(rows.last().unwrap().q <= 1.1 / 0.9);
        assert!(rows[3].q - rows[2].q < 0.05);
    }
}

#[test]
fn distribution_moduli() {
    let scales = [1e-4, 1e-3, 1e-2, 1e-1];
    let lin = distribution_modulus(&linear(), Flavor::Stable, &scales, 32, 1, 1e-13).unwrap();
    assert!(lin.rows.iter().all(|r| r.1 == 0.0));
    let f = smooth_conjugate_example();
    for flavor in [Flavor::Stable, Flavor::Unstable] {
        let r = distribution_modulus(&f, flavor, &scales, 64, 2, 1e-14).unwrap();
        assert!(r.fit.unwrap().slope >= 0.9, "{r:?}");
    }
    let s = distribution_modulus(&shear_example(), Flavor::Stable, &scales, 64, 3, 1e-14).unwrap();
    assert!(s.monotone, "{s:?}");
}

#[test]
fn invariance_on_many_points() {
    let f = shear_example();
    let tol = 1e-11;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let x = Vec2::new(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0));
        for flavor in [Flavor::Stable, Flavor::Unstable] {
            assert!(invariance_residual(&f, &x, flavor, tol).unwrap() < 10.0 * tol);
        }
    }
    let a = stable_direction(&f, &Vec2::new(0.4, 0.4), tol).unwrap();
    let b = stable_direction(&f, &Vec2::new(3.4, -1.6), tol).unwrap();
    assert!(line_angle(&a.dir, &b.dir) < 2.0 * tol);
}
