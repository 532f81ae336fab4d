//! Small planar geometry helpers shared by every module.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Angle in `[0, π/2]` between the lines spanned by `a` and `b`.
pub fn line_angle(a: &Vec2, b: &Vec2) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    cross(a, b).abs().atan2(a.dot(b).abs())
}

/// Unit vector with the sign chosen so that `v · reference >= 0`.
pub fn oriented_unit(v: &Vec2, reference: &Vec2) -> Vec2 {
    let u = v / v.norm();
    if u.dot(reference) < 0.0 {
        -u
    } else {
        u
    }
}

pub fn frac(x: &Vec2) -> Vec2 {
    Vec2::new(x.x - x.x.floor(), x.y - x.y.floor())
}

pub fn floor(x: &Vec2) -> Vec2 {
    Vec2::new(x.x.floor(), x.y.floor())
}

/// Distance on the torus `R²/Z²`, taking the minimum over the nine nearest
/// integer translates of the difference of the reduced points.
pub fn torus_distance(a: &Vec2, b: &Vec2) -> f64 {
    let d = frac(a) - frac(b);
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            let t = d + Vec2::new(i as f64, j as f64);
            best = best.min(t.norm());
        }
    }
    best
}

/// Cumulative arclength of a polyline, starting at 0.
pub fn cumulative_arclength(points: &[Vec2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in points.windows(2) {
        acc += (w[1] - w[0]).norm();
        out.push(acc);
    }
    out
}

/// Distance from `p` to the segment `[a, b]` together with the parameter
/// `t ∈ [0, 1]` of the closest point.
pub fn point_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
    };
    ((a + d * t - p).norm(), t)
}

/// Parameters `(s, t)` of the crossing of segments `[a0, a1]` and `[b0, b1]`,
/// if they cross (both parameters in `[0, 1]`).
pub fn segment_crossing(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2) -> Option<(f64, f64)> {
    segment_crossing_within(a0, a1, b0, b1, 0.0)
}

/// As [`segment_crossing`], accepting parameters up to `slack` outside
/// `[0, 1]` so that a crossing through a shared vertex is not lost to
/// roundoff.
pub fn segment_crossing_within(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2, slack: f64) -> Option<(f64, f64)> {
    let da = a1 - a0;
    let db = b1 - b0;
    let den = cross(&da, &db);
    if den == 0.0 {
        return None;
    }
    let w = b0 - a0;
    let s = cross(&w, &db) / den;
    let t = cross(&w, &da) / den;
    let range = -slack..=1.0 + slack;
    if range.contains(&s) && range.contains(&t) {
        Some((s, t))
    } else {
        None
    }
}

/// Rotation of `v` by +90 degrees.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_distance_wraps() {
        let a = Vec2::new(0.05, 0.95);
        let b = Vec2::new(0.95, 0.05);
        assert!((torus_distance(&a, &b) - (0.1f64.hypot(0.1))).abs() < 1e-12);
        assert!(torus_distance(&a, &(a + Vec2::new(3.0, -2.0))) < 1e-15);
    }

    #[test]
    fn line_angle_ignores_orientation() {
        let a = Vec2::new(1.0, 0.0);
        assert!(line_angle(&a, &Vec2::new(-1.0, 0.0)) < 1e-15);
        assert!((line_angle(&a, &Vec2::new(0.0, 2.0)) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn crossing_of_diagonals() {
        let (s, t) = segment_crossing(
            &Vec2::new(0.0, 0.0),
            &Vec2::new(1.0, 1.0),
            &Vec2::new(0.0, 1.0),
            &Vec2::new(1.0, 0.0),
        )
        .unwrap();
        assert!((s - 0.5).abs() < 1e-15 && (t - 0.5).abs() < 1e-15);
    }
}
