use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geom::Vec2;
use crate::torus_map::IntMatrix2;

/// Enumeration refuses period sets larger than this.
pub const MAX_LINEAR_POINTS: i128 = 5_000_000;

/// A point of `Q²/Z²` with common denominator: `x_i = num_i / den`,
/// `0 ≤ num_i < den`, `gcd(num_0, num_1, den) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RationalPoint {
    pub num: [i128; 2],
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl RationalPoint {
    pub fn new(num: [i128; 2], den: i128) -> Self {
        assert!(den > 0);
        let num = num.map(|v| v.rem_euclid(den));
        let g = gcd(gcd(num[0], num[1]), den);
        Self {
            num: num.map(|v| v / g),
            den: den / g,
        }
    }

    pub fn origin() -> Self {
        Self { num: [0, 0], den: 1 }
    }

    pub fn to_vec2(&self) -> Vec2 {
        Vec2::new(self.num[0] as f64 / self.den as f64, self.num[1] as f64 / self.den as f64)
    }

    /// `Lx mod Z²`, exactly.
    pub fn apply(&self, l: &IntMatrix2) -> Self {
        let e = l.entries();
        let n = [
            e[0][0] as i128 * self.num[0] + e[0][1] as i128 * self.num[1],
            e[1][0] as i128 * self.num[0] + e[1][1] as i128 * self.num[1],
        ];
        Self::new(n, self.den)
    }

    /// The integer vector `L x − y` for representatives in `[0,1)²`, provided
    /// `Lx = y mod Z²`.
    pub fn word_to(&self, l: &IntMatrix2, next: &RationalPoint) -> Option<[i64; 2]> {
        let e = l.entries();
        let mut out = [0i64; 2];
        for (i, row) in e.iter().enumerate() {
            // L·(num/den) − next.num/next.den with both over den·next.den
            let lhs = (row[0] as i128 * self.num[0] + row[1] as i128 * self.num[1]) * next.den;
            let rhs = next.num[i] * self.den;
            let d = self.den * next.den;
            if (lhs - rhs) % d != 0 {
                return None;
            }
            out[i] = ((lhs - rhs) / d) as i64;
        }
        Some(out)
    }
}

/// All `x ∈ T²` with `Lⁿx = x`, as exact rationals, sorted.
///
/// The fixed set of `Lⁿ` is `M⁻¹Z²/Z²` for `M = Lⁿ − I`; coset
/// representatives of `Z²/MZ²` are read off the Hermite normal form of `M`.
pub fn periodic_points_linear(l: &IntMatrix2, n: u32) -> Result<Vec<RationalPoint>> {
    if n == 0 {
        return Err(LabError::InvalidArgument("period must be at least 1".into()));
    }
    let p = l.pow(n);
    let m = [[p[0][0] - 1, p[0][1]], [p[1][0], p[1][1] - 1]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0 {
        return Err(LabError::NotHyperbolic);
    }
    if det.abs() > MAX_LINEAR_POINTS {
        return Err(LabError::InvalidArgument(format!(
            "period {n} has {} points, above the enumeration cap",
            det.abs()
        )));
    }
    // Column operations bring M to [[g, 0], [h21, det/g]] with g = gcd of the
    // first row, so Z²/MZ² is represented by the box [0, g) × [0, |det|/g).
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let rows = gcd(a, b);
    let cols = det.abs() / rows;
    // x = adj(M)·k / det, k over the box of representatives.
    let adj = [[d, -b], [-c, a]];
    let (sign, den) = (det.signum(), det.abs());
    let mut out = Vec::with_capacity(den as usize);
    for i in 0..rows {
        for j in 0..cols {
            let num = [
                sign * (adj[0][0] * i + adj[0][1] * j),
                sign * (adj[1][0] * i + adj[1][1] * j),
            ];
            out.push(RationalPoint::new(num, den));
        }
    }
    out.sort();
    Ok(out)
}

/// Orbits of `L` with minimal period exactly `n`, each started at its
/// smallest point in the sorted order.
pub fn linear_orbits(l: &IntMatrix2, n: u32) -> Result<Vec<Vec<RationalPoint>>> {
    let points = periodic_points_linear(l, n)?;
    let mut seen = HashSet::with_capacity(points.len());
    let mut orbits = Vec::new();
    for p in &points {
        if seen.contains(p) {
            continue;
        }
        let mut orbit = vec![*p];
        let mut q = p.apply(l);
        while q != *p {
            orbit.push(q);
            q = q.apply(l);
        }
        seen.extend(orbit.iter().copied());
        if orbit.len() == n as usize {
            orbits.push(orbit);
        }
    }
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> IntMatrix2 {
        IntMatrix2::new([[3, 1], [2, 0]]).unwrap()
    }

    #[test]
    fn counts_match_determinants() {
        let l = cat();
        for n in 1..=8u32 {
            let p = l.pow(n);
            let det = (p[0][0] - 1) * (p[1][1] - 1) - p[0][1] * p[1][0];
            let pts = periodic_points_linear(&l, n).unwrap();
            assert_eq!(pts.len() as i128, det.abs());
            let unique: HashSet<_> = pts.iter().collect();
            assert_eq!(unique.len(), pts.len());
            for q in &pts {
                let mut r = *q;
                for _ in 0..n {
                    r = r.apply(&l);
                }
                assert_eq!(r, *q);
            }
        }
        assert_eq!(periodic_points_linear(&l, 1).unwrap().len(), 4);
        assert_eq!(periodic_points_linear(&l, 2).unwrap().len(), 8);
    }

    #[test]
    fn origin_always_present() {
        for e in [[[3, 1], [2, 0]], [[2, 1], [1, 1]], [[3, 2], [1, 1]], [[0, 1], [2, 3]]] {
            let l = IntMatrix2::new(e).unwrap();
            for n in 1..=4 {
                assert!(periodic_points_linear(&l, n).unwrap().contains(&RationalPoint::origin()));
            }
        }
    }

    #[test]
    fn orbit_counts_by_mobius() {
        // Σ_{d | n} d·#orbits(d) = #Fix(Lⁿ)
        let l = cat();
        for n in 1..=6u32 {
            let total: usize = (1..=n)
                .filter(|d| n % d == 0)
                .map(|d| d as usize * linear_orbits(&l, d).unwrap().len())
                .sum();
            assert_eq!(total, periodic_points_linear(&l, n).unwrap().len());
        }
    }

    #[test]
    fn words_are_integral() {
        let l = cat();
        for orbit in linear_orbits(&l, 3).unwrap() {
            for i in 0..3 {
                let w = orbit[i].word_to(&l, &orbit[(i + 1) % 3]).unwrap();
                let x = orbit[i].to_vec2();
                let y = orbit[(i + 1) % 3].to_vec2();
                let r = l.as_mat2() * x - y - Vec2::new(w[0] as f64, w[1] as f64);
                assert!(r.norm() < 1e-14);
            }
        }
    }
}
