use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geom::{Mat2, Vec2};

/// Hyperbolicity class of a linear toral endomorphism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapClass {
    NonInvertibleAnosov,
    InvertibleAnosov,
    Expanding,
    NotHyperbolic,
}

/// Real, distinct eigen-data of a hyperbolic integer matrix, ordered so that
/// `|lambda_u| > 1 > |lambda_s|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenData {
    pub lambda_u: f64,
    pub lambda_s: f64,
    pub v_u: Vec2,
    pub v_s: Vec2,
    /// Rows of the inverse of `[v_u | v_s]`: coordinates in the eigenbasis are
    /// `(dual_u · x, dual_s · x)`.
    pub dual_u: Vec2,
    pub dual_s: Vec2,
}

impl EigenData {
    pub fn coords(&self, x: &Vec2) -> (f64, f64) {
        (self.dual_u.dot(x), self.dual_s.dot(x))
    }
}

/// 2×2 integer matrix with nonzero determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct IntMatrix2 {
    entries: [[i64; 2]; 2],
    eigen: Option<EigenData>,
}

impl IntMatrix2 {
    pub fn new(entries: [[i64; 2]; 2]) -> Result<Self> {
        let det = entries[0][0] * entries[1][1] - entries[0][1] * entries[1][0];
        if det == 0 {
            return Err(LabError::InvalidArgument(
                "linear part must have nonzero determinant".into(),
            ));
        }
        let mut m = IntMatrix2 {
            entries,
            eigen: None,
        };
        m.eigen = m.compute_eigen();
        Ok(m)
    }

    pub fn entries(&self) -> [[i64; 2]; 2] {
        self.entries
    }

    pub fn det(&self) -> i64 {
        let e = &self.entries;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }

    pub fn trace(&self) -> i64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn as_mat2(&self) -> Mat2 {
        let e = &self.entries;
        Mat2::new(e[0][0] as f64, e[0][1] as f64, e[1][0] as f64, e[1][1] as f64)
    }

    pub fn eigen(&self) -> Option<&EigenData> {
        self.eigen.as_ref()
    }

    /// Eigen-data, or the error explaining why stable/unstable machinery is
    /// unavailable for this matrix.
    pub fn hyperbolic_eigen(&self) -> Result<&EigenData> {
        match self.classify() {
            MapClass::Expanding => Err(LabError::ExpandingMap),
            MapClass::NotHyperbolic => Err(LabError::NotHyperbolic),
            _ => self.eigen.as_ref().ok_or(LabError::NotHyperbolic),
        }
    }

    /// `L^n` with exact integer arithmetic.
    pub fn pow(&self, n: u32) -> [[i128; 2]; 2] {
        let e = self.entries.map(|r| r.map(|v| v as i128));
        let mut acc = [[1i128, 0], [0, 1]];
        for _ in 0..n {
            acc = mul_i128(&acc, &e);
        }
        acc
    }

    pub fn classify(&self) -> MapClass {
        classify_linear(self)
    }

    fn compute_eigen(&self) -> Option<EigenData> {
        let tr = self.trace() as f64;
        let det = self.det() as f64;
        let disc = tr * tr - 4.0 * det;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Numerically stable root pair.
        let big = if tr >= 0.0 {
            (tr + sq) / 2.0
        } else {
            (tr - sq) / 2.0
        };
        let small = det / big;
        let (lambda_u, lambda_s) = if big.abs() >= small.abs() {
            (big, small)
        } else {
            (small, big)
        };
        if !(lambda_u.abs() > 1.0 && lambda_s.abs() < 1.0) {
            return None;
        }
        let m = self.as_mat2();
        let v_u = eigenvector(&m, lambda_u);
        let v_s = eigenvector(&m, lambda_s);
        let basis = Mat2::from_columns(&[v_u, v_s]);
        let inv = basis.try_inverse()?;
        Some(EigenData {
            lambda_u,
            lambda_s,
            v_u,
            v_s,
            dual_u: Vec2::new(inv[(0, 0)], inv[(0, 1)]),
            dual_s: Vec2::new(inv[(1, 0)], inv[(1, 1)]),
        })
    }
}

fn mul_i128(a: &[[i128; 2]; 2], b: &[[i128; 2]; 2]) -> [[i128; 2]; 2] {
    let mut c = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn eigenvector(m: &Mat2, lambda: f64) -> Vec2 {
    // Null vector of M - λI from whichever row is better conditioned.
    let r0 = Vec2::new(m[(0, 0)] - lambda, m[(0, 1)]);
    let r1 = Vec2::new(m[(1, 0)], m[(1, 1)] - lambda);
    let row = if r0.norm() >= r1.norm() { r0 } else { r1 };
    let mut v = Vec2::new(-row.y, row.x).normalize();
    if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        v = -v;
    }
    v
}

/// Classification by eigenvalue moduli and `|det|`. Eigenvalues of modulus
/// one are detected exactly through `det(L ∓ I) = 0`.
pub fn classify_linear(l: &IntMatrix2) -> MapClass {
    let e = l.entries();
    let det_shift = |s: i64| (e[0][0] - s) * (e[1][1] - s) - e[0][1] * e[1][0];
    if det_shift(1) == 0 || det_shift(-1) == 0 {
        return MapClass::NotHyperbolic;
    }
    let tr = l.trace();
    let det = l.det();
    let disc = tr * tr - 4 * det;
    if disc < 0 {
        // complex pair of modulus sqrt|det|
        return if det.abs() > 1 {
            MapClass::Expanding
        } else {
            MapClass::NotHyperbolic
        };
    }
    let sq = (disc as f64).sqrt();
    let l1 = ((tr as f64) + sq) / 2.0;
    let l2 = ((tr as f64) - sq) / 2.0;
    let (a, b) = (l1.abs().max(l2.abs()), l1.abs().min(l2.abs()));
    if b > 1.0 {
        MapClass::Expanding
    } else if a > 1.0 && b < 1.0 {
        if det.abs() >= 2 {
            MapClass::NonInvertibleAnosov
        } else {
            MapClass::InvertibleAnosov
        }
    } else {
        MapClass::NotHyperbolic
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let m = |e| IntMatrix2::new(e).unwrap();
        assert_eq!(classify_linear(&m([[3, 1], [2, 0]])), MapClass::NonInvertibleAnosov);
        assert_eq!(classify_linear(&m([[2, 1], [1, 1]])), MapClass::InvertibleAnosov);
        assert_eq!(classify_linear(&m([[2, 0], [0, 2]])), MapClass::Expanding);
        assert_eq!(classify_linear(&m([[1, 1], [0, 1]])), MapClass::NotHyperbolic);
        assert_eq!(classify_linear(&m([[0, -1], [1, 0]])), MapClass::NotHyperbolic);
        assert_eq!(classify_linear(&m([[1, -2], [2, 1]])), MapClass::Expanding);
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(IntMatrix2::new([[1, 2], [2, 4]]).is_err());
    }

    #[test]
    fn eigen_data_of_the_reference_matrix() {
        let l = IntMatrix2::new([[3, 1], [2, 0]]).unwrap();
        let e = l.eigen().unwrap();
        let s17 = 17f64.sqrt();
        assert!((e.lambda_u - (3.0 + s17) / 2.0).abs() < 1e-14);
        assert!((e.lambda_s - (3.0 - s17) / 2.0).abs() < 1e-14);
        let m = l.as_mat2();
        assert!((m * e.v_u - e.v_u * e.lambda_u).norm() < 1e-13);
        assert!((m * e.v_s - e.v_s * e.lambda_s).norm() < 1e-13);
        let (cu, cs) = e.coords(&(e.v_u * 2.0 - e.v_s));
        assert!((cu - 2.0).abs() < 1e-14 && (cs + 1.0).abs() < 1e-14);
    }

    #[test]
    fn integer_powers() {
        let l = IntMatrix2::new([[3, 1], [2, 0]]).unwrap();
        assert_eq!(l.pow(2), [[11, 3], [6, 2]]);
        assert_eq!(l.pow(0), [[1, 0], [0, 1]]);
    }
}
