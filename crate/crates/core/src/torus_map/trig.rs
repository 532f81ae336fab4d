use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geom::{Mat2, Vec2};

/// One term `a · sin(2π k·x + φ)` of a planar trigonometric polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: [i64; 2],
    pub amp: [f64; 2],
    pub phase: f64,
}

/// Finite sum of [`TrigTerm`]s; a `Z²`-periodic field on the plane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial2 {
    pub terms: Vec<TrigTerm>,
}

impl TrigPolynomial2 {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amp == [0.0, 0.0])
    }

    pub fn value(&self, x: &Vec2) -> Vec2 {
        let mut out = Vec2::zeros();
        for t in &self.terms {
            let s = (TAU * (t.k[0] as f64 * x.x + t.k[1] as f64 * x.y) + t.phase).sin();
            out.x += t.amp[0] * s;
            out.y += t.amp[1] * s;
        }
        out
    }

    pub fn jacobian(&self, x: &Vec2) -> Mat2 {
        let mut out = Mat2::zeros();
        for t in &self.terms {
            let c = TAU * (TAU * (t.k[0] as f64 * x.x + t.k[1] as f64 * x.y) + t.phase).cos();
            for i in 0..2 {
                for j in 0..2 {
                    out[(i, j)] += t.amp[i] * c * t.k[j] as f64;
                }
            }
        }
        out
    }

    /// Upper bound for `sup |p|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| amp_norm(t)).sum()
    }

    /// Upper bound for `sup ‖Dp‖` (operator norm).
    pub fn deriv_bound(&self) -> f64 {
        self.terms.iter().map(|t| amp_norm(t) * TAU * k_norm(t)).sum()
    }

    /// Upper bound for the Lipschitz constant of `Dp`.
    pub fn second_deriv_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| amp_norm(t) * (TAU * k_norm(t)).powi(2))
            .sum()
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    amp: [t.amp[0] * eps, t.amp[1] * eps],
                    ..*t
                })
                .collect(),
        }
    }
}

fn amp_norm(t: &TrigTerm) -> f64 {
    t.amp[0].hypot(t.amp[1])
}

fn k_norm(t: &TrigTerm) -> f64 {
    (t.k[0] as f64).hypot(t.k[1] as f64)
}

/// One term `a · sin(2π k t + φ)` of a trigonometric polynomial in one
/// variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trig1Term {
    pub k: i64,
    pub amp: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trig1 {
    pub terms: Vec<Trig1Term>,
}

impl Trig1 {
    pub fn new(terms: Vec<Trig1Term>) -> Self {
        Self { terms }
    }

    pub fn sine(k: i64, amp: f64) -> Self {
        Self::new(vec![Trig1Term { k, amp, phase: 0.0 }])
    }

    pub fn value(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|c| c.amp * (TAU * c.k as f64 * t + c.phase).sin())
            .sum()
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|c| c.amp * TAU * c.k as f64 * (TAU * c.k as f64 * t + c.phase).cos())
            .sum()
    }

    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|c| c.amp.abs()).sum()
    }

    pub fn deriv_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| c.amp.abs() * TAU * c.k.abs() as f64)
            .sum()
    }

    pub fn second_deriv_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| c.amp.abs() * (TAU * c.k as f64).powi(2))
            .sum()
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|c| Trig1Term {
                    amp: c.amp * eps,
                    ..*c
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrigPolynomial2 {
        TrigPolynomial2::new(vec![
            TrigTerm {
                k: [1, -2],
                amp: [0.03, -0.01],
                phase: 0.4,
            },
            TrigTerm {
                k: [0, 1],
                amp: [0.02, 0.05],
                phase: -1.0,
            },
        ])
    }

    #[test]
    fn periodic_value_and_jacobian() {
        let p = sample();
        let x = Vec2::new(0.3141, -0.2718);
        let m = Vec2::new(3.0, -5.0);
        assert!((p.value(&x) - p.value(&(x + m))).norm() < 1e-14);
        assert!((p.jacobian(&x) - p.jacobian(&(x + m))).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = sample();
        let x = Vec2::new(0.123, 0.456);
        let h = 1e-6;
        let j = p.jacobian(&x);
        for col in 0..2 {
            let mut e = Vec2::zeros();
            e[col] = h;
            let fd = (p.value(&(x + e)) - p.value(&(x - e))) / (2.0 * h);
            for row in 0..2 {
                assert!((fd[row] - j[(row, col)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bounds_dominate_samples() {
        let p = sample();
        for i in 0..50 {
            let x = Vec2::new(i as f64 * 0.137, i as f64 * 0.291);
            assert!(p.value(&x).norm() <= p.sup_bound());
            assert!(p.jacobian(&x).norm() <= p.deriv_bound() * 2f64.sqrt());
        }
    }

    #[test]
    fn one_variable_derivative() {
        let s = Trig1::new(vec![
            Trig1Term {
                k: 2,
                amp: 0.1,
                phase: 0.3,
            },
            Trig1Term {
                k: 1,
                amp: -0.05,
                phase: 0.0,
            },
        ]);
        let t = 0.37;
        let fd = (s.value(t + 1e-6) - s.value(t - 1e-6)) / 2e-6;
        assert!((fd - s.deriv(t)).abs() < 1e-8);
        assert!((s.value(t + 4.0) - s.value(t)).abs() < 1e-14);
    }
}
