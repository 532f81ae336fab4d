use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lattice::RationalPoint;
use crate::error::{LabError, Result};
use crate::geom::{frac, torus_distance, Mat2, Vec2};
use crate::torus_map::{IntMatrix2, ToralEndomorphism};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingConfig {
    /// Number of homotopy steps from `L` to `f`.
    pub steps: usize,
    /// Newton stops once the max-norm residual is at or below this.
    pub newton_tol: f64,
    /// Accepted orbits have residual below this.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Two orbit points closer than this on the torus count as merged.
    pub merge_tol: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            newton_tol: 1e-12,
            residual_tol: 1e-10,
            max_iter: 30,
            merge_tol: 1e-8,
        }
    }
}

/// Periodic orbit on chosen lifts: `F(x̂_i) = x̂_{i+1} + m_i`, indices mod `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub lifts: Vec<Vec2>,
    pub words: Vec<[i64; 2]>,
    /// `P = DF(x̂_{n−1})···DF(x̂_0)`.
    pub cocycle: Mat2,
    /// Max-norm shooting residual.
    pub residual: f64,
}

fn word(m: &[i64; 2]) -> Vec2 {
    Vec2::new(m[0] as f64, m[1] as f64)
}

fn shooting_residual(f: &ToralEndomorphism, lifts: &[Vec2], words: &[[i64; 2]]) -> (DVector<f64>, f64) {
    let n = lifts.len();
    let mut g = DVector::zeros(2 * n);
    for i in 0..n {
        let r = f.lift(&lifts[i]) - lifts[(i + 1) % n] - word(&words[i]);
        g[2 * i] = r.x;
        g[2 * i + 1] = r.y;
    }
    let norm = g.amax();
    (g, norm)
}

/// Newton on the shooting system with the words held fixed. Returns the input
/// untouched when it already meets `newton_tol`.
pub(crate) fn refine(
    f: &ToralEndomorphism,
    lifts: &[Vec2],
    words: &[[i64; 2]],
    cfg: &ShootingConfig,
) -> Result<Vec<Vec2>> {
    let n = lifts.len();
    let mut x = lifts.to_vec();
    let (mut g, mut r) = shooting_residual(f, &x, words);
    let mut iter = 0;
    while r > cfg.newton_tol && iter < cfg.max_iter {
        let mut j = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            let d = f.derivative(&x[i])?;
            let k = (i + 1) % n;
            for a in 0..2 {
                for b in 0..2 {
                    j[(2 * i + a, 2 * i + b)] += d[(a, b)];
                }
                j[(2 * i + a, 2 * k + a)] -= 1.0;
            }
        }
        let delta = j.lu().solve(&(-&g)).ok_or(LabError::NonConvergence {
            what: "periodic shooting (singular Jacobian)",
            iterations: iter,
            residual: r,
        })?;
        for i in 0..n {
            x[i] += Vec2::new(delta[2 * i], delta[2 * i + 1]);
        }
        (g, r) = shooting_residual(f, &x, words);
        iter += 1;
    }
    if !(r < cfg.residual_tol) {
        return Err(LabError::NonConvergence {
            what: "periodic shooting",
            iterations: iter,
            residual: r,
        });
    }
    Ok(x)
}

pub(crate) fn cocycle(f: &ToralEndomorphism, lifts: &[Vec2]) -> Result<Mat2> {
    let mut p = Mat2::identity();
    for x in lifts {
        p = f.derivative(x)? * p;
    }
    Ok(p)
}

pub(crate) fn check_merge(lifts: &[Vec2], tol: f64) -> Result<()> {
    for i in 0..lifts.len() {
        for j in i + 1..lifts.len() {
            if torus_distance(&lifts[i], &lifts[j]) < tol {
                return Err(LabError::PeriodCollapse(i, j));
            }
        }
    }
    Ok(())
}

impl PeriodicOrbit {
    /// Seed orbit of `L` on representatives in `[0,1)²`.
    pub fn from_linear(l: &IntMatrix2, points: &[RationalPoint]) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(LabError::InvalidArgument("empty orbit".into()));
        }
        let words = (0..n)
            .map(|i| {
                points[i]
                    .word_to(l, &points[(i + 1) % n])
                    .ok_or_else(|| LabError::InvalidArgument("points do not form an orbit of L".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let lifts: Vec<Vec2> = points.iter().map(RationalPoint::to_vec2).collect();
        let lin = ToralEndomorphism::linear_map(l.clone());
        let (_, residual) = shooting_residual(&lin, &lifts, &words);
        Ok(Self {
            cocycle: cocycle(&lin, &lifts)?,
            lifts,
            words,
            residual,
        })
    }

    /// Orbit of `g` with the same words, refined from `lifts`.
    pub fn refined(g: &ToralEndomorphism, lifts: &[Vec2], words: &[[i64; 2]], cfg: &ShootingConfig) -> Result<Self> {
        let lifts = refine(g, lifts, words, cfg)?;
        check_merge(&lifts, cfg.merge_tol)?;
        let (_, residual) = shooting_residual(g, &lifts, words);
        Ok(Self {
            cocycle: cocycle(g, &lifts)?,
            lifts,
            words: words.to_vec(),
            residual,
        })
    }

    pub fn period(&self) -> usize {
        self.lifts.len()
    }

    /// Orbit points in `[0,1)²`.
    pub fn points(&self) -> Vec<Vec2> {
        self.lifts.iter().map(frac).collect()
    }

    /// Largest torus distance between `f(x_i)` and `x_{i+1}`.
    pub fn torus_defect(&self, f: &ToralEndomorphism) -> f64 {
        let n = self.period();
        (0..n)
            .map(|i| torus_distance(&f.lift(&self.lifts[i]), &self.lifts[(i + 1) % n]))
            .fold(0.0, f64::max)
    }

    /// The same orbit started at `x_k`.
    pub fn rotated(&self, f: &ToralEndomorphism, k: usize) -> Result<Self> {
        let n = self.period();
        let lifts: Vec<Vec2> = (0..n).map(|i| self.lifts[(i + k) % n]).collect();
        let words: Vec<[i64; 2]> = (0..n).map(|i| self.words[(i + k) % n]).collect();
        Ok(Self {
            cocycle: cocycle(f, &lifts)?,
            lifts,
            words,
            residual: self.residual,
        })
    }
}

/// Continues an orbit of `L` to `f` along `ε ↦ f_ε` (perturbation amplitude
/// scaled by `ε`), `ε = 1/steps, …, 1`.
pub fn continue_periodic_orbit(
    f: &ToralEndomorphism,
    seed: &PeriodicOrbit,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbit> {
    let steps = cfg.steps.max(1);
    let mut lifts = seed.lifts.clone();
    for k in 1..=steps {
        let eps = k as f64 / steps as f64;
        let g = f.scaled(eps);
        lifts = refine(&g, &lifts, &seed.words, cfg).map_err(|e| LabError::ContinuationFailed {
            eps,
            source: Box::new(e),
        })?;
    }
    check_merge(&lifts, cfg.merge_tol)?;
    let (_, residual) = shooting_residual(f, &lifts, &seed.words);
    Ok(PeriodicOrbit {
        cocycle: cocycle(f, &lifts)?,
        lifts,
        words: seed.words.clone(),
        residual,
    })
}
