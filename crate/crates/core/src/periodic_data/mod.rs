//! Periodic orbits, their Lyapunov exponents and the periodic-data tests.
//!
//! Orbits of `f` are obtained by continuation from exact periodic orbits of
//! the linear part, so every orbit carries the translation words of its seed.
//! Those words identify orbits across maps sharing `L`, which is what the
//! Livshitz comparison needs.

mod lattice;
mod shooting;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::conjugacy::ConjugacyPair;
use crate::error::{LabError, Result};
use crate::geom::{frac, Vec2};
use crate::splitting::{stable_direction, unstable_direction};
use crate::stats::block_mean_stderr;
use crate::torus_map::ToralEndomorphism;

pub use lattice::{linear_orbits, periodic_points_linear, RationalPoint, MAX_LINEAR_POINTS};
pub use shooting::{continue_periodic_orbit, PeriodicOrbit, ShootingConfig};

/// Per-iterate exponents of a periodic orbit, from the eigenvalues of the
/// cocycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub lambda_u: f64,
    pub lambda_s: f64,
    /// `(1/n) Σ log Jf(x_i)`.
    pub mean_log_jacobian: f64,
    /// `|det P − ∏ det DF(x_i)| / |∏ det DF(x_i)|`.
    pub det_relative_defect: f64,
}

impl ExponentPair {
    pub fn sum_residual(&self) -> f64 {
        (self.lambda_u + self.lambda_s - self.mean_log_jacobian).abs()
    }
}

/// Exponents of `orbit` under `f`.
///
/// The dominant eigenvalue is taken from trace and determinant of the
/// cocycle; the other one from the product of the pointwise determinants,
/// which avoids cancellation in `det P` for long periods.
pub fn orbit_exponents(f: &ToralEndomorphism, orbit: &PeriodicOrbit) -> Result<ExponentPair> {
    let n = orbit.period() as f64;
    let mut det_prod = 1.0;
    let mut log_jac = 0.0;
    for x in &orbit.lifts {
        let d = f.derivative(x)?.determinant();
        det_prod *= d;
        log_jac += d.abs().ln();
    }
    let p = &orbit.cocycle;
    let tr = p.trace();
    let disc = tr * tr - 4.0 * det_prod;
    if disc < 0.0 {
        return Err(LabError::ComplexEigenvalues { trace: tr, det: det_prod });
    }
    let big = 0.5 * (tr + tr.signum() * disc.sqrt());
    let small = det_prod / big;
    Ok(ExponentPair {
        lambda_u: big.abs().ln() / n,
        lambda_s: small.abs().ln() / n,
        mean_log_jacobian: log_jac / n,
        det_relative_defect: ((p.determinant() - det_prod) / det_prod).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub period: usize,
    /// Index among the orbits of this period, in the order of their seeds.
    pub orbit_id: usize,
    pub x0: Vec2,
    pub exponents: ExponentPair,
    pub residual: f64,
    pub livshitz_term: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitFailure {
    pub period: usize,
    pub orbit_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialnessVerdict {
    ConsistentWithSpecial,
    NonSpecialAtScannedPeriods,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDataReport {
    pub max_period: usize,
    pub orbits: Vec<OrbitRecord>,
    pub failures: Vec<OrbitFailure>,
    /// `max λ_s − min λ_s` over all orbits.
    pub stable_spread: f64,
    pub unstable_spread: f64,
    /// Spread below which the verdict is "consistent with special".
    pub spread_threshold: f64,
    pub verdict: SpecialnessVerdict,
    /// Livshitz obstruction, when a comparison map was given.
    pub livshitz: Option<f64>,
}

impl PeriodicDataReport {
    /// CSV table, one row per orbit.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("period,orbit_id,x0_1,x0_2,lambda_u,lambda_s,sum_residual,livshitz_term\n");
        for r in &self.orbits {
            let liv = r.livshitz_term.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{:.17},{:.17},{:.17},{:.17},{:.3e},{}",
                r.period,
                r.orbit_id,
                r.x0.x,
                r.x0.y,
                r.exponents.lambda_u,
                r.exponents.lambda_s,
                r.exponents.sum_residual(),
                liv
            );
        }
        s
    }
}

/// Seeds of every orbit of `L` with minimal period in `1..=max_period`, as
/// `(period, orbit_id, seed)`.
pub fn linear_seeds(f: &ToralEndomorphism, max_period: usize) -> Result<Vec<(usize, usize, PeriodicOrbit)>> {
    let mut out = Vec::new();
    for p in 1..=max_period {
        for (id, orbit) in linear_orbits(f.linear(), p as u32)?.iter().enumerate() {
            out.push((p, id, PeriodicOrbit::from_linear(f.linear(), orbit)?));
        }
    }
    Ok(out)
}

type Continued = (usize, usize, Result<(PeriodicOrbit, ExponentPair)>);

fn continue_all(f: &ToralEndomorphism, max_period: usize, cfg: &ShootingConfig) -> Result<Vec<Continued>> {
    let seeds = linear_seeds(f, max_period)?;
    Ok(seeds
        .into_par_iter()
        .map(|(p, id, seed)| {
            let res = continue_periodic_orbit(f, &seed, cfg).and_then(|o| {
                let e = orbit_exponents(f, &o)?;
                Ok((o, e))
            });
            (p, id, res)
        })
        .collect())
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Continues all orbits of period `≤ max_period` and measures the spread of
/// their stable exponents. A map is special exactly when that exponent is
/// constant over periodic points.
pub fn specialness_diagnostic(
    f: &ToralEndomorphism,
    max_period: usize,
    cfg: &ShootingConfig,
) -> Result<PeriodicDataReport> {
    let mut orbits = Vec::new();
    let mut failures = Vec::new();
    for (period, orbit_id, res) in continue_all(f, max_period, cfg)? {
        match res {
            Ok((o, exponents)) => orbits.push(OrbitRecord {
                period,
                orbit_id,
                x0: frac(&o.lifts[0]),
                exponents,
                residual: o.residual,
                livshitz_term: None,
            }),
            Err(e) => failures.push(OrbitFailure {
                period,
                orbit_id,
                error: e.to_string(),
            }),
        }
    }
    let stable_spread = spread(orbits.iter().map(|r| r.exponents.lambda_s));
    let unstable_spread = spread(orbits.iter().map(|r| r.exponents.lambda_u));
    let spread_threshold = 10.0 * cfg.residual_tol;
    Ok(PeriodicDataReport {
        max_period,
        orbits,
        failures,
        stable_spread,
        unstable_spread,
        spread_threshold,
        verdict: if stable_spread < spread_threshold {
            SpecialnessVerdict::ConsistentWithSpecial
        } else {
            SpecialnessVerdict::NonSpecialAtScannedPeriods
        },
        livshitz: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivshitzTerm {
    pub period: usize,
    pub orbit_id: usize,
    /// `|Σ log D^u_F(x̂_i) − Σ log D^u_G(ŷ_i)| / n`.
    pub unstable: f64,
    /// Same with `D^s`.
    pub stable: f64,
    /// Distance from `H_fg(x̂_i)` to the refined `g`-orbit.
    pub match_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivshitzReport {
    /// Max over orbits of the unstable term.
    pub value: f64,
    pub stable_value: f64,
    pub terms: Vec<LivshitzTerm>,
}

/// Largest shift allowed between `H_fg(x̂_i)` and the refined image orbit.
/// For non-special maps `H_fg` does not commute with `Z²`, so the image of a
/// periodic orbit is only close to periodic; the cap only catches jumps to a
/// different orbit.
const MATCH_SHIFT_CAP: f64 = 0.25;

/// Periodic Livshitz obstruction between `f` and `g`.
///
/// Each `f`-orbit is pushed through `H_fg` (identity when `h` is `None`) and
/// refined to a `g`-orbit with the same words, which identify it uniquely. Along a periodic orbit
/// `Σ log D^u_F` telescopes to `log` of the dominant cocycle eigenvalue, so
/// each term is a difference of exponents.
pub fn livshitz_obstruction(
    f: &ToralEndomorphism,
    g: &ToralEndomorphism,
    h: Option<&ConjugacyPair>,
    max_period: usize,
    cfg: &ShootingConfig,
) -> Result<LivshitzReport> {
    if f.linear() != g.linear() {
        return Err(LabError::InvalidArgument("maps must share the linear part".into()));
    }
    let continued = continue_all(f, max_period, cfg)?;
    let terms = continued
        .into_par_iter()
        .map(|(period, orbit_id, res)| {
            let (of, ef) = res?;
            let guess = match h {
                Some(pair) => of.lifts.iter().map(|x| pair.eval(x)).collect::<Result<Vec<_>>>()?,
                None => of.lifts.clone(),
            };
            let og = PeriodicOrbit::refined(g, &guess, &of.words, cfg).map_err(|_| LabError::OrbitMatchFailed(orbit_id))?;
            let match_shift = guess
                .iter()
                .zip(&og.lifts)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if match_shift > MATCH_SHIFT_CAP {
                return Err(LabError::OrbitMatchFailed(orbit_id));
            }
            let eg = orbit_exponents(g, &og)?;
            Ok(LivshitzTerm {
                period,
                orbit_id,
                unstable: (ef.lambda_u - eg.lambda_u).abs(),
                stable: (ef.lambda_s - eg.lambda_s).abs(),
                match_shift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LivshitzReport {
        value: terms.iter().map(|t| t.unstable).fold(0.0, f64::max),
        stable_value: terms.iter().map(|t| t.stable).fold(0.0, f64::max),
        terms,
    })
}

/// Attaches Livshitz terms to a specialness report, matching orbits by
/// `(period, orbit_id)`.
pub fn attach_livshitz(report: &mut PeriodicDataReport, livshitz: &LivshitzReport) {
    for r in &mut report.orbits {
        r.livshitz_term = livshitz
            .terms
            .iter()
            .find(|t| t.period == r.period && t.orbit_id == r.orbit_id)
            .map(|t| t.unstable);
    }
    report.livshitz = Some(livshitz.value);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffEstimate {
    pub mean: f64,
    /// Standard error of the mean from block means.
    pub stderr: f64,
    pub samples: usize,
    pub blocks: usize,
}

/// Forward Birkhoff average of `log ‖DF(x_k) e^u(x_k)‖` along the orbit of
/// the lift through `x0`.
///
/// `e^u(x0)` comes from the splitting; later directions are its forward
/// pushes, which is the unstable direction along this lifted orbit. Base
/// points are reduced mod `Z²` since `DF` is periodic.
pub fn birkhoff_exponent(f: &ToralEndomorphism, x0: &Vec2, n: usize, blocks: usize) -> Result<BirkhoffEstimate> {
    if n < 2 {
        return Err(LabError::InvalidArgument("need at least two samples".into()));
    }
    let mut e = unstable_direction(f, x0, 1e-13)?.dir;
    let mut x = *x0;
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let v = f.derivative(&x)? * e;
        let norm = v.norm();
        terms.push(norm.ln());
        e = v / norm;
        x = frac(&f.lift(&x));
    }
    let (mean, stderr) = block_mean_stderr(&terms, blocks);
    Ok(BirkhoffEstimate {
        mean,
        stderr,
        samples: n,
        blocks,
    })
}

/// Birkhoff average of `log ‖DF(x_k) e^s(x_k)‖` along the forward orbit of
/// `x0`.
///
/// `E^s` projects to the torus, so `e^s` is computed once at the end of the
/// orbit and pulled back with `DF⁻¹`, which contracts direction errors.
pub fn birkhoff_stable_exponent(f: &ToralEndomorphism, x0: &Vec2, n: usize, blocks: usize) -> Result<BirkhoffEstimate> {
    if n < 2 {
        return Err(LabError::InvalidArgument("need at least two samples".into()));
    }
    let mut orbit = Vec::with_capacity(n + 1);
    let mut x = frac(x0);
    for _ in 0..=n {
        orbit.push(x);
        x = frac(&f.lift(&x));
    }
    let mut e = stable_direction(f, &orbit[n], 1e-13)?.dir;
    let mut terms = vec![0.0; n];
    for k in (0..n).rev() {
        let d = f.derivative(&orbit[k])?;
        let v = d.try_inverse().expect("checked nondegenerate") * e;
        let norm = v.norm();
        // ‖DF(x_k) e^s(x_k)‖ = 1/‖DF(x_k)⁻¹ e^s(x_{k+1})‖
        terms[k] = -norm.ln();
        e = v / norm;
    }
    let (mean, stderr) = block_mean_stderr(&terms, blocks);
    Ok(BirkhoffEstimate {
        mean,
        stderr,
        samples: n,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_map::examples;

    #[test]
    fn linear_seed_is_exact_orbit() {
        let a = examples::linear();
        let r17 = 17f64.sqrt();
        let (lu, ls) = (((3.0 + r17) / 2.0).ln(), ((r17 - 3.0) / 2.0).ln());
        for (_, _, seed) in linear_seeds(&a, 4).unwrap() {
            assert!(seed.residual < 1e-14);
            assert!(seed.torus_defect(&a) < 1e-14);
            let e = orbit_exponents(&a, &seed).unwrap();
            assert!((e.lambda_u - lu).abs() < 1e-12);
            assert!((e.lambda_s - ls).abs() < 1e-12);
            assert!(e.sum_residual() < 1e-12);
        }
    }

    #[test]
    fn linear_continuation_returns_seed() {
        let a = examples::linear();
        let cfg = ShootingConfig::default();
        for (_, _, seed) in linear_seeds(&a, 3).unwrap() {
            let o = continue_periodic_orbit(&a, &seed, &cfg).unwrap();
            assert_eq!(o.lifts, seed.lifts);
            assert_eq!(o.words, seed.words);
        }
    }

    #[test]
    fn collapse_detected() {
        let pts = [Vec2::new(0.1, 0.2), Vec2::new(1.1, 0.2 + 1e-9)];
        assert!(matches!(shooting::check_merge(&pts, 1e-8), Err(LabError::PeriodCollapse(0, 1))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let a = examples::linear();
        let report = specialness_diagnostic(&a, 2, &ShootingConfig::default()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "period,orbit_id,x0_1,x0_2,lambda_u,lambda_s,sum_residual,livshitz_term");
        assert_eq!(lines.len(), 1 + report.orbits.len());
        assert_eq!(report.stable_spread, 0.0);
    }
}
