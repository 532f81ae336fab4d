//! Aggregated verdict on the exponent-rigidity implication: bounded densities
//! for a constant-Jacobian map force the exponents of the linear part.

use serde::{Deserialize, Serialize};

use super::boxes::{UbdFlag, UbdReport};
use crate::periodic_data::{BirkhoffEstimate, PeriodicDataReport, SpecialnessVerdict};
use crate::torus_map::ToralEndomorphism;

/// Largest `|λ^u_f − log α|` read as equal exponents.
pub const EXPONENT_MATCH_TOL: f64 = 1e-3;
/// Tolerance of the Birkhoff exponent-sum check.
pub const EXPONENT_SUM_TOL: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Bounded densities and equal exponents.
    Consistent,
    /// Unbounded-density trend and unequal exponents.
    ContrapositiveConsistent,
    /// Bounded densities with a constant Jacobian but unequal exponents.
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBReport {
    pub constant_jacobian: bool,
    pub log_alpha: f64,
    pub log_det: f64,
    pub lambda_u: f64,
    pub lambda_u_stderr: f64,
    pub lambda_s: f64,
    pub lambda_s_stderr: f64,
    /// `|λ^u_f − log α|`.
    pub exponent_gap: f64,
    /// `|λ^u + λ^s − log|det L||`, for constant-Jacobian maps.
    pub exponent_sum_residual: Option<f64>,
    pub periodic_spread: f64,
    pub ubd_flag: UbdFlag,
    pub c_estimate: f64,
    pub exponents_match: bool,
    pub verdict: Verdict,
}

pub fn theorem_b_verdict(
    f: &ToralEndomorphism,
    ubd: &UbdReport,
    periodic: &PeriodicDataReport,
    birkhoff_u: &BirkhoffEstimate,
    birkhoff_s: &BirkhoffEstimate,
) -> TheoremBReport {
    let l = f.linear();
    let log_alpha = l.eigen().map(|e| e.lambda_u.abs().ln()).unwrap_or(f64::NAN);
    let log_det = (l.det().abs() as f64).ln();
    let constant_jacobian = f.has_constant_jacobian();
    let exponent_gap = (birkhoff_u.mean - log_alpha).abs();
    let periodic_spread = periodic.stable_spread.max(periodic.unstable_spread);
    let exponents_match =
        exponent_gap < EXPONENT_MATCH_TOL && periodic.verdict == SpecialnessVerdict::ConsistentWithSpecial;
    let verdict = match (ubd.flag, constant_jacobian, exponents_match) {
        (UbdFlag::UbdConsistent, true, true) => Verdict::Consistent,
        (UbdFlag::UbdConsistent, true, false) => Verdict::Inconsistent,
        (UbdFlag::UbdViolatingTrend, _, false) => Verdict::ContrapositiveConsistent,
        _ => Verdict::Inconclusive,
    };
    TheoremBReport {
        constant_jacobian,
        log_alpha,
        log_det,
        lambda_u: birkhoff_u.mean,
        lambda_u_stderr: birkhoff_u.stderr,
        lambda_s: birkhoff_s.mean,
        lambda_s_stderr: birkhoff_s.stderr,
        exponent_gap,
        exponent_sum_residual: constant_jacobian.then(|| (birkhoff_u.mean + birkhoff_s.mean - log_det).abs()),
        periodic_spread,
        ubd_flag: ubd.flag,
        c_estimate: ubd.c_estimate,
        exponents_match,
        verdict,
    }
}
