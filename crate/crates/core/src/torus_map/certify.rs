//! Grid certification of cone invariance and growth.
//!
//! Cones and growth are measured in the adapted norm `‖w‖_E = ‖P⁻¹w‖`, where
//! `P = [v_u | v_s]` is the eigenbasis of `L`. On each grid cell the derivative
//! at the cell center is checked with a slack covering every matrix within the
//! Lipschitz radius of the cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MapClass, ToralEndomorphism};
use crate::error::{LabError, Result};
use crate::geom::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub grid_n: usize,
    pub theta_u: f64,
    pub theta_s: f64,
}

impl Default for CertificateParams {
    fn default() -> Self {
        Self {
            grid_n: 256,
            theta_u: 0.1,
            theta_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCertificate {
    pub class: MapClass,
    pub theta_u: f64,
    pub theta_s: f64,
    /// Minimum adapted-norm growth of `Df` on the unstable cone.
    pub mu_u: f64,
    /// Reciprocal of the minimum growth of `Df⁻¹` on the stable cone.
    pub mu_s: f64,
    pub grid_n: usize,
    /// Bound on `‖Df(x) − Df(center)‖` within a cell.
    pub lipschitz_slack: f64,
    /// Same bound in eigen-coordinates.
    pub adapted_slack: f64,
    /// Minimum over cells of `θ − (image angle + slack angle)`.
    pub cone_margin_u: f64,
    pub cone_margin_s: f64,
    /// Minimum over cells of `|det Df(center)| − det slack`.
    pub det_margin: f64,
}

struct CellReport {
    cone_u: f64,
    cone_s: f64,
    growth_u: f64,
    growth_s: f64,
    det: f64,
}

impl CellReport {
    fn failure(&self) -> Option<(f64, &'static str)> {
        if self.det <= 0.0 {
            Some((self.det, "derivative may be degenerate"))
        } else if self.cone_u <= 0.0 {
            Some((self.cone_u, "unstable cone not invariant"))
        } else if self.cone_s <= 0.0 {
            Some((self.cone_s, "stable cone not invariant"))
        } else if self.growth_u <= 1.0 {
            Some((self.growth_u - 1.0, "no expansion on unstable cone"))
        } else if self.growth_s <= 1.0 {
            Some((self.growth_s - 1.0, "no contraction on stable cone"))
        } else {
            None
        }
    }
}

/// Smallest ratio `‖Mw‖/‖w‖` over unit `w` at angle `φ ∈ [−θ, θ]` from `e₁`.
fn min_growth_on_arc(m: &Mat2, theta: f64) -> f64 {
    let g = m.transpose() * m;
    let q = |phi: f64| {
        let (s, c) = phi.sin_cos();
        g[(0, 0)] * c * c + 2.0 * g[(0, 1)] * c * s + g[(1, 1)] * s * s
    };
    let mut best = q(theta).min(q(-theta));
    let base = 0.5 * (2.0 * g[(0, 1)]).atan2(g[(0, 0)] - g[(1, 1)]);
    for k in -2..=2 {
        let phi = base + k as f64 * std::f64::consts::FRAC_PI_2;
        if phi.abs() <= theta {
            best = best.min(q(phi));
        }
    }
    best.max(0.0).sqrt()
}

/// Margin by which every `M + E`, `‖E‖ ≤ eta`, maps the double cone of
/// half-angle `θ` about `e₁` strictly inside itself.
fn cone_margin(m: &Mat2, theta: f64, eta: f64) -> f64 {
    let t = theta.tan();
    let mut margin = f64::INFINITY;
    let mut signs = [0.0; 2];
    for (i, w) in [Vec2::new(1.0, t), Vec2::new(1.0, -t)].iter().enumerate() {
        let y = m * w;
        let r = eta * w.norm();
        if y.x.abs() <= r {
            return -1.0;
        }
        signs[i] = y.x.signum();
        let ang = y.y.abs().atan2(y.x.abs());
        let slack = (r / y.norm()).min(1.0).asin();
        margin = margin.min(theta - ang - slack);
    }
    if signs[0] != signs[1] {
        return -1.0;
    }
    margin
}

fn adapted_basis(f: &ToralEndomorphism) -> Result<(Mat2, Mat2)> {
    let e = f.linear().hyperbolic_eigen()?;
    let p = Mat2::from_columns(&[e.v_u, e.v_s]);
    let p_inv = Mat2::new(e.dual_u.x, e.dual_u.y, e.dual_s.x, e.dual_s.y);
    Ok((p, p_inv))
}

/// Certifies `f` on a `grid_n × grid_n` grid over the fundamental domain.
///
/// Cells are evaluated in parallel; the reported failure is the first failing
/// cell in row-major order.
pub fn certify_hyperbolicity(
    f: &ToralEndomorphism,
    params: &CertificateParams,
) -> Result<HyperbolicityCertificate> {
    let class = f.classify();
    match class {
        MapClass::Expanding => return Err(LabError::ExpandingMap),
        MapClass::NotHyperbolic => return Err(LabError::NotHyperbolic),
        _ => {}
    }
    if params.grid_n == 0 || !(params.theta_u > 0.0 && params.theta_s > 0.0) {
        return Err(LabError::InvalidArgument("grid_n and cone angles must be positive".into()));
    }
    if params.theta_u + params.theta_s >= std::f64::consts::FRAC_PI_2 {
        return Err(LabError::InvalidArgument("cones must be disjoint: θ_u + θ_s < π/2".into()));
    }
    let (p, p_inv) = adapted_basis(f)?;
    let n = params.grid_n;
    // Operator norms are bounded by Frobenius norms throughout.
    let eta = f.df_lipschitz_bound() * std::f64::consts::SQRT_2 / (2.0 * n as f64);
    let eta_adapted = eta * p.norm() * p_inv.norm();
    let swap = Mat2::new(0.0, 1.0, 1.0, 0.0);

    let cells: Vec<CellReport> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let x = Vec2::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            let d = f.df(&x);
            let det = d.determinant().abs() - (std::f64::consts::SQRT_2 * eta * d.norm() + eta * eta);
            let m = p_inv * d * p;
            let cone_u = cone_margin(&m, params.theta_u, eta_adapted);
            let growth_u = min_growth_on_arc(&m, params.theta_u) - eta_adapted;
            let (cone_s, growth_s) = match m.try_inverse() {
                Some(mi) => {
                    let k = mi.norm();
                    let ms = swap * mi * swap;
                    if k * eta_adapted < 1.0 {
                        let eta_s = k * k * eta_adapted / (1.0 - k * eta_adapted);
                        (
                            cone_margin(&ms, params.theta_s, eta_s),
                            min_growth_on_arc(&ms, params.theta_s) - eta_s,
                        )
                    } else {
                        (-1.0, 0.0)
                    }
                }
                None => (-1.0, 0.0),
            };
            CellReport {
                cone_u,
                cone_s,
                growth_u,
                growth_s,
                det,
            }
        })
        .collect();

    let mut cert = HyperbolicityCertificate {
        class,
        theta_u: params.theta_u,
        theta_s: params.theta_s,
        mu_u: f64::INFINITY,
        mu_s: 0.0,
        grid_n: n,
        lipschitz_slack: eta,
        adapted_slack: eta_adapted,
        cone_margin_u: f64::INFINITY,
        cone_margin_s: f64::INFINITY,
        det_margin: f64::INFINITY,
    };
    let mut min_growth_s = f64::INFINITY;
    for (idx, c) in cells.iter().enumerate() {
        if let Some((margin, reason)) = c.failure() {
            return Err(LabError::CertificationFailed {
                cell: (idx / n, idx % n),
                margin,
                reason,
            });
        }
        cert.mu_u = cert.mu_u.min(c.growth_u);
        min_growth_s = min_growth_s.min(c.growth_s);
        cert.cone_margin_u = cert.cone_margin_u.min(c.cone_u);
        cert.cone_margin_s = cert.cone_margin_s.min(c.cone_s);
        cert.det_margin = cert.det_margin.min(c.det);
    }
    cert.mu_s = 1.0 / min_growth_s;
    Ok(cert)
}

impl HyperbolicityCertificate {
    /// Adapted norm used for the growth constants.
    pub fn adapted_norm(f: &ToralEndomorphism, w: &Vec2) -> Result<f64> {
        let (_, p_inv) = adapted_basis(f)?;
        Ok((p_inv * w).norm())
    }

    /// True if `w` lies in the unstable cone (adapted coordinates).
    pub fn in_unstable_cone(&self, f: &ToralEndomorphism, w: &Vec2) -> Result<bool> {
        let (_, p_inv) = adapted_basis(f)?;
        let a = p_inv * w;
        Ok(a.y.abs() <= self.theta_u.tan() * a.x.abs() * (1.0 + 1e-12))
    }

    pub fn in_stable_cone(&self, f: &ToralEndomorphism, w: &Vec2) -> Result<bool> {
        let (_, p_inv) = adapted_basis(f)?;
        let a = p_inv * w;
        Ok(a.x.abs() <= self.theta_s.tan() * a.y.abs() * (1.0 + 1e-12))
    }
}
