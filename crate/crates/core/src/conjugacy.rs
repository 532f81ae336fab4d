//! The conjugacy `H = Id + u` with `A∘H = H∘F` on the universal cover.
//!
//! Writing `q(x) = F(x) − Lx`, the defining relation becomes
//! `A u(x) − u(F(x)) = q(x)`. In the eigenbasis of `L` this is solved by
//!
//! ```text
//! u_u(x) =  Σ_{k≥0} λ_u^{−(k+1)} q_u(Fᵏ x)
//! u_s(x) = −Σ_{k≥1} λ_s^{k−1}   q_s(F⁻ᵏ x)
//! ```
//!
//! with depths fixed from a priori geometric tails. The stable part follows
//! the backward orbit of the lift, so `u` is `Z²`-periodic only when the
//! unstable bundle projects to the torus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geom::{frac, perp, Mat2, Vec2};
use crate::splitting::{Chain, Flavor, LeafSegment};
use crate::stats::{fit_line, LineFit};
use crate::torus_map::{EigenData, ToralEndomorphism};

#[derive(Debug, Clone)]
pub struct ConjugacyField {
    f: ToralEndomorphism,
    eigen: EigenData,
    tol: f64,
    n_fwd: usize,
    n_bwd: usize,
    q_u_max: f64,
    q_s_max: f64,
}

fn series_depth(q_max: f64, share: f64, ratio: f64) -> usize {
    // smallest N with q_max·ratio^N/(1 − ratio) < share
    if q_max == 0.0 {
        return 0;
    }
    let n = (share * (1.0 - ratio) / q_max).ln() / ratio.ln();
    n.ceil().max(0.0) as usize
}

impl ConjugacyField {
    /// Builds the series evaluator with per-point truncation error below `tol`.
    pub fn build(f: &ToralEndomorphism, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(LabError::InvalidArgument("tolerance must be positive".into()));
        }
        let eigen = *f.linear().hyperbolic_eigen()?;
        let q_max = f.perturbation_sup_bound();
        let q_u_max = eigen.dual_u.norm() * q_max;
        let q_s_max = eigen.dual_s.norm() * q_max;
        let ru = 1.0 / eigen.lambda_u.abs();
        let rs = eigen.lambda_s.abs();
        // the unstable tail carries an extra factor 1/|λ_u|
        let n_fwd = series_depth(q_u_max * ru, tol / 2.0, ru);
        let n_bwd = series_depth(q_s_max, tol / 2.0, rs);
        Ok(Self {
            f: f.clone(),
            eigen,
            tol,
            n_fwd,
            n_bwd,
            q_u_max,
            q_s_max,
        })
    }

    pub fn map(&self) -> &ToralEndomorphism {
        &self.f
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn depths(&self) -> (usize, usize) {
        (self.n_fwd, self.n_bwd)
    }

    /// A priori bound `sup ‖u‖ ≤ q_u/(|λ_u| − 1) + q_s/(1 − |λ_s|)`.
    pub fn sup_bound(&self) -> f64 {
        self.q_u_max / (self.eigen.lambda_u.abs() - 1.0) + self.q_s_max / (1.0 - self.eigen.lambda_s.abs())
    }

    /// `u(x) = H(x) − x`.
    pub fn eval_u(&self, x: &Vec2) -> Result<Vec2> {
        let e = &self.eigen;
        let f = &self.f;
        let mut uu = 0.0;
        let mut y = *x;
        let mut w = 1.0 / e.lambda_u;
        for _ in 0..self.n_fwd {
            uu += w * e.dual_u.dot(&f.perturbation(&y));
            y = frac(&f.lift(&y));
            w /= e.lambda_u;
        }
        let mut us = 0.0;
        if self.n_bwd > 0 {
            let mut chain = Chain::new(f, *x, Flavor::Unstable)?;
            chain.extend_to(f, self.n_bwd)?;
            let mut w = 1.0;
            for k in 1..=self.n_bwd {
                us -= w * e.dual_s.dot(&f.perturbation(&chain.point(k)));
                w *= e.lambda_s;
            }
        }
        Ok(uu * e.v_u + us * e.v_s)
    }

    pub fn eval(&self, x: &Vec2) -> Result<Vec2> {
        Ok(x + self.eval_u(x)?)
    }

    /// Solves `H(x) = y` by damped Newton with a finite-difference Jacobian,
    /// starting from `y`.
    pub fn eval_inverse(&self, y: &Vec2) -> Result<Vec2> {
        let mut x = *y;
        let mut r = self.eval(&x)? - y;
        let h = 1e-6;
        for _ in 0..60 {
            if r.norm() < self.tol {
                return Ok(x);
            }
            let mut j = Mat2::zeros();
            for c in 0..2 {
                let mut e = Vec2::zeros();
                e[c] = h;
                let col = (self.eval(&(x + e))? - self.eval(&(x - e))?) / (2.0 * h);
                j.set_column(c, &col);
            }
            let step = j.try_inverse().unwrap_or_else(Mat2::identity) * r;
            let mut t = 1.0;
            loop {
                let cand = x - t * step;
                let rc = self.eval(&cand)? - y;
                if rc.norm() < r.norm() || t < 1e-4 {
                    x = cand;
                    r = rc;
                    break;
                }
                t *= 0.5;
            }
        }
        if r.norm() < self.tol {
            Ok(x)
        } else {
            Err(LabError::NonConvergence {
                what: "conjugacy inverse",
                iterations: 60,
                residual: r.norm(),
            })
        }
    }

    /// `‖A H(x) − H(F x)‖`.
    pub fn residual(&self, x: &Vec2) -> Result<f64> {
        Ok((self.f.lin() * self.eval(x)? - self.eval(&self.f.lift(x))?).norm())
    }

    /// Max deviation of `H(vertices)` from the `A`-unstable line through
    /// `H(base)`.
    pub fn leaf_image_check(&self, seg: &LeafSegment) -> Result<f64> {
        let dir = match seg.flavor() {
            Flavor::Unstable => self.eigen.v_u,
            Flavor::Stable => self.eigen.v_s,
        };
        let n = perp(&dir);
        let hb = self.eval(&seg.base())?;
        let devs: Vec<f64> = seg
            .vertices()
            .par_iter()
            .map(|v| self.eval(v).map(|hv| (hv - hb).dot(&n).abs()))
            .collect::<Result<_>>()?;
        Ok(devs.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyDiagnostics {
    pub samples: usize,
    pub max_residual: f64,
    pub sup_u: f64,
    pub sup_bound: f64,
    /// `max |u(x + m) − u(x)|` over `m ∈ {−1, 0, 1}²`.
    pub periodicity_defect: f64,
    pub max_inverse_residual: f64,
    /// `max ‖H(x) − h(x)‖` when the ground truth is known.
    pub ground_truth_error: Option<f64>,
}

/// Residual, bound, periodicity and inverse checks on `n` random points of
/// `[0, 1)²`.
pub fn diagnose(field: &ConjugacyField, n: usize, seed: u64) -> Result<ConjugacyDiagnostics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.random(), rng.random())).collect();
    let truth = field.f.ground_truth().cloned();
    let rows: Vec<(f64, f64, f64, f64, f64)> = pts
        .par_iter()
        .map(|x| {
            let u = field.eval_u(x)?;
            let res = field.residual(x)?;
            let mut per: f64 = 0.0;
            for i in -1..=1 {
                for j in -1..=1 {
                    if i != 0 || j != 0 {
                        let m = Vec2::new(i as f64, j as f64);
                        per = per.max((field.eval_u(&(x + m))? - u).norm());
                    }
                }
            }
            let hx = x + u;
            let inv = field.eval_inverse(&hx)?;
            let inv_res = (field.eval(&inv)? - hx).norm();
            let gt = truth.as_ref().map(|h| (h.apply(x) - hx).norm()).unwrap_or(0.0);
            Ok((res, u.norm(), per, inv_res, gt))
        })
        .collect::<Result<_>>()?;
    let max = |k: fn(&(f64, f64, f64, f64, f64)) -> f64| rows.iter().map(k).fold(0.0, f64::max);
    Ok(ConjugacyDiagnostics {
        samples: n,
        max_residual: max(|r| r.0),
        sup_u: max(|r| r.1),
        sup_bound: field.sup_bound(),
        periodicity_defect: max(|r| r.2),
        max_inverse_residual: max(|r| r.3),
        ground_truth_error: truth.map(|_| max(|r| r.4)),
    })
}

/// `H_fg = H_g⁻¹ ∘ H_f`, conjugating `f` to `g` when both share `L`.
#[derive(Debug, Clone)]
pub struct ConjugacyPair {
    pub hf: ConjugacyField,
    pub hg: ConjugacyField,
}

impl ConjugacyPair {
    pub fn build(f: &ToralEndomorphism, g: &ToralEndomorphism, tol: f64) -> Result<Self> {
        if f.linear() != g.linear() {
            return Err(LabError::InvalidArgument("maps must share the linear part".into()));
        }
        Ok(Self {
            hf: ConjugacyField::build(f, tol)?,
            hg: ConjugacyField::build(g, tol)?,
        })
    }

    pub fn eval(&self, x: &Vec2) -> Result<Vec2> {
        self.hg.eval_inverse(&self.hf.eval(x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub leaf_base: Vec2,
    pub scales: Vec<f64>,
    /// Per scale: max and mean of `d(Hx, Hy)/d(x, y)`.
    pub max_distortion: Vec<f64>,
    pub mean_distortion: Vec<f64>,
    /// Local slopes between consecutive scales (length `scales.len() − 1`).
    pub slopes: Vec<f64>,
    /// Per-scale RMS deviation of `log d(Hx, Hy)` from the global fit.
    pub residuals: Vec<f64>,
    pub fit: LineFit,
    /// `max_x |log r(x, δ_i) − log r(x, δ_{i+1})|` with `r = d(Hx, Hy)/δ`.
    pub defects: Vec<f64>,
    /// Slope at the finest two scales below 0.95.
    pub low_fine_slope: bool,
    /// Finest defect above `1e-4` and not shrinking geometrically.
    pub non_stabilizing: bool,
}

impl RegularityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Distance functions on a leaf used by [`estimate_holder_along_leaf`].
pub trait LeafMetric: Sync {
    /// Distance between the points with parameters `s1`, `s2` on `seg`.
    fn distance(&self, f: &ToralEndomorphism, seg: &LeafSegment, s1: f64, s2: f64) -> Result<f64>;
}

/// Arclength along the leaf.
pub struct Arclength;

impl LeafMetric for Arclength {
    fn distance(&self, f: &ToralEndomorphism, seg: &LeafSegment, s1: f64, s2: f64) -> Result<f64> {
        seg.arclength_between(f, s1, s2, 16)
    }
}

/// Fits `log d(Hx, Hy)` against `log d(x, y)` over same-leaf pairs at the
/// given scales. Distances in the image are measured along the image line.
pub fn estimate_holder_along_leaf(
    field: &ConjugacyField,
    seg: &LeafSegment,
    metric: &dyn LeafMetric,
    scales: &[f64],
    bases: usize,
) -> Result<RegularityReport> {
    let f = &field.f;
    let lo = seg.signed_arclength(0);
    let hi = seg.signed_arclength(seg.vertices().len() - 1);
    let usable: Vec<f64> = scales.iter().cloned().filter(|&d| d > 0.0 && d < 0.5 * (hi - lo)).collect();
    if usable.len() < 4 {
        return Err(LabError::InsufficientScaleRange {
            usable: usable.len(),
            required: 4,
        });
    }
    let dmax = usable.iter().cloned().fold(0.0, f64::max);
    // base points spread over the part of the segment that fits every pair
    let base_pts: Vec<(Vec2, f64)> = (0..bases)
        .map(|i| {
            let s = lo + (hi - dmax - lo) * (i as f64 + 0.5) / bases as f64;
            seg.point_at_arclength(f, s)
        })
        .collect::<Result<_>>()?;
    let base_h: Vec<Vec2> = base_pts.par_iter().map(|(p, _)| field.eval(p)).collect::<Result<_>>()?;
    let mut log_ratio = vec![vec![0.0; bases]; usable.len()];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &delta) in usable.iter().enumerate() {
        let rows: Vec<(f64, f64)> = base_pts
            .par_iter()
            .zip(base_h.par_iter())
            .map(|((p, sig), hp)| {
                let (_, s_base, _) = seg.locate(f, p)?;
                let (q, sig_q) = seg.point_at_arclength(f, s_base + delta)?;
                let d = metric.distance(f, seg, *sig, sig_q)?;
                let dh = (field.eval(&q)? - hp).norm();
                Ok((d, dh))
            })
            .collect::<Result<_>>()?;
        for (i, (d, dh)) in rows.into_iter().enumerate() {
            log_ratio[k][i] = (dh / d).ln();
            xs.push(d.ln());
            ys.push(dh.ln());
        }
    }
    let fit = fit_line(&xs, &ys).ok_or(LabError::InsufficientScaleRange {
        usable: usable.len(),
        required: 4,
    })?;
    let mut max_distortion = Vec::new();
    let mut mean_distortion = Vec::new();
    let mut residuals = Vec::new();
    let mut mean_log = Vec::new();
    for (k, &delta) in usable.iter().enumerate() {
        let r: Vec<f64> = log_ratio[k].iter().map(|l| l.exp()).collect();
        max_distortion.push(r.iter().cloned().fold(0.0, f64::max));
        mean_distortion.push(r.iter().sum::<f64>() / r.len() as f64);
        let ml = log_ratio[k].iter().sum::<f64>() / bases as f64;
        mean_log.push(ml);
        let pred = fit.slope * delta.ln() + fit.intercept;
        let rms = (log_ratio[k]
            .iter()
            .map(|l| (l + delta.ln() - pred).powi(2))
            .sum::<f64>()
            / bases as f64)
            .sqrt();
        residuals.push(rms);
    }
    // order by decreasing scale for slopes and defects
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.sort_by(|&a, &b| usable[b].total_cmp(&usable[a]));
    let mut slopes = Vec::new();
    let mut defects = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let la = mean_log[a] + usable[a].ln();
        let lb = mean_log[b] + usable[b].ln();
        slopes.push((la - lb) / (usable[a].ln() - usable[b].ln()));
        let d = (0..bases)
            .map(|i| (log_ratio[a][i] - log_ratio[b][i]).abs())
            .fold(0.0, f64::max);
        defects.push(d);
    }
    let nd = defects.len();
    let low_fine_slope = slopes.last().is_some_and(|&s| s < 0.95);
    let finest = defects[nd - 1];
    let earlier = if nd > 4 { defects[nd - 5] } else { defects[0] };
    let non_stabilizing = finest > 1e-4 && finest > earlier / 4.0;
    let sorted_scales = order.iter().map(|&i| usable[i]).collect::<Vec<_>>();
    let perm = |v: &Vec<f64>| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok(RegularityReport {
        leaf_base: seg.base(),
        scales: sorted_scales,
        max_distortion: perm(&max_distortion),
        mean_distortion: perm(&mean_distortion),
        slopes,
        residuals: perm(&residuals),
        fit,
        defects,
        low_fine_slope,
        non_stabilizing,
    })
}

/// `D^u_H(x) = lim d_g(Hx, Hz)/d_f(x, z)` along the leaf, Richardson
/// extrapolated from spacings `spacing` and `spacing/2`.
pub fn u_derivative_of_h(
    field: &ConjugacyField,
    seg: &LeafSegment,
    s: f64,
    spacing: f64,
    metric_f: &dyn LeafMetric,
    image_metric: &dyn Fn(&Vec2, &Vec2) -> Result<f64>,
) -> Result<f64> {
    let f = &field.f;
    let (x, sx) = seg.point_at_arclength(f, s)?;
    let hx = field.eval(&x)?;
    let ratio = |d: f64| -> Result<f64> {
        let (z, sz) = seg.point_at_arclength(f, s + d)?;
        let df = metric_f.distance(f, seg, sx, sz)?;
        let dg = image_metric(&hx, &field.eval(&z)?)?;
        Ok(dg / df)
    };
    let r1 = ratio(spacing)?;
    let r2 = ratio(0.5 * spacing)?;
    Ok(2.0 * r2 - r1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_map::examples::*;

    #[test]
    fn linear_map_has_identity_conjugacy() {
        let h = ConjugacyField::build(&linear(), 1e-8).unwrap();
        assert_eq!(h.depths(), (0, 0));
        let x = Vec2::new(0.3, 7.1);
        assert_eq!(h.eval(&x).unwrap(), x);
        assert_eq!(h.eval_inverse(&x).unwrap(), x);
    }

    #[test]
    fn depths_follow_tails() {
        let h = ConjugacyField::build(&shear_example(), 1e-8).unwrap();
        let (nf, nb) = h.depths();
        let e = reference_matrix().hyperbolic_eigen().unwrap().clone();
        let tail_u = h.q_u_max * e.lambda_u.abs().powi(-(nf as i32) - 1) / (1.0 - 1.0 / e.lambda_u.abs());
        let tail_s = h.q_s_max * e.lambda_s.abs().powi(nb as i32) / (1.0 - e.lambda_s.abs());
        assert!(tail_u < 0.5e-8 && tail_s < 0.5e-8);
        assert!(nf > 5 && nb > nf);
    }

    #[test]
    fn expanding_rejected() {
        let f = ToralEndomorphism::linear_map(crate::torus_map::IntMatrix2::new([[2, 1], [0, 2]]).unwrap());
        assert!(matches!(ConjugacyField::build(&f, 1e-8), Err(LabError::ExpandingMap)));
    }
}
