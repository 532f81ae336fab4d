//! The leaf density `ρ(x, y) = ∏_{n≥1} D(x_{-n}) / D(y_{-n})` along the past
//! of two points on a common leaf, and the metric `d̃(x, y) = ∫_x^y ρ(x, z) dλ(z)`
//! built from it.
//!
//! For unstable leaves `D` is the expansion of `F` along the leaf and the past
//! is the backward orbit of the lift; for stable leaves the roles of `F` and
//! `F⁻¹` are exchanged.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::splitting::{linear_data, Flavor, LeafSegment};
use crate::stats::gauss_legendre;
use crate::torus_map::ToralEndomorphism;

/// Extra history levels so that the tangent pushed from the linear direction
/// has converged at every level that enters the product.
const DIRECTION_SLACK: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityParams {
    /// The product stops once a log factor drops below this.
    pub term_tol: f64,
    /// Truncations with a larger tail bound are rejected.
    pub tail_tol: f64,
    pub depth_cap: usize,
    /// Points farther than this from the segment are not on it.
    pub on_leaf_tol: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            term_tol: 1e-15,
            tail_tol: 1e-12,
            depth_cap: 80,
            on_leaf_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoValue {
    pub value: f64,
    pub log_value: f64,
    /// Number of factors used.
    pub terms: usize,
    /// Geometric bound on the omitted log factors.
    pub tail_bound: f64,
}

/// Evaluates `ρ` on one leaf segment.
#[derive(Debug, Clone, Copy)]
pub struct LeafDensity<'a> {
    f: &'a ToralEndomorphism,
    seg: &'a LeafSegment,
    params: DensityParams,
    /// Per-step contraction of separations along the past.
    contraction: f64,
}

impl<'a> LeafDensity<'a> {
    pub fn new(f: &'a ToralEndomorphism, seg: &'a LeafSegment, params: DensityParams) -> Result<Self> {
        let (_, rate) = linear_data(f, seg.flavor())?;
        Ok(Self {
            f,
            seg,
            params,
            contraction: (1.2 / rate).min(0.99),
        })
    }

    pub fn segment(&self) -> &'a LeafSegment {
        self.seg
    }

    pub fn map(&self) -> &'a ToralEndomorphism {
        self.f
    }

    pub fn params(&self) -> &DensityParams {
        &self.params
    }

    /// `log D(x_{-j})` for `j = 1..`, at the leaf point with parameter `σ`.
    pub fn log_profile(&self, sigma: f64) -> Result<Vec<f64>> {
        let depth = self.params.depth_cap + DIRECTION_SLACK;
        let mut p = self.seg.log_expansion_history(self.f, sigma, depth)?;
        let usable = p.len().saturating_sub(DIRECTION_SLACK).min(self.params.depth_cap);
        p.truncate(usable);
        Ok(p)
    }

    /// `ρ` from two profiles.
    pub fn rho_from_profiles(&self, px: &[f64], py: &[f64]) -> Result<RhoValue> {
        let n = px.len().min(py.len());
        let r = self.contraction;
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        let mut out = None;
        for j in 0..n {
            let d = px[j] - py[j];
            sum += d;
            if d.abs() < self.params.term_tol && prev.abs() < 1e-12 {
                out = Some((j + 1, d.abs() * r / (1.0 - r)));
                break;
            }
            prev = d;
        }
        let (terms, tail_bound) = match out {
            Some(v) => v,
            None => {
                let last = if n > 0 { (px[n - 1] - py[n - 1]).abs() } else { f64::INFINITY };
                (n, last * r / (1.0 - r))
            }
        };
        if !(tail_bound <= self.params.tail_tol) {
            return Err(LabError::NonConvergence {
                what: "leaf density product",
                iterations: terms,
                residual: tail_bound,
            });
        }
        Ok(RhoValue {
            value: sum.exp(),
            log_value: sum,
            terms,
            tail_bound,
        })
    }

    pub fn rho_sigma(&self, sx: f64, sy: f64) -> Result<RhoValue> {
        let px = self.log_profile(sx)?;
        let py = if sx == sy { px.clone() } else { self.log_profile(sy)? };
        self.rho_from_profiles(&px, &py)
    }

    pub fn rho(&self, x: &crate::Vec2, y: &crate::Vec2) -> Result<RhoValue> {
        let sx = self.sigma_of(x)?;
        let sy = self.sigma_of(y)?;
        self.rho_sigma(sx, sy)
    }

    /// Parameter of a point on the segment.
    pub fn sigma_of(&self, p: &crate::Vec2) -> Result<f64> {
        let (s, _, dist) = self.seg.locate(self.f, p)?;
        let sig = self.seg.sigmas();
        let (lo, hi) = (sig[0].min(sig[sig.len() - 1]), sig[0].max(sig[sig.len() - 1]));
        let slack = 1e-9 * (hi - lo);
        if !(dist <= self.params.on_leaf_tol) || s < lo - slack || s > hi + slack {
            return Err(LabError::NotOnSameLeaf);
        }
        Ok(s)
    }

    /// Expansion along the leaf at the point with parameter `σ`: `‖DF t̂‖` on
    /// unstable leaves, `‖DF⁻¹ t̂‖` on stable ones.
    pub fn leaf_derivative(&self, sigma: f64) -> Result<f64> {
        let (p, t) = self.seg.eval_with_tangent(self.f, sigma)?;
        let t = t / t.norm();
        match self.seg.flavor() {
            Flavor::Unstable => Ok((self.f.derivative(&p)? * t).norm()),
            Flavor::Stable => {
                let z = self.f.invert_lift(&p, None)?;
                let d = self.f.derivative(&z)?;
                Ok((d.try_inverse().expect("checked nondegenerate") * t).norm())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedDistance {
    pub value: f64,
    /// Difference between the last two panel refinements.
    pub error_estimate: f64,
    pub panels: usize,
    /// Range of `ρ(x, ·)` over the quadrature nodes.
    pub rho_min: f64,
    pub rho_max: f64,
}

/// `d̃` on one segment, by composite Gauss–Legendre in the leaf parameter.
#[derive(Debug, Clone)]
pub struct AdaptedMetric<'a> {
    density: LeafDensity<'a>,
    nodes: Vec<(f64, f64)>,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl<'a> AdaptedMetric<'a> {
    pub fn new(density: LeafDensity<'a>, order: usize) -> Self {
        Self {
            density,
            nodes: gauss_legendre(order.max(2)),
            rel_tol: 1e-11,
            max_panels: 64,
        }
    }

    pub fn density(&self) -> &LeafDensity<'a> {
        &self.density
    }

    fn integrate(&self, px: &[f64], sx: f64, sy: f64, panels: usize, weight: bool) -> Result<(f64, f64, f64)> {
        let seg = self.density.segment();
        let f = self.density.map();
        let width = (sy - sx) / panels as f64;
        let (mut total, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..panels {
            let a = sx + width * k as f64;
            for &(x, w) in &self.nodes {
                let s = a + 0.5 * width * (x + 1.0);
                let (_, t) = seg.eval_with_tangent(f, s)?;
                let rho = if weight {
                    self.density.rho_from_profiles(px, &self.density.log_profile(s)?)?.value
                } else {
                    1.0
                };
                lo = lo.min(rho);
                hi = hi.max(rho);
                total += 0.5 * width * w * rho * t.norm();
            }
        }
        Ok((total.abs(), lo, hi))
    }

    fn refine(&self, sx: f64, sy: f64, weight: bool) -> Result<AdaptedDistance> {
        if sx == sy {
            return Ok(AdaptedDistance {
                value: 0.0,
                error_estimate: 0.0,
                panels: 0,
                rho_min: 1.0,
                rho_max: 1.0,
            });
        }
        let px = if weight { self.density.log_profile(sx)? } else { Vec::new() };
        let mut panels = 1;
        let (mut prev, _, _) = self.integrate(&px, sx, sy, panels, weight)?;
        loop {
            panels *= 2;
            let (cur, lo, hi) = self.integrate(&px, sx, sy, panels, weight)?;
            let err = (cur - prev).abs();
            if err <= self.rel_tol * cur + 1e-15 || panels >= self.max_panels {
                return Ok(AdaptedDistance {
                    value: cur,
                    error_estimate: err,
                    panels,
                    rho_min: lo,
                    rho_max: hi,
                });
            }
            prev = cur;
        }
    }

    /// `d̃` between the points with parameters `sx` and `sy`, anchored at `sx`.
    pub fn distance_sigma(&self, sx: f64, sy: f64) -> Result<AdaptedDistance> {
        self.refine(sx, sy, true)
    }

    pub fn distance(&self, x: &crate::Vec2, y: &crate::Vec2) -> Result<AdaptedDistance> {
        let sx = self.density.sigma_of(x)?;
        let sy = self.density.sigma_of(y)?;
        self.distance_sigma(sx, sy)
    }

    /// Leaf arclength between two parameters, by the same quadrature.
    pub fn arclength_sigma(&self, sx: f64, sy: f64) -> Result<f64> {
        Ok(self.refine(sx, sy, false)?.value)
    }

    /// `|1 − d̃(y, x) / d̃(x, y)|`; the formula anchors `ρ` at its first argument.
    pub fn symmetry_defect(&self, sx: f64, sy: f64) -> Result<f64> {
        let a = self.distance_sigma(sx, sy)?.value;
        let b = self.distance_sigma(sy, sx)?.value;
        Ok(if a == 0.0 { 0.0 } else { (1.0 - b / a).abs() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::grow_leaf_segment;
    use crate::torus_map::examples;
    use crate::Vec2;

    #[test]
    fn linear_density_is_one_and_metric_is_arclength() {
        let f = examples::linear();
        let seg = grow_leaf_segment(&f, &Vec2::new(0.3, 0.1), Flavor::Unstable, 0.5, 0.01).unwrap();
        let dens = LeafDensity::new(&f, &seg, DensityParams::default()).unwrap();
        let s = seg.sigmas();
        let (a, b) = (s[3], s[s.len() - 4]);
        assert_eq!(dens.rho_sigma(a, b).unwrap().value, 1.0);
        let metric = AdaptedMetric::new(dens, 12);
        let d = metric.distance_sigma(a, b).unwrap();
        let chord = (seg.eval(&f, b).unwrap() - seg.eval(&f, a).unwrap()).norm();
        assert!((d.value - chord).abs() < 1e-10 * chord);
    }

    #[test]
    fn rho_on_diagonal_is_exactly_one() {
        let f = examples::shear_example();
        let seg = grow_leaf_segment(&f, &Vec2::new(0.3, 0.1), Flavor::Unstable, 0.5, 0.01).unwrap();
        let dens = LeafDensity::new(&f, &seg, DensityParams::default()).unwrap();
        let s = seg.sigmas()[7];
        assert_eq!(dens.rho_sigma(s, s).unwrap().value, 1.0);
    }

    #[test]
    fn off_leaf_point_is_rejected() {
        let f = examples::shear_example();
        let seg = grow_leaf_segment(&f, &Vec2::new(0.3, 0.1), Flavor::Unstable, 0.2, 0.01).unwrap();
        let dens = LeafDensity::new(&f, &seg, DensityParams::default()).unwrap();
        let off = seg.base() + Vec2::new(1e-3, -2e-3);
        assert!(matches!(dens.rho(&seg.base(), &off), Err(LabError::NotOnSameLeaf)));
    }
}
