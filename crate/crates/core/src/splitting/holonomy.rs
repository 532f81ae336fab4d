use serde::{Deserialize, Serialize};

use super::chain::Flavor;
use super::leaf::{LeafParams, LeafSegment};
use crate::error::{LabError, Result};
use crate::geom::{segment_crossing_within, Mat2, Vec2};
use crate::torus_map::ToralEndomorphism;

/// Image of a holonomy: the crossing of a transversal leaf with `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolonomyPoint {
    pub point: Vec2,
    /// Parameter of the crossing on `dst`.
    pub sigma: f64,
    /// Signed arclength on `dst` from its base point.
    pub arclength: f64,
    /// Signed arclength along the transversal leaf from the source point.
    pub transversal_arclength: f64,
}

fn bbox(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Holonomy along `transversal` leaves between two segments of the other flavor.
#[derive(Debug, Clone, Copy)]
pub struct HolonomyMap<'a> {
    pub src: &'a LeafSegment,
    pub dst: &'a LeafSegment,
    pub transversal: Flavor,
    pub tol: f64,
}

impl<'a> HolonomyMap<'a> {
    pub fn new(src: &'a LeafSegment, dst: &'a LeafSegment, tol: f64) -> Self {
        Self {
            src,
            dst,
            transversal: src.flavor().other(),
            tol,
        }
    }

    pub fn inverse(&self) -> HolonomyMap<'a> {
        HolonomyMap {
            src: self.dst,
            dst: self.src,
            transversal: self.transversal,
            tol: self.tol,
        }
    }

    /// Search window: twice the diameter of the bounding box of both segments.
    pub fn window(&self) -> f64 {
        let (a, b) = bbox(self.src.vertices());
        let (c, d) = bbox(self.dst.vertices());
        2.0 * (b.sup(&d) - a.inf(&c)).norm()
    }

    pub fn apply(&self, f: &ToralEndomorphism, q: &Vec2) -> Result<HolonomyPoint> {
        transversal_crossing(f, q, self.dst, self.transversal, self.window(), self.tol)
    }
}

/// Crossing of the `transversal` leaf through `q` with `dst`, searched within
/// arclength `window` of `q` and refined by Newton on both exact
/// parametrizations.
pub fn transversal_crossing(
    f: &ToralEndomorphism,
    q: &Vec2,
    dst: &LeafSegment,
    transversal: Flavor,
    window: f64,
    tol: f64,
) -> Result<HolonomyPoint> {
    let (lo, hi) = bbox(dst.vertices());
    let h = window / 512.0;
    let trans = LeafSegment::grow(f, q, transversal, window, h, &LeafParams::default())?;
    let tv = trans.vertices();
    let dv = dst.vertices();
    let mut best: Option<(f64, usize, f64, usize, f64)> = None;
    for i in 0..tv.len() - 1 {
        let (a, b) = (tv[i], tv[i + 1]);
        let pad = h;
        if a.x.max(b.x) < lo.x - pad || a.x.min(b.x) > hi.x + pad || a.y.max(b.y) < lo.y - pad || a.y.min(b.y) > hi.y + pad {
            continue;
        }
        for k in 0..dv.len() - 1 {
            if let Some((s, t)) = segment_crossing_within(&a, &b, &dv[k], &dv[k + 1], 1e-9) {
                let arc = (trans.arclength()[i] + s * (b - a).norm() - trans.arclength()[trans.base_index()]).abs();
                if best.is_none_or(|bst| arc < bst.0) {
                    best = Some((arc, i, s, k, t));
                }
            }
        }
    }
    let (_, i, s, k, t) = best.ok_or(LabError::NoIntersection)?;
    let ts = trans.sigmas();
    let ds = dst.sigmas();
    let mut a = ts[i] + s * (ts[i + 1] - ts[i]);
    let mut b = ds[k] + t * (ds[k + 1] - ds[k]);
    // Parametrizations are exact up to roundoff along each leaf.
    let floor = trans.eval_noise() + dst.eval_noise();
    let mut best = (f64::INFINITY, b);
    for _ in 0..30 {
        let (pa, ta) = trans.eval_with_tangent(f, a)?;
        let (pb, tb) = dst.eval_with_tangent(f, b)?;
        let r = pa - pb;
        let residual = r.norm();
        if residual < best.0 {
            best = (residual, b);
        } else if residual < 4.0 * floor {
            break;
        }
        if residual < 1e-15 {
            break;
        }
        let j = Mat2::from_columns(&[ta, -tb]);
        let step = j.try_inverse().ok_or(LabError::NoIntersection)? * r;
        a -= step.x;
        b -= step.y;
    }
    let (residual, b) = best;
    if residual > tol.max(4.0 * floor) {
        return Err(LabError::NonConvergence {
            what: "holonomy crossing",
            iterations: 30,
            residual,
        });
    }
    let point = dst.eval(f, b)?;
    let (_, arclength, _) = dst.locate(f, &point)?;
    let (_, trans_arc, _) = trans.locate(f, &point)?;
    Ok(HolonomyPoint {
        point,
        sigma: b,
        arclength,
        transversal_arclength: trans_arc,
    })
}

/// Holonomy along stable leaves from `src` to `dst` (both unstable).
pub fn stable_holonomy(
    f: &ToralEndomorphism,
    src: &LeafSegment,
    dst: &LeafSegment,
    q: &Vec2,
    tol: f64,
) -> Result<HolonomyPoint> {
    if src.flavor() != Flavor::Unstable || dst.flavor() != Flavor::Unstable {
        return Err(LabError::InvalidArgument("stable holonomy acts between unstable segments".into()));
    }
    HolonomyMap::new(src, dst, tol).apply(f, q)
}
