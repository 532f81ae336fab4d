//! Leaf segments grown by the push-forward method.
//!
//! A segment through `x` at depth `n` is the image of a tiny straight seed
//! `σ ↦ pts[n] + σ e` (with `e` the bundle direction at `pts[n]`) under `n`
//! expanding steps of the chain. Every vertex records its parameter `σ`, so
//! points on the leaf, tangents and backward histories are available exactly
//! rather than through interpolation.

use serde::{Deserialize, Serialize};

use super::chain::{linear_data, Chain, Flavor};
use super::direction::{direction_on_chain, MAX_DIRECTION_DEPTH};
use crate::error::{LabError, Result};
use crate::geom::{cumulative_arclength, point_segment, Vec2};
use crate::torus_map::{HyperbolicityCertificate, ToralEndomorphism};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    /// Largest seed parameter; the seed is straight to `O(σ²)`.
    pub sigma_cap: f64,
    pub dir_tol: f64,
    pub max_vertices: usize,
    /// Extra chain depth kept for backward histories.
    pub history_depth: usize,
}

impl Default for LeafParams {
    fn default() -> Self {
        Self {
            sigma_cap: 1e-5,
            dir_tol: 1e-13,
            max_vertices: 4_000_000,
            history_depth: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeafSegment {
    flavor: Flavor,
    chain: Chain,
    depth: usize,
    seed: Vec2,
    dir: Vec2,
    sigma: Vec<f64>,
    vertices: Vec<Vec2>,
    arclength: Vec<f64>,
    base_index: usize,
    h_max: f64,
    /// `|dP/dσ|` at the base point.
    tangent_scale: f64,
}

fn subdivide(
    seg: &LeafSegment,
    f: &ToralEndomorphism,
    a: (f64, Vec2),
    b: (f64, Vec2),
    h_max: f64,
    out: &mut Vec<(f64, Vec2)>,
    depth: usize,
) -> Result<()> {
    if (b.1 - a.1).norm() <= h_max || depth > 60 {
        return Ok(());
    }
    let mid = 0.5 * (a.0 + b.0);
    let pm = seg.eval(f, mid)?;
    subdivide(seg, f, a, (mid, pm), h_max, out, depth + 1)?;
    out.push((mid, pm));
    subdivide(seg, f, (mid, pm), b, h_max, out, depth + 1)
}

impl LeafSegment {
    /// Grows the leaf of `flavor` through `x` with arclength `halflength` on
    /// each side of `x` and chord spacing at most `h_max`.
    pub fn grow(
        f: &ToralEndomorphism,
        x: &Vec2,
        flavor: Flavor,
        halflength: f64,
        h_max: f64,
        params: &LeafParams,
    ) -> Result<Self> {
        if !(halflength > 0.0 && h_max > 0.0) {
            return Err(LabError::InvalidArgument("halflength and h_max must be positive".into()));
        }
        let (v_lin, rate) = linear_data(f, flavor)?;
        let target = 1.5 * halflength;
        let mut depth = ((target / params.sigma_cap).ln() / rate.ln()).ceil().max(1.0) as usize;
        let mut chain = Chain::new(f, *x, flavor)?;
        for _ in 0..8 {
            chain.extend_to(f, depth + MAX_DIRECTION_DEPTH + params.history_depth + 2)?;
            let (dir, _, _) = direction_on_chain(f, &mut chain, depth, params.dir_tol)?;
            let mut seg = LeafSegment {
                flavor,
                seed: chain.point(depth),
                chain: chain.clone(),
                depth,
                dir,
                sigma: Vec::new(),
                vertices: Vec::new(),
                arclength: Vec::new(),
                base_index: 0,
                h_max,
                tangent_scale: 0.0,
            };
            let (_, t) = seg.eval_with_tangent(f, 0.0)?;
            if t.dot(&v_lin) < 0.0 {
                seg.dir = -seg.dir;
            }
            let growth = t.norm();
            seg.tangent_scale = growth;
            let needed = target / growth;
            if needed > params.sigma_cap {
                depth += ((needed / params.sigma_cap).ln() / rate.ln()).ceil().max(1.0) as usize;
                continue;
            }
            seg.fill(f, x, halflength, needed, params)?;
            return Ok(seg);
        }
        Err(LabError::NonConvergence {
            what: "leaf depth selection",
            iterations: 8,
            residual: depth as f64,
        })
    }

    fn fill(&mut self, f: &ToralEndomorphism, x: &Vec2, halflength: f64, span: f64, params: &LeafParams) -> Result<()> {
        let mut s0 = 0.0;
        for _ in 0..4 {
            let (p, t) = self.eval_with_tangent(f, s0)?;
            s0 += (x - p).dot(&t) / t.norm_squared();
        }
        let (mut lo, mut hi) = (s0 - span, s0 + span);
        loop {
            let k = 16;
            let mut pts = Vec::with_capacity(2 * k + 1);
            for i in 0..=2 * k {
                let s = if i == k {
                    s0
                } else if i < k {
                    lo + (s0 - lo) * i as f64 / k as f64
                } else {
                    s0 + (hi - s0) * (i - k) as f64 / k as f64
                };
                let p = if i == k { *x } else { self.eval(f, s)? };
                pts.push((s, p));
            }
            let mut out = Vec::with_capacity(pts.len());
            for w in pts.windows(2) {
                out.push(w[0]);
                subdivide(self, f, w[0], w[1], self.h_max, &mut out, 0)?;
                if out.len() > params.max_vertices {
                    return Err(LabError::InvalidArgument(format!(
                        "leaf segment would exceed {} vertices",
                        params.max_vertices
                    )));
                }
            }
            out.push(*pts.last().unwrap());
            self.sigma = out.iter().map(|p| p.0).collect();
            self.vertices = out.iter().map(|p| p.1).collect();
            self.base_index = self.sigma.iter().position(|&s| s == s0).expect("base vertex present");
            self.arclength = cumulative_arclength(&self.vertices);
            let base_s = self.arclength[self.base_index];
            let left = base_s;
            let right = self.arclength.last().unwrap() - base_s;
            if left >= halflength && right >= halflength {
                break;
            }
            if left < halflength {
                lo = s0 - 2.0 * (s0 - lo);
            }
            if right < halflength {
                hi = s0 + 2.0 * (hi - s0);
            }
            if (hi - lo) > 20.0 * params.sigma_cap.max(span) {
                return Err(LabError::NonConvergence {
                    what: "leaf span",
                    iterations: 0,
                    residual: hi - lo,
                });
            }
        }
        self.trim(f, halflength)
    }

    fn trim(&mut self, f: &ToralEndomorphism, halflength: f64) -> Result<()> {
        let base_s = self.arclength[self.base_index];
        // right end
        let i = self.arclength.iter().position(|&a| a - base_s >= halflength).unwrap();
        let (sig_r, p_r) = self.cut(f, i - 1, i, halflength - (self.arclength[i - 1] - base_s))?;
        // left end
        let j = self.arclength.iter().rposition(|&a| base_s - a >= halflength).unwrap();
        let (sig_l, p_l) = self.cut(f, j + 1, j, halflength - (base_s - self.arclength[j + 1]))?;
        let mut sigma = vec![sig_l];
        let mut vertices = vec![p_l];
        sigma.extend_from_slice(&self.sigma[j + 1..i]);
        vertices.extend_from_slice(&self.vertices[j + 1..i]);
        sigma.push(sig_r);
        vertices.push(p_r);
        self.base_index -= j;
        self.sigma = sigma;
        self.vertices = vertices;
        self.arclength = cumulative_arclength(&self.vertices);
        Ok(())
    }

    /// Point between vertices `from` and `toward` at chord distance `r` from `from`.
    fn cut(&self, f: &ToralEndomorphism, from: usize, toward: usize, r: f64) -> Result<(f64, Vec2)> {
        let anchor = self.vertices[from];
        let (mut a, mut b) = (self.sigma[from], self.sigma[toward]);
        let mut best = (b, self.vertices[toward]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let p = self.eval(f, m)?;
            best = (m, p);
            let d = (p - anchor).norm();
            if (d - r).abs() < 1e-14 || a == m || b == m {
                break;
            }
            if d < r {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(best)
    }

    /// Exact leaf point for parameter `σ`.
    pub fn eval(&self, f: &ToralEndomorphism, sigma: f64) -> Result<Vec2> {
        let mut y = self.seed + sigma * self.dir;
        for j in (0..self.depth).rev() {
            y = self.chain.expand(f, j, &y)?;
        }
        Ok(y)
    }

    /// Leaf point and `d/dσ` of the parametrization.
    pub fn eval_with_tangent(&self, f: &ToralEndomorphism, sigma: f64) -> Result<(Vec2, Vec2)> {
        let mut y = self.seed + sigma * self.dir;
        let mut t = self.dir;
        for j in (0..self.depth).rev() {
            let (z, d) = self.chain.expand_with_derivative(f, j, &y)?;
            y = z;
            t = d * t;
        }
        Ok((y, t))
    }

    /// Points `x_0, x_{-1}, …` of the past of the leaf point with parameter
    /// `σ` (the forward orbit for stable leaves), reduced along the chain.
    pub fn history(&self, f: &ToralEndomorphism, sigma: f64, depth: usize) -> Result<Vec<Vec2>> {
        let depth = depth.min(self.max_history_depth());
        let mut out = vec![Vec2::zeros(); depth.max(self.depth) + 1];
        let mut y = self.seed + sigma * self.dir;
        out[self.depth] = y;
        for j in (0..self.depth).rev() {
            y = self.chain.expand(f, j, &y)?;
            out[j] = y;
        }
        // Below the seed level the leaf point is contracted toward the chain
        // orbit while transverse roundoff is amplified by `κ` per level; once
        // its offset is negligible or the roundoff would dominate, it follows
        // the chain orbit.
        let kappa = self.transverse_growth(f)?;
        let mut y = out[self.depth];
        let mut noise = f64::EPSILON * (1.0 + y.norm());
        let mut snapped = false;
        for j in self.depth..depth {
            if !snapped {
                y = self.chain.contract(f, j, &y)?;
                noise *= kappa;
                let offset = (y - self.chain.point(j + 1)).norm();
                snapped = offset < 1e-15 || noise > 1e-10;
            }
            out[j + 1] = if snapped { self.chain.point(j + 1) } else { y };
        }
        out.truncate(depth + 1);
        Ok(out)
    }

    /// `log ‖D(expand)(x_{-j}) t(x_{-j})‖` for `j = 1..=depth`, with `t` the unit
    /// leaf tangent, along the history of the point with parameter `σ`.
    pub fn log_expansion_history(&self, f: &ToralEndomorphism, sigma: f64, depth: usize) -> Result<Vec<f64>> {
        let h = self.history(f, sigma, depth)?;
        let depth = h.len() - 1;
        let (mut t, _) = linear_data(f, self.flavor)?;
        let mut out = vec![0.0; depth];
        for j in (0..depth).rev() {
            let d = self.chain.expand_derivative_at(f, &h[j + 1], &h[j])?;
            let w = d * t;
            let n = w.norm();
            out[j] = n.ln();
            t = w / n;
        }
        Ok(out)
    }

    /// Per-level expansion, under the contracting step of the chain, of
    /// directions transverse to the leaf.
    fn transverse_growth(&self, f: &ToralEndomorphism) -> Result<f64> {
        let e = f.linear().hyperbolic_eigen()?;
        Ok(match self.flavor {
            Flavor::Unstable => 1.0 / e.lambda_s.abs(),
            Flavor::Stable => e.lambda_u.abs(),
        })
    }

    /// Roundoff level of `eval` along the leaf: seed roundoff amplified by
    /// the expansion of the parametrization.
    pub fn eval_noise(&self) -> f64 {
        8.0 * f64::EPSILON * self.tangent_scale * (1.0 + self.seed.norm())
    }

    pub fn max_history_depth(&self) -> usize {
        self.chain.depth()
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    pub fn base(&self) -> Vec2 {
        self.vertices[self.base_index]
    }

    pub fn base_sigma(&self) -> f64 {
        self.sigma[self.base_index]
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    /// Signed arclength of vertex `i` from the base point.
    pub fn signed_arclength(&self, i: usize) -> f64 {
        self.arclength[i] - self.arclength[self.base_index]
    }

    pub fn endpoints(&self) -> (Vec2, Vec2) {
        (self.vertices[0], *self.vertices.last().unwrap())
    }

    /// Nearest polyline position: `(segment index, fraction, distance)`.
    pub fn project(&self, p: &Vec2) -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for i in 0..self.vertices.len() - 1 {
            let (d, t) = point_segment(p, &self.vertices[i], &self.vertices[i + 1]);
            if d < best.2 {
                best = (i, t, d);
            }
        }
        best
    }

    /// Parameter and signed arclength of the leaf point nearest `p`, with
    /// the transverse distance.
    pub fn locate(&self, f: &ToralEndomorphism, p: &Vec2) -> Result<(f64, f64, f64)> {
        let (i, t, _) = self.project(p);
        let mut s = self.sigma[i] + t * (self.sigma[i + 1] - self.sigma[i]);
        let mut q = *p;
        for _ in 0..4 {
            let (pt, tan) = self.eval_with_tangent(f, s)?;
            s += (p - pt).dot(&tan) / tan.norm_squared();
            q = pt;
        }
        let arc = self.arclength[i] + (q - self.vertices[i]).norm() - self.arclength[self.base_index];
        Ok((s, arc, (p - q).norm()))
    }

    /// Leaf point at signed arclength `s` from the base, with its parameter.
    pub fn point_at_arclength(&self, f: &ToralEndomorphism, s: f64) -> Result<(Vec2, f64)> {
        let a = s + self.arclength[self.base_index];
        let n = self.arclength.len();
        let i = match self.arclength.iter().position(|&v| v > a) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let i = i.min(n - 2);
        let w = (a - self.arclength[i]) / (self.arclength[i + 1] - self.arclength[i]);
        let sig = self.sigma[i] + w * (self.sigma[i + 1] - self.sigma[i]);
        Ok((self.eval(f, sig)?, sig))
    }

    /// Arclength between two parameters by a chord sum with `pieces` chords.
    pub fn arclength_between(&self, f: &ToralEndomorphism, s1: f64, s2: f64, pieces: usize) -> Result<f64> {
        let pieces = pieces.max(1);
        let mut prev = self.eval(f, s1)?;
        let mut total = 0.0;
        for i in 1..=pieces {
            let p = self.eval(f, s1 + (s2 - s1) * i as f64 / pieces as f64)?;
            total += (p - prev).norm();
            prev = p;
        }
        Ok(total)
    }

    /// True if every chord lies in the certified cone of the flavor.
    pub fn chords_in_cone(&self, f: &ToralEndomorphism, cert: &HyperbolicityCertificate) -> Result<bool> {
        for w in self.vertices.windows(2) {
            let c = w[1] - w[0];
            let ok = match self.flavor {
                Flavor::Unstable => cert.in_unstable_cone(f, &c)?,
                Flavor::Stable => cert.in_stable_cone(f, &c)?,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// CSV with columns `x,y,arclength,sigma`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,arclength,sigma\n");
        for i in 0..self.vertices.len() {
            let v = self.vertices[i];
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                v.x,
                v.y,
                self.signed_arclength(i),
                self.sigma[i]
            ));
        }
        out
    }
}
