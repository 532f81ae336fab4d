//! The foliated strip over the stable leaf of the fixed point: fiber growth
//! under iteration, the measures `η^k = α^k F^k_* m⁰` on image fibers, the
//! quasi-preservation ratios and the stable-holonomy transport check.
//!
//! A strip fiber `W₀(b)` is the unstable arc of length `δ₀` starting at the
//! base point `b` on the positive side (along `v_u`). Images are handled by
//! quadrature in the fiber parameter: a point `z` of `W₀` carries
//! `E_k(z) = log ‖DF^k(z) t̂(z)‖`, so arclength on `F^k W₀` from `F^k b` is
//! `S_k(z) = ∫_b^z exp(E_k) dλ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::ConjugacyField;
use crate::error::{LabError, Result};
use crate::geom::{frac, Mat2, Vec2};
use crate::splitting::{transversal_crossing, Flavor, LeafParams, LeafSegment};
use crate::stats::gauss_legendre;
use crate::torus_map::{IntMatrix2, ToralEndomorphism};

const ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StripParams {
    /// Half the arclength of the stable base segment.
    pub base_halflength: f64,
    /// Grid resolution of the covering test.
    pub cover_grid: usize,
    pub h_max: f64,
    /// Image arclength per quadrature panel at the deepest level.
    pub panel_length: f64,
}

impl Default for StripParams {
    fn default() -> Self {
        Self {
            base_halflength: 1.0,
            cover_grid: 128,
            h_max: 2e-3,
            panel_length: 1.0,
        }
    }
}

/// Fixed point of the lift by Newton from the origin.
pub fn fixed_point(f: &ToralEndomorphism) -> Result<Vec2> {
    let mut x = Vec2::zeros();
    let mut r = f.lift(&x) - x;
    for _ in 0..60 {
        if r.norm() < 1e-15 {
            break;
        }
        let j = f.derivative(&x)? - Mat2::identity();
        x -= j.try_inverse().ok_or(LabError::NotHyperbolic)? * r;
        r = f.lift(&x) - x;
    }
    if r.norm() < 1e-12 {
        Ok(x)
    } else {
        Err(LabError::NonConvergence {
            what: "fixed point",
            iterations: 60,
            residual: r.norm(),
        })
    }
}

/// Smallest height `δ` such that the linear strip
/// `{s v_s + u v_u : |s| ≤ L_b, 0 ≤ u ≤ δ}` projects onto the torus, up to
/// the grid resolution (the returned value includes a one-cell margin).
pub fn covering_height(l: &IntMatrix2, base_halflength: f64, grid: usize) -> Result<f64> {
    let e = l.hyperbolic_eigen()?;
    let grid = grid.max(4);
    let mut cap = 4.0;
    'outer: loop {
        let corners = [
            base_halflength * e.v_s,
            -base_halflength * e.v_s,
            base_halflength * e.v_s + cap * e.v_u,
            -base_halflength * e.v_s + cap * e.v_u,
        ];
        let lo = corners.iter().fold(Vec2::repeat(f64::INFINITY), |a, c| a.inf(c));
        let hi = corners.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, c| a.sup(c));
        let mut worst: f64 = 0.0;
        for i in 0..grid {
            for j in 0..grid {
                let g = Vec2::new(i as f64, j as f64) / grid as f64;
                let mut best = f64::INFINITY;
                for a in (lo.x - g.x).floor() as i64..=(hi.x - g.x).ceil() as i64 {
                    for b in (lo.y - g.y).floor() as i64..=(hi.y - g.y).ceil() as i64 {
                        let (u, s) = e.coords(&(g + Vec2::new(a as f64, b as f64)));
                        if s.abs() <= base_halflength && u >= 0.0 {
                            best = best.min(u);
                        }
                    }
                }
                if best > cap {
                    cap *= 2.0;
                    continue 'outer;
                }
                worst = worst.max(best);
            }
        }
        return Ok(worst + e.dual_u.norm() * std::f64::consts::SQRT_2 / grid as f64);
    }
}

#[derive(Debug, Clone)]
pub struct Strip {
    /// Iterates of `F` per strip step (2 when `F` reverses unstable orientation).
    pub power: usize,
    pub alpha: f64,
    pub fixed_point: Vec2,
    pub base: LeafSegment,
    pub delta0: f64,
    /// Covering height of the linear strip.
    pub delta0_linear: f64,
    /// Margin added for the conjugacy displacement.
    pub conjugacy_margin: f64,
    pub params: StripParams,
}

#[derive(Debug, Clone)]
pub struct StripFiber {
    /// Signed arclength of the base point on the strip base.
    pub base_arclength: f64,
    pub seg: LeafSegment,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl Strip {
    pub fn build(f: &ToralEndomorphism, params: StripParams) -> Result<Self> {
        let e = f.linear().hyperbolic_eigen()?;
        let (power, alpha) = if e.lambda_u > 0.0 { (1, e.lambda_u) } else { (2, e.lambda_u * e.lambda_u) };
        let p = fixed_point(f)?;
        let base = LeafSegment::grow(
            f,
            &p,
            Flavor::Stable,
            params.base_halflength,
            params.h_max.max(params.base_halflength / 1024.0),
            &LeafParams::default(),
        )?;
        let delta0_linear = covering_height(f.linear(), params.base_halflength, params.cover_grid)?;
        // H moves every point by at most sup|u|; the strip of F is mapped into
        // the linear strip thickened by that amount on both ends.
        let conjugacy_margin = if f.is_linear() {
            0.0
        } else {
            4.0 * ConjugacyField::build(f, 1e-10)?.sup_bound()
        };
        Ok(Self {
            power,
            alpha,
            fixed_point: p,
            base,
            delta0: delta0_linear + conjugacy_margin,
            delta0_linear,
            conjugacy_margin,
            params,
        })
    }

    /// `F^power` on the cover.
    pub fn step(&self, f: &ToralEndomorphism, x: &Vec2) -> Vec2 {
        (0..self.power).fold(*x, |y, _| f.lift(&y))
    }

    pub fn iterate(&self, f: &ToralEndomorphism, x: &Vec2, k: usize) -> Vec2 {
        (0..k).fold(*x, |y, _| self.step(f, &y))
    }

    /// The fiber over the base point at signed arclength `t`.
    pub fn fiber(&self, f: &ToralEndomorphism, t: f64) -> Result<StripFiber> {
        let (b, _) = self.base.point_at_arclength(f, t)?;
        let h = self.params.h_max.min(self.delta0 / 256.0);
        let seg = LeafSegment::grow(f, &b, Flavor::Unstable, 1.1 * self.delta0, h, &LeafParams::default())?;
        let sigma0 = seg.base_sigma();
        let (_, sigma1) = seg.point_at_arclength(f, self.delta0)?;
        Ok(StripFiber {
            base_arclength: t,
            seg,
            sigma0,
            sigma1,
        })
    }
}

/// `E_j` for `j = 0..=k_max` and `log JF^{k_max}` at one fiber point.
fn forward_logs(f: &ToralEndomorphism, strip: &Strip, z: &Vec2, t: &Vec2, k_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut e = vec![0.0; k_max + 1];
    let mut jac = vec![0.0; k_max + 1];
    let mut y = *z;
    let mut v = t / t.norm();
    let (mut acc, mut jacc) = (0.0, 0.0);
    for k in 1..=k_max {
        for _ in 0..strip.power {
            let d = f.derivative(&y)?;
            let w = d * v;
            let n = w.norm();
            acc += n.ln();
            jacc += d.determinant().abs().ln();
            v = w / n;
            y = frac(&f.lift(&y));
        }
        e[k] = acc;
        jac[k] = jacc;
    }
    Ok((e, jac))
}

/// Arclength of `F^k W₀` for `k ≤ k_max`, tabulated at panel ends.
#[derive(Debug, Clone)]
pub struct FiberImage {
    pub k_max: usize,
    pub edges: Vec<f64>,
    /// `cumulative[k][p]`: image arclength from the base to panel edge `p`.
    pub cumulative: Vec<Vec<f64>>,
    nodes: Vec<(f64, f64)>,
}

impl FiberImage {
    pub fn build(f: &ToralEndomorphism, strip: &Strip, fiber: &StripFiber, k_max: usize) -> Result<Self> {
        let reach = strip.alpha.powi(k_max as i32) * strip.delta0;
        let panels = ((reach / strip.params.panel_length).ceil() as usize).max(64);
        let (s0, s1) = (fiber.sigma0, fiber.sigma1);
        let edges: Vec<f64> = (0..=panels).map(|p| s0 + (s1 - s0) * p as f64 / panels as f64).collect();
        let nodes = gauss_legendre(ORDER);
        let sums: Vec<Vec<f64>> = (0..panels)
            .into_par_iter()
            .map(|p| panel_integrals(f, strip, fiber, &nodes, edges[p], edges[p + 1], k_max))
            .collect::<Result<_>>()?;
        let mut cumulative = vec![vec![0.0; panels + 1]; k_max + 1];
        for k in 0..=k_max {
            for p in 0..panels {
                cumulative[k][p + 1] = cumulative[k][p] + sums[p][k];
            }
        }
        Ok(Self {
            k_max,
            edges,
            cumulative,
            nodes,
        })
    }

    pub fn length(&self, k: usize) -> f64 {
        *self.cumulative[k].last().unwrap()
    }

    /// Image arclength `S_k` at fiber parameter `σ`.
    pub fn arclength(&self, f: &ToralEndomorphism, strip: &Strip, fiber: &StripFiber, k: usize, sigma: f64) -> Result<f64> {
        let p = self.panel_of(sigma);
        let part = panel_integrals(f, strip, fiber, &self.nodes, self.edges[p], sigma, k)?;
        Ok(self.cumulative[k][p] + part[k])
    }

    fn panel_of(&self, sigma: f64) -> usize {
        let n = self.edges.len() - 1;
        let rel = (sigma - self.edges[0]) / (self.edges[n] - self.edges[0]);
        ((rel * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    /// Fiber parameter with `S_k(σ) = s`, by bisection on the panel table
    /// and Newton inside the panel.
    pub fn preimage(&self, f: &ToralEndomorphism, strip: &Strip, fiber: &StripFiber, k: usize, s: f64) -> Result<f64> {
        let c = &self.cumulative[k];
        let p = c.partition_point(|&v| v <= s).saturating_sub(1).min(c.len() - 2);
        let w = if c[p + 1] > c[p] { (s - c[p]) / (c[p + 1] - c[p]) } else { 0.0 };
        let mut sigma = self.edges[p] + w * (self.edges[p + 1] - self.edges[p]);
        for _ in 0..4 {
            let r = self.arclength(f, strip, fiber, k, sigma)? - s;
            let (z, t) = fiber.seg.eval_with_tangent(f, sigma)?;
            let (e, _) = forward_logs(f, strip, &z, &t, k)?;
            sigma -= r / (e[k].exp() * t.norm());
        }
        Ok(sigma)
    }
}

fn panel_integrals(
    f: &ToralEndomorphism,
    strip: &Strip,
    fiber: &StripFiber,
    nodes: &[(f64, f64)],
    a: f64,
    b: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; k_max + 1];
    if a == b {
        return Ok(out);
    }
    for &(x, w) in nodes {
        let s = a + 0.5 * (b - a) * (x + 1.0);
        let (z, t) = fiber.seg.eval_with_tangent(f, s)?;
        let (e, _) = forward_logs(f, strip, &z, &t, k_max)?;
        let scale = 0.5 * (b - a) * w * t.norm();
        for k in 0..=k_max {
            out[k] += scale * e[k].exp();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub k: usize,
    /// Arclength of `F^k W₀`.
    pub length: f64,
    /// `length / (α^k · length₀)`.
    pub ratio: f64,
    /// `length_k / length_{k−1}` (`α` at `k = 0`).
    pub growth_factor: f64,
}

/// Growth of the fiber over base arclength `t` for `k = 0..=k_max`.
pub fn leaf_growth_ratios(f: &ToralEndomorphism, strip: &Strip, t: f64, k_max: usize) -> Result<Vec<GrowthRow>> {
    let fiber = strip.fiber(f, t)?;
    let image = FiberImage::build(f, strip, &fiber, k_max)?;
    Ok(growth_rows(strip, &image))
}

pub fn growth_rows(strip: &Strip, image: &FiberImage) -> Vec<GrowthRow> {
    let l0 = image.length(0);
    (0..=image.k_max)
        .map(|k| GrowthRow {
            k,
            length: image.length(k),
            ratio: image.length(k) / (strip.alpha.powi(k as i32) * l0),
            growth_factor: if k == 0 { strip.alpha } else { image.length(k) / image.length(k - 1) },
        })
        .collect()
}

/// `length(F^k W₀) / (α^k length(W₀))` for one `k`.
pub fn leaf_growth_ratio(f: &ToralEndomorphism, strip: &Strip, t: f64, k: usize) -> Result<f64> {
    Ok(leaf_growth_ratios(f, strip, t, k)?[k].ratio)
}

/// Two-sided growth constant from the quasi-isometry constant `q` of
/// unstable leaves and `δ = sup‖H − Id‖`: with `a, b` the ends of `W₀`,
/// `λ(W_k) ≤ q·(2δ + α^k ‖Ha − Hb‖)` and `λ(W_k) ≥ α^k ‖Ha − Hb‖ − 2δ`.
pub fn growth_bound(length0: f64, q: f64, delta: f64) -> f64 {
    let upper = q * (length0 + 4.0 * delta) / length0;
    let den = length0 / q - 4.0 * delta;
    let lower = if den > 0.0 { length0 / den } else { f64::INFINITY };
    upper.max(lower)
}

/// Particle approximation of a measure on one fiber, in arclength
/// coordinates from the fiber base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLeafMeasure {
    pub level: usize,
    /// Arclength of the owning fiber.
    pub length: f64,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub mass: f64,
    /// Parameters of the particles on `W₀`.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    pub stderr: f64,
}

impl WeightedLeafMeasure {
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.min(b), a.max(b));
        self.positions
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| **p >= a && **p < b)
            .map(|(_, w)| w)
            .sum()
    }

    /// Mass of `[a, b)` and its standard error.
    pub fn mass_with_error(&self, a: f64, b: f64) -> (f64, f64) {
        let n = self.positions.len() as f64;
        let (a, b) = (a.min(b), a.max(b));
        let m = self.mass_in(a, b);
        let mean = m / n;
        let ss: f64 = self
            .positions
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| {
                let v = if *p >= a && *p < b { *w } else { 0.0 };
                (v - mean) * (v - mean)
            })
            .sum();
        (m, (ss / (n - 1.0)).sqrt() * n.sqrt())
    }

    /// Binned density against arclength, multiplied by `normalization`.
    pub fn density(&self, bins: usize, normalization: f64) -> Vec<DensityBin> {
        let w = self.length / bins as f64;
        (0..bins)
            .map(|b| {
                let (lo, hi) = (w * b as f64, w * (b + 1) as f64);
                // the last bin is closed on the right
                let hi_incl = if b + 1 == bins { f64::INFINITY } else { hi };
                let (m, e) = self.mass_with_error(lo, hi_incl);
                DensityBin {
                    lo,
                    hi,
                    density: normalization * m / w,
                    stderr: normalization * e / w,
                }
            })
            .collect()
    }
}

/// The conditional measure of area on a strip fiber (mass 1): particles
/// uniform in arclength with weights proportional to the local width of the
/// strip, measured against the neighbouring fibers at `t ± dt`.
pub fn strip_volume_measure(
    f: &ToralEndomorphism,
    strip: &Strip,
    fiber: &StripFiber,
    image: &FiberImage,
    particles: usize,
    seed: u64,
) -> Result<WeightedLeafMeasure> {
    let dt = 1e-3;
    let t = fiber.base_arclength;
    let lower = strip.fiber(f, t - dt)?;
    let upper = strip.fiber(f, t + dt)?;
    let len0 = image.length(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<f64> = (0..particles).map(|_| rng.random::<f64>() * len0).collect();
    let rows: Vec<(f64, f64)> = positions
        .par_iter()
        .map(|&s| {
            let sigma = image.preimage(f, strip, fiber, 0, s)?;
            let z = fiber.seg.eval(f, sigma)?;
            let (_, _, d_lo) = lower.seg.locate(f, &z)?;
            let (_, _, d_hi) = upper.seg.locate(f, &z)?;
            Ok((sigma, (d_lo + d_hi) / (2.0 * dt)))
        })
        .collect::<Result<_>>()?;
    let total: f64 = rows.iter().map(|r| r.1).sum();
    Ok(WeightedLeafMeasure {
        level: 0,
        length: len0,
        weights: rows.iter().map(|r| r.1 / total).collect(),
        sigmas: rows.iter().map(|r| r.0).collect(),
        positions,
        mass: 1.0,
    })
}

/// `η^k = α^k F^k_* μ` for `μ` on `W₀`, in arclength coordinates of `F^k W₀`.
pub fn pushforward_leaf_measure(
    f: &ToralEndomorphism,
    strip: &Strip,
    fiber: &StripFiber,
    image: &FiberImage,
    mu: &WeightedLeafMeasure,
    k: usize,
) -> Result<WeightedLeafMeasure> {
    if mu.level != 0 || k > image.k_max {
        return Err(LabError::InvalidArgument("push forward a level-0 measure within the tabulated depth".into()));
    }
    let scale = strip.alpha.powi(k as i32);
    let positions = mu
        .sigmas
        .par_iter()
        .map(|&s| image.arclength(f, strip, fiber, k, s))
        .collect::<Result<_>>()?;
    Ok(WeightedLeafMeasure {
        level: k,
        length: image.length(k),
        positions,
        weights: mu.weights.iter().map(|w| w * scale).collect(),
        mass: mu.mass * scale,
        sigmas: mu.sigmas.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiPreservation {
    pub k: usize,
    /// Extremes of `dλ̂^k / dF^k_* λ̂⁰` over image bins.
    pub arclength_min: f64,
    pub arclength_max: f64,
    /// Extremes of `dm^k / dF^k_* m⁰`, which is `JF^k` up to normalization.
    pub volume_min: f64,
    pub volume_max: f64,
    /// Largest standard error of the binned volume ratio.
    pub volume_stderr: f64,
}

/// Binned density ratios between normalized image measures and pushed
/// normalized level-0 measures, for `bins` equal bins of `F^k W₀`.
pub fn quasi_preservation_ratio(
    f: &ToralEndomorphism,
    strip: &Strip,
    fiber: &StripFiber,
    image: &FiberImage,
    mu: &WeightedLeafMeasure,
    k: usize,
    bins: usize,
) -> Result<QuasiPreservation> {
    let (len0, lenk) = (image.length(0), image.length(k));
    let edges: Vec<(f64, f64)> = (0..=bins)
        .map(|b| {
            let s = lenk * b as f64 / bins as f64;
            let sigma = image.preimage(f, strip, fiber, k, s)?;
            Ok((s, image.arclength(f, strip, fiber, 0, sigma)?))
        })
        .collect::<Result<_>>()?;
    let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in edges.windows(2) {
        let r = ((w[1].0 - w[0].0) / lenk) / ((w[1].1 - w[0].1) / len0);
        amin = amin.min(r);
        amax = amax.max(r);
    }
    let pushed = pushforward_leaf_measure(f, strip, fiber, image, mu, k)?;
    let log_jac: Vec<f64> = mu
        .sigmas
        .par_iter()
        .map(|&s| {
            let (z, t) = fiber.seg.eval_with_tangent(f, s)?;
            Ok(forward_logs(f, strip, &z, &t, k)?.1[k])
        })
        .collect::<Result<_>>()?;
    let shift = log_jac.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let jac: Vec<f64> = log_jac.iter().map(|l| (l - shift).exp()).collect();
    let z: f64 = mu.weights.iter().zip(&jac).map(|(w, j)| w * j).sum();
    let (mut vmin, mut vmax, mut verr) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let width = lenk / bins as f64;
    for b in 0..bins {
        let (lo, hi) = (width * b as f64, if b + 1 == bins { f64::INFINITY } else { width * (b + 1) as f64 });
        let members: Vec<usize> = (0..pushed.positions.len())
            .filter(|&i| pushed.positions[i] >= lo && pushed.positions[i] < hi)
            .collect();
        let wsum: f64 = members.iter().map(|&i| mu.weights[i]).sum();
        if wsum == 0.0 {
            continue;
        }
        let r = members.iter().map(|&i| mu.weights[i] * jac[i] / z).sum::<f64>() / wsum;
        let var: f64 = members
            .iter()
            .map(|&i| {
                let d = mu.weights[i] * (jac[i] / z - r);
                d * d
            })
            .sum::<f64>();
        vmin = vmin.min(r);
        vmax = vmax.max(r);
        verr = verr.max(var.sqrt() / wsum);
    }
    Ok(QuasiPreservation {
        k,
        arclength_min: amin,
        arclength_max: amax,
        volume_min: vmin,
        volume_max: vmax,
        volume_stderr: verr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub level: usize,
    /// Normalized density of `η^k` from fiber 1 transported to fiber 2, per
    /// bin of fiber 2 whose holonomy image lies inside fiber 1.
    pub density: Vec<DensityBin>,
    /// Largest `max(r, 1/r)` of the holonomy length ratio over bins.
    pub distortion: f64,
    /// `max |F(h_k(q)) − h_{k+1}(F q)|` over bin edges.
    pub point_residual: f64,
    /// `Σ |η^{k+1}(h_{k+1}(F I)) − α η^k(h_k(I))| / α^{k+1}` over bins.
    pub mass_residual: f64,
}

/// Transports `η^k` of the fiber over `t1` along stable leaves to the fiber
/// over `t2`, at levels `k` and `k + 1`.
#[allow(clippy::too_many_arguments)]
pub fn holonomy_transport_check(
    f: &ToralEndomorphism,
    strip: &Strip,
    t1: f64,
    t2: f64,
    k: usize,
    particles: usize,
    bins: usize,
    seed: u64,
) -> Result<TransportReport> {
    let fib1 = strip.fiber(f, t1)?;
    let fib2 = if t2 == t1 { fib1.clone() } else { strip.fiber(f, t2)? };
    let img1 = FiberImage::build(f, strip, &fib1, k + 1)?;
    let img2 = FiberImage::build(f, strip, &fib2, k + 1)?;
    let mu = strip_volume_measure(f, strip, &fib1, &img1, particles, seed)?;
    let eta = [
        pushforward_leaf_measure(f, strip, &fib1, &img1, &mu, k)?,
        pushforward_leaf_measure(f, strip, &fib1, &img1, &mu, k + 1)?,
    ];
    let b1 = fib1.seg.base();
    let params = LeafParams::default();
    let level_segment = |j: usize| {
        let len = img1.length(j);
        LeafSegment::grow(f, &strip.iterate(f, &b1, j), Flavor::Unstable, 1.1 * len, (len / 4096.0).max(1e-3), &params)
    };
    let dst = [level_segment(k)?, level_segment(k + 1)?];
    let sep = (strip.iterate(f, &fib2.seg.base(), k) - strip.iterate(f, &b1, k)).norm();
    let window = (8.0 * sep).max(0.01);
    let tol = 1e-10;
    // bin edges of fiber 2 at level k, as points on the cover
    let len2 = img2.length(k);
    let edges: Vec<(f64, Vec2)> = (0..=bins)
        .map(|b| {
            let s = len2 * b as f64 / bins as f64;
            let sigma = img2.preimage(f, strip, &fib2, k, s)?;
            Ok((s, strip.iterate(f, &fib2.seg.eval(f, sigma)?, k)))
        })
        .collect::<Result<_>>()?;
    let crossings: Vec<(f64, Vec2, f64, Vec2)> = edges
        .par_iter()
        .map(|(_, q)| {
            let here = if t2 == t1 {
                let (_, arc, _) = dst[0].locate(f, q)?;
                (arc, *q)
            } else {
                let h = transversal_crossing(f, q, &dst[0], Flavor::Stable, window, tol)?;
                (h.arclength, h.point)
            };
            let fq = strip.step(f, q);
            let there = if t2 == t1 {
                let (_, arc, _) = dst[1].locate(f, &fq)?;
                (arc, fq)
            } else {
                let h = transversal_crossing(f, &fq, &dst[1], Flavor::Stable, strip.alpha * window, tol)?;
                (h.arclength, h.point)
            };
            Ok((here.0, here.1, there.0, there.1))
        })
        .collect::<Result<_>>()?;
    let len0 = img1.length(0);
    let mut density = Vec::new();
    let mut distortion: f64 = 1.0;
    let mut point_residual: f64 = 0.0;
    let mut mass_residual = 0.0;
    // arclength on the grown level leaf and on the image table agree to
    // discretization error only
    let inside = |a: f64, len: f64| (-1e-6 * len..=len * (1.0 + 1e-6)).contains(&a);
    for j in 0..bins {
        let (e0, e1) = (edges[j].0, edges[j + 1].0);
        let (h0, h1) = (crossings[j].0, crossings[j + 1].0);
        point_residual = point_residual
            .max((strip.step(f, &crossings[j].1) - crossings[j].3).norm())
            .max((strip.step(f, &crossings[j + 1].1) - crossings[j + 1].3).norm());
        if !(inside(h0, eta[0].length) && inside(h1, eta[0].length)) {
            continue;
        }
        let r = (h1 - h0).abs() / (e1 - e0);
        distortion = distortion.max(r).max(1.0 / r);
        let (m, err) = eta[0].mass_with_error(h0, h1);
        let m_next = eta[1].mass_in(crossings[j].2, crossings[j + 1].2);
        mass_residual += (m_next - strip.alpha * m).abs() / strip.alpha.powi(k as i32 + 1);
        density.push(DensityBin {
            lo: e0,
            hi: e1,
            density: len0 * m / (e1 - e0),
            stderr: len0 * err / (e1 - e0),
        });
    }
    if density.is_empty() {
        return Err(LabError::NoIntersection);
    }
    Ok(TransportReport {
        level: k,
        density,
        distortion,
        point_residual,
        mass_residual,
    })
}
