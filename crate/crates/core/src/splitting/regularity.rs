use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::Flavor;
use super::direction::flavored_direction;
use super::leaf::{LeafParams, LeafSegment};
use crate::error::Result;
use crate::geom::{line_angle, Vec2};
use crate::stats::{fit_line, LineFit};
use crate::torus_map::ToralEndomorphism;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiIsometryRow {
    pub length: f64,
    /// Sup of leaf distance over Euclidean distance for pairs at leaf
    /// distance at most `length`.
    pub q: f64,
}

/// Quasi-isometry estimates `Q(ℓ)` for each `ℓ` in `lengths`, from one leaf of
/// total length `max ℓ` centered at each sample.
pub fn quasi_isometry_constant(
    f: &ToralEndomorphism,
    flavor: Flavor,
    samples: &[Vec2],
    lengths: &[f64],
    h_max: f64,
) -> Result<Vec<QuasiIsometryRow>> {
    let lmax = lengths.iter().cloned().fold(0.0, f64::max);
    let lmin = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    let per_sample: Vec<Result<Vec<f64>>> = samples
        .par_iter()
        .map(|x| {
            let seg = LeafSegment::grow(f, x, flavor, lmax / 2.0, h_max, &LeafParams::default())?;
            let spacing = lmin / 8.0;
            let mut idx = vec![0];
            for i in 1..seg.vertices().len() {
                if seg.arclength()[i] - seg.arclength()[*idx.last().unwrap()] >= spacing {
                    idx.push(i);
                }
            }
            let last = seg.vertices().len() - 1;
            if *idx.last().unwrap() != last {
                idx.push(last);
            }
            let mut q = vec![1.0f64; lengths.len()];
            for (a, &i) in idx.iter().enumerate() {
                for &j in &idx[a + 1..] {
                    let arc = seg.arclength()[j] - seg.arclength()[i];
                    let chord = (seg.vertices()[j] - seg.vertices()[i]).norm();
                    let r = arc / chord;
                    for (k, &l) in lengths.iter().enumerate() {
                        if arc <= l * (1.0 + 1e-12) {
                            q[k] = q[k].max(r);
                        }
                    }
                }
            }
            Ok(q)
        })
        .collect();
    let mut q = vec![1.0f64; lengths.len()];
    for r in per_sample {
        for (k, v) in r?.into_iter().enumerate() {
            q[k] = q[k].max(v);
        }
    }
    Ok(lengths
        .iter()
        .zip(q)
        .map(|(&length, q)| QuasiIsometryRow { length, q })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub flavor: Flavor,
    /// `(δ, max angle between E(x) and E(x + δw))`.
    pub rows: Vec<(f64, f64)>,
    /// Log-log fit over rows with positive angle.
    pub fit: Option<LineFit>,
    pub monotone: bool,
}

/// Modulus of continuity of a direction field sampled on `n_pairs` random
/// base points and unit offsets, shared across scales.
pub fn distribution_modulus(
    f: &ToralEndomorphism,
    flavor: Flavor,
    scales: &[f64],
    n_pairs: usize,
    seed: u64,
    tol: f64,
) -> Result<ModulusReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Vec2, Vec2)> = (0..n_pairs)
        .map(|_| {
            let x = Vec2::new(rng.random(), rng.random());
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (x, Vec2::new(a.cos(), a.sin()))
        })
        .collect();
    let base: Vec<Vec2> = pairs
        .par_iter()
        .map(|(x, _)| flavored_direction(f, x, flavor, tol).map(|d| d.dir))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(scales.len());
    for &delta in scales {
        let angles: Vec<f64> = pairs
            .par_iter()
            .zip(base.par_iter())
            .map(|((x, w), e)| {
                let e2 = flavored_direction(f, &(x + delta * w), flavor, tol)?;
                Ok(line_angle(e, &e2.dir))
            })
            .collect::<Result<_>>()?;
        rows.push((delta, angles.into_iter().fold(0.0, f64::max)));
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|r| (r.0.ln(), r.1.ln()))
        .unzip();
    let fit = if xs.len() >= 2 { fit_line(&xs, &ys) } else { None };
    Ok(ModulusReport {
        flavor,
        rows,
        fit,
        monotone,
    })
}
