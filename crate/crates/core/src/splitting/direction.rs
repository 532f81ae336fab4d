use serde::{Deserialize, Serialize};

use super::chain::{linear_data, Chain, Flavor};
use crate::error::Result;
use crate::geom::{line_angle, Vec2};
use crate::torus_map::ToralEndomorphism;

/// Depth cap for the backward (resp. forward) orbit used by direction fields.
pub const MAX_DIRECTION_DEPTH: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub base: Vec2,
    pub dir: Vec2,
    pub flavor: Flavor,
    pub iterations: usize,
    /// Angle between the last two estimates; the returned direction is the
    /// deeper one.
    pub angular_error: f64,
}

/// Pushes `v` from depth `from` up to depth `to < from` along the chain.
fn push(f: &ToralEndomorphism, chain: &Chain, from: usize, to: usize, v: Vec2) -> Result<Vec2> {
    let mut v = v;
    for j in (to..from).rev() {
        v = (chain.level_derivative(f, j)? * v).normalize();
    }
    Ok(v)
}

/// Direction of the flavor's bundle at chain depth `j`, growing the depth of
/// the push until successive estimates agree within `tol`.
pub fn direction_on_chain(
    f: &ToralEndomorphism,
    chain: &mut Chain,
    j: usize,
    tol: f64,
) -> Result<(Vec2, usize, f64)> {
    let (v_lin, _) = linear_data(f, chain.flavor())?;
    chain.extend_to(f, j + 2)?;
    let mut prev = push(f, chain, j + 1, j, v_lin)?;
    let mut err = f64::INFINITY;
    let mut n = 1;
    while n < MAX_DIRECTION_DEPTH {
        chain.extend_to(f, j + n + 1)?;
        let next = push(f, chain, j + n + 1, j, v_lin)?;
        err = line_angle(&prev, &next);
        if err < tol {
            prev = next;
            break;
        }
        prev = next;
        n += 1;
    }
    let dir = if prev.dot(&v_lin) < 0.0 { -prev } else { prev };
    Ok((dir, n, err))
}

fn direction(f: &ToralEndomorphism, x: &Vec2, flavor: Flavor, tol: f64) -> Result<DirectionSample> {
    let mut chain = Chain::new(f, *x, flavor)?;
    let (dir, iterations, angular_error) = direction_on_chain(f, &mut chain, 0, tol)?;
    Ok(DirectionSample {
        base: *x,
        dir,
        flavor,
        iterations,
        angular_error,
    })
}

/// `E^u(x)` for the lift: the limit direction of `DFⁿ(F⁻ⁿx)·v_u`.
pub fn unstable_direction(f: &ToralEndomorphism, x: &Vec2, tol: f64) -> Result<DirectionSample> {
    direction(f, x, Flavor::Unstable, tol)
}

/// `E^s(x)`: the limit direction of `DF⁻ⁿ(Fⁿx)·v_s`.
pub fn stable_direction(f: &ToralEndomorphism, x: &Vec2, tol: f64) -> Result<DirectionSample> {
    direction(f, x, Flavor::Stable, tol)
}

pub fn flavored_direction(f: &ToralEndomorphism, x: &Vec2, flavor: Flavor, tol: f64) -> Result<DirectionSample> {
    direction(f, x, flavor, tol)
}

/// Angle between `DF(x)E(x)` and `E(F(x))`.
pub fn invariance_residual(f: &ToralEndomorphism, x: &Vec2, flavor: Flavor, tol: f64) -> Result<f64> {
    let e = direction(f, x, flavor, tol)?;
    let fx = f.lift(x);
    let e_fx = direction(f, &fx, flavor, tol)?;
    Ok(line_angle(&(f.derivative(x)? * e.dir), &e_fx.dir))
}
