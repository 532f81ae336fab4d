//! Reduced orbits used to realize the expanding branch of a foliation.
//!
//! A chain stores points `pts[j]` at depth `j` (depth 0 is the target point)
//! together with integer offsets that keep every level in a bounded region.
//! The expanding map takes depth `j + 1` to depth `j`:
//!
//! * unstable: `expand_j(y) = F(y) + c_j`, `contract_j(y) = F⁻¹(y − c_j)`,
//!   where `c_j = L k_{j+1} − k_j` and `pts[j] + k_j = F⁻ʲ(x)` exactly; the
//!   integer parts `k_j` are tracked in `i128` so the levels follow the true
//!   backward orbit of the lift rather than an arbitrary inverse branch;
//! * stable: `expand_j(y) = F⁻¹(y + c_j)`, `contract_j(y) = F(y) − c_j`,
//!   `c_j = ⌊F(pts[j])⌋`.
//!
//! Derivatives are `Z²`-periodic, so the reduced levels carry the same
//! derivative cocycle as the true backward (resp. forward) orbit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{floor, Mat2, Vec2};
use crate::torus_map::ToralEndomorphism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Stable,
    Unstable,
}

impl Flavor {
    pub fn other(self) -> Self {
        match self {
            Flavor::Stable => Flavor::Unstable,
            Flavor::Unstable => Flavor::Stable,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Stable => "stable",
            Flavor::Unstable => "unstable",
        }
    }
}

const K_RESET: u128 = 1 << 100;

/// `⌊L⁻¹ k⌋` in exact integer arithmetic.
fn floor_lin_inv(e: [[i64; 2]; 2], k: [i128; 2]) -> [i128; 2] {
    let det = (e[0][0] * e[1][1] - e[0][1] * e[1][0]) as i128;
    let num = [
        e[1][1] as i128 * k[0] - e[0][1] as i128 * k[1],
        -(e[1][0] as i128) * k[0] + e[0][0] as i128 * k[1],
    ];
    let fl = |n: i128| if det > 0 { n.div_euclid(det) } else { (-n).div_euclid(-det) };
    [fl(num[0]), fl(num[1])]
}

/// Linear eigendirection and expansion rate of the expanding map for `flavor`.
pub fn linear_data(f: &ToralEndomorphism, flavor: Flavor) -> Result<(Vec2, f64)> {
    let e = f.linear().hyperbolic_eigen()?;
    Ok(match flavor {
        Flavor::Unstable => (e.v_u, e.lambda_u.abs()),
        Flavor::Stable => (e.v_s, 1.0 / e.lambda_s.abs()),
    })
}

#[derive(Debug, Clone)]
pub struct Chain {
    flavor: Flavor,
    pts: Vec<Vec2>,
    offs: Vec<Vec2>,
    /// Integer part of the deepest level.
    k_last: [i128; 2],
}

impl Chain {
    pub fn new(f: &ToralEndomorphism, x: Vec2, flavor: Flavor) -> Result<Self> {
        f.linear().hyperbolic_eigen()?;
        Ok(Self {
            flavor,
            pts: vec![x],
            offs: Vec::new(),
            k_last: [0, 0],
        })
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn depth(&self) -> usize {
        self.pts.len() - 1
    }

    pub fn point(&self, j: usize) -> Vec2 {
        self.pts[j]
    }

    pub fn offset(&self, j: usize) -> Vec2 {
        self.offs[j]
    }

    pub fn extend_to(&mut self, f: &ToralEndomorphism, depth: usize) -> Result<()> {
        while self.depth() < depth {
            let y = *self.pts.last().unwrap();
            let (c, next) = match self.flavor {
                Flavor::Unstable => {
                    // k = L a + r with r bounded; F⁻¹(y + k) = F⁻¹(y + r) + a.
                    let e = f.linear().entries();
                    let l = |v: [i128; 2]| {
                        [
                            e[0][0] as i128 * v[0] + e[0][1] as i128 * v[1],
                            e[1][0] as i128 * v[0] + e[1][1] as i128 * v[1],
                        ]
                    };
                    let a = floor_lin_inv(e, self.k_last);
                    let la = l(a);
                    let r = [self.k_last[0] - la[0], self.k_last[1] - la[1]];
                    let w = y + Vec2::new(r[0] as f64, r[1] as f64);
                    let m = floor(&(f.lin_inv() * w));
                    let mi = [m.x as i128, m.y as i128];
                    let lm = l(mi);
                    let c = Vec2::new((lm[0] - r[0]) as f64, (lm[1] - r[1]) as f64);
                    self.k_last = [a[0] + mi[0], a[1] + mi[1]];
                    if self.k_last.iter().any(|k| k.unsigned_abs() > K_RESET) {
                        // Deeper levels follow an arbitrary branch; their
                        // influence on shallow levels is below (μ_s/μ_u)^depth.
                        self.k_last = [0, 0];
                    }
                    (c, f.invert_lift(&(y - c), Some(f.lin_inv() * w - m))?)
                }
                Flavor::Stable => {
                    let fy = f.lift(&y);
                    let c = floor(&fy);
                    (c, fy - c)
                }
            };
            self.offs.push(c);
            self.pts.push(next);
        }
        Ok(())
    }

    /// Maps a point near depth `j + 1` to depth `j`.
    pub fn expand(&self, f: &ToralEndomorphism, j: usize, y: &Vec2) -> Result<Vec2> {
        let c = self.offs[j];
        match self.flavor {
            Flavor::Unstable => Ok(f.lift(y) + c),
            Flavor::Stable => {
                let guess = self.pts[j] + f.lin_inv() * (y - self.pts[j + 1]);
                f.invert_lift(&(y + c), Some(guess))
            }
        }
    }

    /// `expand_j` together with its derivative at `y`.
    pub fn expand_with_derivative(&self, f: &ToralEndomorphism, j: usize, y: &Vec2) -> Result<(Vec2, Mat2)> {
        match self.flavor {
            Flavor::Unstable => Ok((f.lift(y) + self.offs[j], f.derivative(y)?)),
            Flavor::Stable => {
                let z = self.expand(f, j, y)?;
                let d = f.derivative(&z)?;
                Ok((z, d.try_inverse().expect("checked nondegenerate")))
            }
        }
    }

    /// Derivative of the expanding map at the stored level `j + 1`.
    pub fn level_derivative(&self, f: &ToralEndomorphism, j: usize) -> Result<Mat2> {
        match self.flavor {
            Flavor::Unstable => f.derivative(&self.pts[j + 1]),
            Flavor::Stable => Ok(f.derivative(&self.pts[j])?.try_inverse().expect("checked nondegenerate")),
        }
    }

    /// Derivative of `expand_j` at `deep`, given `shallow = expand_j(deep)`.
    pub fn expand_derivative_at(&self, f: &ToralEndomorphism, deep: &Vec2, shallow: &Vec2) -> Result<Mat2> {
        match self.flavor {
            Flavor::Unstable => f.derivative(deep),
            Flavor::Stable => Ok(f.derivative(shallow)?.try_inverse().expect("checked nondegenerate")),
        }
    }

    /// Maps a point near depth `j` to depth `j + 1`.
    pub fn contract(&self, f: &ToralEndomorphism, j: usize, y: &Vec2) -> Result<Vec2> {
        let c = self.offs[j];
        match self.flavor {
            Flavor::Unstable => {
                let guess = self.pts[j + 1] + f.lin_inv() * (y - self.pts[j]);
                f.invert_lift(&(y - c), Some(guess))
            }
            Flavor::Stable => Ok(f.lift(y) - c),
        }
    }
}
