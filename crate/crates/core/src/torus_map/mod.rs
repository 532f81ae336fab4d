//! Endomorphisms `f = L + p` of the 2-torus and their lifts `F` to the plane.
//!
//! Three constructions are supported:
//!
//! * `Raw`: `F(x) = Lx + p(x)` with `p` a trigonometric polynomial.
//! * `ShearComposition`: `F = L ∘ S₁ ∘ S₂` with unit-Jacobian shears, so that
//!   `Jf ≡ |det L|`.
//! * `SmoothConjugate`: `F = h⁻¹ ∘ L ∘ h` with `h` a near-identity
//!   diffeomorphism commuting with integer translations; `h` is the exact
//!   conjugacy to the linear map and serves as ground truth.

mod certify;
pub mod examples;
mod matrix;
mod trig;

use serde::{Deserialize, Serialize};

pub use certify::{certify_hyperbolicity, CertificateParams, HyperbolicityCertificate};
pub use matrix::{classify_linear, EigenData, IntMatrix2, MapClass};
pub use trig::{Trig1, Trig1Term, TrigPolynomial2, TrigTerm};

use crate::error::{LabError, Result};
use crate::geom::{Mat2, Vec2};

/// Newton and degeneracy settings for lift evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// `|det Df|` below this is reported as a degenerate derivative.
    pub det_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            det_floor: 1e-9,
        }
    }
}

/// Near-identity diffeomorphism of the plane commuting with `Z²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NearIdentity {
    /// `h = Id + φ`.
    Trig(TrigPolynomial2),
    /// `h = S₁ ∘ S₂`, `S₁(x) = (x₁, x₂ + s(x₁))`, `S₂(x) = (x₁ + t(x₂), x₂)`.
    /// Area preserving, with a closed-form inverse.
    Shears { s: Trig1, t: Trig1 },
}

impl NearIdentity {
    pub fn apply(&self, x: &Vec2) -> Vec2 {
        match self {
            NearIdentity::Trig(phi) => x + phi.value(x),
            NearIdentity::Shears { s, t } => shear_pair(s, t, x),
        }
    }

    pub fn jacobian(&self, x: &Vec2) -> Mat2 {
        match self {
            NearIdentity::Trig(phi) => Mat2::identity() + phi.jacobian(x),
            NearIdentity::Shears { s, t } => shear_pair_jacobian(s, t, x),
        }
    }

    pub fn inverse(&self, y: &Vec2, cfg: &NewtonConfig) -> Result<Vec2> {
        match self {
            NearIdentity::Trig(phi) => {
                let mut x = y - phi.value(y);
                for it in 0..cfg.max_iter {
                    let r = x + phi.value(&x) - y;
                    let rn = r.norm();
                    let j = Mat2::identity() + phi.jacobian(&x);
                    let step = j
                        .try_inverse()
                        .ok_or(LabError::DegenerateDerivative { at: x, det: j.determinant() })?
                        * r;
                    x -= step;
                    if rn < cfg.tol {
                        return Ok(x);
                    }
                    if it + 1 == cfg.max_iter {
                        return Err(LabError::NonConvergence {
                            what: "near-identity inverse",
                            iterations: cfg.max_iter,
                            residual: rn,
                        });
                    }
                }
                unreachable!()
            }
            NearIdentity::Shears { s, t } => {
                let x1 = y.x;
                let x2 = y.y - s.value(x1);
                Ok(Vec2::new(x1 - t.value(x2), x2))
            }
        }
    }

    /// Upper bound for `sup ‖Dh − I‖`.
    pub fn deriv_defect_bound(&self) -> f64 {
        match self {
            NearIdentity::Trig(phi) => phi.deriv_bound(),
            NearIdentity::Shears { s, t } => {
                let (a, b) = (s.deriv_bound(), t.deriv_bound());
                // Dh − I = [[0, t'], [s', s't']]
                a + b + a * b
            }
        }
    }

    /// Upper bound for `sup |h − Id|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            NearIdentity::Trig(phi) => phi.sup_bound(),
            NearIdentity::Shears { s, t } => s.sup_bound() + t.sup_bound(),
        }
    }

    /// Upper bound for the Lipschitz constant of `Dh`.
    pub fn second_deriv_bound(&self) -> f64 {
        match self {
            NearIdentity::Trig(phi) => phi.second_deriv_bound(),
            NearIdentity::Shears { s, t } => shear_pair_second_bound(s, t),
        }
    }

    pub fn scaled(&self, eps: f64) -> Self {
        match self {
            NearIdentity::Trig(phi) => NearIdentity::Trig(phi.scaled(eps)),
            NearIdentity::Shears { s, t } => NearIdentity::Shears {
                s: s.scaled(eps),
                t: t.scaled(eps),
            },
        }
    }

    pub fn is_area_preserving(&self) -> bool {
        match self {
            NearIdentity::Trig(phi) => phi.is_zero(),
            NearIdentity::Shears { .. } => true,
        }
    }
}

fn shear_pair(s: &Trig1, t: &Trig1, x: &Vec2) -> Vec2 {
    let y1 = x.x + t.value(x.y);
    Vec2::new(y1, x.y + s.value(y1))
}

fn shear_pair_jacobian(s: &Trig1, t: &Trig1, x: &Vec2) -> Mat2 {
    let y1 = x.x + t.value(x.y);
    let ds = s.deriv(y1);
    let dt = t.deriv(x.y);
    // D(S1)(S2 x) · D(S2)(x)
    Mat2::new(1.0, 0.0, ds, 1.0) * Mat2::new(1.0, dt, 0.0, 1.0)
}

fn shear_pair_second_bound(s: &Trig1, t: &Trig1) -> f64 {
    let (s1, s2) = (s.deriv_bound(), s.second_deriv_bound());
    let (t1, t2) = (t.deriv_bound(), t.second_deriv_bound());
    s2 * (1.0 + t1) * (1.0 + t1) + (1.0 + s1) * t2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MapKind {
    Raw { perturbation: TrigPolynomial2 },
    ShearComposition { s: Trig1, t: Trig1 },
    SmoothConjugate { h: NearIdentity },
}

/// A smooth toral endomorphism given through its lift `F` to the plane.
#[derive(Debug, Clone)]
pub struct ToralEndomorphism {
    linear: IntMatrix2,
    kind: MapKind,
    lin: Mat2,
    lin_inv: Mat2,
    newton: NewtonConfig,
}

impl ToralEndomorphism {
    pub fn new(linear: IntMatrix2, kind: MapKind) -> Self {
        let lin = linear.as_mat2();
        let lin_inv = lin.try_inverse().expect("nonzero determinant");
        Self {
            linear,
            kind,
            lin,
            lin_inv,
            newton: NewtonConfig::default(),
        }
    }

    pub fn linear_map(linear: IntMatrix2) -> Self {
        Self::raw(linear, TrigPolynomial2::zero())
    }

    pub fn raw(linear: IntMatrix2, perturbation: TrigPolynomial2) -> Self {
        Self::new(linear, MapKind::Raw { perturbation })
    }

    pub fn shear_composition(linear: IntMatrix2, s: Trig1, t: Trig1) -> Self {
        Self::new(linear, MapKind::ShearComposition { s, t })
    }

    pub fn smooth_conjugate(linear: IntMatrix2, h: NearIdentity) -> Result<Self> {
        let defect = h.deriv_defect_bound();
        if defect >= 1.0 {
            return Err(LabError::InvalidArgument(format!(
                "conjugating map not certified invertible: sup‖Dh − I‖ ≤ {defect} is not < 1"
            )));
        }
        Ok(Self::new(linear, MapKind::SmoothConjugate { h }))
    }

    pub fn with_newton(mut self, newton: NewtonConfig) -> Self {
        self.newton = newton;
        self
    }

    pub fn newton(&self) -> &NewtonConfig {
        &self.newton
    }

    pub fn linear(&self) -> &IntMatrix2 {
        &self.linear
    }

    pub fn lin(&self) -> &Mat2 {
        &self.lin
    }

    pub fn lin_inv(&self) -> &Mat2 {
        &self.lin_inv
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// The linearization `A` as a map of the same type.
    pub fn linearization(&self) -> Self {
        Self::linear_map(self.linear.clone()).with_newton(self.newton)
    }

    /// Ground-truth conjugacy `h` with `A∘h = h∘F`, when known.
    pub fn ground_truth(&self) -> Option<&NearIdentity> {
        match &self.kind {
            MapKind::SmoothConjugate { h } => Some(h),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        match &self.kind {
            MapKind::Raw { perturbation } => perturbation.is_zero(),
            MapKind::ShearComposition { s, t } => s.sup_bound() == 0.0 && t.sup_bound() == 0.0,
            MapKind::SmoothConjugate { h } => h.sup_bound() == 0.0,
        }
    }

    /// True for constructions whose Jacobian is `|det L|` by construction.
    pub fn has_constant_jacobian(&self) -> bool {
        match &self.kind {
            MapKind::Raw { perturbation } => perturbation.is_zero(),
            MapKind::ShearComposition { .. } => true,
            MapKind::SmoothConjugate { h } => h.is_area_preserving(),
        }
    }

    /// Same construction with the perturbation amplitude scaled by `eps`.
    pub fn scaled(&self, eps: f64) -> Self {
        let kind = match &self.kind {
            MapKind::Raw { perturbation } => MapKind::Raw {
                perturbation: perturbation.scaled(eps),
            },
            MapKind::ShearComposition { s, t } => MapKind::ShearComposition {
                s: s.scaled(eps),
                t: t.scaled(eps),
            },
            MapKind::SmoothConjugate { h } => MapKind::SmoothConjugate { h: h.scaled(eps) },
        };
        Self::new(self.linear.clone(), kind).with_newton(self.newton)
    }

    pub fn classify(&self) -> MapClass {
        self.linear.classify()
    }

    /// The lift `F(x)`.
    pub fn lift(&self, x: &Vec2) -> Vec2 {
        match &self.kind {
            MapKind::Raw { perturbation } => self.lin * x + perturbation.value(x),
            MapKind::ShearComposition { s, t } => {
                let y1 = x.x + t.value(x.y);
                self.lin * Vec2::new(y1, x.y + s.value(y1))
            }
            MapKind::SmoothConjugate { h } => {
                let z = self.lin * h.apply(x);
                // Newton converges from the guess for any certified h.
                h.inverse(&z, &self.newton).unwrap_or_else(|_| z)
            }
        }
    }

    /// `p(x) = F(x) − Lx`, a `Z²`-periodic field.
    pub fn perturbation(&self, x: &Vec2) -> Vec2 {
        self.lift(x) - self.lin * x
    }

    /// `DF(x)` without the degeneracy check.
    pub fn df(&self, x: &Vec2) -> Mat2 {
        match &self.kind {
            MapKind::Raw { perturbation } => self.lin + perturbation.jacobian(x),
            MapKind::ShearComposition { s, t } => self.lin * shear_pair_jacobian(s, t, x),
            MapKind::SmoothConjugate { h } => {
                let fx = self.lift(x);
                let outer = h.jacobian(&fx).try_inverse().unwrap_or_else(Mat2::identity);
                outer * self.lin * h.jacobian(x)
            }
        }
    }

    /// `DF(x)`, failing if the map is not a local diffeomorphism at `x`.
    pub fn derivative(&self, x: &Vec2) -> Result<Mat2> {
        let d = self.df(x);
        let det = d.determinant();
        if det.abs() < self.newton.det_floor {
            return Err(LabError::DegenerateDerivative { at: *x, det });
        }
        Ok(d)
    }

    /// `Jf(x) = |det Df(x)|`.
    pub fn jacobian(&self, x: &Vec2) -> Result<f64> {
        Ok(self.derivative(x)?.determinant().abs())
    }

    /// Solves `F(x) = y` by Newton from `guess` (default `L⁻¹y`).
    pub fn invert_lift(&self, y: &Vec2, guess: Option<Vec2>) -> Result<Vec2> {
        self.invert_lift_with(y, guess, self.newton.max_iter)
    }

    pub fn invert_lift_with(&self, y: &Vec2, guess: Option<Vec2>, max_iter: usize) -> Result<Vec2> {
        let mut x = guess.unwrap_or_else(|| self.lin_inv * y);
        let tol = self.newton.tol;
        let mut rn = f64::INFINITY;
        for _ in 0..max_iter {
            let r = self.lift(&x) - y;
            rn = r.norm();
            let d = self.df(&x);
            let inv = d
                .try_inverse()
                .ok_or(LabError::DegenerateDerivative { at: x, det: d.determinant() })?;
            // One polishing step is taken after the tolerance is met.
            x -= inv * r;
            if rn < tol {
                return Ok(x);
            }
        }
        Err(LabError::NonConvergence {
            what: "lift inversion",
            iterations: max_iter,
            residual: rn,
        })
    }

    /// Upper bound for `sup |p|`.
    pub fn perturbation_sup_bound(&self) -> f64 {
        match &self.kind {
            MapKind::Raw { perturbation } => perturbation.sup_bound(),
            MapKind::ShearComposition { s, t } => self.lin.norm() * (s.sup_bound() + t.sup_bound()),
            MapKind::SmoothConjugate { h } => (self.lin.norm() + 1.0) * h.sup_bound(),
        }
    }

    /// Upper bound for the Lipschitz constant of `DF`.
    pub fn df_lipschitz_bound(&self) -> f64 {
        match &self.kind {
            MapKind::Raw { perturbation } => perturbation.second_deriv_bound(),
            MapKind::ShearComposition { s, t } => self.lin.norm() * shear_pair_second_bound(s, t),
            MapKind::SmoothConjugate { h } => {
                let delta = h.deriv_defect_bound();
                let lip = h.second_deriv_bound();
                let a = self.lin.norm();
                let inv_norm = 1.0 / (1.0 - delta);
                let inv_lip = lip * inv_norm.powi(3);
                inv_lip * (a * (1.0 + delta)).powi(2) + inv_norm * a * lip
            }
        }
    }

    /// Orbit `x, F(x), …, Fⁿ(x)` on the cover.
    pub fn orbit(&self, x: &Vec2, n: usize) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(n + 1);
        let mut p = *x;
        out.push(p);
        for _ in 0..n {
            p = self.lift(&p);
            out.push(p);
        }
        out
    }
}
