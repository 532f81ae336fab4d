//! Desk-scale laboratory for the rigidity theory of Anosov endomorphisms of
//! the 2-torus.
//!
//! Everything works on the universal cover: a torus map `f = L + p` is
//! represented by its lift `F(x) = Lx + p(x)` on the plane, which is an
//! invertible hyperbolic map even when `f` is not.
//!
//! * [`torus_map`]: maps, lifts, derivatives and cone certificates.
//! * [`splitting`]: stable/unstable directions, leaf segments, holonomies.
//! * [`conjugacy`]: the conjugacy `H` with `A∘H = H∘F` on the cover.
//! * [`periodic_data`]: periodic orbits, their exponents and the Livshitz
//!   obstruction.
//! * [`leaf_measures`]: leaf densities, adapted metrics, foliated boxes and
//!   the strip measures used for the exponent rigidity statements.
//! * [`lab`]: config-driven experiment runner behind the `anosov-lab` binary.

pub mod conjugacy;
pub mod error;
pub mod geom;
pub mod lab;
pub mod leaf_measures;
pub mod periodic_data;
pub mod splitting;
pub mod stats;
pub mod torus_map;

pub use error::{LabError, Result};
pub use geom::{Mat2, Vec2};
