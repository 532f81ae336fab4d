//! Stable and unstable bundles of the lift, leaf segments, holonomies and
//! regularity diagnostics.
//!
//! The stable bundle of the lift projects to the torus; the unstable one
//! depends on the chosen backward orbit and is in general not periodic.

mod chain;
mod direction;
mod holonomy;
mod leaf;
mod regularity;

use rayon::prelude::*;

pub use chain::{linear_data, Chain, Flavor};
pub use direction::{
    direction_on_chain, flavored_direction, invariance_residual, stable_direction, unstable_direction,
    DirectionSample, MAX_DIRECTION_DEPTH,
};
pub use holonomy::{stable_holonomy, transversal_crossing, HolonomyMap, HolonomyPoint};
pub use leaf::{LeafParams, LeafSegment};
pub use regularity::{distribution_modulus, quasi_isometry_constant, ModulusReport, QuasiIsometryRow};

use crate::error::Result;
use crate::geom::Vec2;
use crate::torus_map::ToralEndomorphism;

/// Grows one leaf segment per base point in parallel.
pub fn grow_leaf_segments(
    f: &ToralEndomorphism,
    points: &[Vec2],
    flavor: Flavor,
    halflength: f64,
    h_max: f64,
) -> Result<Vec<LeafSegment>> {
    points
        .par_iter()
        .map(|x| LeafSegment::grow(f, x, flavor, halflength, h_max, &LeafParams::default()))
        .collect()
}

/// Convenience wrapper with default leaf parameters.
pub fn grow_leaf_segment(
    f: &ToralEndomorphism,
    x: &Vec2,
    flavor: Flavor,
    halflength: f64,
    h_max: f64,
) -> Result<LeafSegment> {
    LeafSegment::grow(f, x, flavor, halflength, h_max, &LeafParams::default())
}
