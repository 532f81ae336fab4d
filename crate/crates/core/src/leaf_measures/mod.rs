//! Measures along unstable leaves: the leaf density `ρ` and adapted metric
//! `d̃`, foliated boxes with the disintegration of area and the
//! bounded-density constant, and the strip apparatus behind the exponent
//! rigidity statements.

mod boxes;
mod density;
mod strip;
mod verdict;

pub use boxes::{
    box_centers, disintegrate_volume, ubd_constant, BoxScale, BoxSummary, Disintegration, FoliatedBox, ScaleSummary,
    UbdFlag, UbdReport, UbdSpec, LOG_C_FLOOR, MIN_SAMPLES,
};
pub use density::{AdaptedDistance, AdaptedMetric, DensityParams, LeafDensity, RhoValue};
pub use strip::{
    covering_height, fixed_point, growth_bound, growth_rows, holonomy_transport_check, leaf_growth_ratio,
    leaf_growth_ratios, pushforward_leaf_measure, quasi_preservation_ratio, strip_volume_measure, DensityBin,
    FiberImage, GrowthRow, QuasiPreservation, Strip, StripFiber, StripParams, TransportReport, WeightedLeafMeasure,
};
pub use verdict::{theorem_b_verdict, TheoremBReport, Verdict, EXPONENT_MATCH_TOL, EXPONENT_SUM_TOL};
