use thiserror::Error;

use crate::geom::Vec2;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("degenerate derivative at ({}, {}): |det Df| = {det:e}", .at.x, .at.y)]
    DegenerateDerivative { at: Vec2, det: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("hyperbolicity certification failed at cell ({}, {}): {reason} (margin {margin:e})", .cell.0, .cell.1)]
    CertificationFailed {
        cell: (usize, usize),
        margin: f64,
        reason: &'static str,
    },

    #[error("expanding map: stable apparatus unavailable")]
    ExpandingMap,

    #[error("linear part is not hyperbolic")]
    NotHyperbolic,

    #[error("cocycle has complex eigenvalues (trace {trace}, det {det})")]
    ComplexEigenvalues { trace: f64, det: f64 },

    #[error("no intersection with target segment inside the search window")]
    NoIntersection,

    #[error("only {usable} scales usable, at least {required} needed")]
    InsufficientScaleRange { usable: usize, required: usize },

    #[error("point is not resolvable on the leaf segment")]
    NotOnSameLeaf,

    #[error("foliated box does not project injectively: {0}")]
    InjectivityViolation(String),

    #[error("periodic orbit collapsed: points {0} and {1} merged")]
    PeriodCollapse(usize, usize),

    #[error("continuation failed at homotopy parameter {eps}: {source}")]
    ContinuationFailed {
        eps: f64,
        #[source]
        source: Box<LabError>,
    },

    #[error("matching orbit refinement failed for orbit {0}")]
    OrbitMatchFailed(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
