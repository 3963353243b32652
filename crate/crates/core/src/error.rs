use thiserror::Error;

/// Errors raised while building, solving or post-processing a tendon-pulley system.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TpsError {
    #[error("invalid configuration name `{name}`: {reason}")]
    ConfigName { name: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid value `{value}` for parameter `{key}`: {reason}")]
    InvalidParameter {
        key: String,
        value: String,
        reason: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("pulley {label} at x = {x} mm lies outside phalange {phalange} (length {length} mm)")]
    PulleyOutsidePhalange {
        label: String,
        phalange: usize,
        x: f64,
        length: f64,
    },

    #[error("FDS route touches the distal phalange at {0}")]
    FdsOnDistalPhalange(String),

    #[error("route is not ordered proximal to distal at {0}")]
    RouteOrder(String),

    #[error("offset {offset} mm out of range (0, {max}) on phalange {phalange}")]
    OffsetOutOfRange {
        offset: f64,
        max: f64,
        phalange: usize,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate pulley {label}: width {width} mm, depth {depth} mm")]
    DegeneratePulley {
        label: String,
        width: f64,
        depth: f64,
    },

    #[error("pulley {0} is not flexible")]
    NotFlexible(String),

    #[error("activation fixed point did not converge; last sets {previous:?} and {last:?}")]
    ActivationNonConvergence {
        previous: Vec<Vec<bool>>,
        last: Vec<Vec<bool>>,
    },

    #[error("solver did not converge after {iterations} iterations (scaled residual {residual:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("no locking tension for joint {joint} inside ({lower}, {upper}] N")]
    LockingBracket { joint: usize, lower: f64, upper: f64 },

    #[error("finite element solve failed: {0}")]
    Fem(String),

    #[error("unsupported configuration for this operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, TpsError>;
