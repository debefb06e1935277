use std::io;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("center {center:.6} on axis {axis} is closer than {margin:.6} to the box boundary")]
    BoundaryMargin { axis: usize, center: f64, margin: f64 },

    #[error("momentum {momentum:.6} on axis {axis} is not resolved by the grid (|p| + margin must stay below {limit:.6})")]
    BandLimit { axis: usize, momentum: f64, limit: f64 },

    #[error("boundary monitor tripped: {mass:.3e} of the probability sits in the boundary band (limit {limit:.1e})")]
    BoundaryLeak { mass: f64, limit: f64 },

    #[error("center lattice spacing {spacing:.6} on axis {axis} exceeds the allowed {limit:.6}")]
    LatticeTooCoarse { axis: usize, spacing: f64, limit: f64 },

    #[error("center lattice does not cover the state: quadrature mass {mass:.9}")]
    Coverage { mass: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{what}: {count} exceeds the cap of {cap}")]
    CapExceeded { what: &'static str, count: usize, cap: usize },

    #[error("density is not normalizable: total {0:.6e}")]
    NotNormalizable(f64),

    #[error("method {method} cannot propagate model {model}")]
    MethodMismatch { method: &'static str, model: String },

    #[error("time step {dt} does not divide the horizon {horizon}")]
    StepMismatch { dt: f64, horizon: f64 },

    #[error("trajectory left the model box at t = {time:.4}")]
    BoxExit { time: f64 },

    #[error("{0} did not converge")]
    NonConvergence(&'static str),

    #[error("total masses differ: {0:.3e} vs {1:.3e}")]
    MassMismatch(f64, f64),

    #[error("optimal transport needs nonnegative measures")]
    SignedMeasure,

    #[error("pruning removed every atom")]
    EmptyMeasure,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scaling fit needs at least 4 points spanning a decade (got {points} points, span {span:.3})")]
    InsufficientSpan { points: usize, span: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
