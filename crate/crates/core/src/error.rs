use thiserror::Error;

/// Errors raised by the simulation and optimization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid aperture: {0}")]
    InvalidAperture(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {nodes} nodes, exceeding the budget of {budget}")]
    GridTooLarge { nodes: usize, budget: usize },

    #[error("invalid scan geometry: {0}")]
    InvalidGeometry(String),

    #[error("shift {shift} is not an integer multiple of the grid step {step}")]
    ShiftNotOnGrid { shift: f64, step: f64 },

    #[error("shift {shift} exceeds the grid half-width {extent}")]
    ShiftOutOfRange { shift: f64, extent: f64 },

    #[error("depth {z} lies outside the grid (half-width {extent})")]
    DepthOutOfRange { z: f64, extent: f64 },

    #[error("no first null found along the {axis} axis inside the grid")]
    NoNullFound { axis: char },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate region mask: {0}")]
    DegenerateMask(String),

    #[error("out-of-focus matrix is not positive definite after jitter (smallest pivot {smallest_pivot:e})")]
    SingularOutOfFocus { smallest_pivot: f64 },

    #[error("truncation retained no singular directions")]
    EmptySubspace,

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
